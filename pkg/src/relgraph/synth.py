"""Synthetic corpus generators for the behavioral test suites.

Two families:

* A debate corpus of threads whose gold labels are exactly consistent with
  author-consistency and respondent-disagreement constraints, while entity
  features carry the stance signal at a controlled flip rate.  Useful for
  comparing local, joint-inference and global training regimes.

* A two-task corpus where both tasks depend on the same latent item
  attribute but one task has a fraction of the supervision, exposing the
  benefit of shared entity encoders.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEBATE_PROGRAM = """\
// synthetic debate threads: posts chained by responses, users behind posts
entity Post features={dp}
entity User features={du}
entity Claim features={dc}
predicate About(Post, Claim)
predicate Debates(User, Claim)
predicate Author(Post, User)
predicate Respond(Post, Post)
predicate PostStance(Post, Claim)?
predicate UserStance(User, Claim)?
rule: About(P, C) => PostStance(P, C)
rule: Debates(U, C) => UserStance(U, C)
rule: Respond(P2, P1) & About(P2, C) => PostStance(P2, C)
hardconstraint: PostStance(P, C) & Author(P, U) => UserStance(U, C)
hardconstraint: ~PostStance(P, C) & Author(P, U) => ~UserStance(U, C)
hardconstraint: PostStance(P1, C) & Respond(P2, P1) => ~PostStance(P2, C)
hardconstraint: ~PostStance(P1, C) & Respond(P2, P1) => PostStance(P2, C)
"""


@dataclass
class DebateCorpusSpec:
    n_threads: int = 200
    min_posts: int = 2
    max_posts: int = 4
    dp: int = 6
    du: int = 6
    dc: int = 2
    post_flip: float = 0.2  # probability a post's features show the wrong stance
    user_flip: float = 0.35
    noise: float = 0.9  # gaussian jitter on every feature vector


def debate_program(spec: DebateCorpusSpec) -> str:
    return DEBATE_PROGRAM.format(dp=spec.dp, du=spec.du, dc=spec.dc)


def debate_net_config(spec: DebateCorpusSpec, hidden: int = 8) -> dict:
    enc = hidden
    return {
        "mode": "relnets",
        "include_head": True,
        "entities": {
            "Post": {"layers": [spec.dp, enc]},
            "User": {"layers": [spec.du, enc]},
            "Claim": {"layers": [spec.dc, enc]},
        },
        "relations": {
            "About": {"layers": [2 * enc, enc]},
            "Debates": {"layers": [2 * enc, enc]},
            "Respond": {"layers": [2 * enc, enc]},
            "PostStance": {"layers": [2 * enc, enc]},
            "UserStance": {"layers": [2 * enc, enc]},
        },
        "rules": {
            "r0": {"layers": [2 * enc, hidden, 2]},
            "r1": {"layers": [2 * enc, hidden, 2]},
            "r2": {"layers": [3 * enc, hidden, 2]},
        },
    }


def _signal(rng, dim: int, label: int, flip: float, noise: float) -> np.ndarray:
    shown = label if rng.random() >= flip else 1 - label
    vec = rng.normal(0.0, noise, size=dim)
    vec[0] += 2.0 if shown == 1 else -2.0
    return vec


def _write_feat(path: Path, rows: dict[str, np.ndarray]):
    lines = [f"{name} " + " ".join(f"{v:.6f}" for v in vec) for name, vec in rows.items()]
    path.write_text("\n".join(lines) + "\n")


def generate_debate_corpus(out_dir: str | Path, seed: int, spec: DebateCorpusSpec | None = None):
    """Write a debate corpus to ``out_dir``; returns (program_text, net_config).

    Gold labels satisfy the author/respondent constraints by construction:
    each thread alternates posts by two users of opposite stance.
    """
    spec = spec or DebateCorpusSpec()
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    about, debates, author, respond = [], [], [], []
    post_stance, user_stance = [], []
    post_feats, user_feats, claim_feats = {}, {}, {}

    for t in range(spec.n_threads):
        claim = f"c{t}"
        users = (f"u{t}a", f"u{t}b")
        stance_a = int(rng.integers(0, 2))
        stances = (stance_a, 1 - stance_a)
        claim_feats[claim] = rng.normal(0.0, spec.noise, size=spec.dc)
        for u, s in zip(users, stances):
            user_feats[u] = _signal(rng, spec.du, s, spec.user_flip, spec.noise)
            debates.append((u, claim))
            user_stance.append((u, claim, s))
        n_posts = int(rng.integers(spec.min_posts, spec.max_posts + 1))
        prev = None
        for j in range(n_posts):
            post = f"p{t}_{j}"
            s = stances[j % 2]
            post_feats[post] = _signal(rng, spec.dp, s, spec.post_flip, spec.noise)
            about.append((post, claim))
            author.append((post, users[j % 2]))
            post_stance.append((post, claim, s))
            if prev is not None:
                respond.append((post, prev))
            prev = post

    def write_tsv(name, rows):
        (out / name).write_text("".join("\t".join(map(str, r)) + "\n" for r in rows))

    write_tsv("About.tsv", about)
    write_tsv("Debates.tsv", debates)
    write_tsv("Author.tsv", author)
    write_tsv("Respond.tsv", respond)
    write_tsv("PostStance.tsv", post_stance)
    write_tsv("UserStance.tsv", user_stance)
    _write_feat(out / "Post.feat", post_feats)
    _write_feat(out / "User.feat", user_feats)
    _write_feat(out / "Claim.feat", claim_feats)
    return debate_program(spec), debate_net_config(spec)


# ---------------------------------------------------------------------------
# Two-task corpus (shared representation benefit)
# ---------------------------------------------------------------------------

TWO_TASK_PROGRAM = """\
// two labeling tasks over the same items; both depend on one latent attribute
entity Item features={dim}
predicate Obs(Item)
predicate TaskA(Item)?
predicate TaskB(Item)?
rule: Obs(X) => TaskA(X)
rule: Obs(X) => TaskB(X)
"""


@dataclass
class TwoTaskCorpusSpec:
    n_train_a: int = 200
    n_train_b: int = 20  # 10x less supervision for task B
    n_test: int = 200
    dim: int = 16
    noise: float = 1.6
    hidden: int = 8


def two_task_program(spec: TwoTaskCorpusSpec) -> str:
    return TWO_TASK_PROGRAM.format(dim=spec.dim)


def two_task_net_config(spec: TwoTaskCorpusSpec, mode: str) -> dict:
    enc = spec.hidden
    return {
        "mode": mode,
        "include_head": True,
        "entities": {"Item": {"layers": [spec.dim, enc]}},
        "relations": {"*": {"layers": [enc, enc]}},
        "rules": {"*": {"layers": [2 * enc, 2]}},
    }


def generate_two_task_corpus(
    train_dir: str | Path, test_dir: str | Path, seed: int,
    spec: TwoTaskCorpusSpec | None = None,
):
    """Write train/test splits; returns the program text.

    Every item carries a latent bit rendered into its features along a fixed
    random direction.  Task A labels are plentiful, task B labels scarce;
    both equal the latent bit.
    """
    spec = spec or TwoTaskCorpusSpec()
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=spec.dim)
    direction /= np.linalg.norm(direction)

    def make_split(out_dir: Path, prefix: str, n_items: int, n_b: int):
        out_dir.mkdir(parents=True, exist_ok=True)
        feats, obs, task_a, task_b = {}, [], [], []
        for i in range(n_items):
            item = f"{prefix}{i}"
            z = int(rng.integers(0, 2))
            feats[item] = (2 * z - 1) * direction + rng.normal(0.0, spec.noise, size=spec.dim)
            obs.append((item,))
            task_a.append((item, z))
            if i < n_b:
                task_b.append((item, z))
        _write_feat(out_dir / "Item.feat", feats)
        (out_dir / "Obs.tsv").write_text("".join(f"{r[0]}\n" for r in obs))
        (out_dir / "TaskA.tsv").write_text("".join(f"{i}\t{z}\n" for i, z in task_a))
        (out_dir / "TaskB.tsv").write_text("".join(f"{i}\t{z}\n" for i, z in task_b))

    make_split(Path(train_dir), "tr", spec.n_train_a, spec.n_train_b)
    make_split(Path(test_dir), "te", spec.n_test, spec.n_test)
    return two_task_program(spec)
