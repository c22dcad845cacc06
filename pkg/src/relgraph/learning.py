"""Training regimes and evaluation.

* ``train_local``: per-rule cross-entropy against each rule's gold head label.
* ``predict_joint``: constrained MAP over locally normalized scores
  (log-softmax of every score table), parameters untouched.
* ``train_global_hinge``: structured hinge with Hamming-augmented MAP,
  backpropagating the score difference between the violating prediction and
  the gold structure.
* ``train_global_crf``: negative log-likelihood with the partition function
  approximated over a gold-inclusive pool of the top-scoring feasible
  assignments.

Global modes expect locally trained (warm-started) scorers and use one
factor graph per optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .datastore import Datastore
from .errors import AlignmentError, MissingGoldError
from .grounding import FactorGraph
from .inference import (
    Assignment,
    SolutionPool,
    check_feasible,
    hamming_clauses,
    k_best,
    label_clause,
    objective_value,
    solve_approx,
    solve_exact,
    solve_loss_augmented,
)
from .optim import make_optimizer
from .rng import named_stream
from .scorers import ScorerGraph, score_graph

MODES = ("local", "joint", "global-hinge", "global-crf")


@dataclass
class TrainConfig:
    mode: str = "local"
    lr: float = 0.05
    epochs: int = 50
    patience: int = 5
    pool_size: int = 5
    optimizer: str = "adam"
    weight_decay: float = 0.0
    seed: int = 0
    solver: str = "exact"
    restarts: int = 8
    freeze_encoders: bool = False
    exact_cap: int = 40

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.mode == "global-crf" and self.pool_size < 1:
            raise ValueError("global-crf requires pool size >= 1")


@dataclass
class PartitionEstimate:
    """Gold-inclusive solution pool and the log-partition it implies."""

    pool: SolutionPool
    log_partition: float


# ---------------------------------------------------------------------------
# Gold and scoring helpers
# ---------------------------------------------------------------------------

def gold_assignment(fg: FactorGraph) -> tuple[int, ...]:
    values = []
    for v in fg.variables:
        if v.gold is None:
            raise MissingGoldError(f"{fg.instance_id}: no gold label for {v}")
        values.append(v.gold)
    return tuple(values)


def _log_softmax(table: np.ndarray) -> np.ndarray:
    shifted = table - np.max(table)
    return shifted - np.log(np.sum(np.exp(shifted)))


def assignment_score_node(tape: Tape, nodes, fg: FactorGraph, values):
    """Tape node for the solver objective of ``values`` (constant offset
    terms from tautological label clauses included)."""
    terms = []
    for rule, node in zip(fg.potentials, nodes):
        for label in (0, 1):
            sets = label_clause(rule, label)
            if sets is None:
                terms.append(tape.pick(node, label))
                continue
            pos, neg = sets
            if any(values[i] == 1 for i in pos) or any(values[i] == 0 for i in neg):
                terms.append(tape.pick(node, label))
    if not terms:
        return tape.constant(0.0)
    return tape.sum(tape.stack(terms))


def hamming(a, b) -> int:
    return int(sum(1 for x, y in zip(a, b) if x != y))


def _solve(fg, tables, config: TrainConfig, graph_seed: int = 0, extra_clauses=()):
    if config.solver == "approx":
        return solve_approx(
            fg, tables, restarts=config.restarts, seed=graph_seed, extra_clauses=extra_clauses
        )
    return solve_exact(fg, tables, extra_clauses=extra_clauses, cap=config.exact_cap)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_map(
    graphs,
    scorers: ScorerGraph,
    data: Datastore,
    normalize: bool,
    solver: str = "exact",
    restarts: int = 8,
    seed: int = 0,
    constrained: bool = True,
    exact_cap: int = 40,
) -> list[Assignment]:
    """MAP assignment per graph; every result satisfies the hard constraints."""
    out = []
    for idx, fg in enumerate(graphs):
        tables = score_graph(scorers, fg, data)
        if normalize:
            tables = [_log_softmax(t) for t in tables]
        target = fg if constrained else FactorGraph(
            fg.instance_id, fg.variables, fg.potentials, [], dict(fg.var_index)
        )
        if solver == "approx":
            assignment = solve_approx(target, tables, restarts=restarts, seed=seed + idx)
        else:
            assignment = solve_exact(target, tables, cap=exact_cap)
        if constrained:
            assert check_feasible(fg, assignment.values)
        out.append(assignment)
    return out


def predict_joint(graphs, scorers, data, solver="exact", restarts=8, seed=0, exact_cap=40):
    """Joint inference: constrained MAP over locally normalized factor scores."""
    return predict_map(
        graphs, scorers, data, normalize=True, solver=solver, restarts=restarts,
        seed=seed, exact_cap=exact_cap,
    )


def predict_local(graphs, scorers, data, exact_cap=40):
    """Per-factor argmax combination: constraints dropped, scores normalized."""
    return predict_map(graphs, scorers, data, normalize=True, constrained=False,
                       exact_cap=exact_cap)


# ---------------------------------------------------------------------------
# Local training
# ---------------------------------------------------------------------------

def _rule_gold_label(fg: FactorGraph, rule) -> int:
    gold = fg.variables[rule.head_var].gold
    if gold is None:
        raise MissingGoldError(
            f"{fg.instance_id}: ground rule of {rule.template_id} has no gold head label"
        )
    return gold


def local_loss_value(graphs, scorers, data) -> float:
    """Mean per-rule cross-entropy, no gradients."""
    total, count = 0.0, 0
    for fg in graphs:
        for rule, table in zip(fg.potentials, score_graph(scorers, fg, data)):
            total += -_log_softmax(table)[_rule_gold_label(fg, rule)]
            count += 1
    return total / max(count, 1)


class _EarlyStopper:
    """Tracks the best dev metric; restores the best snapshot at the end."""

    def __init__(self, scorers: ScorerGraph, patience: int, minimize: bool):
        self.scorers = scorers
        self.patience = patience
        self.minimize = minimize
        self.best = None
        self.snapshot = scorers.snapshot()
        self.bad = 0

    def update(self, metric: float) -> bool:
        better = self.best is None or (
            metric < self.best if self.minimize else metric > self.best
        )
        if better:
            self.best = metric
            self.snapshot = self.scorers.snapshot()
            self.bad = 0
            return False
        self.bad += 1
        return self.bad > self.patience

    def restore(self):
        self.scorers.restore(self.snapshot)


def train_local(graphs, scorers: ScorerGraph, data: Datastore, config: TrainConfig,
                dev_graphs=None) -> dict:
    """Minimize per-rule cross-entropy; early stop on dev loss."""
    dev = dev_graphs if dev_graphs is not None else graphs
    params = list(scorers.parameters())
    opt = make_optimizer(config.optimizer, params, config.lr, config.weight_decay)
    rng = named_stream(config.seed, "local/shuffle")
    stopper = _EarlyStopper(scorers, config.patience, minimize=True)
    history = {"train_loss": [], "dev_loss": []}

    for _epoch in range(config.epochs):
        order = rng.permutation(len(graphs))
        epoch_loss, n_rules = 0.0, 0
        for gi in order:
            fg = graphs[gi]
            if not fg.potentials:
                continue
            tape = Tape()
            nodes = score_graph(scorers, fg, data, tape)
            terms = [
                tape.cross_entropy(node, _rule_gold_label(fg, rule))
                for rule, node in zip(fg.potentials, nodes)
            ]
            loss = tape.sum(tape.stack(terms))
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
            epoch_loss += float(loss.value)
            n_rules += len(terms)
        history["train_loss"].append(epoch_loss / max(n_rules, 1))
        dev_loss = local_loss_value(dev, scorers, data)
        history["dev_loss"].append(dev_loss)
        if stopper.update(dev_loss):
            break
    stopper.restore()
    return history


# ---------------------------------------------------------------------------
# Global training
# ---------------------------------------------------------------------------

def structured_accuracy(graphs, predictions) -> float:
    """Per-variable accuracy over all golded variables."""
    hits, total = 0, 0
    for fg, pred in zip(graphs, predictions):
        for v in fg.variables:
            if v.gold is None:
                continue
            hits += int(pred.values[v.id] == v.gold)
            total += 1
    return hits / max(total, 1)


def _dev_accuracy(graphs, scorers, data, config: TrainConfig) -> float:
    preds = predict_map(
        graphs, scorers, data, normalize=False, solver=config.solver,
        restarts=config.restarts, exact_cap=config.exact_cap,
    )
    return structured_accuracy(graphs, preds)


def hinge_loss_value(fg, tables, gold, cap=40) -> float:
    """max(0, max_y (Delta(y, gold) + score(y)) - score(gold))."""
    augmented = solve_loss_augmented(fg, tables, gold, cap=cap)
    return max(0.0, augmented.score - objective_value(fg, tables, gold))


def train_global_hinge(graphs, scorers: ScorerGraph, data: Datastore, config: TrainConfig,
                       dev_graphs=None) -> dict:
    """Structured hinge training; early stop on dev structured accuracy.

    Expects warm-started (locally trained) scorers.
    """
    dev = dev_graphs if dev_graphs is not None else graphs
    params = list(scorers.parameters(include_entity_encoders=not config.freeze_encoders))
    opt = make_optimizer(config.optimizer, params, config.lr, config.weight_decay)
    rng = named_stream(config.seed, "hinge/shuffle")
    stopper = _EarlyStopper(scorers, config.patience, minimize=False)
    history = {"train_loss": [], "dev_accuracy": []}

    for _epoch in range(config.epochs):
        order = rng.permutation(len(graphs))
        epoch_loss = 0.0
        for gi in order:
            fg = graphs[gi]
            if not fg.potentials:
                continue
            gold = gold_assignment(fg)
            tape = Tape()
            nodes = score_graph(scorers, fg, data, tape)
            tables = [n.value for n in nodes]
            augmented = _solve(
                fg, tables, config, graph_seed=config.seed + gi,
                extra_clauses=hamming_clauses(gold),
            )
            margin = augmented.score - objective_value(fg, tables, gold)
            if margin <= 0.0:
                continue  # hinge clamps at zero: no violation, no gradient
            epoch_loss += margin
            pred_score = assignment_score_node(tape, nodes, fg, augmented.values)
            gold_score = assignment_score_node(tape, nodes, fg, gold)
            loss = tape.sub(pred_score, gold_score)
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
        history["train_loss"].append(epoch_loss / max(len(graphs), 1))
        acc = _dev_accuracy(dev, scorers, data, config)
        history["dev_accuracy"].append(acc)
        if stopper.update(acc):
            break
    stopper.restore()
    return history


def partition_estimate(fg, tables, beta: int, gold=None, cap: int = 40) -> PartitionEstimate:
    """Top-``beta`` pool (plus gold when given) and its log-partition value."""
    pool = list(k_best(fg, tables, beta, cap=cap))
    if gold is not None and all(tuple(gold) != p.values for p in pool):
        pool.append(Assignment(tuple(gold), objective_value(fg, tables, gold)))
    scores = np.array([p.score for p in pool])
    m = float(np.max(scores))
    log_z = m + float(np.log(np.sum(np.exp(scores - m))))
    return PartitionEstimate(SolutionPool(tuple(pool)), log_z)


def crf_loss_value(fg, tables, gold, beta: int, cap: int = 40) -> float:
    """Pool-approximated negative log-likelihood of the gold structure."""
    estimate = partition_estimate(fg, tables, beta, gold=gold, cap=cap)
    return estimate.log_partition - objective_value(fg, tables, gold)


def train_global_crf(graphs, scorers: ScorerGraph, data: Datastore, config: TrainConfig,
                     dev_graphs=None) -> dict:
    """Pooled-partition CRF training; early stop on dev structured accuracy.

    The pool always contains the gold structure, so the loss is nonnegative.
    Expects warm-started (locally trained) scorers.
    """
    dev = dev_graphs if dev_graphs is not None else graphs
    params = list(scorers.parameters(include_entity_encoders=not config.freeze_encoders))
    opt = make_optimizer(config.optimizer, params, config.lr, config.weight_decay)
    rng = named_stream(config.seed, "crf/shuffle")
    stopper = _EarlyStopper(scorers, config.patience, minimize=False)
    history = {"train_loss": [], "dev_accuracy": []}

    for _epoch in range(config.epochs):
        order = rng.permutation(len(graphs))
        epoch_loss = 0.0
        for gi in order:
            fg = graphs[gi]
            if not fg.potentials:
                continue
            gold = gold_assignment(fg)
            tape = Tape()
            nodes = score_graph(scorers, fg, data, tape)
            tables = [n.value for n in nodes]
            estimate = partition_estimate(fg, tables, config.pool_size, gold=gold,
                                          cap=config.exact_cap)
            member_scores = [
                assignment_score_node(tape, nodes, fg, member.values)
                for member in estimate.pool
            ]
            gold_score = assignment_score_node(tape, nodes, fg, gold)
            loss = tape.sub(tape.logsumexp(tape.stack(member_scores)), gold_score)
            epoch_loss += float(loss.value)
            opt.zero_grad()
            tape.backward(loss)
            opt.step()
        history["train_loss"].append(epoch_loss / max(len(graphs), 1))
        acc = _dev_accuracy(dev, scorers, data, config)
        history["dev_accuracy"].append(acc)
        if stopper.update(acc):
            break
    stopper.restore()
    return history


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

METRICS = ("accuracy", "macro_f1", "positive_f1")


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def evaluate(graphs, predictions, metrics=METRICS) -> dict:
    """Metric per open relation plus the across-relation averages.

    Only variables with a gold label participate.  macro_f1 averages the F1
    of the negative and positive classes; positive_f1 is the F1 of class 1.
    """
    if len(graphs) != len(predictions):
        raise AlignmentError(
            f"{len(predictions)} predictions for {len(graphs)} graphs"
        )
    pairs: dict[str, list[tuple[int, int]]] = {}
    for fg, pred in zip(graphs, predictions):
        if len(pred.values) != fg.num_variables:
            raise AlignmentError(
                f"{fg.instance_id}: prediction has {len(pred.values)} values for "
                f"{fg.num_variables} variables"
            )
        for v in fg.variables:
            if v.gold is None:
                continue
            pairs.setdefault(v.predicate, []).append((v.gold, int(pred.values[v.id])))

    report: dict = {"relations": {}, "average": {}}
    for predicate in sorted(pairs):
        golds, preds = zip(*pairs[predicate])
        scores = {}
        if "accuracy" in metrics:
            scores["accuracy"] = sum(g == p for g, p in pairs[predicate]) / len(golds)
        tp = sum(1 for g, p in pairs[predicate] if g == 1 and p == 1)
        fp = sum(1 for g, p in pairs[predicate] if g == 0 and p == 1)
        fn = sum(1 for g, p in pairs[predicate] if g == 1 and p == 0)
        tn = len(golds) - tp - fp - fn
        if "macro_f1" in metrics:
            scores["macro_f1"] = (_f1(tp, fp, fn) + _f1(tn, fn, fp)) / 2
        if "positive_f1" in metrics:
            scores["positive_f1"] = _f1(tp, fp, fn)
        report["relations"][predicate] = scores
    for metric in metrics:
        values = [s[metric] for s in report["relations"].values() if metric in s]
        report["average"][metric] = sum(values) / len(values) if values else 0.0
    return report
