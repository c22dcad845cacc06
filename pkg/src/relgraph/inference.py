"""MAP inference over a scored factor graph.

Each ground rule with score table ``s`` contributes two weighted clauses, one
per head label: the rule's clause with the head literal set positively
(weight ``s[1]``) and negatively (weight ``s[0]``).  A clause with literal
sets (P, N) is worth its weight iff it is satisfied, i.e. iff
``min(sum_P y + sum_N (1 - y), 1) = 1``; in the linear program this truncation
is an auxiliary binary ``z`` forced exactly by ``z <= s`` and ``s <= |P+N| z``,
which stays exact for negative weights.

``solve_exact`` is a depth-first branch-and-bound over the binary variables
with constraint propagation; it returns the optimum with the lexicographically
smallest bit vector among ties.  ``solve_approx`` is a repair-then-hill-climb
local search.  ``k_best`` enumerates the true top-k via exclusion cuts.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InfeasibleError, TooLargeError
from .grounding import FactorGraph, GroundRule, LinearConstraint

DEFAULT_EXACT_CAP = 40

UNKNOWN = -1


@dataclass(frozen=True)
class Clause:
    """One weighted satisfaction term of the objective."""

    weight: float
    pos: tuple[int, ...]
    neg: tuple[int, ...]

    def satisfied(self, values) -> bool:
        return any(values[i] == 1 for i in self.pos) or any(values[i] == 0 for i in self.neg)


@dataclass(frozen=True)
class Assignment:
    values: tuple[int, ...]
    score: float

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SolutionPool:
    assignments: tuple[Assignment, ...]

    def __len__(self):
        return len(self.assignments)

    def __iter__(self):
        return iter(self.assignments)


# ---------------------------------------------------------------------------
# Objective compilation
# ---------------------------------------------------------------------------

def label_clause(rule: GroundRule, label: int):
    """Clause literal sets for one head label, or None when tautological.

    Label 1 asserts the head atom true, label 0 asserts it false; the body
    keeps its clause polarity.  When the flipped head collides with a body
    literal of opposite polarity the clause is a tautology (always worth its
    weight).
    """
    pos, neg = set(rule.body_pos), set(rule.body_neg)
    if label == 1:
        if rule.head_var in neg:
            return None
        pos.add(rule.head_var)
    else:
        if rule.head_var in pos:
            return None
        neg.add(rule.head_var)
    return tuple(sorted(pos)), tuple(sorted(neg))


def compile_objective(fg: FactorGraph, tables) -> tuple[list[Clause], float]:
    """Per-(rule, label) weighted clauses plus the constant offset.

    The clause order is deterministic (potential order, label 0 then 1), and
    `objective_value` sums in the same order, so scores are reproducible to
    the last bit.
    """
    clauses: list[Clause] = []
    offset = 0.0
    for rule, table in zip(fg.potentials, tables):
        for label in (0, 1):
            weight = float(table[label])
            sets = label_clause(rule, label)
            if sets is None:
                offset += weight
            else:
                clauses.append(Clause(weight, *sets))
    return clauses, offset


def objective_value(fg: FactorGraph, tables, values) -> float:
    clauses, offset = compile_objective(fg, tables)
    total = offset
    for clause in clauses:
        if clause.satisfied(values):
            total += clause.weight
    return total


def check_feasible(fg: FactorGraph, values) -> bool:
    return all(c.satisfied(values) for c in fg.constraints)


def hamming_clauses(gold) -> list[Clause]:
    """Unary potentials realizing the Hamming distance to ``gold``."""
    out = []
    for i, g in enumerate(gold):
        if g == 1:
            out.append(Clause(1.0, (), (i,)))
        else:
            out.append(Clause(1.0, (i,), ()))
    return out


# ---------------------------------------------------------------------------
# Constraint propagation
# ---------------------------------------------------------------------------

def _normalize(constraint: LinearConstraint):
    """Split into a list of (coeffs, rhs) rows meaning sum coeffs*y >= rhs."""
    coeffs = constraint.coeffs
    if constraint.comparator == ">=":
        return [(coeffs, constraint.rhs)]
    if constraint.comparator == "<=":
        return [(tuple((i, -c) for i, c in coeffs), -constraint.rhs)]
    return [
        (coeffs, constraint.rhs),
        (tuple((i, -c) for i, c in coeffs), -constraint.rhs),
    ]


class _Propagator:
    """Bound propagation over >=-rows; detects forced values and dead ends."""

    def __init__(self, constraints: list[LinearConstraint], nvars: int):
        self.rows = [row for c in constraints for row in _normalize(c)]
        self.watch: list[list[int]] = [[] for _ in range(nvars)]
        for r, (coeffs, _) in enumerate(self.rows):
            for i, _c in coeffs:
                self.watch[i].append(r)

    def propagate(self, values) -> bool:
        """Fix all forced variables in place; False when a row is dead."""
        dirty = set(range(len(self.rows)))
        while dirty:
            r = dirty.pop()
            coeffs, rhs = self.rows[r]
            slack = -rhs  # max achievable LHS minus rhs
            for i, c in coeffs:
                v = values[i]
                if v == UNKNOWN:
                    slack += max(c, 0)
                else:
                    slack += c * v
            if slack < 0:
                return False
            for i, c in coeffs:
                if values[i] != UNKNOWN:
                    continue
                # forcing: choosing the slack-consuming value would kill the row
                if c > 0 and slack - c < 0:
                    values[i] = 1
                    dirty.update(self.watch[i])
                elif c < 0 and slack + c < 0:
                    values[i] = 0
                    dirty.update(self.watch[i])
        return True


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------

def _bound(clauses, offset, values) -> float:
    """Admissible optimistic score for any completion of a partial assignment."""
    total = offset
    for clause in clauses:
        determined_true = False
        has_open = False
        for i in clause.pos:
            v = values[i]
            if v == 1:
                determined_true = True
                break
            if v == UNKNOWN:
                has_open = True
        if not determined_true:
            for i in clause.neg:
                v = values[i]
                if v == 0:
                    determined_true = True
                    break
                if v == UNKNOWN:
                    has_open = True
        if determined_true:
            total += clause.weight
        elif has_open:
            total += max(clause.weight, 0.0)
    return total


def _solve_bnb(nvars, clauses, offset, propagator):
    values = np.full(nvars, UNKNOWN, dtype=np.int64)
    if not propagator.propagate(values):
        raise InfeasibleError("hard constraints are unsatisfiable")

    best: list = [None, None]  # score, values

    def recurse(values):
        free = np.flatnonzero(values == UNKNOWN)
        if free.size == 0:
            total = offset
            for clause in clauses:
                if clause.satisfied(values):
                    total += clause.weight
            if best[0] is None or total > best[0]:
                best[0] = total
                best[1] = values.copy()
            return
        if best[0] is not None and _bound(clauses, offset, values) <= best[0]:
            return
        branch = int(free[0])
        for value in (0, 1):  # 0 first: first optimum found is lex-smallest
            child = values.copy()
            child[branch] = value
            if propagator.propagate(child):
                recurse(child)

    recurse(values)
    if best[0] is None:
        raise InfeasibleError("hard constraints are unsatisfiable")
    return Assignment(tuple(int(v) for v in best[1]), float(best[0]))


def solve_exact(
    fg: FactorGraph,
    tables,
    extra_clauses=(),
    extra_constraints=(),
    cap: int = DEFAULT_EXACT_CAP,
) -> Assignment:
    """Provably optimal feasible assignment, lex-smallest among ties.

    Raises InfeasibleError when the hard constraints are unsatisfiable and
    TooLargeError when more than ``cap`` variables remain free after unit
    propagation.
    """
    clauses, offset = compile_objective(fg, tables)
    clauses = clauses + list(extra_clauses)
    constraints = list(fg.constraints) + list(extra_constraints)
    propagator = _Propagator(constraints, fg.num_variables)

    probe = np.full(fg.num_variables, UNKNOWN, dtype=np.int64)
    if not propagator.propagate(probe):
        raise InfeasibleError("hard constraints are unsatisfiable")
    if int(np.sum(probe == UNKNOWN)) > cap:
        raise TooLargeError(
            f"{int(np.sum(probe == UNKNOWN))} free variables exceed the exact-solver "
            f"cap of {cap}"
        )
    return _solve_bnb(fg.num_variables, clauses, offset, propagator)


def solve_loss_augmented(fg: FactorGraph, tables, gold, cap: int = DEFAULT_EXACT_CAP) -> Assignment:
    """MAP under the objective augmented with the Hamming distance to gold.

    The returned score is the augmented objective; use ``objective_value``
    for the plain score of the returned assignment.
    """
    return solve_exact(fg, tables, extra_clauses=hamming_clauses(gold), cap=cap)


def exclusion_cut(values) -> LinearConstraint:
    """No-good cut: sum_{i: v_i=1} (1 - y_i) + sum_{i: v_i=0} y_i >= 1."""
    coeffs = []
    ones = 0
    for i, v in enumerate(values):
        if v == 1:
            coeffs.append((i, Fraction(-1)))
            ones += 1
        else:
            coeffs.append((i, Fraction(1)))
    return LinearConstraint(tuple(coeffs), ">=", Fraction(1 - ones), origin="cut")


def k_best(fg: FactorGraph, tables, k: int, cap: int = DEFAULT_EXACT_CAP) -> SolutionPool:
    """True top-k feasible assignments by iterated exclusion cuts.

    Scores are non-increasing and members pairwise distinct; the pool
    truncates without error when fewer than k feasible assignments exist.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cuts: list[LinearConstraint] = []
    pool: list[Assignment] = []
    while len(pool) < k:
        try:
            best = solve_exact(fg, tables, extra_constraints=cuts, cap=cap)
        except InfeasibleError:
            if not pool:
                raise
            break
        pool.append(best)
        cuts.append(exclusion_cut(best.values))
    return SolutionPool(tuple(pool))


# ---------------------------------------------------------------------------
# Approximate solver
# ---------------------------------------------------------------------------

def _violation(constraints, values) -> int:
    return sum(0 if c.satisfied(values) else 1 for c in constraints)


def _repair(fg, values, rng, max_rounds=None):
    """Min-conflicts repair toward feasibility; None when it gives up.

    Ties between candidate flips break randomly (seeded) so deterministic
    cycles cannot persist across rounds.
    """
    values = values.copy()
    constraints = fg.constraints
    if not constraints:
        return values
    max_rounds = max_rounds or 30 * max(1, fg.num_variables) * len(constraints)
    for _ in range(max_rounds):
        violated = [c for c in constraints if not c.satisfied(values)]
        if not violated:
            return values
        target = violated[int(rng.integers(0, len(violated)))]
        best_vars, best_count = [], None
        for i, _c in target.coeffs:
            values[i] ^= 1
            count = _violation(constraints, values)
            values[i] ^= 1
            if best_count is None or count < best_count:
                best_vars, best_count = [i], count
            elif count == best_count:
                best_vars.append(i)
        values[best_vars[int(rng.integers(0, len(best_vars)))]] ^= 1
    return None


def solve_approx(
    fg: FactorGraph, tables, restarts: int = 8, seed: int = 0, extra_clauses=()
) -> Assignment:
    """Feasible local optimum of the objective: no single feasible flip
    improves the score.  Deterministic for a fixed seed; best over restarts.
    """
    clauses, offset = compile_objective(fg, tables)
    clauses = clauses + list(extra_clauses)

    def score(values):
        total = offset
        for clause in clauses:
            if clause.satisfied(values):
                total += clause.weight
        return total

    rng = np.random.default_rng(seed)
    best: Assignment | None = None
    for restart in range(max(1, restarts)):
        if restart == 0:
            start = np.zeros(fg.num_variables, dtype=np.int64)
        else:
            start = rng.integers(0, 2, size=fg.num_variables).astype(np.int64)
        values = _repair(fg, start, rng)
        if values is None:
            continue
        current = score(values)
        improved = True
        while improved:
            improved = False
            best_gain, best_var = 0.0, None
            for i in range(fg.num_variables):
                values[i] ^= 1
                if check_feasible(fg, values):
                    gain = score(values) - current
                    if gain > best_gain:
                        best_gain, best_var = gain, i
                values[i] ^= 1
            if best_var is not None:
                values[best_var] ^= 1
                current += best_gain
                improved = True
        candidate = Assignment(tuple(int(v) for v in values), current)
        if (
            best is None
            or candidate.score > best.score
            or (candidate.score == best.score and candidate.values < best.values)
        ):
            best = candidate
    if best is None:
        raise InfeasibleError("local search found no feasible assignment")
    return best


# ---------------------------------------------------------------------------
# LP dump
# ---------------------------------------------------------------------------

def dump_lp(fg: FactorGraph, tables) -> str:
    """The linearized program as text, for debugging and golden tests."""
    clauses, offset = compile_objective(fg, tables)
    lines = [f"\\ factorgraph {fg.instance_id} (offset {offset:.6g})", "maximize"]
    terms = [f"{c.weight:+.6g} z{j}" for j, c in enumerate(clauses)]
    lines.append("  " + (" ".join(terms) if terms else "0"))
    lines.append("subject to")
    for j, c in enumerate(clauses):
        s_terms = [f"+ y{i}" for i in c.pos] + [f"+ (1 - y{i})" for i in c.neg]
        n = len(c.pos) + len(c.neg)
        s_text = " ".join(s_terms) if s_terms else "0"
        lines.append(f"  link{j}a: z{j} <= {s_text}")
        lines.append(f"  link{j}b: {s_text} <= {n} z{j}")
    for idx, con in enumerate(fg.constraints):
        terms = " ".join(
            f"{'+' if coef >= 0 else '-'} {abs(coef)} y{i}" for i, coef in con.coeffs
        )
        lines.append(f"  {con.origin}_{idx}: {terms} {con.comparator} {con.rhs}")
    names = " ".join([f"y{i}" for i in range(fg.num_variables)] +
                     [f"z{j}" for j in range(len(clauses))])
    lines.append("binary")
    lines.append(f"  {names}")
    return "\n".join(lines) + "\n"
