"""Builders for synthetic factor graphs used across the inference tests."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from relgraph.grounding import DecisionVariable, FactorGraph, GroundRule, LinearConstraint


def make_fg(nvars, potentials=(), constraints=(), gold=None):
    variables = [
        DecisionVariable(i, "Y", (str(i),), None if gold is None else gold[i])
        for i in range(nvars)
    ]
    return FactorGraph("test", variables, list(potentials), list(constraints))


def rule(head, body_pos=(), body_neg=(), head_sign=True, template="t"):
    return GroundRule(template, tuple(body_pos), tuple(body_neg), head, head_sign, ())


def linear(coeffs: dict, comparator: str, rhs) -> LinearConstraint:
    return LinearConstraint(
        tuple(sorted((i, Fraction(c)) for i, c in coeffs.items())), comparator, Fraction(rhs),
        origin="test",
    )


def random_factor_graph(rng, max_vars=10, max_pots=12, max_cons=4, with_gold=False):
    """Random clause potentials with dyadic mixed-sign weights and random
    small linear constraints; may be infeasible."""
    nvars = int(rng.integers(2, max_vars + 1))
    npots = int(rng.integers(1, max_pots + 1))
    potentials, tables = [], []
    for _ in range(npots):
        size = int(rng.integers(1, min(4, nvars) + 1))
        members = rng.choice(nvars, size=size, replace=False)
        head = int(members[0])
        body = members[1:]
        signs = rng.integers(0, 2, size=len(body))
        body_pos = tuple(sorted(int(v) for v, s in zip(body, signs) if s))
        body_neg = tuple(sorted(int(v) for v, s in zip(body, signs) if not s))
        potentials.append(rule(head, body_pos, body_neg, head_sign=bool(rng.integers(0, 2))))
        tables.append(rng.integers(-8, 9, size=2).astype(np.float64) / 4.0)
    constraints = []
    for _ in range(int(rng.integers(0, max_cons + 1))):
        size = int(rng.integers(1, min(3, nvars) + 1))
        members = rng.choice(nvars, size=size, replace=False)
        coeffs = {int(v): int(c) for v, c in
                  zip(members, rng.choice([-2, -1, 1, 2], size=size))}
        comparator = rng.choice(["<=", ">=", "="])
        rhs = int(rng.integers(-2, 3))
        constraints.append(linear(coeffs, comparator, rhs))
    gold = rng.integers(0, 2, size=nvars) if with_gold else None
    return make_fg(nvars, potentials, constraints, gold=gold), tables
