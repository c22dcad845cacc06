"""Instantiate templates and constraints over a datastore into factor graphs.

Every distinct ground open atom found in the candidate files becomes one
binary decision variable.  Each weighted-template grounding whose closed
literals hold yields one ground rule (a potential); each hard-constraint
grounding yields one linear inequality; arithmetic constraints expand their
sum variables over the candidates.  The result is split into one factor graph
per connected component of the variable-factor graph, with contiguous
variable ids and a deterministic order throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .datastore import Datastore
from .dsl import (
    ArithmeticConstraint,
    Atom,
    CheckedProgram,
    Const,
    RuleTemplate,
    SumVar,
    Var,
)
from .errors import GroundingExplosionError, InfeasibleConstantError

DEFAULT_VARIABLE_CAP = 10**6

GroundAtom = tuple[str, tuple[str, ...]]  # (predicate, constants)


@dataclass(frozen=True)
class DecisionVariable:
    id: int
    predicate: str
    args: tuple[str, ...]
    gold: int | None = None

    @property
    def atom(self) -> GroundAtom:
        return (self.predicate, self.args)

    def __str__(self):
        return f"{self.predicate}({','.join(self.args)})"


@dataclass(frozen=True)
class GroundRule:
    """One instantiation of a weighted template.

    ``body_pos``/``body_neg`` hold the open-atom variable ids of the body in
    clause polarity (a negated body literal appears positively in the clause).
    ``features`` is the bundle of ground atoms feeding the template's scorer:
    all body atoms in template order, then the head atom.
    """

    template_id: str
    body_pos: tuple[int, ...]
    body_neg: tuple[int, ...]
    head_var: int
    head_sign: bool  # written head polarity; False only for hard constraints
    features: tuple[GroundAtom, ...]

    @property
    def pos_vars(self) -> tuple[int, ...]:
        extra = (self.head_var,) if self.head_sign and self.head_var not in self.body_pos else ()
        return self.body_pos + extra

    @property
    def neg_vars(self) -> tuple[int, ...]:
        extra = (
            (self.head_var,) if not self.head_sign and self.head_var not in self.body_neg else ()
        )
        return self.body_neg + extra

    def variables(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.body_pos) | set(self.body_neg) | {self.head_var}))


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: tuple[tuple[int, Fraction], ...]  # (variable id, coefficient), sorted by id
    comparator: str  # "<=" | ">=" | "="
    rhs: Fraction
    origin: str

    def variables(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.coeffs)

    def satisfied(self, values) -> bool:
        lhs = sum(c * int(values[i]) for i, c in self.coeffs)
        if self.comparator == "<=":
            return lhs <= self.rhs
        if self.comparator == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass
class FactorGraph:
    instance_id: str
    variables: list[DecisionVariable]
    potentials: list[GroundRule]
    constraints: list[LinearConstraint]
    var_index: dict[GroundAtom, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.var_index:
            self.var_index = {v.atom: v.id for v in self.variables}

    @property
    def num_variables(self) -> int:
        return len(self.variables)


# ---------------------------------------------------------------------------
# Template grounding
# ---------------------------------------------------------------------------

def _substitute(atom: Atom, binding: dict[str, str]) -> tuple[str, ...]:
    out = []
    for term in atom.args:
        if isinstance(term, Const):
            out.append(term.value)
        else:
            out.append(binding[term.name])
    return tuple(out)


def _ground_template(template: RuleTemplate, program: CheckedProgram, data: Datastore):
    """Yield variable bindings for one template, in deterministic order.

    Join literals (positive closed, and open in either polarity) extend the
    partial bindings from their tables; negated closed literals and guards
    filter fully-bound candidates afterwards.
    """
    joins, filters = [], []
    for lit in template.body:
        schema = program.relations[lit.atom.predicate]
        if schema.open or not lit.negated:
            joins.append(lit.atom)
        else:
            filters.append(lit)
    joins.append(template.head.atom)

    bindings = [{}]
    for atom in joins:
        bindings = [ext for b in bindings for ext in data.query(atom, b)]
        if not bindings:
            return
    for b in bindings:
        ok = all(
            (b[g.left.name] == b[g.right.name]) == g.equal for g in template.guards
        ) and all(not data.holds(lit.atom.predicate, _substitute(lit.atom, b)) for lit in filters)
        if ok:
            yield b


def _clause_of(template, program, data, binding, var_index):
    """Open-literal clause sets for one grounding, or None if degenerate.

    Returns (body_pos, body_neg, head_id) with body sets in clause polarity.
    Groundings that produce a tautological clause, or whose head atom
    collides with an opposite-polarity body literal, are discarded.
    """
    body_pos, body_neg = set(), set()
    for lit in template.body:
        if not program.relations[lit.atom.predicate].open:
            continue
        vid = var_index[(lit.atom.predicate, _substitute(lit.atom, binding))]
        (body_pos if lit.negated else body_neg).add(vid)
    head_id = var_index[(template.head.atom.predicate, _substitute(template.head.atom, binding))]
    if body_pos & body_neg:
        return None  # body is contradictory, clause is a tautology
    opposite = body_pos if template.head.negated else body_neg
    if head_id in opposite:
        return None  # written clause would contain h and ~h
    return tuple(sorted(body_pos)), tuple(sorted(body_neg)), head_id


def rule_to_inequality(rule: GroundRule) -> LinearConstraint:
    """Clause satisfaction as a linear inequality, normalized to sum >= rhs.

    sum_{i in I+} y_i + sum_{i in I-} (1 - y_i) >= 1  becomes
    sum_{I+} y_i - sum_{I-} y_i >= 1 - |I-|.
    """
    pos, neg = rule.pos_vars, rule.neg_vars
    coeffs = {i: Fraction(1) for i in pos}
    for i in neg:
        coeffs[i] = Fraction(-1)
    return LinearConstraint(
        tuple(sorted(coeffs.items())), ">=", Fraction(1 - len(neg)), origin=rule.template_id
    )


# ---------------------------------------------------------------------------
# Arithmetic constraint expansion
# ---------------------------------------------------------------------------

def expand_summation(
    constraint: ArithmeticConstraint,
    data: Datastore,
    var_index: dict[GroundAtom, int] | None = None,
) -> list[LinearConstraint]:
    """One linear constraint per assignment of the non-sum variables.

    Free-variable domains are the unions of constants observed at the
    variable's positions across the candidate tables; sum variables expand to
    all matching candidate ground atoms.  Open atoms that ground to a
    non-candidate contribute 0, closed atoms their closed-world truth value.
    Fully-constant instances are dropped when trivially true and raise
    InfeasibleConstantError when false.
    """
    if var_index is None:
        var_index = _global_variable_index(data)

    domains: dict[str, set[str]] = {}
    for _, atom in constraint.terms:
        for binding in data.query(atom):
            for name, value in binding.items():
                if not any(
                    isinstance(t, SumVar) and t.name == name
                    for _, a in constraint.terms
                    for t in a.args
                ):
                    domains.setdefault(name, set()).add(value)

    free_vars = sorted(domains)
    assignments = [{}]
    for name in free_vars:
        assignments = [
            {**b, name: value} for b in assignments for value in sorted(domains[name])
        ]
        if len(assignments) > DEFAULT_VARIABLE_CAP:
            raise GroundingExplosionError(
                f"arithmetic constraint {constraint.constraint_id} grounding exceeds cap"
            )

    out = []
    for binding in assignments:
        coeffs: dict[int, Fraction] = {}
        constant = Fraction(0)
        for coef, atom in constraint.terms:
            is_open = data.program.relations[atom.predicate].open
            if any(isinstance(t, SumVar) for t in atom.args):
                for ext in data.query(atom, binding):
                    row = _substitute(atom, ext)
                    if is_open:
                        vid = var_index.get((atom.predicate, row))
                        if vid is not None:
                            coeffs[vid] = coeffs.get(vid, Fraction(0)) + coef
                    else:  # query only yields present rows, truth = 1
                        constant += coef
                continue
            row = _substitute(atom, binding)
            keyed = (atom.predicate, row)
            if is_open and keyed in var_index:
                coeffs[var_index[keyed]] = coeffs.get(var_index[keyed], Fraction(0)) + coef
            elif not is_open and data.holds(atom.predicate, row):
                constant += coef
            # open non-candidates are identically 0 and drop out
        coeffs = {i: c for i, c in coeffs.items() if c != 0}
        rhs = constraint.rhs - constant
        if not coeffs:
            if not _const_satisfied(constraint.comparator, rhs):
                raise InfeasibleConstantError(
                    f"arithmetic constraint {constraint.constraint_id} is constant-false "
                    f"for {binding}"
                )
            continue
        out.append(
            LinearConstraint(
                tuple(sorted(coeffs.items())),
                constraint.comparator,
                rhs,
                origin=constraint.constraint_id,
            )
        )
    return out


def _const_satisfied(comparator: str, rhs: Fraction) -> bool:
    if comparator == "<=":
        return 0 <= rhs
    if comparator == ">=":
        return 0 >= rhs
    return rhs == 0


# ---------------------------------------------------------------------------
# Full grounding
# ---------------------------------------------------------------------------

def _global_variable_index(data: Datastore) -> dict[GroundAtom, int]:
    atoms = []
    for pred in sorted(data.program.open_relations()):
        for row in data.candidates(pred):
            atoms.append((pred, row))
    atoms.sort()
    return {atom: i for i, atom in enumerate(atoms)}


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def ground(
    program: CheckedProgram, data: Datastore, variable_cap: int = DEFAULT_VARIABLE_CAP
) -> list[FactorGraph]:
    """Ground every template and constraint; split into per-instance graphs.

    Pure function of (program, datastore): output is identical across runs.
    Raises GroundingExplosionError when the variable count exceeds the cap.
    """
    var_index = _global_variable_index(data)
    if len(var_index) > variable_cap:
        raise GroundingExplosionError(
            f"{len(var_index)} decision variables exceed the cap of {variable_cap}"
        )

    potentials: list[GroundRule] = []
    for template in program.templates:
        for binding in _ground_template(template, program, data):
            clause = _clause_of(template, program, data, binding, var_index)
            if clause is None:
                continue
            body_pos, body_neg, head_id = clause
            feats = tuple(
                (a.predicate, _substitute(a, binding)) for a in template.atoms()
            )
            potentials.append(
                GroundRule(
                    template.template_id,
                    body_pos,
                    body_neg,
                    head_id,
                    not template.head.negated,
                    feats,
                )
            )

    constraints: list[LinearConstraint] = []
    for template in program.constraints:
        for binding in _ground_template(template, program, data):
            clause = _clause_of(template, program, data, binding, var_index)
            if clause is None:
                continue
            body_pos, body_neg, head_id = clause
            rule = GroundRule(
                template.template_id, body_pos, body_neg, head_id, not template.head.negated, ()
            )
            constraints.append(rule_to_inequality(rule))
    for arith in program.ariths:
        constraints.extend(expand_summation(arith, data, var_index))

    # connected components of the variable-factor graph
    uf = _UnionFind(len(var_index))
    for pot in potentials:
        ids = pot.variables()
        for other in ids[1:]:
            uf.union(ids[0], other)
    for con in constraints:
        ids = con.variables()
        for other in ids[1:]:
            uf.union(ids[0], other)

    atoms_by_id = {i: atom for atom, i in var_index.items()}
    components: dict[int, list[int]] = {}
    for i in range(len(var_index)):
        components.setdefault(uf.find(i), []).append(i)
    roots = sorted(components, key=lambda r: atoms_by_id[min(components[r])])

    graphs = []
    for k, root in enumerate(roots):
        member_ids = sorted(components[root], key=lambda i: atoms_by_id[i])
        remap = {old: new for new, old in enumerate(member_ids)}
        variables = [
            DecisionVariable(
                remap[i],
                atoms_by_id[i][0],
                atoms_by_id[i][1],
                data.gold(atoms_by_id[i][0], atoms_by_id[i][1]),
            )
            for i in member_ids
        ]
        root_set = set(member_ids)
        pots = [
            GroundRule(
                p.template_id,
                tuple(sorted(remap[i] for i in p.body_pos)),
                tuple(sorted(remap[i] for i in p.body_neg)),
                remap[p.head_var],
                p.head_sign,
                p.features,
            )
            for p in potentials
            if p.head_var in root_set
        ]
        pots.sort(key=lambda p: (p.template_id, p.features))
        cons = [
            LinearConstraint(
                tuple(sorted((remap[i], c) for i, c in con.coeffs)),
                con.comparator,
                con.rhs,
                con.origin,
            )
            for con in constraints
            if con.coeffs and con.coeffs[0][0] in root_set
        ]
        cons.sort(key=lambda c: (c.origin, c.coeffs, c.comparator, c.rhs))
        graphs.append(FactorGraph(f"g{k:04d}", variables, pots, cons))
    return graphs


# ---------------------------------------------------------------------------
# Deterministic dump (golden-file format)
# ---------------------------------------------------------------------------

def dump_factor_graph(fg: FactorGraph, manifest: dict | None = None) -> str:
    lines = [f"# factorgraph {fg.instance_id}"]
    for key in sorted(manifest or {}):
        lines.append(f"# {key}={manifest[key]}")
    lines.append(
        f"# variables={fg.num_variables} potentials={len(fg.potentials)} "
        f"constraints={len(fg.constraints)}"
    )
    for v in fg.variables:
        gold = "-" if v.gold is None else str(v.gold)
        lines.append(f"var {v.id} {v} gold={gold}")
    for p in fg.potentials:
        pos = ",".join(str(i) for i in p.pos_vars)
        neg = ",".join(str(i) for i in p.neg_vars)
        lines.append(f"pot {p.template_id} pos=[{pos}] neg=[{neg}] head={p.head_var}")
    for c in fg.constraints:
        terms = " ".join(
            f"{'+' if coef >= 0 else '-'}{abs(coef)}*y{i}" for i, coef in c.coeffs
        )
        lines.append(f"con {c.origin}: {terms} {c.comparator} {c.rhs}")
    return "\n".join(lines) + "\n"
