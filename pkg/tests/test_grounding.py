from fractions import Fraction

import numpy as np
import pytest

import relgraph as rg
from relgraph.errors import GroundingExplosionError, InfeasibleConstantError
from relgraph.grounding import GroundRule, dump_factor_graph

from _oracles import clause_satisfied, inequality_holds


def build(program_text: str, files: dict, tmp_path):
    program = rg.compile_program(program_text)
    for name, text in files.items():
        (tmp_path / name).write_text(text)
    data = rg.load_data(tmp_path, program)
    return program, data


VOTE_PROGRAM = """
entity User features=1
entity Claim features=1
predicate VoteFor(User, User)?
predicate Agree(User, Claim)?
rule: Agree(X, C) & VoteFor(Y, X) => Agree(Y, C)
"""

VOTE_FILES = {
    "User.feat": "u1 0.1\nu2 0.2\n",
    "Claim.feat": "c1 0.3\n",
    "Agree.tsv": "u1\tc1\nu2\tc1\n",
    "VoteFor.tsv": "u1\tu2\nu2\tu1\n",
}


class TestTemplateGrounding:
    def test_vote_rule_two_groundings(self, tmp_path):
        """Manual enumeration: X,Y range over the two users, X != Y because
        only those VoteFor candidates exist; both Agree heads are candidates."""
        program, data = build(VOTE_PROGRAM, VOTE_FILES, tmp_path)
        (graph,) = rg.ground(program, data)
        assert len(graph.potentials) == 2
        bodies = {tuple(p.features) for p in graph.potentials}
        assert bodies == {
            (("Agree", ("u1", "c1")), ("VoteFor", ("u2", "u1")), ("Agree", ("u2", "c1"))),
            (("Agree", ("u2", "c1")), ("VoteFor", ("u1", "u2")), ("Agree", ("u1", "c1"))),
        }

    def test_open_body_atoms_carry_clause_polarity(self, tmp_path):
        program, data = build(VOTE_PROGRAM, VOTE_FILES, tmp_path)
        (graph,) = rg.ground(program, data)
        pot = graph.potentials[0]
        # positive body literals appear negated in the clause
        assert set(pot.body_neg) == set(pot.variables()) - {pot.head_var}
        assert pot.body_pos == ()
        assert pot.head_sign

    def test_zero_open_atoms_zero_graphs(self, tmp_path):
        program, data = build(
            """
entity User features=1
predicate Friend(User, User)
predicate Likes(User, User)?
rule: Friend(X, Y) & Likes(X, Y) => Likes(Y, X)
""",
            {"User.feat": "u1 0.0\nu2 1.0\n", "Friend.tsv": "u1\tu2\n"},
            tmp_path,
        )
        assert rg.ground(program, data) == []

    def test_variable_count_equals_candidates(self, tmp_path):
        program, data = build(VOTE_PROGRAM, VOTE_FILES, tmp_path)
        graphs = rg.ground(program, data)
        total = sum(g.num_variables for g in graphs)
        assert total == len(data.candidates("Agree")) + len(data.candidates("VoteFor"))

    def test_negated_closed_literal_filters(self, tmp_path):
        program, data = build(
            """
entity User features=1
predicate Blocked(User, User)
predicate Likes(User, User)?
rule: Likes(X, Y) & ~Blocked(X, Y) => Likes(Y, X)
""",
            {
                "User.feat": "u1 0.0\nu2 1.0\n",
                "Blocked.tsv": "u1\tu2\n",
                "Likes.tsv": "u1\tu2\nu2\tu1\n",
            },
            tmp_path,
        )
        (graph,) = rg.ground(program, data)
        # only the (u2, u1) binding survives; (u1, u2) is blocked
        assert len(graph.potentials) == 1
        assert graph.potentials[0].features[0] == ("Likes", ("u2", "u1"))

    def test_grounding_cap(self, tmp_path):
        program, data = build(VOTE_PROGRAM, VOTE_FILES, tmp_path)
        with pytest.raises(GroundingExplosionError):
            rg.ground(program, data, variable_cap=2)

    def test_grounding_is_pure(self, tmp_path):
        program, data = build(VOTE_PROGRAM, VOTE_FILES, tmp_path)
        dumps_a = "".join(dump_factor_graph(g) for g in rg.ground(program, data))
        dumps_b = "".join(dump_factor_graph(g) for g in rg.ground(program, data))
        assert dumps_a == dumps_b


class TestRuleToInequality:
    def test_mixed_clause(self):
        rule = GroundRule("c0", body_pos=(), body_neg=(0, 1), head_var=2, head_sign=True,
                          features=())
        con = rg.rule_to_inequality(rule)
        assert dict(con.coeffs) == {0: -1, 1: -1, 2: 1}
        assert con.comparator == ">="
        assert con.rhs == Fraction(-1)

    def test_unit_positive(self):
        rule = GroundRule("c0", (), (), head_var=0, head_sign=True, features=())
        con = rg.rule_to_inequality(rule)
        assert dict(con.coeffs) == {0: 1}
        assert con.rhs == Fraction(1)

    def test_unit_negative(self):
        rule = GroundRule("c0", (), (), head_var=0, head_sign=False, features=())
        con = rg.rule_to_inequality(rule)
        assert dict(con.coeffs) == {0: -1}
        assert con.rhs == Fraction(0)

    def test_satisfaction_equivalence_random_clauses(self):
        """Eq-style inequality agrees with boolean satisfaction on every
        assignment, for randomized clauses of up to 6 literals."""
        rng = np.random.default_rng(11)
        for _ in range(300):
            n = int(rng.integers(1, 7))
            signs = rng.integers(0, 2, size=n)
            head_sign = bool(rng.integers(0, 2))
            body_pos = tuple(i for i in range(1, n) if signs[i])
            body_neg = tuple(i for i in range(1, n) if not signs[i])
            rule = GroundRule("t", body_pos, body_neg, head_var=0,
                              head_sign=head_sign, features=())
            con = rg.rule_to_inequality(rule)
            pos, neg = rule.pos_vars, rule.neg_vars
            for mask in range(1 << n):
                values = [(mask >> i) & 1 for i in range(n)]
                assert clause_satisfied(pos, neg, values) == inequality_holds(pos, neg, values)
                assert con.satisfied(values) == clause_satisfied(pos, neg, values)


SUM_PROGRAM = """
entity User features=1
entity Ideo
predicate Ideology(User, Ideo)?
arith: Ideology(X, +I) = 1
"""


class TestSummationExpansion:
    def test_ideology_mutual_exclusion(self, tmp_path):
        program, data = build(
            SUM_PROGRAM,
            {
                "User.feat": "u1 0.0\n",
                "Ideo.vocab": "lib\ncon\n",
                "Ideology.tsv": "u1\tlib\nu1\tcon\n",
            },
            tmp_path,
        )
        (con,) = rg.expand_summation(program.ariths[0], data)
        assert len(con.coeffs) == 2
        assert all(c == 1 for _, c in con.coeffs)
        assert con.comparator == "="
        assert con.rhs == Fraction(1)

    def test_one_constraint_per_free_binding(self, tmp_path):
        program, data = build(
            SUM_PROGRAM,
            {
                "User.feat": "u1 0.0\nu2 0.0\nu3 0.0\n",
                "Ideo.vocab": "lib\ncon\n",
                "Ideology.tsv": "u1\tlib\nu1\tcon\nu2\tlib\nu2\tcon\nu3\tlib\nu3\tcon\n",
            },
            tmp_path,
        )
        constraints = rg.expand_summation(program.ariths[0], data)
        assert len(constraints) == 3

    def test_link_upper_bound(self, tmp_path):
        program, data = build(
            """
entity Node features=1
predicate Link(Node, Node)?
arith: Link(X, +Y) <= 1
""",
            {
                "Node.feat": "a 0.0\nb 0.0\nc 0.0\nd 0.0\n",
                "Link.tsv": "a\tb\na\tc\na\td\n",
            },
            tmp_path,
        )
        (con,) = rg.expand_summation(program.ariths[0], data)
        assert len(con.coeffs) == 3
        assert con.comparator == "<="
        assert con.rhs == Fraction(1)

    def test_empty_sum_trivially_true_dropped(self, tmp_path):
        program, data = build(
            """
entity Node features=1
predicate Link(Node, Node)?
arith: Link(X, +Y) <= 1
""",
            {"Node.feat": "a 0.0\n", "Link.tsv": ""},
            tmp_path,
        )
        assert rg.expand_summation(program.ariths[0], data) == []

    def test_empty_sum_infeasible_constant(self, tmp_path):
        program, data = build(
            """
entity Node features=1
predicate Flag(Node)
predicate Link(Node, Node)?
arith: Link(X, +Y) + Flag("a") >= 1
""",
            {"Node.feat": "a 0.0\n", "Link.tsv": "", "Flag.tsv": ""},
            tmp_path,
        )
        with pytest.raises(InfeasibleConstantError):
            rg.expand_summation(program.ariths[0], data)

    def test_closed_atom_folds_into_constant(self, tmp_path):
        program, data = build(
            """
entity Node features=1
predicate Flag(Node)
predicate Link(Node, Node)?
arith: Link(X, +Y) + Flag("a") <= 2
""",
            {
                "Node.feat": "a 0.0\nb 0.0\n",
                "Link.tsv": "a\tb\nb\ta\n",
                "Flag.tsv": "a\n",
            },
            tmp_path,
        )
        constraints = rg.expand_summation(program.ariths[0], data)
        assert all(c.rhs == Fraction(1) for c in constraints)  # 2 - Flag("a")


class TestComponents:
    def test_fixture_component_split(self, grounded_fixtures):
        _, _, graphs = grounded_fixtures["open_domain"]
        assert [g.instance_id for g in graphs] == ["g0000", "g0001"]
        assert [g.num_variables for g in graphs] == [18, 4]
        # contiguous ids from 0 in every graph
        for g in graphs:
            assert [v.id for v in g.variables] == list(range(g.num_variables))
            for pot in g.potentials:
                assert all(0 <= i < g.num_variables for i in pot.variables())

    def test_multiclass_constraint_per_component(self, grounded_fixtures):
        _, _, graphs = grounded_fixtures["arg_mining"]
        (g,) = graphs
        a0 = [c for c in g.constraints if c.origin == "a0"]
        assert len(a0) == 3  # one NodeType exclusivity row per component
        assert all(len(c.coeffs) == 3 and c.comparator == "=" for c in a0)
