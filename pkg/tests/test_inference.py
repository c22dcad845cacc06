import itertools

import numpy as np
import pytest

import relgraph as rg
from relgraph.errors import InfeasibleError, TooLargeError
from relgraph.inference import Clause, compile_objective, exclusion_cut, hamming_clauses

from _factories import linear, make_fg, random_factor_graph, rule
from _oracles import (
    assignment_objective,
    enumerate_feasible,
    enumerate_map,
)


def spec_example():
    """Two binary variables: weight 3 on y0 being true, weight 2 on the
    clause (~y0 | y1), and the hard constraint y0 + y1 = 1."""
    potentials = [rule(head=0), rule(head=1, body_neg=(0,))]
    tables = [np.array([0.0, 3.0]), np.array([0.0, 2.0])]
    fg = make_fg(2, potentials, [linear({0: 1, 1: 1}, "=", 1)])
    return fg, tables


class TestSolveExact:
    def test_two_variable_example(self):
        fg, tables = spec_example()
        oracle = enumerate_map(fg, tables)
        assert oracle == ((1, 0), 3.0)
        result = rg.solve_exact(fg, tables)
        assert result.values == (1, 0)
        assert result.score == 3.0

    def test_forced_variable_no_potentials(self):
        fg = make_fg(1, [], [linear({0: 1}, "=", 1)])
        result = rg.solve_exact(fg, [])
        assert result.values == (1,)
        assert result.score == 0.0

    def test_contradiction_infeasible(self):
        fg = make_fg(1, [], [linear({0: 1}, "=", 1), linear({0: 1}, "=", 0)])
        with pytest.raises(InfeasibleError):
            rg.solve_exact(fg, [])

    def test_lexicographic_tie_break(self):
        # all-zero weights: every feasible assignment ties; expect lex-min
        fg = make_fg(3, [rule(head=0)], [linear({0: 1, 1: 1, 2: 1}, ">=", 1)])
        result = rg.solve_exact(fg, [np.zeros(2)])
        assert result.values == (0, 0, 1)

    def test_too_large_after_propagation(self):
        fg = make_fg(6, [rule(head=i) for i in range(6)],
                     [linear({0: 1}, "=", 1), linear({1: 1}, "=", 0)])
        tables = [np.zeros(2)] * 6
        with pytest.raises(TooLargeError):
            rg.solve_exact(fg, tables, cap=3)
        # propagation fixes y0 and y1, so 4 free variables fit a cap of 4
        assert rg.solve_exact(fg, tables, cap=4).values[:2] == (1, 0)

    def test_matches_enumeration_on_random_graphs(self):
        rng = np.random.default_rng(23)
        solved = infeasible = 0
        for _ in range(150):
            fg, tables = random_factor_graph(rng, max_vars=8)
            oracle = enumerate_map(fg, tables)
            if oracle is None:
                with pytest.raises(InfeasibleError):
                    rg.solve_exact(fg, tables)
                infeasible += 1
                continue
            result = rg.solve_exact(fg, tables)
            assert result.score == oracle[1]
            assert result.values == oracle[0]
            solved += 1
        assert solved >= 100 and infeasible >= 5


class TestLinearization:
    def test_auxiliary_forced_to_truncation(self):
        """For every assignment, the z/s linking constraints force
        z = min(s, 1): z <= s kills z=1 when s=0, s <= n*z kills z=0 when s>=1."""
        rng = np.random.default_rng(31)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            signs = rng.integers(0, 2, size=n)
            pos = tuple(i for i in range(n) if signs[i])
            neg = tuple(i for i in range(n) if not signs[i])
            for values in itertools.product((0, 1), repeat=n):
                s = sum(values[i] for i in pos) + sum(1 - values[i] for i in neg)
                feasible_z = [z for z in (0, 1) if z <= s and s <= n * z]
                assert feasible_z == [min(s, 1)]

    def test_compile_objective_scores_match_oracle(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            fg, tables = random_factor_graph(rng, max_vars=6, max_cons=0)
            for values in itertools.product((0, 1), repeat=fg.num_variables):
                assert rg.objective_value(fg, tables, values) == assignment_objective(
                    fg, tables, values
                )

    def test_tautological_label_goes_to_offset(self):
        # head also appears in the body with the same polarity: the label-0
        # clause (~y0 | ~y0 flipped) is a tautology
        pot = rule(head=0, body_pos=(0,))
        fg = make_fg(1, [pot])
        tables = [np.array([5.0, 7.0])]
        clauses, offset = compile_objective(fg, tables)
        assert offset == 5.0
        assert len(clauses) == 1
        assert rg.objective_value(fg, tables, (0,)) == 5.0
        assert rg.objective_value(fg, tables, (1,)) == 12.0


class TestLossAugmented:
    def test_zero_scores_maximize_hamming(self):
        fg = make_fg(3, [rule(head=i) for i in range(3)])
        tables = [np.zeros(2)] * 3
        gold = (0, 1, 0)
        result = rg.solve_loss_augmented(fg, tables, gold)
        assert result.values == (1, 0, 1)
        assert result.score == 3.0  # pure Hamming distance

    def test_gold_unique_feasible_point(self):
        fg = make_fg(2, [], [linear({0: 1}, "=", 1), linear({1: 1}, "=", 0)])
        result = rg.solve_loss_augmented(fg, [], (1, 0))
        assert result.values == (1, 0)
        assert result.score == 0.0  # margin 0: Delta(gold, gold) = 0

    def test_augmented_objective_matches_enumeration(self):
        fg, tables = spec_example()
        gold = (0, 1)
        best = None
        for values in enumerate_feasible(fg):
            delta = sum(1 for a, b in zip(values, gold) if a != b)
            score = assignment_objective(fg, tables, values) + delta
            if best is None or score > best[1]:
                best = (values, score)
        result = rg.solve_loss_augmented(fg, tables, gold)
        assert (result.values, result.score) == best

    def test_augmented_at_gold_equals_plain(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            fg, tables = random_factor_graph(rng, max_vars=6, max_cons=0)
            gold = tuple(int(v) for v in rng.integers(0, 2, size=fg.num_variables))
            plain = rg.objective_value(fg, tables, gold)
            augmented = plain + sum(
                c.weight for c in hamming_clauses(gold) if c.satisfied(gold)
            )
            assert augmented == plain


class TestKBest:
    def test_pool_equals_all_feasible(self):
        fg, tables = spec_example()
        pool = rg.k_best(fg, tables, k=10)
        feasible = enumerate_feasible(fg)
        assert len(pool) == len(feasible) == 2
        scores = [a.score for a in pool]
        assert scores == sorted(scores, reverse=True)
        assert {a.values for a in pool} == set(feasible)

    def test_k1_is_map(self):
        fg, tables = spec_example()
        pool = rg.k_best(fg, tables, k=1)
        assert pool.assignments[0] == rg.solve_exact(fg, tables)

    def test_k_larger_than_feasible_truncates(self):
        fg = make_fg(2, [], [linear({0: 1, 1: 1}, "=", 1)])
        pool = rg.k_best(fg, [], k=50)
        assert len(pool) == 2

    def test_top_k_set_on_random_graphs(self):
        rng = np.random.default_rng(43)
        for _ in range(30):
            fg, tables = random_factor_graph(rng, max_vars=6)
            feasible = enumerate_feasible(fg)
            if not feasible:
                continue
            ranked = sorted(
                ((assignment_objective(fg, tables, v), v) for v in feasible),
                key=lambda t: (-t[0], t[1]),
            )
            k = min(4, len(ranked))
            pool = rg.k_best(fg, tables, k=k)
            assert [a.values for a in pool] == [v for _, v in ranked[:k]]
            assert len({a.values for a in pool}) == len(pool)

    def test_exclusion_cut_removes_exactly_one_point(self):
        values = (1, 0, 1)
        cut = exclusion_cut(values)
        for candidate in itertools.product((0, 1), repeat=3):
            assert cut.satisfied(candidate) == (candidate != values)


class TestSolveApprox:
    def test_never_beats_exact(self):
        rng = np.random.default_rng(47)
        for trial in range(40):
            fg, tables = random_factor_graph(rng, max_vars=7)
            try:
                exact = rg.solve_exact(fg, tables)
            except InfeasibleError:
                continue
            approx = rg.solve_approx(fg, tables, restarts=4, seed=trial)
            assert rg.check_feasible(fg, approx.values)
            assert approx.score <= exact.score + 1e-12

    def test_single_variable_equals_exact(self):
        fg = make_fg(1, [rule(head=0)])
        tables = [np.array([0.5, -0.25])]
        assert rg.solve_approx(fg, tables, seed=0) == rg.solve_exact(fg, tables)

    def test_local_optimum_no_improving_flip(self):
        rng = np.random.default_rng(53)
        fg, tables = random_factor_graph(rng, max_vars=8)
        result = rg.solve_approx(fg, tables, restarts=2, seed=9)
        base = rg.objective_value(fg, tables, result.values)
        for i in range(fg.num_variables):
            flipped = list(result.values)
            flipped[i] ^= 1
            if rg.check_feasible(fg, flipped):
                assert rg.objective_value(fg, tables, flipped) <= base + 1e-12

    def test_implication_chain_mostly_matches_exact(self):
        """Chain of 8 implication clauses with random weights: the local
        search finds the exact optimum in >= 95% of 100 seeded trials."""
        rng = np.random.default_rng(59)
        hits = 0
        for trial in range(100):
            n = 9
            potentials = [rule(head=i + 1, body_neg=(i,)) for i in range(8)]
            tables = [rng.integers(-8, 9, size=2).astype(np.float64) / 4.0 for _ in range(8)]
            fg = make_fg(n, potentials, [])
            exact = rg.solve_exact(fg, tables)
            approx = rg.solve_approx(fg, tables, restarts=8, seed=trial)
            hits += int(approx.score == exact.score)
        assert hits >= 95

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(61)
        fg, tables = random_factor_graph(rng, max_vars=8)
        a = rg.solve_approx(fg, tables, restarts=4, seed=7)
        b = rg.solve_approx(fg, tables, restarts=4, seed=7)
        assert a == b

    def test_infeasible_raises(self):
        fg = make_fg(1, [], [linear({0: 1}, "=", 1), linear({0: 1}, "=", 0)])
        with pytest.raises(InfeasibleError):
            rg.solve_approx(fg, [], seed=0)


class TestDumpLp:
    def test_structure(self):
        fg, tables = spec_example()
        text = rg.dump_lp(fg, tables)
        assert "maximize" in text
        assert "z0" in text and "link0a" in text and "link0b" in text
        assert "binary" in text
        assert "= 1" in text  # the hard constraint row

    def test_deterministic(self):
        fg, tables = spec_example()
        assert rg.dump_lp(fg, tables) == rg.dump_lp(fg, tables)
