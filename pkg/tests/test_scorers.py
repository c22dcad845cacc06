import numpy as np
import pytest

import relgraph as rg
from relgraph.errors import DimMismatchError, MissingFeatureError, MissingSpecError
from relgraph.scorers import NetworkConfig, build_scorers, save_checkpoint, load_checkpoint

TWO_RULE_PROGRAM = """
entity Item features=2
predicate Obs(Item, Item)
predicate Agree(Item, Item)?
predicate Alike(Item, Item)?
rule: Agree(X, Y) & Obs(X, Y) => Alike(X, Y)
rule: Agree(X, Y) & Obs(Y, X) => Alike(Y, X)
"""

TWO_RULE_FILES = {
    "Item.feat": "a 0.5 0.1\nb -0.3 0.8\n",
    "Obs.tsv": "a\tb\nb\ta\n",
    "Agree.tsv": "a\tb\nb\ta\n",
    "Alike.tsv": "a\tb\nb\ta\n",
}


def two_rule_config(mode):
    return {
        "mode": mode,
        "include_head": True,
        "entities": {"Item": {"layers": [2, 3]}},
        "relations": {"*": {"layers": [6, 3]}},
        "rules": {"*": {"layers": [9, 4, 2]}},
    }


def build(tmp_path, program_text=TWO_RULE_PROGRAM, files=TWO_RULE_FILES, config=None,
          mode="relnets", seed=0):
    program = rg.compile_program(program_text)
    for name, text in files.items():
        (tmp_path / name).write_text(text)
    data = rg.load_data(tmp_path, program)
    scorers = rg.build_scorers(program, data, config or two_rule_config(mode), seed=seed)
    graphs = rg.ground(program, data)
    return program, data, scorers, graphs


class TestBuild:
    def test_relnets_shares_one_encoder(self, tmp_path):
        _, _, scorers, _ = build(tmp_path, mode="relnets")
        agree_keys = [k for k in scorers.relation_encoders if k[1] == "Agree"]
        assert agree_keys == [("", "Agree")]
        assert scorers.relation_encoder("r0", "Agree") is scorers.relation_encoder("r1", "Agree")

    def test_independent_mode_owns_copies(self, tmp_path):
        _, _, scorers, _ = build(tmp_path, mode="independent")
        agree_keys = sorted(k for k in scorers.relation_encoders if k[1] == "Agree")
        assert agree_keys == [("r0", "Agree"), ("r1", "Agree")]
        assert scorers.relation_encoder("r0", "Agree") is not scorers.relation_encoder(
            "r1", "Agree"
        )

    def test_per_name_share_override(self, tmp_path):
        config = two_rule_config("relnets")
        config["relations"] = {
            "*": {"layers": [6, 3]},
            "Agree": {"layers": [6, 3], "share": False},
        }
        _, _, scorers, _ = build(tmp_path, config=config)
        assert ("", "Agree") not in scorers.relation_encoders
        assert ("r0", "Agree") in scorers.relation_encoders

    def test_symbolic_embedding_shape(self, tmp_path):
        program_text = """
entity Word features=2
entity Ideology
predicate Mention(Word, Ideology)
predicate Tag(Word, Ideology)?
rule: Mention(W, I) => Tag(W, I)
"""
        files = {
            "Word.feat": "w1 0.0 0.0\n",
            "Ideology.vocab": "lib\ncon\n",
            "Mention.tsv": "w1\tlib\n",
            "Tag.tsv": "w1\tlib\n",
        }
        config = {
            "entities": {"Word": {"layers": [2, 4]}, "Ideology": {"embed_dim": 4}},
            "relations": {"*": {"layers": [8, 4]}},
            "rules": {"*": {"layers": [8, 2]}},
        }
        _, _, scorers, _ = build(tmp_path, program_text, files, config)
        table = scorers.entity_encoder("r0", "Ideology").table
        assert table.value.shape == (2, 4)

    def test_missing_spec(self, tmp_path):
        config = two_rule_config("relnets")
        del config["relations"]
        config["relations"] = {"Agree": {"layers": [6, 3]}}  # others unnamed
        with pytest.raises(MissingSpecError):
            build(tmp_path, config=config)

    def test_dim_mismatch(self, tmp_path):
        config = two_rule_config("relnets")
        config["entities"]["Item"]["layers"] = [3, 3]  # features are 2-d
        with pytest.raises(DimMismatchError):
            build(tmp_path, config=config)
        config = two_rule_config("relnets")
        config["rules"]["*"]["layers"] = [9, 4, 3]  # head labels must be 2
        with pytest.raises(DimMismatchError):
            build(tmp_path, config=config)


class TestScoring:
    def test_zero_parameters_give_equal_scores(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path)
        for p in scorers.parameters():
            p.value[...] = 0.0
        for pot in graphs[0].potentials:
            table = rg.score_rule(scorers, pot, data).value
            assert table[0] == table[1] == 0.0

    def test_deterministic_tables(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path)
        pot = graphs[0].potentials[0]
        a = rg.score_rule(scorers, pot, data).value
        b = rg.score_rule(scorers, pot, data).value
        np.testing.assert_array_equal(a, b)

    def test_hand_computed_forward(self, tmp_path):
        program_text = """
entity Item features=2
predicate Obs(Item)
predicate Lab(Item)?
rule: Obs(X) => Lab(X)
"""
        files = {"Item.feat": "a 0.3 -0.7\n", "Obs.tsv": "a\n", "Lab.tsv": "a\n"}
        config = {
            "include_head": False,
            "entities": {"Item": {"layers": [2, 2]}},
            "relations": {"Obs": {"layers": [2, 2]}},
            "rules": {"r0": {"layers": [2, 2]}},
        }
        _, data, scorers, graphs = build(tmp_path, program_text, files, config)
        ent_w, ent_b = scorers.entity_encoder("r0", "Item").weights[0]
        ent_w.value[...] = np.eye(2)
        ent_b.value[...] = 0.0
        rel_w, rel_b = scorers.relation_encoder("r0", "Obs").weights[0]
        rel_w.value[...] = 2.0 * np.eye(2)
        rel_b.value[...] = 0.0
        rule_w, rule_b = scorers.rule_scorers["r0"].weights[0]
        rule_w.value[...] = np.array([[1.0, 1.0], [1.0, -1.0]])
        rule_b.value[...] = np.array([0.5, -0.5])
        # x=(0.3,-0.7) -> ent identity -> rel doubles -> (0.6,-1.4)
        # scores: [0.6 - 1.4 + 0.5, 0.6 + 1.4 - 0.5] = [-0.3, 1.5]
        table = rg.score_rule(scorers, graphs[0].potentials[0], data).value
        np.testing.assert_allclose(table, [-0.3, 1.5], atol=1e-12)

    def test_identical_feature_bundles_share_scores(self, tmp_path):
        """Template-level weight tying: same features, same score table."""
        _, data, scorers, graphs = build(tmp_path)
        (graph,) = graphs
        by_features = {}
        for pot in graph.potentials:
            key = (pot.template_id, pot.features)
            table = tuple(rg.score_rule(scorers, pot, data).value)
            if key in by_features:
                assert by_features[key] == table
            by_features[key] = table

    def test_missing_feature(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path)
        del data.features.dense["Item"]["a"]
        with pytest.raises(MissingFeatureError):
            rg.score_rule(scorers, graphs[0].potentials[0], data)


class TestSharing:
    def _tables(self, scorers, data, graph):
        return [tuple(rg.score_rule(scorers, p, data).value) for p in graph.potentials]

    def test_relnets_perturbation_propagates(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path, mode="relnets")
        (graph,) = graphs
        before = self._tables(scorers, data, graph)
        next(scorers.relation_encoder("r0", "Agree").parameters()).value[...] += 1.0
        after = self._tables(scorers, data, graph)
        changed = {
            p.template_id for p, b, a in zip(graph.potentials, before, after) if b != a
        }
        assert changed == {"r0", "r1"}

    def test_independent_perturbation_is_local(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path, mode="independent")
        (graph,) = graphs
        before = self._tables(scorers, data, graph)
        next(scorers.relation_encoder("r0", "Agree").parameters()).value[...] += 1.0
        after = self._tables(scorers, data, graph)
        changed = {
            p.template_id for p, b, a in zip(graph.potentials, before, after) if b != a
        }
        assert changed == {"r0"}


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path)
        path = tmp_path / "ckpt.txt"
        save_checkpoint(scorers, path, manifest={"seed": 0})
        saved = {p.name: p.value.copy() for p in scorers.parameters()}
        for p in scorers.parameters():
            p.value[...] = 0.0
        rg.apply_checkpoint(scorers, load_checkpoint(path))
        for p in scorers.parameters():
            assert np.array_equal(p.value, saved[p.name]), p.name

    def test_checkpoint_rejects_wrong_shape(self, tmp_path):
        _, data, scorers, _ = build(tmp_path)
        path = tmp_path / "ckpt.txt"
        save_checkpoint(scorers, path)
        tensors = load_checkpoint(path)
        name = next(iter(tensors))
        tensors[name] = np.zeros((1, 1))
        with pytest.raises(DimMismatchError):
            rg.apply_checkpoint(scorers, tensors)

    def test_scores_identical_after_reload(self, tmp_path):
        _, data, scorers, graphs = build(tmp_path)
        pot = graphs[0].potentials[0]
        before = rg.score_rule(scorers, pot, data).value.copy()
        path = tmp_path / "ckpt.txt"
        save_checkpoint(scorers, path)
        for p in scorers.parameters():
            p.value[...] = 0.123
        rg.apply_checkpoint(scorers, load_checkpoint(path))
        np.testing.assert_array_equal(rg.score_rule(scorers, pot, data).value, before)
