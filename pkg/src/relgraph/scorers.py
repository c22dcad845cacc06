"""Shared representation layer: entity encoders, relation encoders, and
per-template rule scorers.

Every entity type gets one encoder (an embedding table for symbolic types, a
feed-forward net over the feature vector for attributed types), every
predicate one relation encoder over the concatenated argument encodings, and
every weighted template one scorer over the concatenated relation encodings
of its body atoms (plus the head atom's encoding unless disabled).  The
scorer emits one raw score per head label; normalization is the learner's
job.

In ``relnets`` sharing mode the same encoder objects are reused by every
template that mentions the entity/relation; in ``independent`` mode each
template owns private copies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Node, Parameter, Tape
from .datastore import Datastore
from .dsl import ATTRIBUTED, CheckedProgram, RuleTemplate
from .errors import DimMismatchError, MissingFeatureError, MissingSpecError
from .grounding import FactorGraph, GroundRule
from .rng import named_stream

RELNETS = "relnets"
INDEPENDENT = "independent"

NUM_HEAD_LABELS = 2  # decision variables are binary


# ---------------------------------------------------------------------------
# Network config
# ---------------------------------------------------------------------------

@dataclass
class NetworkConfig:
    """Parsed network-config file.

    JSON with three name->spec sections plus global switches::

        {"mode": "relnets", "include_head": true,
         "entities":  {"Post": {"layers": [2, 8], "activation": "relu"},
                       "Ideology": {"embed_dim": 4}},
         "relations": {"Agree": {"layers": [16, 8]}},
         "rules":     {"r0": {"layers": [16, 8, 2]}, "*": {...}}}

    A ``"*"`` key provides a fallback spec for its section; a per-name
    ``"share": false`` opts one encoder out of relnets sharing.
    """

    mode: str = RELNETS
    include_head: bool = True
    entities: dict = field(default_factory=dict)
    relations: dict = field(default_factory=dict)
    rules: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: dict) -> "NetworkConfig":
        mode = raw.get("mode", RELNETS)
        if mode not in (RELNETS, INDEPENDENT):
            raise MissingSpecError(f"unknown sharing mode {mode!r}")
        return NetworkConfig(
            mode=mode,
            include_head=raw.get("include_head", True),
            entities=raw.get("entities", {}),
            relations=raw.get("relations", {}),
            rules=raw.get("rules", {}),
        )

    @staticmethod
    def load(path: str | Path) -> "NetworkConfig":
        return NetworkConfig.from_dict(json.loads(Path(path).read_text()))

    def lookup(self, section: str, name: str) -> dict:
        table = getattr(self, section)
        spec = table.get(name, table.get("*"))
        if spec is None:
            kind = {"entities": "entity", "relations": "relation", "rules": "rule"}[section]
            raise MissingSpecError(f"no network spec for {kind} {name!r}")
        return spec


_ACTIVATIONS = ("relu", "tanh", "none")


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

class Mlp:
    """Feed-forward net; activation after every layer except the last."""

    def __init__(self, name: str, layers: list[int], activation: str, rng):
        if len(layers) < 2:
            raise DimMismatchError(f"{name}: layers must list at least [in, out]")
        if activation not in _ACTIVATIONS:
            raise MissingSpecError(f"{name}: unknown activation {activation!r}")
        self.name = name
        self.activation = activation
        self.in_dim = layers[0]
        self.out_dim = layers[-1]
        self.weights: list[tuple[Parameter, Parameter]] = []
        for k, (fan_in, fan_out) in enumerate(zip(layers, layers[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = Parameter(f"{name}/W{k}", rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            b = Parameter(f"{name}/b{k}", np.zeros(fan_out))
            self.weights.append((w, b))

    def apply(self, tape: Tape, x: Node) -> Node:
        h = x
        for k, (w, b) in enumerate(self.weights):
            h = tape.add(tape.matmul(tape.read(w), h), tape.read(b))
            if k < len(self.weights) - 1:
                h = tape.relu(h) if self.activation == "relu" else (
                    tape.tanh(h) if self.activation == "tanh" else h
                )
        return h

    def parameters(self):
        for w, b in self.weights:
            yield w
            yield b


class Embedding:
    """Lookup table for symbolic entities; rows indexed by vocabulary line."""

    def __init__(self, name: str, vocab_size: int, embed_dim: int, rng):
        self.name = name
        self.out_dim = embed_dim
        self.table = Parameter(f"{name}/E", rng.normal(0.0, 0.1, size=(vocab_size, embed_dim)))

    def apply(self, tape: Tape, index: int) -> Node:
        return tape.embedding_lookup(tape.read(self.table), index)

    def parameters(self):
        yield self.table


@dataclass
class ScorerGraph:
    """Registry wiring encoders to rule scorers for one program."""

    mode: str
    include_head: bool
    # keyed by (owner, name); owner is "" in relnets mode (or for shared specs)
    entity_encoders: dict
    relation_encoders: dict
    rule_scorers: dict  # template_id -> Mlp
    templates: dict  # template_id -> RuleTemplate

    def entity_encoder(self, template_id: str, entity_type: str):
        enc = self.entity_encoders.get(("", entity_type))
        if enc is None:
            enc = self.entity_encoders[(template_id, entity_type)]
        return enc

    def relation_encoder(self, template_id: str, predicate: str):
        enc = self.relation_encoders.get(("", predicate))
        if enc is None:
            enc = self.relation_encoders[(template_id, predicate)]
        return enc

    def parameters(self, include_entity_encoders: bool = True):
        """Unique parameters, deterministic order."""
        seen = set()
        groups = [self.relation_encoders, self.rule_scorers]
        if include_entity_encoders:
            groups.insert(0, self.entity_encoders)
        for group in groups:
            for key in sorted(group, key=str):
                for p in group[key].parameters():
                    if id(p) not in seen:
                        seen.add(id(p))
                        yield p

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def restore(self, snap: dict[str, np.ndarray]):
        for p in self.parameters():
            p.value[...] = snap[p.name]


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _used_symbols(program: CheckedProgram, include_head: bool):
    """Entity types and predicates that feed some weighted template's scorer."""
    predicates, entity_types = set(), set()
    for tpl in program.templates:
        atoms = [lit.atom for lit in tpl.body]
        if include_head:
            atoms.append(tpl.head.atom)
        for atom in atoms:
            predicates.add(atom.predicate)
            entity_types.update(program.relations[atom.predicate].arg_types)
    return predicates, entity_types


def _scored_atoms(template: RuleTemplate, include_head: bool):
    atoms = [lit.atom for lit in template.body]
    if include_head:
        atoms.append(template.head.atom)
    return atoms


def build_scorers(
    program: CheckedProgram,
    data: Datastore,
    config: NetworkConfig | dict,
    seed: int = 0,
) -> ScorerGraph:
    """Initialize all encoders and rule scorers per the network config.

    Weights start uniform in +-1/sqrt(fan_in), biases at zero, embedding
    tables normal(0, 0.1); all draws come from streams named by the component
    so the wiring mode does not perturb unrelated initializations.
    """
    if isinstance(config, dict):
        config = NetworkConfig.from_dict(config)

    predicates, entity_types = _used_symbols(program, config.include_head)

    def entity_out_dim(type_name: str) -> int:
        spec = config.lookup("entities", type_name)
        if program.entities[type_name].kind == ATTRIBUTED:
            if "layers" not in spec:
                raise MissingSpecError(f"entity {type_name!r} needs 'layers'")
            return spec["layers"][-1]
        if "embed_dim" not in spec:
            raise MissingSpecError(f"symbolic entity {type_name!r} needs 'embed_dim'")
        return spec["embed_dim"]

    def relation_out_dim(predicate: str) -> int:
        spec = config.lookup("relations", predicate)
        if "layers" not in spec:
            raise MissingSpecError(f"relation {predicate!r} needs 'layers'")
        return spec["layers"][-1]

    def make_entity(owner: str, type_name: str):
        ent = program.entities[type_name]
        spec = config.lookup("entities", type_name)
        rng = named_stream(seed, f"ent/{owner}/{type_name}")
        label = f"ent/{owner or 'shared'}/{type_name}"
        if ent.kind == ATTRIBUTED:
            layers = spec["layers"]
            if layers[0] != data.feature_dim(type_name):
                raise DimMismatchError(
                    f"entity {type_name!r}: layers[0]={layers[0]} does not match "
                    f"feature dim {data.feature_dim(type_name)}"
                )
            return Mlp(label, layers, spec.get("activation", "relu"), rng)
        vocab_size = data.features.vocab_size(type_name)
        if vocab_size == 0:
            raise MissingFeatureError(f"no vocabulary loaded for symbolic entity {type_name!r}")
        return Embedding(label, vocab_size, spec["embed_dim"], rng)

    def make_relation(owner: str, predicate: str):
        spec = config.lookup("relations", predicate)
        layers = spec["layers"]
        in_dim = sum(entity_out_dim(t) for t in program.relations[predicate].arg_types)
        if layers[0] != in_dim:
            raise DimMismatchError(
                f"relation {predicate!r}: layers[0]={layers[0]} does not match the "
                f"sum of argument encoder outputs ({in_dim})"
            )
        rng = named_stream(seed, f"rel/{owner}/{predicate}")
        return Mlp(f"rel/{owner or 'shared'}/{predicate}", layers,
                   spec.get("activation", "relu"), rng)

    entity_encoders, relation_encoders, rule_scorers = {}, {}, {}

    def shared_entity(type_name):
        return config.mode == RELNETS and config.lookup("entities", type_name).get("share", True)

    def shared_relation(predicate):
        return config.mode == RELNETS and config.lookup("relations", predicate).get("share", True)

    for type_name in sorted(entity_types):
        entity_out_dim(type_name)  # fail fast on missing specs
        if shared_entity(type_name):
            entity_encoders[("", type_name)] = make_entity("", type_name)
    for predicate in sorted(predicates):
        if shared_relation(predicate):
            relation_encoders[("", predicate)] = make_relation("", predicate)

    for tpl in program.templates:
        tid = tpl.template_id
        atoms = _scored_atoms(tpl, config.include_head)
        local_types = {t for a in atoms for t in program.relations[a.predicate].arg_types}
        for type_name in sorted(local_types):
            if not shared_entity(type_name):
                entity_encoders[(tid, type_name)] = make_entity(tid, type_name)
        for predicate in sorted({a.predicate for a in atoms}):
            if not shared_relation(predicate):
                relation_encoders[(tid, predicate)] = make_relation(tid, predicate)

        spec = config.lookup("rules", tid)
        layers = spec.get("layers")
        if layers is None:
            raise MissingSpecError(f"rule {tid!r} needs 'layers'")
        in_dim = sum(relation_out_dim(a.predicate) for a in atoms)
        if layers[0] != in_dim:
            raise DimMismatchError(
                f"rule {tid!r}: layers[0]={layers[0]} does not match the sum of "
                f"relation encoder outputs ({in_dim})"
            )
        if layers[-1] != NUM_HEAD_LABELS:
            raise DimMismatchError(
                f"rule {tid!r}: layers[-1] must be {NUM_HEAD_LABELS}, got {layers[-1]}"
            )
        rng = named_stream(seed, f"rule/{tid}")
        rule_scorers[tid] = Mlp(f"rule/{tid}", layers, spec.get("activation", "relu"), rng)

    return ScorerGraph(
        mode=config.mode,
        include_head=config.include_head,
        entity_encoders=entity_encoders,
        relation_encoders=relation_encoders,
        rule_scorers=rule_scorers,
        templates={t.template_id: t for t in program.templates},
    )


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def _encode_entity(graph, tape, data, tid, type_name, constant, cache):
    owner = "" if ("", type_name) in graph.entity_encoders else tid
    key = ("ent", owner, type_name, constant)
    node = cache.get(key)
    if node is not None:
        return node
    ent = data.program.entities[type_name]
    encoder = graph.entity_encoder(tid, type_name)
    if ent.kind == ATTRIBUTED:
        try:
            vec = data.feature_vector(type_name, constant)
        except KeyError:
            raise MissingFeatureError(
                f"no features for {type_name} constant {constant!r}"
            ) from None
        node = encoder.apply(tape, tape.constant(vec))
    else:
        try:
            index = data.vocab_index(type_name, constant)
        except KeyError:
            raise MissingFeatureError(
                f"no vocabulary entry for {type_name} constant {constant!r}"
            ) from None
        node = encoder.apply(tape, index)
    cache[key] = node
    return node


def _encode_atom(graph, tape, data, tid, predicate, args, cache):
    owner = "" if ("", predicate) in graph.relation_encoders else tid
    key = ("rel", owner, predicate, args)
    node = cache.get(key)
    if node is not None:
        return node
    arg_types = data.program.relations[predicate].arg_types
    parts = [
        _encode_entity(graph, tape, data, tid, t, c, cache) for t, c in zip(arg_types, args)
    ]
    encoder = graph.relation_encoder(tid, predicate)
    node = encoder.apply(tape, parts[0] if len(parts) == 1 else tape.concat(parts))
    cache[key] = node
    return node


def score_rule(
    graph: ScorerGraph,
    rule: GroundRule,
    data: Datastore,
    tape: Tape | None = None,
    cache: dict | None = None,
) -> Node:
    """Raw score vector over head labels for one ground rule.

    Pure function of (parameters, rule, features): identical rules from the
    same template yield identical score tables.
    """
    if tape is None:
        tape = Tape()
    if cache is None:
        cache = {}
    atoms = list(rule.features)
    if not graph.include_head:
        atoms = atoms[:-1]
    encodings = [
        _encode_atom(graph, tape, data, rule.template_id, pred, args, cache)
        for pred, args in atoms
    ]
    x = encodings[0] if len(encodings) == 1 else tape.concat(encodings)
    return graph.rule_scorers[rule.template_id].apply(tape, x)


def score_graph(
    graph: ScorerGraph, fg: FactorGraph, data: Datastore, tape: Tape | None = None
):
    """Score tables for every potential of a factor graph, in potential order.

    Returns tape nodes when a tape is given (for training), else plain
    float64 arrays.
    """
    own_tape = tape is None
    if own_tape:
        tape = Tape()
    cache: dict = {}
    nodes = [score_rule(graph, rule, data, tape, cache) for rule in fg.potentials]
    if own_tape:
        return [n.value for n in nodes]
    return nodes


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = "relgraph-checkpoint v1"


def save_checkpoint(graph: ScorerGraph, path: str | Path, manifest: dict | None = None):
    """Text checkpoint at 17 significant digits; round-trips bit-exactly."""
    lines = [CHECKPOINT_MAGIC]
    for key in sorted(manifest or {}):
        lines.append(f"# {key}={manifest[key]}")
    for p in graph.parameters():
        dims = " ".join(str(d) for d in p.value.shape)
        lines.append(f"param {p.name} {p.value.ndim} {dims}".rstrip())
        lines.append(" ".join(f"{v:.17g}" for v in p.value.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise DimMismatchError(f"{path}: not a relgraph checkpoint")
    tensors: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line or line.startswith("#"):
            i += 1
            continue
        parts = line.split()
        if parts[0] != "param":
            raise DimMismatchError(f"{path}: malformed checkpoint line {i + 1}")
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(d) for d in parts[3: 3 + ndim])
        values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        tensors[name] = values.reshape(shape)
        i += 2
    return tensors


def apply_checkpoint(graph: ScorerGraph, tensors: dict[str, np.ndarray]):
    for p in graph.parameters():
        if p.name in tensors:
            if tensors[p.name].shape != p.value.shape:
                raise DimMismatchError(
                    f"checkpoint shape {tensors[p.name].shape} does not match "
                    f"{p.name} {p.value.shape}"
                )
            p.value[...] = tensors[p.name]
