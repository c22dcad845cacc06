"""In-memory relational database backing the grounding queries.

One ``<Predicate>.tsv`` per relation (tab-separated constants, ``#`` comments,
open relations may carry a trailing 0/1 gold column per row), one
``<EntityType>.feat`` per dense attributed type (constant then floats,
space-separated) and one ``<EntityType>.vocab`` per symbolic or one-hot type
(one constant per line, line number = index).

Closed relations follow the closed-world assumption: an absent row is false.
For open relations the file rows define the candidate ground atoms that
inference reasons over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsl import ATTRIBUTED, VOCAB_FEATURES, Atom, CheckedProgram, Const
from .errors import (
    ArityError,
    DimensionError,
    DuplicateRowError,
    MissingFileError,
    UnknownConstantError,
)


@dataclass(eq=False)
class GroundAtomTable:
    predicate: str
    arity: int
    open: bool
    rows: list[tuple[str, ...]] = field(default_factory=list)  # sorted
    gold: dict[tuple[str, ...], int] = field(default_factory=dict)

    def __contains__(self, row: tuple[str, ...]) -> bool:
        return row in self._row_set

    def finalize(self):
        self._row_set = set(self.rows)
        self.rows.sort()

    def __eq__(self, other):
        return (
            isinstance(other, GroundAtomTable)
            and self.predicate == other.predicate
            and self.rows == other.rows
            and self.gold == other.gold
        )


@dataclass(eq=False)
class FeatureStore:
    dense: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    vocab: dict[str, dict[str, int]] = field(default_factory=dict)

    def vocab_size(self, entity_type: str) -> int:
        return len(self.vocab.get(entity_type, {}))

    def __eq__(self, other):
        if not isinstance(other, FeatureStore) or self.vocab != other.vocab:
            return False
        if self.dense.keys() != other.dense.keys():
            return False
        for t, vecs in self.dense.items():
            if vecs.keys() != other.dense[t].keys():
                return False
            for c, v in vecs.items():
                if not np.array_equal(v, other.dense[t][c]):
                    return False
        return True


class Datastore:
    """Immutable after load; serves grounding queries over one data directory."""

    def __init__(self, program: CheckedProgram, tables, features):
        self.program = program
        self.tables: dict[str, GroundAtomTable] = tables
        self.features: FeatureStore = features

    def __eq__(self, other):
        return (
            isinstance(other, Datastore)
            and self.tables == other.tables
            and self.features == other.features
        )

    # -- queries

    def candidates(self, predicate: str) -> list[tuple[str, ...]]:
        return self.tables[predicate].rows

    def holds(self, predicate: str, row: tuple[str, ...]) -> bool:
        """Closed-world truth of a closed ground atom."""
        return row in self.tables[predicate]

    def gold(self, predicate: str, row: tuple[str, ...]) -> int | None:
        return self.tables[predicate].gold.get(row)

    def query(self, pattern: Atom, bindings: dict[str, str] | None = None):
        """Yield every complete extension of ``bindings`` matching a table row.

        Rows are scanned in lexicographic order, so the stream is deterministic
        and independent of file row order.  Open-relation patterns range over
        all candidate rows regardless of gold labels.
        """
        bindings = bindings or {}
        table = self.tables[pattern.predicate]
        for row in table.rows:
            out = dict(bindings)
            ok = True
            for term, value in zip(pattern.args, row):
                if isinstance(term, Const):
                    if term.value != value:
                        ok = False
                        break
                else:  # Var or SumVar bind by name
                    seen = out.get(term.name)
                    if seen is None:
                        out[term.name] = value
                    elif seen != value:
                        ok = False
                        break
            if ok:
                yield out

    # -- feature access

    def feature_dim(self, entity_type: str) -> int:
        ent = self.program.entities[entity_type]
        if ent.feature_spec == VOCAB_FEATURES:
            return self.features.vocab_size(entity_type)
        return int(ent.feature_spec)

    def feature_vector(self, entity_type: str, constant: str) -> np.ndarray:
        """Dense feature vector for an attributed constant (one-hot for vocab)."""
        ent = self.program.entities[entity_type]
        if ent.feature_spec == VOCAB_FEATURES:
            idx = self.features.vocab[entity_type][constant]
            vec = np.zeros(self.features.vocab_size(entity_type))
            vec[idx] = 1.0
            return vec
        return self.features.dense[entity_type][constant]

    def vocab_index(self, entity_type: str, constant: str) -> int:
        return self.features.vocab[entity_type][constant]


def _data_lines(path: Path):
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def _load_table(path: Path, schema) -> GroundAtomTable:
    table = GroundAtomTable(schema.predicate, schema.arity, schema.open)
    seen: dict[tuple[str, ...], int | None] = {}
    for lineno, line in _data_lines(path):
        cols = line.split("\t")
        gold = None
        if schema.open and len(cols) == schema.arity + 1:
            if cols[-1] not in ("0", "1"):
                raise ArityError(
                    f"{path.name}: gold column must be 0 or 1, got {cols[-1]!r}", lineno, 1
                )
            gold = int(cols[-1])
            cols = cols[: schema.arity]
        if len(cols) != schema.arity:
            raise ArityError(
                f"{path.name}: expected {schema.arity} column(s), got {len(cols)}", lineno, 1
            )
        row = tuple(c.strip() for c in cols)
        if row in seen:
            if seen[row] != gold:
                raise DuplicateRowError(
                    f"{path.name}: conflicting duplicate for {row}", lineno, 1
                )
            continue
        seen[row] = gold
        table.rows.append(row)
        if gold is not None:
            table.gold[row] = gold
    table.finalize()
    return table


def _load_feat(path: Path, dim: int) -> dict[str, np.ndarray]:
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in _data_lines(path):
        parts = line.split()
        constant = parts[0]
        values = parts[1:]
        if len(values) != dim:
            raise DimensionError(
                f"{path.name}: expected {dim} value(s) for {constant!r}, got {len(values)}",
                lineno,
                1,
            )
        vec = np.array([float(v) for v in values])
        if not np.all(np.isfinite(vec)):
            raise DimensionError(f"{path.name}: non-finite value for {constant!r}", lineno, 1)
        if constant in vectors:
            if not np.array_equal(vectors[constant], vec):
                raise DuplicateRowError(
                    f"{path.name}: conflicting duplicate for {constant!r}", lineno, 1
                )
            continue
        vectors[constant] = vec
    return vectors


def _load_vocab(path: Path) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for lineno, line in _data_lines(path):
        if line in vocab:
            raise DuplicateRowError(f"{path.name}: duplicate vocab entry {line!r}", lineno, 1)
        vocab[line] = len(vocab)
    return vocab


def load_data(data_dir: str | Path, program: CheckedProgram) -> Datastore:
    """Load all tables and features for ``program`` from ``data_dir``.

    Closed relations must have a file; open relations may be fully latent.
    Every constant referenced by any loaded atom must resolve to features for
    its declared type (checked eagerly).
    """
    data_dir = Path(data_dir)
    tables: dict[str, GroundAtomTable] = {}
    for name, schema in program.relations.items():
        path = data_dir / f"{name}.tsv"
        if not path.exists():
            if not schema.open:
                raise MissingFileError(f"missing data file for closed relation: {path}")
            table = GroundAtomTable(name, schema.arity, True)
            table.finalize()
            tables[name] = table
        else:
            tables[name] = _load_table(path, schema)

    features = FeatureStore()
    for name, ent in program.entities.items():
        if ent.kind == ATTRIBUTED and ent.feature_spec != VOCAB_FEATURES:
            path = data_dir / f"{name}.feat"
            features.dense[name] = _load_feat(path, int(ent.feature_spec)) if path.exists() else {}
        else:  # symbolic types and one-hot attributed types index into a vocabulary
            path = data_dir / f"{name}.vocab"
            features.vocab[name] = _load_vocab(path) if path.exists() else {}

    for name, table in tables.items():
        schema = program.relations[name]
        for row in table.rows:
            for constant, type_name in zip(row, schema.arg_types):
                ent = program.entities[type_name]
                if ent.kind == ATTRIBUTED and ent.feature_spec != VOCAB_FEATURES:
                    if constant not in features.dense.get(type_name, {}):
                        raise UnknownConstantError(
                            f"no feature vector for {type_name} constant {constant!r} "
                            f"(referenced by {name})"
                        )
                else:
                    if constant not in features.vocab.get(type_name, {}):
                        raise UnknownConstantError(
                            f"no vocabulary entry for {type_name} constant {constant!r} "
                            f"(referenced by {name})"
                        )
    return Datastore(program, tables, features)
