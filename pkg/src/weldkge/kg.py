"""Table-to-graph conversion, leakage-free splitting and TSV persistence."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .ingest import TableDataset
from .literals import (
    BinningScheme,
    aggregate_series,
    discretize,
    fit_bins,
    fit_resolution_bins,
    literal_entity_label,
)

log = logging.getLogger(__name__)

ENTITY_CLASSES = ("spot", "machine", "program", "carbody", "diameter_class", "literal", "component", "other")
PARTITIONS = ("train", "valid", "test")
TRAIN, VALID, TEST = 0, 1, 2

DIAMETER_REL = "has_diameter_class"
CARBODY_REL = "belongs_to_carbody"
TARGET_RELATIONS = (DIAMETER_REL, CARBODY_REL)
TYPE_REL = "rdf_type"
DIAMETER_TYPE = "DiameterClass"
DIAMETER_KEY = "diameter"

_PREFIX_CLASS = {
    "spot": "spot",
    "machine": "machine",
    "program": "program",
    "carbody": "carbody",
    "dia": "diameter_class",
    "lit": "literal",
    "component": "component",
}


def infer_entity_class(label: str) -> str:
    head, sep, _ = label.partition(":")
    return _PREFIX_CLASS.get(head, "other") if sep else "other"


def _clean(value: str) -> str:
    return " ".join(str(value).split())


class Vocab:
    """Dense label<->index maps for entities and relations plus entity classes."""

    def __init__(self):
        self.entities: list[str] = []
        self.entity_class: list[str] = []
        self.relations: list[str] = []
        self._eidx: dict[str, int] = {}
        self._ridx: dict[str, int] = {}

    def add_entity(self, label: str, cls: str | None = None) -> int:
        idx = self._eidx.get(label)
        if idx is not None:
            return idx
        cls = cls or infer_entity_class(label)
        if cls not in ENTITY_CLASSES:
            raise DataError(f"unknown entity class {cls!r} for {label!r}")
        idx = len(self.entities)
        self.entities.append(label)
        self.entity_class.append(cls)
        self._eidx[label] = idx
        return idx

    def add_relation(self, label: str) -> int:
        idx = self._ridx.get(label)
        if idx is None:
            idx = len(self.relations)
            self.relations.append(label)
            self._ridx[label] = idx
        return idx

    def entity(self, label: str) -> int:
        try:
            return self._eidx[label]
        except KeyError:
            raise DataError(f"unknown entity {label!r}") from None

    def relation(self, label: str) -> int:
        try:
            return self._ridx[label]
        except KeyError:
            raise DataError(f"unknown relation {label!r}") from None

    def has_entity(self, label: str) -> bool:
        return label in self._eidx

    def has_relation(self, label: str) -> bool:
        return label in self._ridx

    def entities_of(self, cls: str) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.entity_class) if c == cls], dtype=np.int64)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def __eq__(self, other):
        if not isinstance(other, Vocab):
            return NotImplemented
        return (self.entities, self.entity_class, self.relations) == (
            other.entities, other.entity_class, other.relations)


class KnowledgeGraph:
    """Integer triples with a partition tag per triple."""

    def __init__(self, vocab: Vocab, triples, partition):
        self.vocab = vocab
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.partition = np.asarray(partition, dtype=np.int8).reshape(-1)
        self._validate()

    def _validate(self):
        t, p = self.triples, self.partition
        if len(t) != len(p):
            raise DataError("triples and partition tags differ in length")
        if len(t) == 0:
            return
        ne, nr = self.vocab.n_entities, self.vocab.n_relations
        if t[:, [0, 2]].min() < 0 or t[:, [0, 2]].max() >= ne or t[:, 1].min() < 0 or t[:, 1].max() >= nr:
            raise DataError("triple index out of range")
        if p.min() < 0 or p.max() > TEST:
            raise DataError("unknown partition code")
        for code in (TRAIN, VALID, TEST):
            keys = self.encode(t[p == code])
            if np.unique(keys).size != keys.size:
                raise DataError(f"duplicate triples in {PARTITIONS[code]} partition")
        allowed = [self.vocab.relation(r) for r in TARGET_RELATIONS if self.vocab.has_relation(r)]
        bad = ~np.isin(t[p == TEST, 1], allowed)
        if bad.any():
            raise DataError("test partition may only hold diameter/carbody target triples")

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    def encode(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        ne, nr = max(self.n_entities, 1), max(self.n_relations, 1)
        return (t[:, 0] * nr + t[:, 1]) * ne + t[:, 2]

    def split(self, name: str) -> np.ndarray:
        return self.triples[self.partition == PARTITIONS.index(name)]

    def target_relation(self, question: str) -> int:
        label = {"Q1": DIAMETER_REL, "Q2": CARBODY_REL}[question]
        return self.vocab.relation(label)

    def __len__(self) -> int:
        return len(self.triples)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (self.vocab == other.vocab and np.array_equal(self.triples, other.triples)
                and np.array_equal(self.partition, other.partition))

    def subgraph(self, keep_entities: np.ndarray) -> "KnowledgeGraph":
        """Keep only the given entities (boolean mask) and triples among them; reindexes."""
        keep_entities = np.asarray(keep_entities, dtype=bool)
        vocab = Vocab()
        for r in self.vocab.relations:
            vocab.add_relation(r)
        new_index = np.full(self.n_entities, -1, dtype=np.int64)
        for i in np.flatnonzero(keep_entities):
            new_index[i] = vocab.add_entity(self.vocab.entities[i], self.vocab.entity_class[i])
        t = self.triples
        mask = keep_entities[t[:, 0]] & keep_entities[t[:, 2]] if len(t) else np.zeros(0, bool)
        kept = t[mask].copy()
        kept[:, 0] = new_index[kept[:, 0]]
        kept[:, 2] = new_index[kept[:, 2]]
        return KnowledgeGraph(vocab, kept, self.partition[mask])


def drop_literals(kg: KnowledgeGraph) -> KnowledgeGraph:
    cls = np.array(kg.vocab.entity_class)
    return kg.subgraph(cls != "literal")


# ---------------------------------------------------------------------------
# splitting


def split_table(ds: TableDataset, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle rows with a seeded generator and cut them into train/valid/test."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(ds)
    if n < 10:
        raise DataError(f"need at least 10 rows to split, got {n}")
    n_valid = int(round(n * ratios[1]))
    n_test = int(round(n * ratios[2]))
    n_train = n - n_valid - n_test
    if min(n_train, n_valid, n_test) <= 0:
        raise DataError(f"ratios {ratios} leave an empty partition for {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    return (ds.take(order[:n_train]), ds.take(order[n_train:n_train + n_valid]),
            ds.take(order[n_train + n_valid:]))


# ---------------------------------------------------------------------------
# relation naming


@dataclass
class BuildOptions:
    n_stages: int = 3
    literal_strategy: str = "equal_frequency"
    literal_bins: int = 10
    diameter_width: float = 0.5
    include_literals: bool = True


def parse_mapping(lines: Iterable[str]) -> dict[str, str]:
    """Parse ``column=relation_name`` lines."""
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        col, sep, rel = line.partition("=")
        if not sep or not col.strip() or not rel.strip():
            raise DataError(f"mapping line {lineno}: expected column=relation_name")
        out[col.strip()] = rel.strip()
    return out


def load_mapping(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return parse_mapping(fh)


def _categorical_class(column: str) -> tuple[str, str]:
    low = column.lower()
    for key in ("machine", "program", "component"):
        if key in low:
            return key, key
    return "other", column


def categorical_relation(column: str, mapping: Mapping[str, str]) -> str:
    if column in mapping:
        return mapping[column]
    cls, _ = _categorical_class(column)
    return {"machine": "conducted_on_machine", "program": "uses_program",
            "component": "has_component"}.get(cls, f"has_{column}")


def literal_relation(feature: str, mapping: Mapping[str, str]) -> str:
    return mapping.get(feature, f"has_{feature}")


# ---------------------------------------------------------------------------
# literal features


def row_literals(row: Mapping, ds: TableDataset, n_stages: int = 3) -> dict[str, float]:
    """Real-valued literal features of one row; missing cells contribute nothing."""
    feats = {}
    for col in ds.columns:
        v = row[col.name]
        if v is None:
            continue
        if col.kind == "numeric":
            feats[col.name] = float(v)
        elif col.kind == "sensor_series":
            agg = aggregate_series(v, min(n_stages, len(v)), col.name)
            if len(agg.stage_means) == n_stages:
                for i, m in enumerate(agg.stage_means, 1):
                    feats[f"{col.name}_stage{i}"] = m
            feats[f"{col.name}_mean"] = agg.overall_mean
    return feats


def fit_schemes(train: TableDataset, options: BuildOptions | None = None) -> tuple[dict[str, BinningScheme], list[str]]:
    """Fit one scheme per literal feature plus the diameter classes, on training rows.

    Returns the schemes and the list of features skipped because they were
    constant (or absent) on the training rows.
    """
    options = options or BuildOptions()
    values: dict[str, list[float]] = {}
    for row in train.rows:
        for name, v in row_literals(row, train, options.n_stages).items():
            values.setdefault(name, []).append(v)
    schemes, skipped = {}, []
    for name in sorted(values):
        vals = values[name]
        distinct = len(set(vals))
        if distinct < 2:
            skipped.append(name)
            continue
        k = options.literal_bins
        if options.literal_strategy == "equal_frequency":
            k = min(k, distinct)
        schemes[name] = fit_bins(vals, options.literal_strategy, k, feature=name)
    dia = train.target("target_diameter")
    if dia is not None:
        dvals = [v for v in train.values(dia.name) if v is not None]
        if not dvals:
            raise DataError("diameter target has no values on the training rows")
        schemes[DIAMETER_KEY] = fit_resolution_bins(dvals, options.diameter_width, DIAMETER_KEY)
    return schemes, skipped


# ---------------------------------------------------------------------------
# triple emission


@dataclass
class EmittedTriples:
    triples: list[tuple[int, int, int]] = field(default_factory=list)
    is_target: list[bool] = field(default_factory=list)
    unseen: list[str] = field(default_factory=list)

    def add(self, t, target=False):
        self.triples.append(t)
        self.is_target.append(target)


def _init_fixed_entities(vocab: Vocab, schemes: Mapping[str, BinningScheme], options: BuildOptions,
                         out: EmittedTriples) -> None:
    dia = schemes.get(DIAMETER_KEY)
    if dia is not None:
        rtype = vocab.add_relation(TYPE_REL)
        cls_ent = vocab.add_entity(DIAMETER_TYPE, "other")
        for b in range(dia.k):
            e = vocab.add_entity(f"dia:{b}", "diameter_class")
            out.add((e, rtype, cls_ent))
    if options.include_literals:
        for name in sorted(schemes):
            if name == DIAMETER_KEY:
                continue
            for b in range(schemes[name].k):
                vocab.add_entity(literal_entity_label(name, b, schemes[name]), "literal")


def tabular_to_triples(ds: TableDataset, schemes: Mapping[str, BinningScheme], mapping: Mapping[str, str],
                       vocab: Vocab, frozen: bool = False, options: BuildOptions | None = None) -> EmittedTriples:
    """Emit triples for every row of ``ds``, growing ``vocab`` as needed.

    With ``frozen`` set, entities that had to be created are reported in
    ``unseen`` (they are still added).
    """
    options = options or BuildOptions()
    out = EmittedTriples()

    def ent(label, cls):
        if frozen and not vocab.has_entity(label):
            out.unseen.append(label)
        return vocab.add_entity(label, cls)

    categorical = ds.columns_of("categorical")
    dia_col = ds.target("target_diameter")
    cb_col = ds.target("target_carbody")
    rid = ds.row_id_column
    for row in ds.rows:
        spot = ent(f"spot:{_clean(row[rid])}", "spot")
        for col in categorical:
            v = row[col.name]
            if v is None:
                continue
            cls, prefix = _categorical_class(col.name)
            tail = ent(f"{prefix}:{_clean(v)}", cls)
            out.add((spot, vocab.add_relation(categorical_relation(col.name, mapping)), tail))
        if options.include_literals:
            for name, v in row_literals(row, ds, options.n_stages).items():
                scheme = schemes.get(name)
                if scheme is None:
                    continue
                label = literal_entity_label(name, discretize(v, scheme), scheme)
                out.add((spot, vocab.add_relation(literal_relation(name, mapping)), ent(label, "literal")))
        if dia_col is not None and row[dia_col.name] is not None:
            scheme = schemes.get(DIAMETER_KEY)
            if scheme is None:
                raise DataError("no diameter binning scheme supplied")
            tail = ent(f"dia:{discretize(row[dia_col.name], scheme)}", "diameter_class")
            out.add((spot, vocab.add_relation(DIAMETER_REL), tail), target=True)
        if cb_col is not None and row[cb_col.name] is not None:
            tail = ent(f"carbody:{_clean(row[cb_col.name])}", "carbody")
            out.add((spot, vocab.add_relation(CARBODY_REL), tail), target=True)
    return out


CONTEXT_NOTE = ("non-target triples of validation/test rows are placed in the train partition "
                "as known context; only target triples are held out")


@dataclass
class BuildResult:
    kg: KnowledgeGraph
    report: dict


def build_kg(train: TableDataset, valid: TableDataset, test: TableDataset,
             schemes: Mapping[str, BinningScheme], mapping: Mapping[str, str] | None = None,
             options: BuildOptions | None = None) -> BuildResult:
    """Convert the three table splits into one graph with partition tags."""
    options = options or BuildOptions()
    mapping = mapping or {}
    for part in (train, valid, test):
        if part.target("target_diameter") is None and part.target("target_carbody") is None:
            raise DataError("no target column (diameter or carbody) in the table")
    if len(valid) == 0 or len(test) == 0:
        raise DataError("validation and test splits must be non-empty")
    vocab = Vocab()
    fixed = EmittedTriples()
    _init_fixed_entities(vocab, schemes, options, fixed)

    triples, parts = [], []
    seen: set[tuple[int, int, int]] = set()
    duplicates = 0
    unseen: list[str] = []

    def push(t, code):
        nonlocal duplicates
        if t in seen:
            duplicates += 1
            return
        seen.add(t)
        triples.append(t)
        parts.append(code)

    for t in fixed.triples:
        push(t, TRAIN)
    for code, ds in ((TRAIN, train), (VALID, valid), (TEST, test)):
        em = tabular_to_triples(ds, schemes, mapping, vocab, frozen=code != TRAIN, options=options)
        unseen.extend(em.unseen)
        for t, is_target in zip(em.triples, em.is_target):
            push(t, code if is_target else TRAIN)
    if duplicates:
        log.warning("dropped %d duplicate triples", duplicates)
    kg = KnowledgeGraph(vocab, triples, parts)

    violations = check_leakage(kg)
    if violations:
        raise DataError(f"leakage: {len(violations)} held-out target triples also in train")
    report = build_report(kg, duplicates=duplicates, unseen=unseen, options=options)
    return BuildResult(kg, report)


def check_leakage(kg: KnowledgeGraph) -> list[tuple[int, int, int]]:
    """Held-out target triples whose (head, relation) also occurs in train."""
    train = kg.split("train")
    held = kg.triples[kg.partition != TRAIN]
    if len(held) == 0 or len(train) == 0:
        return []
    seen = set(zip(train[:, 0].tolist(), train[:, 1].tolist()))
    return [tuple(t) for t in held.tolist() if (t[0], t[1]) in seen]


def held_out_spots_without_context(kg: KnowledgeGraph) -> list[str]:
    train_heads = set(kg.split("train")[:, 0].tolist())
    held = kg.triples[kg.partition != TRAIN]
    heads = sorted(set(held[:, 0].tolist()) - train_heads)
    return [kg.vocab.entities[h] for h in heads]


def build_report(kg: KnowledgeGraph, duplicates: int = 0, unseen: Sequence[str] = (),
                 options: BuildOptions | None = None) -> dict:
    cls_counts = Counter(kg.vocab.entity_class)
    rel_counts = Counter(kg.vocab.relations[r] for r in kg.triples[:, 1].tolist())
    return {
        "n_entities": kg.n_entities,
        "n_relations": kg.n_relations,
        "n_triples": len(kg),
        "triples_per_partition": {p: int((kg.partition == i).sum()) for i, p in enumerate(PARTITIONS)},
        "entities_per_class": {c: cls_counts.get(c, 0) for c in ENTITY_CLASSES},
        "triples_per_relation": dict(sorted(rel_counts.items())),
        "duplicates_removed": duplicates,
        "unseen_entities": sorted(set(unseen)),
        "held_out_spots_without_context": held_out_spots_without_context(kg),
        "leakage_violations": len(check_leakage(kg)),
        "context_placement": CONTEXT_NOTE,
        "options": vars(options) if options else None,
    }


# ---------------------------------------------------------------------------
# persistence


def serialize_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    """Write ``entities.tsv``, ``relations.tsv`` and ``triples.tsv`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    v = kg.vocab
    with open(path / "entities.tsv", "w", encoding="utf-8") as fh:
        for i, (label, cls) in enumerate(zip(v.entities, v.entity_class)):
            fh.write(f"{i}\t{label}\t{cls}\n")
    with open(path / "relations.tsv", "w", encoding="utf-8") as fh:
        for i, label in enumerate(v.relations):
            fh.write(f"{i}\t{label}\n")
    with open(path / "triples.tsv", "w", encoding="utf-8") as fh:
        for (h, r, t), p in zip(kg.triples.tolist(), kg.partition.tolist()):
            fh.write(f"{v.entities[h]}\t{v.relations[r]}\t{v.entities[t]}\t{PARTITIONS[p]}\n")


def _read_index_file(path: Path, n_fields: tuple[int, ...]) -> list[list[str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in n_fields:
                raise DataError(f"{path.name} line {lineno}: expected {n_fields[-1]} tab-separated fields")
            if int(parts[0]) != len(rows):
                raise DataError(f"{path.name} line {lineno}: indices must be dense and ordered")
            rows.append(parts)
    return rows


def parse_kg(path: str | Path) -> KnowledgeGraph:
    """Read a graph directory (or a bare triple file).

    Without ``entities.tsv``/``relations.tsv`` the vocabulary is built in
    order of first appearance with classes inferred from label prefixes.
    """
    path = Path(path)
    triple_file = path / "triples.tsv" if path.is_dir() else path
    base = triple_file.parent
    if not triple_file.exists():
        raise DataError(f"no triple file at {triple_file}")
    vocab = Vocab()
    if (base / "entities.tsv").exists() and path.is_dir():
        for rec in _read_index_file(base / "entities.tsv", (2, 3)):
            vocab.add_entity(rec[1], rec[2] if len(rec) == 3 else None)
    if (base / "relations.tsv").exists() and path.is_dir():
        for rec in _read_index_file(base / "relations.tsv", (2,)):
            vocab.add_relation(rec[1])
    triples, parts = [], []
    with open(triple_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            f = line.split("\t")
            if len(f) == 3:
                f.append("train")
            if len(f) != 4:
                raise DataError(f"{triple_file.name} line {lineno}: expected 3 or 4 tab-separated fields, got {len(f)}")
            if f[3] not in PARTITIONS:
                raise DataError(f"{triple_file.name} line {lineno}: unknown partition {f[3]!r}")
            triples.append((vocab.add_entity(f[0]), vocab.add_relation(f[1]), vocab.add_entity(f[2])))
            parts.append(PARTITIONS.index(f[3]))
    return KnowledgeGraph(vocab, triples, parts)


def save_report(report: Mapping, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
