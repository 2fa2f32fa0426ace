"""Negative sampling, margin ranking loss and the Adagrad training loop."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DataError, NumericError
from .evaluation import known_tails, mean_reciprocal_rank
from .kg import TARGET_RELATIONS, KnowledgeGraph
from .models import DIM_GRID, ENTITY_TENSORS, KINDS, ModelParams, init_params, wrap_phases

log = logging.getLogger(__name__)

NEGATIVE_MODES = ("uniform_tail", "typed_tail")
MAX_RETRIES = 64
MIN_CURVATURE = 1e-3


@dataclass
class TrainConfig:
    kind: str = "TransE"
    dim: int = 32
    epochs: int = 500
    batch_size: int = 256
    learning_rate: float = 0.1
    margin: float = 1.0
    n_negatives: int = 16
    # applies to context relations; target relations always corrupt within their class
    negative_mode: str = "uniform_tail"
    seed: int = 0
    patience: int = 50
    eval_every: int = 5
    select_question: str = "all"
    adagrad_eps: float = 1e-10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        for name in ("dim", "epochs", "batch_size", "n_negatives", "patience", "eval_every"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        for name in ("learning_rate", "margin"):
            if not getattr(self, name) > 0:
                raise DataError(f"{name} must be positive")
        if self.negative_mode not in NEGATIVE_MODES:
            raise DataError(f"negative_mode must be one of {NEGATIVE_MODES}")
        if self.select_question not in ("all", "Q1", "Q2"):
            raise DataError("select_question must be all, Q1 or Q2")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_config(lines: Iterable[str], base: TrainConfig | None = None) -> TrainConfig:
    """Read flat ``key = value`` lines on top of ``base`` (or the defaults)."""
    values = dataclasses.asdict(base or TrainConfig())
    types = {f.name: type(values[f.name]) for f in dataclasses.fields(TrainConfig)}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise DataError(f"config line {lineno}: expected key = value")
        if key not in types:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = types[key](val)
        except ValueError:
            raise DataError(f"config line {lineno}: bad value {val!r} for {key}") from None
    return TrainConfig(**values)


def load_config(path: str | Path) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc


def write_config(cfg: TrainConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in cfg.to_dict().items():
            fh.write(f"{k} = {v}\n")


# ---------------------------------------------------------------------------
# negatives


class NegativeSampler:
    """Tail corruption with rejection of known training triples.

    Pool 0 is every entity; pool ``1 + j`` holds the entities of class
    ``classes[j]``.  The true tail is never drawn.
    """

    def __init__(self, kg: KnowledgeGraph, max_retries: int = MAX_RETRIES):
        self.kg = kg
        self.max_retries = max_retries
        ne = kg.n_entities
        self.classes = sorted(set(kg.vocab.entity_class))
        cls_code = np.array([self.classes.index(c) for c in kg.vocab.entity_class], dtype=np.int64)
        members = [np.flatnonzero(cls_code == j) for j in range(len(self.classes))]
        self.pool = np.concatenate([np.arange(ne)] + members).astype(np.int64)
        sizes = [ne] + [len(m) for m in members]
        self.pool_size = np.array(sizes, dtype=np.int64)
        self.pool_offset = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.entity_pool = cls_code + 1
        self.pos_in_class = np.zeros(ne, dtype=np.int64)
        for m in members:
            self.pos_in_class[m] = np.arange(len(m))
        self.train_keys = np.sort(kg.encode(kg.split("train")))

    def is_train(self, h, r, t) -> np.ndarray:
        keys = self.kg.encode(np.stack([h, r, t], axis=-1).reshape(-1, 3))
        idx = np.searchsorted(self.train_keys, keys)
        idx = np.minimum(idx, max(len(self.train_keys) - 1, 0))
        if len(self.train_keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        return (self.train_keys[idx] == keys).reshape(np.shape(h))

    def sample(self, h, r, t, n: int, typed, rng: np.random.Generator):
        """Return ``(tails, exhausted)``, both shaped ``(len(h), n)``."""
        h, r, t = (np.asarray(x, dtype=np.int64) for x in (h, r, t))
        typed = np.broadcast_to(np.asarray(typed, dtype=bool), h.shape)
        pool_id = np.where(typed, self.entity_pool[t], 0)
        size = self.pool_size[pool_id]
        if np.any(size < 2):
            bad = self.kg.vocab.entities[int(t[size < 2][0])]
            raise DataError(f"cannot corrupt tail {bad!r}: its entity pool has fewer than 2 members")
        true_pos = np.where(typed, self.pos_in_class[t], t)

        def draw(rows):
            j = np.floor(rng.random((len(rows), n)) * (size[rows] - 1)[:, None]).astype(np.int64)
            j += j >= true_pos[rows][:, None]
            return self.pool[self.pool_offset[pool_id[rows]][:, None] + j]

        all_rows = np.arange(len(h))
        tails = draw(all_rows)
        hh = np.broadcast_to(h[:, None], tails.shape)
        rr = np.broadcast_to(r[:, None], tails.shape)
        bad = self.is_train(hh, rr, tails)
        for _ in range(self.max_retries):
            if not bad.any():
                break
            rows, cols = np.nonzero(bad)
            # redraw one fresh candidate for each offending slot
            fresh = draw(rows)[:, 0] if len(rows) else rows
            tails[rows, cols] = fresh
            bad[rows, cols] = self.is_train(h[rows], r[rows], fresh)
        return tails, bad


def sample_negatives(kg: KnowledgeGraph, triple, n: int, mode: str, rng: np.random.Generator,
                     sampler: NegativeSampler | None = None):
    """``n`` corrupted copies of ``triple`` (tail replaced), plus exhaustion flags."""
    if mode not in NEGATIVE_MODES:
        raise DataError(f"negative mode must be one of {NEGATIVE_MODES}")
    if n < 1:
        raise DataError("n must be >= 1")
    sampler = sampler or NegativeSampler(kg)
    h, r, t = (int(x) for x in triple)
    tails, flags = sampler.sample(np.array([h]), np.array([r]), np.array([t]), n, mode == "typed_tail", rng)
    out = np.empty((n, 3), dtype=np.int64)
    out[:, 0], out[:, 1], out[:, 2] = h, r, tails[0]
    return out, flags[0]


def ranking_loss(pos_score: float, neg_scores, margin: float = 1.0) -> float:
    """Mean hinge ``max(0, margin - pos + neg)`` over the negatives."""
    neg = np.asarray(neg_scores, dtype=float)
    if neg.size == 0:
        raise DataError("need at least one negative score")
    return float(np.mean(np.maximum(0.0, margin - pos_score + neg)))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    valid_trace: list = field(default_factory=list)
    seconds: float | None = None
    best_epoch: int = 0
    best_mrr: float = float("nan")
    epochs_run: int = 0
    stopped_early: bool = False
    flagged_negatives: int = 0
    backend: str = ""
    config: dict = field(default_factory=dict)

    def to_dict(self, timestamps: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not timestamps:
            d["seconds"] = None
        return d

    def save(self, path: str | Path, timestamps: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(timestamps), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _target_mask(kg: KnowledgeGraph, rel: np.ndarray) -> np.ndarray:
    ids = [kg.vocab.relation(x) for x in TARGET_RELATIONS if kg.vocab.has_relation(x)]
    return np.isin(rel, ids)


def _apply_update(p: ModelParams, grads, accs, h, r, t, cfg: TrainConfig, backend) -> None:
    ent_rows = np.unique(np.concatenate([h, t]))
    rel_rows = np.unique(r)
    for name, g, a in zip(p.names, grads, accs):
        rows = ent_rows if name in ENTITY_TENSORS else rel_rows
        kernels.adagrad_rows(p.tensors[name], a, g, rows, cfg.learning_rate, cfg.adagrad_eps, backend)
    if p.kind == "RotatE":
        wrap_phases(p)
    elif p.kind == "AttH":
        np.maximum(p.tensors["curv"], MIN_CURVATURE, out=p.tensors["curv"])


def train(kg: KnowledgeGraph, config: TrainConfig, backend: str | None = None,
          init: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Train one model; returns the parameters with the best validation MRR.

    Deterministic for a fixed config and backend: all randomness flows from
    one generator seeded with ``config.seed``.
    """
    cfg = config
    train_t = kg.split("train")
    if len(train_t) == 0:
        raise DataError("training partition is empty")
    if len(kg.split("valid")) == 0:
        raise DataError("validation partition is empty")
    rng = np.random.default_rng(cfg.seed)
    p = init.copy() if init is not None else init_params(cfg.kind, kg.n_entities, kg.n_relations, cfg.dim, cfg.seed)
    sampler = NegativeSampler(kg)
    typed_all = _target_mask(kg, train_t[:, 1]) | (cfg.negative_mode == "typed_tail")
    known = known_tails(kg)
    grads = tuple(np.zeros_like(a) for a in p.arrays())
    accs = tuple(np.zeros_like(a) for a in p.arrays())
    n_neg = cfg.n_negatives
    report = TrainReport(config=cfg.to_dict(), backend=kernels.backend_name() if backend is None else backend)

    best = p.copy()
    best_mrr = -1.0
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_t))
        total = 0.0
        for bi, lo in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            h, r, t = train_t[idx, 0], train_t[idx, 1], train_t[idx, 2]
            tails, flags = sampler.sample(h, r, t, n_neg, typed_all[idx], rng)
            report.flagged_negatives += int(flags.sum())
            m = len(idx)
            nh, nr, nt = np.repeat(h, n_neg), np.repeat(r, n_neg), tails.reshape(-1)
            pos = kernels.score_batch(p.kind, p.arrays(), h, r, t, backend)
            neg = kernels.score_batch(p.kind, p.arrays(), nh, nr, nt, backend).reshape(m, n_neg)
            hinge = cfg.margin - pos[:, None] + neg
            batch_loss = float(np.maximum(hinge, 0.0).mean())
            if not np.isfinite(batch_loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += batch_loss * m
            active = hinge > 0
            if not active.any():
                continue
            scale = 1.0 / (n_neg * m)
            pos_coef = -active.sum(axis=1) * scale
            sel = pos_coef != 0
            kernels.accumulate_grad(p.kind, p.arrays(), h[sel], r[sel], t[sel], pos_coef[sel], grads, backend)
            flat = active.reshape(-1)
            kernels.accumulate_grad(p.kind, p.arrays(), nh[flat], nr[flat], nt[flat],
                                    np.full(int(flat.sum()), scale), grads, backend)
            _apply_update(p, grads, accs, np.concatenate([h[sel], nh[flat]]), np.concatenate([r[sel], nr[flat]]),
                          np.concatenate([t[sel], nt[flat]]), cfg, backend)
        report.losses.append(total / len(train_t))
        report.epochs_run = epoch
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            if not p.is_finite():
                raise NumericError(f"non-finite parameters after epoch {epoch}")
            mrr = mean_reciprocal_rank(p, kg, "valid", known=known)
            mrr["epoch"] = epoch
            report.valid_trace.append(mrr)
            cur = mrr.get(cfg.select_question, mrr.get("all", 0.0))
            if cur > best_mrr:
                best_mrr, best, report.best_epoch = cur, p.copy(), epoch
            elif epoch - report.best_epoch >= cfg.patience:
                report.stopped_early = True
                break
    report.seconds = time.perf_counter() - start
    report.best_mrr = best_mrr
    log.info("trained %s dim=%d: best valid MRR %.4f at epoch %d", cfg.kind, cfg.dim, best_mrr, report.best_epoch)
    return best, report


def grid_search(kg: KnowledgeGraph, base: TrainConfig, dims: Sequence[int] = DIM_GRID, backend: str | None = None):
    """Train one model per dim and keep the best validation MRR (ties go to the smaller dim).

    Returns ``(best_config, table, best_params, best_report)`` where
    ``table`` has one ``{"dim", "valid_mrr", "best_epoch"}`` row per dim.
    """
    if not dims:
        raise DataError("grid needs at least one dim")
    table, best = [], None
    for dim in sorted(set(int(d) for d in dims)):
        cfg = dataclasses.replace(base, dim=dim)
        params, rep = train(kg, cfg, backend)
        table.append({"dim": dim, "valid_mrr": rep.best_mrr, "best_epoch": rep.best_epoch})
        if best is None or rep.best_mrr > best[1].best_mrr:
            best = (cfg, rep, params)
    return best[0], table, best[2], best[1]
