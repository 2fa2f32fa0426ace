"""Feed-forward classifier baseline and the KGE-MLP hybrid.

The MLP reads one-hot blocks of categorical values and literal bins.  The
hybrid scores a (head, candidate tail) pair from the concatenation of
frozen KGE entity embeddings; it is trained on target triples against
typed corruptions and ranked through the ordinary evaluation pipeline.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .checkpoint import read_arrays, write_arrays
from .errors import DataError, NumericError
from .evaluation import RankingReport, compute_metrics, nrmse, rank_of, top1
from .ingest import TableDataset
from .kg import DIAMETER_KEY, KnowledgeGraph, row_literals
from .literals import BinningScheme, discretize
from .models import ModelParams

MLP_KIND = "MLP"


# ---------------------------------------------------------------------------
# encoding


@dataclass
class OneHotEncoding:
    """Block layout fitted on training rows.

    ``blocks`` lists ``(source, values)`` where ``source`` is a categorical
    column name or a literal feature name and ``values`` the block's
    categories in column order.  ``labels`` is the class vocabulary.
    """

    question: str
    blocks: list[tuple[str, list]]
    labels: list[str]
    n_stages: int = 3

    @property
    def width(self) -> int:
        return sum(len(v) for _, v in self.blocks)


def _label_of(row, ds: TableDataset, question: str, schemes) -> str | None:
    col = ds.target("target_diameter" if question == "Q1" else "target_carbody")
    if col is None:
        raise DataError(f"table has no target column for {question}")
    v = row[col.name]
    if v is None:
        return None
    if question == "Q1":
        return f"dia:{discretize(v, schemes[DIAMETER_KEY])}"
    return f"carbody:{v}"


def fit_encoding(train: TableDataset, schemes: Mapping[str, BinningScheme], question: str,
                 n_stages: int = 3) -> OneHotEncoding:
    if question not in ("Q1", "Q2"):
        raise DataError("question must be Q1 or Q2")
    if question == "Q1" and DIAMETER_KEY not in schemes:
        raise DataError("Q1 encoding needs the diameter scheme")
    blocks = []
    for col in train.columns_of("categorical"):
        vals = sorted({v for v in train.values(col.name) if v is not None})
        blocks.append((col.name, vals))
    for name in sorted(schemes):
        if name != DIAMETER_KEY:
            blocks.append((name, list(range(schemes[name].k))))
    if question == "Q1":
        labels = [f"dia:{b}" for b in range(schemes[DIAMETER_KEY].k)]
    else:
        labels = sorted({lab for row in train.rows if (lab := _label_of(row, train, question, schemes))})
    return OneHotEncoding(question, blocks, labels, n_stages)


def one_hot_encode(ds: TableDataset, schemes: Mapping[str, BinningScheme], encoding: OneHotEncoding):
    """Return ``(X, y, spots)``.

    Values absent from the encoding give an all-zero block.  A label unseen
    at fit time is encoded as ``-1``; a missing label is an error.
    """
    offsets, pos = {}, 0
    lookup = {}
    for source, vals in encoding.blocks:
        offsets[source] = pos
        lookup[source] = {v: i for i, v in enumerate(vals)}
        pos += len(vals)
    label_idx = {lab: i for i, lab in enumerate(encoding.labels)}
    cats = {c.name for c in ds.columns_of("categorical")}
    X = np.zeros((len(ds), encoding.width))
    y = np.empty(len(ds), dtype=np.int64)
    spots = []
    rid = ds.row_id_column
    for i, row in enumerate(ds.rows):
        lits = row_literals(row, ds, encoding.n_stages)
        for source, _ in encoding.blocks:
            if source in cats:
                v = row.get(source)
            elif source in lits and source in schemes:
                v = discretize(lits[source], schemes[source])
            else:
                v = None
            j = lookup[source].get(v)
            if j is not None:
                X[i, offsets[source] + j] = 1.0
        lab = _label_of(row, ds, encoding.question, schemes)
        if lab is None:
            raise DataError(f"row {row[rid]!r} has no {encoding.question} label")
        y[i] = label_idx.get(lab, -1)
        spots.append(str(row[rid]))
    return X, y, spots


# ---------------------------------------------------------------------------
# MLP


@dataclass
class MlpConfig:
    hidden: tuple[int, ...] = (256,)
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 0.1
    seed: int = 0
    n_negatives: int = 4
    adagrad_eps: float = 1e-10

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h <= 0 for h in self.hidden) or self.epochs <= 0 or self.batch_size <= 0 or self.n_negatives <= 0:
            raise DataError("MLP sizes, epochs, batch size and negatives must be positive")
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DataError("need one bias per weight matrix")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise DataError("consecutive layer sizes do not match")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise DataError("bias length does not match layer width")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], dict(self.extra))


def mlp_init(sizes: Sequence[int], seed: int = 0) -> MlpParams:
    """He-uniform weights, zero biases."""
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise DataError("need at least input and output sizes, all positive")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / a)
        ws.append(rng.uniform(-bound, bound, (a, b)))
        bs.append(np.zeros(b))
    return MlpParams(ws, bs)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(p: MlpParams, X: np.ndarray):
    acts = [X]
    a = X
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < len(p.weights) - 1 else z
        acts.append(a)
    return acts


def mlp_predict(p: MlpParams, X: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per input."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != p.sizes[0]:
        raise DataError(f"expected {p.sizes[0]} input features, got {X.shape[1]}")
    return softmax(_forward(p, X)[-1])


def mlp_loss_grad(p: MlpParams, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient as ``[dW0, db0, dW1, db1, ...]``."""
    acts = _forward(p, X)
    n = len(X)
    probs = softmax(acts[-1])
    loss = -float(np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300))))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for i in range(len(p.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        if i:
            delta = (delta @ p.weights[i].T) * (acts[i] > 0)
    return loss, grads[::-1]


def _adagrad_fit(p: MlpParams, X: np.ndarray, y: np.ndarray, cfg: MlpConfig, rng: np.random.Generator,
                 batches=None) -> list[float]:
    params = p.arrays()
    accs = [np.zeros_like(a) for a in params]
    losses = []
    for epoch in range(1, cfg.epochs + 1):
        if batches is not None:
            Xe, ye = batches(rng)
        else:
            Xe, ye = X, y
        order = rng.permutation(len(Xe))
        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = mlp_loss_grad(p, Xe[idx], ye[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite MLP loss at epoch {epoch}")
            total += loss * len(idx)
            for a, g, acc in zip(params, grads, accs):
                acc += g * g
                a -= cfg.learning_rate * g / (np.sqrt(acc) + cfg.adagrad_eps)
        losses.append(total / len(Xe))
    return losses


def mlp_train(X: np.ndarray, y: np.ndarray, config: MlpConfig | None = None, n_classes: int | None = None):
    """Fit a softmax classifier; returns ``(params, per-epoch losses)``.

    Rows labelled ``-1`` (unseen classes) are skipped.
    """
    cfg = config or MlpConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    keep = y >= 0
    X, y = X[keep], y[keep]
    if len(X) == 0:
        raise DataError("no labelled rows to train on")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if y.max() >= n_classes:
        raise DataError("label out of range")
    p = mlp_init([X.shape[1], *cfg.hidden, n_classes], cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    losses = _adagrad_fit(p, X, y, cfg, rng)
    p.extra["losses"] = losses
    return p, losses


def classification_report(probs: np.ndarray, y: np.ndarray, spots: Sequence[str], labels: Sequence[str],
                          question: str, scheme: BinningScheme | None = None,
                          grouping: Mapping[str, int] | None = None, ties: str = "realistic",
                          ks=(1, 3, 10), elapsed: float | None = None) -> RankingReport:
    """Rank the true class among all classes, in the KGE report layout.

    A true label unseen at training time (``-1``) ranks after every class.
    """
    ranks, records, preds, trues = [], [], [], []
    classes = np.arange(len(labels))
    for i, (s, t) in enumerate(zip(spots, y.tolist())):
        if t < 0:
            rank = len(labels) + 1
            pred = int(np.argmax(probs[i]))
            true_label = "?"
        else:
            rank = rank_of(float(probs[i, t]), np.delete(probs[i], t), ties)
            pred = top1(classes, probs[i], t, ties)
            true_label = labels[t]
        ranks.append(rank)
        preds.append(pred)
        trues.append(t)
        records.append({"spot": s, "true": true_label, "predicted": labels[pred], "rank": rank})
    m = compute_metrics(ranks, ks)
    rep = RankingReport(question, m["hits_at_1"], m["hits_at_k"], m["mrr"], len(ranks), elapsed,
                        ranks=ranks, queries=records, config={"model": MLP_KIND, "ties": ties})
    seen = [i for i, t in enumerate(trues) if t >= 0]
    if question == "Q1" and scheme is not None and seen:
        rep.nrmse = nrmse([int(labels[preds[i]].split(":")[1]) for i in seen],
                          [int(labels[trues[i]].split(":")[1]) for i in seen], scheme)
    if question == "Q2" and grouping is not None:
        hits = [grouping.get(labels[preds[i]]) == grouping.get(labels[trues[i]]) if trues[i] >= 0 else False
                for i in range(len(trues))]
        rep.hits_groupby3 = float(np.mean(hits))
    return rep


def save_mlp(p: MlpParams, path: str | Path, extra: Mapping | None = None) -> None:
    header = {"kind": MLP_KIND, "sizes": p.sizes}
    header.update({k: v for k, v in p.extra.items() if k != "losses"})
    header.update(extra or {})
    arrays = {}
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        arrays[f"W{i}"], arrays[f"b{i}"] = w, b
    write_arrays(path, header, arrays)


def load_mlp(path: str | Path) -> MlpParams:
    header, arrays = read_arrays(path)
    if header.get("kind") != MLP_KIND:
        raise DataError(f"{path}: not an MLP checkpoint")
    n = len(header["sizes"]) - 1
    try:
        ws = [arrays[f"W{i}"].copy() for i in range(n)]
        bs = [arrays[f"b{i}"].copy() for i in range(n)]
    except KeyError as exc:
        raise DataError(f"{path}: missing array {exc}") from None
    extra = {k: v for k, v in header.items() if k not in ("kind", "sizes", "arrays")}
    return MlpParams(ws, bs, extra)


# ---------------------------------------------------------------------------
# KGE-MLP


@dataclass
class KgeMlp:
    kge: ModelParams
    mlp: MlpParams
    question: str

    def features(self, h, t) -> np.ndarray:
        e = self.kge.tensors["entity"]
        h = np.broadcast_to(np.asarray(h, dtype=np.int64), np.shape(t))
        return np.concatenate([e[h], e[np.asarray(t, dtype=np.int64)]], axis=-1)

    def __call__(self, h: int, r: int, candidates: np.ndarray) -> np.ndarray:
        return kge_mlp_predict(self, h, candidates)


def kge_mlp_predict(model: KgeMlp, h: int, candidates) -> np.ndarray:
    """Plausibility in ``[0, 1]`` of ``(h, question relation, c)`` per candidate."""
    candidates = np.atleast_1d(np.asarray(candidates, dtype=np.int64))
    return mlp_predict(model.mlp, model.features(h, candidates))[:, 1]


def kge_mlp_train(kg: KnowledgeGraph, kge: ModelParams, question: str,
                  config: MlpConfig | None = None) -> tuple[KgeMlp, list[float]]:
    """Pipelined hybrid: ``kge`` stays frozen, only the MLP learns.

    Each epoch pairs every training target triple with ``n_negatives``
    typed corruptions drawn afresh.
    """
    from .training import NegativeSampler

    cfg = config or MlpConfig()
    if kge.kind not in ("TransE", "DistMult"):
        raise DataError("KGE-MLP needs TransE or DistMult embeddings")
    if kge.n_entities != kg.n_entities:
        raise DataError(f"embedding table has {kge.n_entities} rows, graph has {kg.n_entities} entities")
    r = kg.target_relation(question)
    pos = kg.split("train")
    pos = pos[pos[:, 1] == r]
    if len(pos) == 0:
        raise DataError(f"no training triples for {question}")
    sampler = NegativeSampler(kg)
    model = KgeMlp(kge, mlp_init([2 * kge.tensors["entity"].shape[1], *cfg.hidden, 2], cfg.seed), question)
    h, t = pos[:, 0], pos[:, 2]
    Xpos = model.features(h, t)

    def batches(rng):
        neg, _ = sampler.sample(h, np.full(len(h), r), t, cfg.n_negatives, True, rng)
        Xneg = model.features(np.repeat(h, cfg.n_negatives), neg.reshape(-1))
        X = np.concatenate([Xpos, Xneg])
        y = np.concatenate([np.ones(len(Xpos), np.int64), np.zeros(len(Xneg), np.int64)])
        return X, y

    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()
    losses = _adagrad_fit(model.mlp, None, None, cfg, rng, batches)
    model.mlp.extra.update({"question": question, "kge_kind": kge.kind, "seconds": time.perf_counter() - start})
    return model, losses
