"""Filtered tail-ranking evaluation and the domain metrics.

A *scorer* is any callable ``scorer(h, r, candidates) -> scores`` with
higher meaning more plausible; :func:`as_scorer` wraps trained
:class:`~weldkge.models.ModelParams`.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph
from .literals import BinningScheme, bin_midpoint
from .models import ModelParams, score_many

TIE_MODES = ("realistic", "optimistic", "pessimistic")
QUESTIONS = ("Q1", "Q2")
DEFAULT_KS = (1, 3, 10)
Scorer = Callable[[int, int, np.ndarray], np.ndarray]


def as_scorer(model) -> Scorer:
    if isinstance(model, ModelParams):
        return lambda h, r, cands: score_many(model, h, r, cands)
    if callable(model):
        return model
    raise TypeError(f"cannot score with {type(model).__name__}")


def rank_of(true_score: float, other_scores: np.ndarray, ties: str = "realistic") -> int:
    """1-based rank of ``true_score`` against competing scores."""
    greater = int(np.count_nonzero(other_scores > true_score))
    equal = int(np.count_nonzero(other_scores == true_score))
    if ties == "optimistic":
        return 1 + greater
    if ties == "pessimistic":
        return 1 + greater + equal
    if ties == "realistic":
        return 1 + greater + (equal + 1) // 2
    raise ValueError(f"unknown tie mode {ties!r}")


def _filter_mask(h: int, r: int, t: int, candidates: np.ndarray, known: Mapping | None) -> np.ndarray:
    """True for candidates that stay in the ranking."""
    keep = np.ones(len(candidates), dtype=bool)
    if known:
        others = known.get((h, r))
        if others:
            keep &= ~np.isin(candidates, list(others - {t}))
    return keep


def rank_tail(model, h: int, r: int, t: int, candidates: Sequence[int],
              known_positives: Mapping | Iterable | None = None, ties: str = "realistic") -> int:
    """Filtered rank of the true tail ``t`` among ``candidates``.

    ``known_positives`` is either a set of ``(h, r, t)`` triples or the
    ``{(h, r): tails}`` index returned by :func:`known_tails`; other known
    tails of ``(h, r)`` are removed before ranking.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    hit = np.flatnonzero(candidates == t)
    if hit.size == 0:
        raise DataError(f"true tail {t} is not among the candidates")
    known = known_positives
    if known is not None and not isinstance(known, Mapping):
        known = _index_triples(known)
    scores = np.asarray(as_scorer(model)(h, r, candidates), dtype=float)
    keep = _filter_mask(h, r, t, candidates, known)
    keep[hit] = False
    return rank_of(float(scores[hit[0]]), scores[keep], ties)


def _index_triples(triples: Iterable) -> dict[tuple[int, int], set[int]]:
    out: dict[tuple[int, int], set[int]] = {}
    for h, r, t in triples:
        out.setdefault((int(h), int(r)), set()).add(int(t))
    return out


def known_tails(kg: KnowledgeGraph) -> dict[tuple[int, int], set[int]]:
    """``{(h, r): {t, ...}}`` over every partition."""
    return _index_triples(kg.triples.tolist())


def compute_metrics(ranks: Sequence[int], ks: Sequence[int] = DEFAULT_KS) -> dict:
    ranks = np.asarray(ranks, dtype=float)
    if ranks.size == 0:
        raise DataError("no ranks to summarise")
    if ranks.min() < 1:
        raise DataError("ranks are 1-based")
    hits = {int(k): float(np.mean(ranks <= k)) for k in sorted(set(ks) | {1})}
    return {"hits_at_1": hits[1], "hits_at_k": hits, "mrr": float(np.mean(1.0 / ranks))}


def make_grouping(labels: Iterable[str], size: int = 3) -> dict[str, int]:
    """Sort labels and chunk them into consecutive groups of ``size``."""
    return {lab: i // size for i, lab in enumerate(sorted(set(labels)))}


def save_grouping(grouping: Mapping[str, int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in sorted(grouping, key=lambda k: (grouping[k], k)):
            fh.write(f"{lab}\t{grouping[lab]}\n")


def load_grouping(path: str | Path) -> dict[str, int]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path} line {lineno}: expected label<TAB>group")
            out[parts[0]] = int(parts[1])
    return out


def hits_groupby3(predicted: Sequence[Hashable], true: Sequence[Hashable], grouping: Mapping[Hashable, int]) -> float:
    """Share of queries whose top-1 prediction falls in the true tail's group."""
    if len(predicted) != len(true):
        raise DataError("predicted and true differ in length")
    if not len(true):
        raise DataError("no predictions")
    hits = 0
    for p, t in zip(predicted, true):
        for x in (p, t):
            if x not in grouping:
                raise DataError(f"carbody {x!r} has no group")
        hits += grouping[p] == grouping[t]
    return hits / len(true)


def nrmse(pred_class: Sequence[int], true_class: Sequence[int], scheme: BinningScheme) -> float:
    """Root-mean-square error of class midpoints divided by the mean true midpoint."""
    if len(pred_class) != len(true_class) or not len(true_class):
        raise DataError("nrmse needs equally long, non-empty class lists")
    d_hat = np.array([bin_midpoint(scheme, int(b)) for b in pred_class])
    d = np.array([bin_midpoint(scheme, int(b)) for b in true_class])
    mean = float(d.mean())
    if mean == 0:
        raise DataError("mean true diameter is zero")
    return float(np.sqrt(np.mean((d - d_hat) ** 2)) / mean)


def top1(candidates: np.ndarray, scores: np.ndarray, t: int, ties: str = "realistic") -> int:
    """Predicted tail consistent with the tie convention used for ranks."""
    best = scores.max()
    tied = candidates[scores == best]
    if ties == "optimistic":
        return t if t in tied else int(tied[0])
    others = tied[tied != t]
    return int(others[0]) if others.size else t


@dataclass
class RankingReport:
    question: str
    hits_at_1: float
    hits_at_k: dict
    mrr: float
    n_queries: int
    time_test: float | None
    hits_groupby3: float | None = None
    nrmse: float | None = None
    ranks: list = field(default_factory=list)
    queries: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self, timestamps: bool = True) -> dict:
        d = asdict(self)
        d["hits_at_k"] = {str(k): v for k, v in self.hits_at_k.items()}
        if not timestamps:
            d["time_test"] = None
        return d

    def save(self, path: str | Path, timestamps: bool = True) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(timestamps), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def save_queries(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for q in self.queries:
                fh.write(f"{q['spot']}\t{q['true']}\t{q['predicted']}\t{q['rank']}\n")

    @classmethod
    def load(cls, path: str | Path) -> "RankingReport":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        d["hits_at_k"] = {int(k): v for k, v in d["hits_at_k"].items()}
        return cls(**d)


def _diameter_bin(label: str) -> int:
    try:
        return int(label.split(":", 1)[1])
    except (IndexError, ValueError):
        raise DataError(f"cannot read a diameter class from {label!r}") from None


def evaluate(model, kg: KnowledgeGraph, question: str, scheme: BinningScheme | None = None,
             grouping: Mapping[str, int] | None = None, *, split: str = "test", ties: str = "realistic",
             filtered: bool = True, candidates: str = "typed", ks: Sequence[int] = DEFAULT_KS,
             known: Mapping | None = None, threads: int = 1) -> RankingReport:
    """Rank every held-out ``question`` triple of ``split`` and summarise.

    Q1 (diameter class) needs the diameter ``scheme`` for nrmse; Q2
    (carbody) needs a carbody ``grouping`` for Hits@GroupBy3.
    """
    if question not in QUESTIONS:
        raise DataError(f"question must be one of {QUESTIONS}")
    if ties not in TIE_MODES:
        raise DataError(f"ties must be one of {TIE_MODES}")
    if question == "Q1" and scheme is None:
        raise DataError("Q1 evaluation needs the diameter binning scheme")
    if question == "Q2" and grouping is None:
        raise DataError("Q2 evaluation needs a carbody grouping")
    r = kg.target_relation(question)
    queries = kg.split(split)
    queries = queries[queries[:, 1] == r]
    if len(queries) == 0:
        raise DataError(f"no {question} triples in the {split} partition")
    cls = "diameter_class" if question == "Q1" else "carbody"
    cands = kg.vocab.entities_of(cls) if candidates == "typed" else np.arange(kg.n_entities)
    if filtered and known is None:
        known = known_tails(kg)
    scorer = as_scorer(model)
    labels = kg.vocab.entities

    def one(query):
        h, _, t = query
        scores = np.asarray(scorer(h, r, cands), dtype=float)
        keep = _filter_mask(h, r, t, cands, known if filtered else None)
        pos = int(np.flatnonzero(cands == t)[0])
        keep_others = keep.copy()
        keep_others[pos] = False
        rank = rank_of(float(scores[pos]), scores[keep_others], ties)
        return rank, top1(cands[keep], scores[keep], t, ties)

    start = time.perf_counter()
    if threads > 1:
        # queries are independent, so the result does not depend on the thread count
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, queries.tolist()))
    else:
        results = [one(q) for q in queries.tolist()]
    elapsed = time.perf_counter() - start
    ranks = [x[0] for x in results]
    preds = [x[1] for x in results]
    records = [{"spot": labels[h], "true": labels[t], "predicted": labels[p], "rank": k}
               for (h, _, t), (k, p) in zip(queries.tolist(), results)]

    m = compute_metrics(ranks, ks)
    report = RankingReport(question, m["hits_at_1"], m["hits_at_k"], m["mrr"], len(ranks), elapsed,
                           ranks=ranks, queries=records,
                           config={"split": split, "ties": ties, "filtered": filtered, "candidates": candidates})
    trues = queries[:, 2].tolist()
    if question == "Q1":
        report.nrmse = nrmse([_diameter_bin(labels[p]) for p in preds],
                             [_diameter_bin(labels[t]) for t in trues], scheme)
    else:
        report.hits_groupby3 = hits_groupby3([labels[p] for p in preds], [labels[t] for t in trues], grouping)
    return report


def mean_reciprocal_rank(model, kg: KnowledgeGraph, split: str = "valid", questions: Sequence[str] = QUESTIONS,
                         known: Mapping | None = None) -> dict[str, float]:
    """Filtered typed-candidate MRR per question plus ``"all"`` (pooled over queries)."""
    scorer = as_scorer(model)
    known = known_tails(kg) if known is None else known
    out, pooled = {}, []
    for q in questions:
        label = "has_diameter_class" if q == "Q1" else "belongs_to_carbody"
        if not kg.vocab.has_relation(label):
            continue
        r = kg.vocab.relation(label)
        trip = kg.split(split)
        trip = trip[trip[:, 1] == r]
        if len(trip) == 0:
            continue
        cands = kg.vocab.entities_of("diameter_class" if q == "Q1" else "carbody")
        rr = []
        for h, _, t in trip.tolist():
            scores = np.asarray(scorer(h, r, cands), dtype=float)
            keep = _filter_mask(h, r, t, cands, known)
            pos = int(np.flatnonzero(cands == t)[0])
            keep[pos] = False
            rr.append(1.0 / rank_of(float(scores[pos]), scores[keep]))
        out[q] = float(np.mean(rr))
        pooled.extend(rr)
    if pooled:
        out["all"] = float(np.mean(pooled))
    return out


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    v = np.asarray([x for x in values if x is not None and not (isinstance(x, float) and math.isnan(x))])
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std())
