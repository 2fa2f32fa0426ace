"""Literal handling: series aggregation, discretisation and back-conversion.

Numeric values are turned into entities by binning.  A :class:`BinningScheme`
is fitted on training rows only and then applied unchanged to every split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

STRATEGIES = ("equal_width", "equal_frequency")
DEFAULT_STAGES = 3


@dataclass(frozen=True)
class AggregatedLiteral:
    feature: str
    stage_means: tuple[float, ...]
    overall_mean: float


@dataclass(frozen=True)
class BinningScheme:
    feature: str
    strategy: str
    edges: tuple[float, ...]

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DataError(f"unknown binning strategy {self.strategy!r}")
        e = self.edges
        if len(e) < 2:
            raise DataError(f"{self.feature}: need at least 2 edges")
        if not all(math.isfinite(x) for x in e):
            raise DataError(f"{self.feature}: non-finite bin edge")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise DataError(f"{self.feature}: bin edges must be strictly increasing (degenerate range)")

    @property
    def k(self) -> int:
        return len(self.edges) - 1

    @property
    def midpoints(self) -> tuple[float, ...]:
        e = self.edges
        return tuple((e[i] + e[i + 1]) / 2 for i in range(self.k))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "strategy": self.strategy,
            "edges": list(self.edges),
            "midpoints": list(self.midpoints),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BinningScheme":
        try:
            scheme = cls(d["feature"], d["strategy"], tuple(float(x) for x in d["edges"]))
        except KeyError as exc:
            raise DataError(f"binning record missing field {exc}") from None
        if "midpoints" in d and not np.allclose(d["midpoints"], scheme.midpoints, rtol=0, atol=1e-12):
            raise DataError(f"{scheme.feature}: stored midpoints disagree with edges")
        return scheme


def aggregate_series(series: Sequence[float], n_stages: int = DEFAULT_STAGES, feature: str = "") -> AggregatedLiteral:
    """Split ``series`` into ``n_stages`` contiguous segments and average each.

    Segment lengths differ by at most one; the first ``len % n_stages``
    segments take the extra element.
    """
    n = len(series)
    if n == 0:
        raise DataError("cannot aggregate an empty series")
    if n_stages < 1 or n_stages > n:
        raise DataError(f"n_stages={n_stages} invalid for a series of length {n}")
    base, extra = divmod(n, n_stages)
    means, start = [], 0
    for i in range(n_stages):
        size = base + (1 if i < extra else 0)
        means.append(math.fsum(series[start:start + size]) / size)
        start += size
    return AggregatedLiteral(feature, tuple(means), math.fsum(series) / n)


def fit_bins(values: Iterable[float], strategy: str = "equal_frequency", k: int = 10, feature: str = "") -> BinningScheme:
    """Fit ``k`` bins to ``values``.

    ``equal_frequency`` puts the inner edges at the i/k sample quantiles
    (linear interpolation); coinciding edges are merged so fewer than ``k``
    bins may come back.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise DataError(f"{feature}: cannot fit bins on no values")
    if k < 1:
        raise DataError(f"{feature}: k must be >= 1")
    if strategy not in STRATEGIES:
        raise DataError(f"unknown binning strategy {strategy!r}")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        raise DataError(f"{feature}: degenerate range, all values equal {lo}")
    if strategy == "equal_width":
        edges = np.linspace(lo, hi, k + 1)
    else:
        n_distinct = np.unique(v).size
        if n_distinct < k:
            raise DataError(f"{feature}: k={k} exceeds the {n_distinct} distinct values")
        edges = np.quantile(v, np.arange(k + 1) / k)
        edges[0], edges[-1] = lo, hi
        edges = np.unique(edges)
    return BinningScheme(feature, strategy, tuple(float(x) for x in edges))


def fit_resolution_bins(values: Iterable[float], width: float, feature: str = "diameter") -> BinningScheme:
    """Equal-width classes of a fixed measurement resolution.

    Edges sit half a width around the grid ``min + i * width`` so values
    measured on that grid map to bins whose midpoint is the value itself.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise DataError(f"{feature}: cannot fit bins on no values")
    if not width > 0:
        raise DataError(f"{feature}: resolution width must be positive")
    lo, hi = float(v.min()), float(v.max())
    k = int(math.floor((hi - lo) / width + 0.5)) + 1
    start = lo - width / 2
    return BinningScheme(feature, "equal_width", tuple(start + i * width for i in range(k + 1)))


def discretize(x: float, scheme: BinningScheme) -> int:
    """Bin index of ``x`` with half-open bins; out-of-range values are clamped."""
    i = int(np.searchsorted(scheme.edges, x, side="right")) - 1
    return min(max(i, 0), scheme.k - 1)


def discretize_many(xs, scheme: BinningScheme) -> np.ndarray:
    idx = np.searchsorted(np.asarray(scheme.edges), np.asarray(xs, dtype=float), side="right") - 1
    return np.clip(idx, 0, scheme.k - 1)


def _check_bin(scheme: BinningScheme, b: int) -> None:
    if not 0 <= b < scheme.k:
        raise DataError(f"{scheme.feature}: bin {b} out of range for k={scheme.k}")


def literal_entity_label(feature: str, b: int, scheme: BinningScheme) -> str:
    _check_bin(scheme, b)
    lo, hi = scheme.edges[b], scheme.edges[b + 1]
    return f"lit:{feature}:[{lo:#.6g},{hi:#.6g})"


def bin_midpoint(scheme: BinningScheme, b: int) -> float:
    _check_bin(scheme, b)
    return scheme.midpoints[b]


def save_schemes(schemes: Mapping[str, BinningScheme], path: str | Path) -> None:
    records = [schemes[name].to_dict() for name in sorted(schemes)]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schemes": records}, fh, indent=1)
        fh.write("\n")


def load_schemes(path: str | Path) -> dict[str, BinningScheme]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read binning schemes {path}: {exc}") from exc
    out = {}
    for rec in data.get("schemes", []):
        s = BinningScheme.from_dict(rec)
        out[s.feature] = s
    return out
