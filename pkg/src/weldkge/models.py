"""KGE parameter tables, scores and analytic gradients.

Scores are "higher is more plausible" for every model; distance-based
models return the negated distance.

============  ==========================================================
TransE        ``-|e_h + r - e_t|``
DistMult      ``sum(e_h * r * e_t)``
RotatE        ``-|e_h o exp(i theta_r) - e_t|`` over complex coordinates
AttH          ``-d_c(Q(h, r), exp0(e_t))**2 + b_h + b_t``
============  ==========================================================

For RotatE the ``dim`` real columns hold ``dim/2`` complex coordinates
(real parts first).  AttH entity rows are tangent vectors at the origin;
``Q`` attends over a Givens rotation and a Givens reflection of the head,
maps the result onto the ball and Mobius-adds the relation translation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .checkpoint import read_arrays, write_arrays
from .errors import DataError, NumericError

KINDS = tuple(kernels.TENSORS)
DIM_GRID = (16, 32, 64, 128, 256)
ENTITY_TENSORS = ("entity", "bias")
# AttH starts close to the origin so points are not born on the boundary
ATTH_INIT_SCALE = 0.1


@dataclass
class ModelParams:
    kind: str
    dim: int
    tensors: dict[str, np.ndarray]
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return self.tensors["entity"].shape[0]

    @property
    def n_relations(self) -> int:
        return self.tensors["relation" if "relation" in self.tensors else "rot"].shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return kernels.TENSORS[self.kind]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(self.tensors[n] for n in self.names)

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.dim, {k: v.copy() for k, v in self.tensors.items()},
                           self.seed, dict(self.extra))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.tensors.values())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.kind, self.dim) == (other.kind, other.dim) and self.tensors.keys() == other.tensors.keys() \
            and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)


def _check_kind_dim(kind: str, dim: int) -> None:
    if kind not in KINDS:
        raise DataError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    if dim <= 0:
        raise DataError("dim must be positive")
    if kind in ("RotatE", "AttH") and dim % 2:
        raise DataError(f"{kind} needs an even dim, got {dim}")


def init_params(kind: str, n_entities: int, n_relations: int, dim: int, seed: int = 0) -> ModelParams:
    """Seeded uniform initialisation in ``[-6/sqrt(dim), 6/sqrt(dim)]``.

    Phase and angle tables are uniform in ``[-pi, pi)``; AttH curvatures
    start at 1 and its biases at 0.
    """
    _check_kind_dim(kind, dim)
    if n_entities <= 0 or n_relations <= 0:
        raise DataError("need at least one entity and one relation")
    rng = np.random.default_rng(seed)
    b = 6.0 / np.sqrt(dim)
    E, R = n_entities, n_relations

    def unif(shape, bound):
        return rng.uniform(-bound, bound, size=shape)

    def phases(shape):
        return rng.uniform(-np.pi, np.pi, size=shape)

    if kind in ("TransE", "DistMult"):
        t = {"entity": unif((E, dim), b), "relation": unif((R, dim), b)}
    elif kind == "RotatE":
        t = {"entity": unif((E, dim), b), "relation": phases((R, dim // 2))}
    else:
        s = ATTH_INIT_SCALE * b
        t = {
            "entity": unif((E, dim), s),
            "bias": np.zeros((E, 1)),
            "rot": phases((R, dim // 2)),
            "ref": phases((R, dim // 2)),
            "trans": unif((R, dim), s),
            "att": unif((R, dim), s),
            "curv": np.ones((R, 1)),
        }
    return ModelParams(kind, dim, t, seed)


def _indices(p: ModelParams, h, r, t):
    h, r, t = (np.atleast_1d(np.asarray(x, dtype=np.int64)) for x in (h, r, t))
    for name, arr, n in (("head", h, p.n_entities), ("relation", r, p.n_relations), ("tail", t, p.n_entities)):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise DataError(f"{name} index out of range")
    return h, r, t


def _check_rows_finite(p: ModelParams, h, r, t) -> None:
    for name in p.names:
        rows = np.concatenate([h, t]) if name in ENTITY_TENSORS else r
        if not np.all(np.isfinite(p.tensors[name][rows])):
            raise NumericError(f"non-finite {name} parameter")


def score_many(p: ModelParams, h, r, t, backend: str | None = None) -> np.ndarray:
    """Vector of scores for aligned index arrays (scalars broadcast)."""
    h, r, t = _indices(p, h, r, t)
    h, r, t = np.broadcast_arrays(h, r, t)
    h, r, t = (np.ascontiguousarray(x) for x in (h, r, t))
    if h.size == 0:
        return np.zeros(0)
    return kernels.score_batch(p.kind, p.arrays(), h, r, t, backend)


def score(p: ModelParams, h: int, r: int, t: int, backend: str | None = None) -> float:
    hh, rr, tt = _indices(p, h, r, t)
    _check_rows_finite(p, hh, rr, tt)
    return float(kernels.score_batch(p.kind, p.arrays(), hh, rr, tt, backend)[0])


def score_gradient(p: ModelParams, h: int, r: int, t: int, backend: str | None = None) -> dict[str, dict[int, np.ndarray]]:
    """Analytic gradient of ``score(p, h, r, t)`` for every touched row.

    Returns ``{tensor_name: {row: gradient_row}}``.  TransE and RotatE
    return a zero subgradient when the distance is exactly 0.
    """
    hh, rr, tt = _indices(p, h, r, t)
    _check_rows_finite(p, hh, rr, tt)
    grads = tuple(np.zeros_like(a) for a in p.arrays())
    kernels.accumulate_grad(p.kind, p.arrays(), hh, rr, tt, np.ones(1), grads, backend)
    out = {}
    for name, g in zip(p.names, grads):
        rows = sorted({int(h), int(t)}) if name in ENTITY_TENSORS else [int(r)]
        out[name] = {i: g[i].copy() for i in rows}
    return out


def wrap_phases(p: ModelParams) -> None:
    """Keep RotatE phases in ``[-pi, pi)``."""
    if p.kind == "RotatE":
        ph = p.tensors["relation"]
        ph[:] = (ph + np.pi) % (2 * np.pi) - np.pi


# checkpoints ---------------------------------------------------------------

def save_checkpoint(p: ModelParams, path: str | Path, extra: dict | None = None) -> None:
    header = {"kind": p.kind, "dim": p.dim, "n_entities": p.n_entities,
              "n_relations": p.n_relations, "seed": p.seed}
    header.update(p.extra)
    header.update(extra or {})
    write_arrays(path, header, {n: p.tensors[n] for n in p.names})


def load_checkpoint(path: str | Path, n_entities: int | None = None, n_relations: int | None = None) -> ModelParams:
    header, arrays = read_arrays(path)
    kind = header.get("kind")
    if kind not in KINDS:
        raise DataError(f"{path}: checkpoint kind {kind!r} is not a KGE model")
    if n_entities is not None and header["n_entities"] != n_entities:
        raise DataError(f"{path}: checkpoint has {header['n_entities']} entities, vocab has {n_entities}")
    if n_relations is not None and header["n_relations"] != n_relations:
        raise DataError(f"{path}: checkpoint has {header['n_relations']} relations, vocab has {n_relations}")
    missing = [n for n in kernels.TENSORS[kind] if n not in arrays]
    if missing:
        raise DataError(f"{path}: checkpoint lacks arrays {missing}")
    known = {"kind", "dim", "n_entities", "n_relations", "seed", "arrays"}
    extra = {k: v for k, v in header.items() if k not in known}
    return ModelParams(kind, int(header["dim"]), {n: arrays[n].copy() for n in kernels.TENSORS[kind]},
                       header.get("seed"), extra)
