"""Hot scoring/gradient/optimiser kernels with two interchangeable backends.

The numba backend is used when numba imports and ``WELDKGE_DISABLE_NUMBA``
is unset (or ``0``); otherwise the vectorised numpy backend runs.  Both
backends expose the same functions, see :func:`get_backend`.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _numpy

try:
    from . import _numba
except ImportError:  # numba missing or broken
    _numba = None

TENSORS = {
    "TransE": ("entity", "relation"),
    "DistMult": ("entity", "relation"),
    "RotatE": ("entity", "relation"),
    "AttH": ("entity", "bias", "rot", "ref", "trans", "att", "curv"),
}
_PREFIX = {"TransE": "transe", "DistMult": "distmult", "RotatE": "rotate", "AttH": "atth"}


def numba_requested() -> bool:
    return os.environ.get("WELDKGE_DISABLE_NUMBA", "0").strip().lower() in ("", "0", "false", "no")


def get_backend(name: str | None = None) -> ModuleType:
    """Kernel module for ``"numba"`` or ``"numpy"``; default follows the env flag."""
    if name is None:
        name = "numba" if (numba_requested() and _numba is not None) else "numpy"
    if name == "numpy":
        return _numpy
    if name == "numba":
        if _numba is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba
    raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return "numba" if get_backend() is _numba else "numpy"


def score_batch(kind: str, tensors, h, r, t, backend: str | None = None):
    fn = getattr(get_backend(backend), _PREFIX[kind] + "_score")
    return fn(*tensors, h, r, t)


def accumulate_grad(kind: str, tensors, h, r, t, coef, grads, backend: str | None = None) -> None:
    fn = getattr(get_backend(backend), _PREFIX[kind] + "_grad")
    fn(*tensors, h, r, t, coef, *grads)


def adagrad_rows(param, acc, grad, rows, lr: float, eps: float, backend: str | None = None) -> None:
    get_backend(backend).adagrad_rows(param, acc, grad, rows, lr, eps)
