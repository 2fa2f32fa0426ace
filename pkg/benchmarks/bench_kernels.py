"""Time the numba and numpy kernel backends on identical batches.

    python3 benchmarks/bench_kernels.py [--entities N] [--dim D] [--batch B] [--repeat R]

The first numba call per kernel compiles (or loads the on-disk cache); it is
run once before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from weldkge import kernels
from weldkge.models import KINDS, init_params


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(n_entities: int, n_relations: int, dim: int, batch: int, repeat: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    h = rng.integers(n_entities, size=batch)
    r = rng.integers(n_relations, size=batch)
    t = rng.integers(n_entities, size=batch)
    coef = rng.normal(size=batch)
    rows = np.unique(np.concatenate([h, t]))
    results = []
    for kind in KINDS:
        p = init_params(kind, n_entities, n_relations, dim, seed)
        arrays = p.arrays()
        for backend in ("numpy", "numba"):
            grads = tuple(np.zeros_like(a) for a in arrays)
            params = tuple(a.copy() for a in arrays)
            accs = tuple(np.zeros_like(a) for a in arrays)

            def score():
                kernels.score_batch(kind, arrays, h, r, t, backend)

            def grad():
                kernels.accumulate_grad(kind, arrays, h, r, t, coef, grads, backend)

            def step():
                kernels.adagrad_rows(params[0], accs[0], grads[0], rows, 0.1, 1e-10, backend)

            for fn in (score, grad, step):
                fn()
            results.append({"kind": kind, "backend": backend,
                            "score_ms": 1e3 * _best_of(score, repeat),
                            "grad_ms": 1e3 * _best_of(grad, repeat),
                            "adagrad_ms": 1e3 * _best_of(step, repeat)})
    return results


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entities", type=int, default=5000)
    ap.add_argument("--relations", type=int, default=20)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--batch", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    res = run(args.entities, args.relations, args.dim, args.batch, args.repeat)
    print(f"batch {args.batch}, dim {args.dim}, best of {args.repeat} (ms)")
    print(f"{'model':<9} {'backend':<7} {'score':>8} {'grad':>8} {'adagrad':>8}")
    for row in res:
        print(f"{row['kind']:<9} {row['backend']:<7} {row['score_ms']:8.3f} {row['grad_ms']:8.3f} {row['adagrad_ms']:8.3f}")
    by = {(x["kind"], x["backend"]): x for x in res}
    for kind in KINDS:
        a, b = by[(kind, "numpy")], by[(kind, "numba")]
        print(f"{kind:<9} numba speed-up: score x{a['score_ms'] / b['score_ms']:.1f}, grad x{a['grad_ms'] / b['grad_ms']:.1f}")


if __name__ == "__main__":
    main()
