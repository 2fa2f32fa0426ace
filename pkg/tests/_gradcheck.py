"""Central finite-difference oracles shared by the model and acceptance tests."""

import numpy as np

from weldkge.baselines import mlp_init, mlp_loss_grad
from weldkge.models import ENTITY_TENSORS, init_params, score, score_gradient

EPS = 1e-5


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))


def random_instance(kind: str, seed: int, dim: int = 8, n_entities: int = 5, n_relations: int = 3):
    p = init_params(kind, n_entities, n_relations, dim, seed)
    rng = np.random.default_rng(10_000 + seed)
    if kind == "AttH":
        # move away from the origin so every term of the chain is exercised
        p.tensors["curv"][:] = rng.uniform(0.5, 2.0, (n_relations, 1))
        p.tensors["bias"][:] = rng.normal(size=(n_entities, 1))
        p.tensors["entity"] *= 5
        p.tensors["trans"] *= 5
        p.tensors["att"] *= 10
    h, r, t = int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities))
    return p, h, r, t


def fd_gradient(p, h, r, t, eps: float = EPS):
    out = {}
    for name in p.names:
        rows = sorted({h, t}) if name in ENTITY_TENSORS else [r]
        tab = p.tensors[name]
        out[name] = {}
        for i in rows:
            g = np.zeros(tab.shape[1])
            for k in range(tab.shape[1]):
                old = tab[i, k]
                tab[i, k] = old + eps
                up = score(p, h, r, t, "numpy")
                tab[i, k] = old - eps
                down = score(p, h, r, t, "numpy")
                tab[i, k] = old
                g[k] = (up - down) / (2 * eps)
            out[name][i] = g
    return out


def flatten(g) -> np.ndarray:
    return np.concatenate([g[n][i] for n in sorted(g) for i in sorted(g[n])])


def kge_worst_error(kind: str, n: int, backend: str, dim: int = 8) -> float:
    worst = 0.0
    for seed in range(n):
        p, h, r, t = random_instance(kind, seed, dim)
        worst = max(worst, rel_err(flatten(score_gradient(p, h, r, t, backend)), flatten(fd_gradient(p, h, r, t))))
    return worst


def mlp_worst_error(n: int, sizes=(8, 6, 4), batch: int = 5) -> float:
    worst = 0.0
    for seed in range(n):
        rng = np.random.default_rng(seed)
        p = mlp_init(sizes, seed)
        for b in p.biases:
            b[:] = rng.normal(size=b.shape)
        X = rng.normal(size=(batch, sizes[0]))
        y = rng.integers(sizes[-1], size=batch)
        _, grads = mlp_loss_grad(p, X, y)
        fd = []
        for a in p.arrays():
            g = np.zeros_like(a)
            for idx in np.ndindex(a.shape):
                old = a[idx]
                a[idx] = old + EPS
                up, _ = mlp_loss_grad(p, X, y)
                a[idx] = old - EPS
                down, _ = mlp_loss_grad(p, X, y)
                a[idx] = old
                g[idx] = (up - down) / (2 * EPS)
            fd.append(g.ravel())
        worst = max(worst, rel_err(np.concatenate([g.ravel() for g in grads]), np.concatenate(fd)))
    return worst
