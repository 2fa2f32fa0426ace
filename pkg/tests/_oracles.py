"""Brute-force reference implementations shared by the unit and acceptance tests."""

import math

import numpy as np

from weldkge.models import init_params, score_many


def sort_rank(scores: dict, t, ties: str) -> int:
    """Sort every candidate and read off the true tail's position(s)."""
    order = sorted(scores.items(), key=lambda kv: -kv[1])
    positions = [i + 1 for i, (c, s) in enumerate(order) if s == scores[t]]
    lo, hi = positions[0], positions[-1]
    if ties == "optimistic":
        return lo
    if ties == "pessimistic":
        return hi
    return math.ceil((lo + hi) / 2)


def oracle_rank(model, h, r, t, cands, known, ties):
    scores = dict(zip(cands, score_many(model, h, r, np.array(cands)).tolist()))
    for c in list(scores):
        if c != t and (h, r, c) in known:
            del scores[c]
    return sort_rank(scores, t, ties)


def random_rank_instance(seed: int):
    """A small TransE model and query with at most 20 candidates; half the time with forced ties."""
    rng = np.random.default_rng(seed)
    ne = int(rng.integers(2, 21))
    p = init_params("TransE", ne, 2, int(rng.integers(1, 9)), seed)
    if rng.random() < 0.5:
        p.tensors["entity"] = np.round(p.tensors["entity"])
        p.tensors["relation"][:] = 0
    cands = rng.choice(ne, size=int(rng.integers(1, ne + 1)), replace=False).tolist()
    h, r, t = int(rng.integers(ne)), int(rng.integers(2)), int(rng.choice(cands))
    known = {(h, r, int(c)) for c in rng.choice(ne, size=int(rng.integers(0, 4)))}
    return p, h, r, t, cands, known
