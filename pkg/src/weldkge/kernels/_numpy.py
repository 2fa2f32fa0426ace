"""Vectorised numpy kernels (reference backend).

Every ``*_grad`` adds ``coef[i] * d score_i / d param`` into the gradient
buffers, which have the same shapes as the parameter tables.
"""

import numpy as np

from ..hyperbolic import (
    ARTANH_MAX,
    _dot,
    _exp0,
    _exp0_vjp,
    _mobius_add,
    _mobius_add_vjp,
    _norm,
    _project,
    _project_vjp,
    _reflect,
    _reflect_vjp,
    _rotate,
    _rotate_vjp,
    _softmax2,
)

_TINY = 1e-300


# TransE --------------------------------------------------------------------

def transe_score(E, R, h, r, t):
    diff = E[h] + R[r] - E[t]
    return -np.sqrt(np.sum(diff * diff, axis=1))


def transe_grad(E, R, h, r, t, coef, gE, gR):
    diff = E[h] + R[r] - E[t]
    n = np.sqrt(np.sum(diff * diff, axis=1))
    # subgradient 0 at an exact match
    scale = np.where(n > 0, coef / np.maximum(n, _TINY), 0.0)[:, None] * diff
    np.add.at(gE, h, -scale)
    np.add.at(gR, r, -scale)
    np.add.at(gE, t, scale)


# DistMult ------------------------------------------------------------------

def distmult_score(E, R, h, r, t):
    return np.sum(E[h] * R[r] * E[t], axis=1)


def distmult_grad(E, R, h, r, t, coef, gE, gR):
    eh, rr, et = E[h], R[r], E[t]
    c = coef[:, None]
    np.add.at(gE, h, c * rr * et)
    np.add.at(gR, r, c * eh * et)
    np.add.at(gE, t, c * eh * rr)


# RotatE --------------------------------------------------------------------

def _rotate_parts(E, R, h, r, t):
    k = R.shape[1]
    hr, hi = E[h, :k], E[h, k:]
    cs, sn = np.cos(R[r]), np.sin(R[r])
    rot_re = hr * cs - hi * sn
    rot_im = hr * sn + hi * cs
    d_re = rot_re - E[t, :k]
    d_im = rot_im - E[t, k:]
    return cs, sn, rot_re, rot_im, d_re, d_im


def rotate_score(E, R, h, r, t):
    *_, d_re, d_im = _rotate_parts(E, R, h, r, t)
    return -np.sqrt(np.sum(d_re * d_re + d_im * d_im, axis=1))


def rotate_grad(E, R, h, r, t, coef, gE, gR):
    cs, sn, rot_re, rot_im, d_re, d_im = _rotate_parts(E, R, h, r, t)
    n = np.sqrt(np.sum(d_re * d_re + d_im * d_im, axis=1))
    g = np.where(n > 0, -coef / np.maximum(n, _TINY), 0.0)[:, None]
    gh = np.concatenate([g * (d_re * cs + d_im * sn), g * (d_im * cs - d_re * sn)], axis=1)
    gt = np.concatenate([-g * d_re, -g * d_im], axis=1)
    np.add.at(gE, h, gh)
    np.add.at(gE, t, gt)
    np.add.at(gR, r, g * (d_im * rot_re - d_re * rot_im))


# AttH ----------------------------------------------------------------------

def _atth_forward(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t):
    x, a, c = E[h], ATT[r], CURV[r]
    s = 1.0 / np.sqrt(x.shape[1])
    u1, u2 = _rotate(x, ROT[r]), _reflect(x, REF[r])
    w1, w2 = _softmax2(s * _dot(a, u1), s * _dot(a, u2))
    q = w1 * u1 + w2 * u2
    p0 = _exp0(q, c)
    p = _project(p0, c)
    t0 = _exp0(TRANS[r], c)
    tr = _project(t0, c)
    q0 = _mobius_add(p, tr, c)
    qq = _project(q0, c)
    v0 = _exp0(E[t], c)
    v = _project(v0, c)
    w = _mobius_add(-qq, v, c)
    m = _norm(w)
    sc = np.sqrt(c)
    z = sc * m
    d = 2.0 / sc * np.arctanh(np.minimum(z, ARTANH_MAX))
    score = -d[:, 0] ** 2 + B[h, 0] + B[t, 0]
    return score, locals()


def atth_score(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t):
    return _atth_forward(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t)[0]


def atth_grad(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t, coef,
              gE, gB, gROT, gREF, gTRANS, gATT, gCURV):
    _, f = _atth_forward(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t)
    c, sc, z, m, d = f["c"], f["sc"], f["z"], f["m"], f["d"]
    cf = coef[:, None]
    np.add.at(gB, h, cf)
    np.add.at(gB, t, cf)

    gd = -2.0 * d * cf
    free = z < ARTANH_MAX
    one_mz2 = np.where(free, 1.0 - z * z, 1.0)
    dd_dm = np.where(free, 2.0 / one_mz2, 0.0)
    dd_dc = np.where(free, m / (one_mz2 * c), 0.0) - d / (2.0 * c)
    gw = gd * dd_dm * f["w"] / np.maximum(m, _TINY)
    gc = gd * dd_dc

    gnq, gv, gc1 = _mobius_add_vjp(-f["qq"], f["v"], c, gw)
    gv0, gc2 = _project_vjp(f["v0"], c, gv)
    get, gc3 = _exp0_vjp(E[t], c, gv0)
    gq0, gc4 = _project_vjp(f["q0"], c, -gnq)
    gp, gtr, gc5 = _mobius_add_vjp(f["p"], f["tr"], c, gq0)
    gt0, gc6 = _project_vjp(f["t0"], c, gtr)
    gtrans, gc7 = _exp0_vjp(TRANS[r], c, gt0)
    gp0, gc8 = _project_vjp(f["p0"], c, gp)
    gq, gc9 = _exp0_vjp(f["q"], c, gp0)
    gc = gc + gc1 + gc2 + gc3 + gc4 + gc5 + gc6 + gc7 + gc8 + gc9

    u1, u2, w1, w2, a, s = f["u1"], f["u2"], f["w1"], f["w2"], f["a"], f["s"]
    gw1, gw2 = _dot(gq, u1), _dot(gq, u2)
    mean = w1 * gw1 + w2 * gw2
    gl1, gl2 = w1 * (gw1 - mean), w2 * (gw2 - mean)
    gu1 = w1 * gq + s * gl1 * a
    gu2 = w2 * gq + s * gl2 * a
    ga = s * (gl1 * u1 + gl2 * u2)
    gx1, grot = _rotate_vjp(f["x"], ROT[r], gu1)
    gx2, gref = _reflect_vjp(f["x"], REF[r], gu2)

    np.add.at(gE, h, gx1 + gx2)
    np.add.at(gE, t, get)
    np.add.at(gROT, r, grot)
    np.add.at(gREF, r, gref)
    np.add.at(gTRANS, r, gtrans)
    np.add.at(gATT, r, ga)
    np.add.at(gCURV, r, gc)


# optimiser -----------------------------------------------------------------

def adagrad_rows(param, acc, grad, rows, lr, eps):
    """Adagrad step on ``rows`` only; their gradient rows are zeroed afterwards."""
    g = grad[rows]
    acc[rows] += g * g
    param[rows] -= lr * g / (np.sqrt(acc[rows]) + eps)
    grad[rows] = 0.0
