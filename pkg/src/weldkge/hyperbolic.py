"""Poincare-ball operations with curvature ``c > 0`` (ball radius ``1/sqrt(c)``).

All functions act on the last axis and broadcast over leading axes; ``c``
may be a scalar or an array broadcastable to ``x[..., :1]``.  The private
``*_vjp`` helpers return vector-Jacobian products and back the analytic
AttH gradient.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, NumericError

BALL_EPS = 1e-5
ARTANH_MAX = 1.0 - 1e-15
_SERIES_Z = 1e-4
_TINY = 1e-300


def _as_c(c, like: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim == 0:
        c = np.full(like.shape[:-1] + (1,), float(c))
    return c


def _check(*arrays, c=None):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite input to hyperbolic operation")
    if c is not None:
        c = np.asarray(c, dtype=float)
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise DataError("curvature must be positive and finite")


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1, keepdims=True))


def _dot(x, y):
    return np.sum(x * y, axis=-1, keepdims=True)


def artanh(z):
    return np.arctanh(np.minimum(z, ARTANH_MAX))


# ---------------------------------------------------------------------------
# core maps (unchecked)


def _tanh_ratio(z):
    """tanh(z)/z and its derivative divided by z, stable near 0."""
    zs = np.maximum(z, _SERIES_Z)
    th = np.tanh(zs)
    g = np.where(z < _SERIES_Z, 1.0 - z * z / 3.0, th / zs)
    phi = np.where(z < _SERIES_Z, -2.0 / 3.0 + 8.0 / 15.0 * z * z,
                   (zs * (1.0 - th * th) - th) / zs ** 3)
    return g, phi


def _exp0(v, c):
    n = _norm(v)
    g, _ = _tanh_ratio(np.sqrt(c) * n)
    return g * v


def _log0(y, c):
    sc = np.sqrt(c)
    z = np.minimum(sc * _norm(y), ARTANH_MAX)
    zs = np.maximum(z, _SERIES_Z)
    h = np.where(z < _SERIES_Z, 1.0 + z * z / 3.0, np.arctanh(zs) / zs)
    return h * y


def _mobius_add(x, y, c):
    xy, x2, y2 = _dot(x, y), _dot(x, x), _dot(y, y)
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return num / np.maximum(den, _TINY)


def _project(x, c):
    maxnorm = (1 - BALL_EPS) / np.sqrt(c)
    n = np.maximum(_norm(x), _TINY)
    return np.where(n > maxnorm, x * (maxnorm / n), x)


def _distance(x, y, c):
    sc = np.sqrt(c)
    return 2.0 / sc * artanh(sc * _norm(_mobius_add(-x, y, c)))


def _rotate(x, angles):
    cs, sn = np.cos(angles), np.sin(angles)
    x0, x1 = x[..., 0::2], x[..., 1::2]
    out = np.empty(x.shape, dtype=float)
    out[..., 0::2] = cs * x0 - sn * x1
    out[..., 1::2] = sn * x0 + cs * x1
    return out


def _reflect(x, angles):
    cs, sn = np.cos(angles), np.sin(angles)
    x0, x1 = x[..., 0::2], x[..., 1::2]
    out = np.empty(x.shape, dtype=float)
    out[..., 0::2] = cs * x0 + sn * x1
    out[..., 1::2] = sn * x0 - cs * x1
    return out


def _softmax2(l1, l2):
    m = np.maximum(l1, l2)
    e1, e2 = np.exp(l1 - m), np.exp(l2 - m)
    s = e1 + e2
    return e1 / s, e2 / s


# ---------------------------------------------------------------------------
# vector-Jacobian products


def _exp0_vjp(v, c, gy):
    n = _norm(v)
    g, phi = _tanh_ratio(np.sqrt(c) * n)
    vg = _dot(v, gy)
    return g * gy + c * phi * vg * v, 0.5 * phi * vg * n * n


def _mobius_add_vjp(x, y, c, go):
    xy, x2, y2 = _dot(x, y), _dot(x, x), _dot(y, y)
    a = 1 + 2 * c * xy + c * y2
    b = 1 - c * x2
    d = np.maximum(1 + 2 * c * xy + c * c * x2 * y2, _TINY)
    out = (a * x + b * y) / d
    gn = go / d
    gd = -_dot(go, out) / d
    al, be = _dot(gn, x), _dot(gn, y)
    gx = a * gn + 2 * c * al * y - 2 * c * be * x + gd * (2 * c * y + 2 * c * c * y2 * x)
    gy = b * gn + al * (2 * c * x + 2 * c * y) + gd * (2 * c * x + 2 * c * c * x2 * y)
    gc = al * (2 * xy + y2) - be * x2 + gd * (2 * xy + 2 * c * x2 * y2)
    return gx, gy, gc


def _project_vjp(x, c, gy):
    maxnorm = (1 - BALL_EPS) / np.sqrt(c)
    n = np.maximum(_norm(x), _TINY)
    active = n > maxnorm
    xg = _dot(x, gy)
    gx = np.where(active, (maxnorm / n) * (gy - xg * x / (n * n)), gy)
    gc = np.where(active, -(xg / n) * maxnorm / (2 * c), 0.0)
    return gx, gc


def _rotate_vjp(x, angles, gy):
    cs, sn = np.cos(angles), np.sin(angles)
    x0, x1 = x[..., 0::2], x[..., 1::2]
    g0, g1 = gy[..., 0::2], gy[..., 1::2]
    gx = np.empty(x.shape)
    gx[..., 0::2] = cs * g0 + sn * g1
    gx[..., 1::2] = -sn * g0 + cs * g1
    ga = g0 * (-sn * x0 - cs * x1) + g1 * (cs * x0 - sn * x1)
    return gx, ga


def _reflect_vjp(x, angles, gy):
    cs, sn = np.cos(angles), np.sin(angles)
    x0, x1 = x[..., 0::2], x[..., 1::2]
    g0, g1 = gy[..., 0::2], gy[..., 1::2]
    gx = np.empty(x.shape)
    gx[..., 0::2] = cs * g0 + sn * g1
    gx[..., 1::2] = sn * g0 - cs * g1
    ga = g0 * (-sn * x0 + cs * x1) + g1 * (cs * x0 + sn * x1)
    return gx, ga


# ---------------------------------------------------------------------------
# public, validated API


def mobius_add(x, y, c=1.0):
    x, y = np.asarray(x, float), np.asarray(y, float)
    _check(x, y, c=c)
    return _mobius_add(x, y, _as_c(c, x))


def exp_map0(v, c=1.0):
    """Map a tangent vector at the origin onto the ball."""
    v = np.asarray(v, float)
    _check(v, c=c)
    return _exp0(v, _as_c(c, v))


def log_map0(x, c=1.0):
    """Inverse of :func:`exp_map0`."""
    x = np.asarray(x, float)
    _check(x, c=c)
    return _log0(x, _as_c(c, x))


def project(x, c=1.0):
    """Pull points lying within ``BALL_EPS`` of the boundary back inside."""
    x = np.asarray(x, float)
    _check(x, c=c)
    return _project(x, _as_c(c, x))


def hyp_distance(x, y, c=1.0):
    """Geodesic distance ``(2/sqrt(c)) * artanh(sqrt(c) * |(-x) (+) y|)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    _check(x, y, c=c)
    cc = _as_c(c, x)
    return _distance(_project(x, cc), _project(y, cc), cc)[..., 0]


def _check_pairs(x, angles):
    if x.shape[-1] % 2:
        raise DataError("Givens transforms need an even dimension")
    if angles.shape[-1] != x.shape[-1] // 2:
        raise DataError("need one angle per coordinate pair")


def givens_rotate(x, angles):
    """Rotate each consecutive coordinate pair ``(x[2i], x[2i+1])`` by ``angles[i]``."""
    x, angles = np.asarray(x, float), np.asarray(angles, float)
    _check(x, angles)
    _check_pairs(x, angles)
    return _rotate(x, angles)


def givens_reflect(x, angles):
    """Reflect each consecutive coordinate pair across the line at ``angles[i] / 2``."""
    x, angles = np.asarray(x, float), np.asarray(angles, float)
    _check(x, angles)
    _check_pairs(x, angles)
    return _reflect(x, angles)


def attention_weights(a, u_rot, u_ref):
    """Softmax weights of the two tangent candidates under attention vector ``a``."""
    scale = 1.0 / np.sqrt(a.shape[-1])
    return _softmax2(scale * _dot(a, u_rot), scale * _dot(a, u_ref))


def hyp_attention(a, p_rot, p_ref, c=1.0):
    """Attention-weighted combination of two ball points.

    Both points are taken to the tangent space at the origin, weighted by a
    softmax over ``a . log0(p)`` and the weighted tangent sum is mapped back.
    """
    a, p_rot, p_ref = (np.asarray(z, float) for z in (a, p_rot, p_ref))
    _check(a, p_rot, p_ref, c=c)
    cc = _as_c(c, p_rot)
    u1, u2 = _log0(p_rot, cc), _log0(p_ref, cc)
    w1, w2 = attention_weights(a, u1, u2)
    return _project(_exp0(w1 * u1 + w2 * u2, cc), cc)
