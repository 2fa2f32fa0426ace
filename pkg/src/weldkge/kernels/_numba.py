"""Row-wise numba kernels; same signatures and semantics as ``_numpy``."""

import numpy as np
from numba import njit

from ..hyperbolic import ARTANH_MAX, BALL_EPS

_SERIES_Z = 1e-4
_TINY = 1e-300


# TransE --------------------------------------------------------------------

@njit(cache=True)
def transe_score(E, R, h, r, t):
    out = np.empty(h.shape[0])
    for i in range(h.shape[0]):
        s = 0.0
        for k in range(E.shape[1]):
            d = E[h[i], k] + R[r[i], k] - E[t[i], k]
            s += d * d
        out[i] = -np.sqrt(s)
    return out


@njit(cache=True)
def transe_grad(E, R, h, r, t, coef, gE, gR):
    D = E.shape[1]
    diff = np.empty(D)
    for i in range(h.shape[0]):
        hi, ri, ti = h[i], r[i], t[i]
        s = 0.0
        for k in range(D):
            diff[k] = E[hi, k] + R[ri, k] - E[ti, k]
            s += diff[k] * diff[k]
        n = np.sqrt(s)
        if n == 0.0:
            continue
        g = coef[i] / n
        for k in range(D):
            v = g * diff[k]
            gE[hi, k] -= v
            gR[ri, k] -= v
            gE[ti, k] += v


# DistMult ------------------------------------------------------------------

@njit(cache=True)
def distmult_score(E, R, h, r, t):
    out = np.empty(h.shape[0])
    for i in range(h.shape[0]):
        s = 0.0
        for k in range(E.shape[1]):
            s += E[h[i], k] * R[r[i], k] * E[t[i], k]
        out[i] = s
    return out


@njit(cache=True)
def distmult_grad(E, R, h, r, t, coef, gE, gR):
    for i in range(h.shape[0]):
        hi, ri, ti, c = h[i], r[i], t[i], coef[i]
        for k in range(E.shape[1]):
            eh, rr, et = E[hi, k], R[ri, k], E[ti, k]
            gE[hi, k] += c * rr * et
            gR[ri, k] += c * eh * et
            gE[ti, k] += c * eh * rr


# RotatE --------------------------------------------------------------------

@njit(cache=True)
def rotate_score(E, R, h, r, t):
    K = R.shape[1]
    out = np.empty(h.shape[0])
    for i in range(h.shape[0]):
        hi, ri, ti = h[i], r[i], t[i]
        s = 0.0
        for k in range(K):
            cs, sn = np.cos(R[ri, k]), np.sin(R[ri, k])
            dre = E[hi, k] * cs - E[hi, K + k] * sn - E[ti, k]
            dim = E[hi, k] * sn + E[hi, K + k] * cs - E[ti, K + k]
            s += dre * dre + dim * dim
        out[i] = -np.sqrt(s)
    return out


@njit(cache=True)
def rotate_grad(E, R, h, r, t, coef, gE, gR):
    K = R.shape[1]
    dre = np.empty(K)
    dim = np.empty(K)
    rre = np.empty(K)
    rim = np.empty(K)
    for i in range(h.shape[0]):
        hi, ri, ti = h[i], r[i], t[i]
        s = 0.0
        for k in range(K):
            cs, sn = np.cos(R[ri, k]), np.sin(R[ri, k])
            rre[k] = E[hi, k] * cs - E[hi, K + k] * sn
            rim[k] = E[hi, k] * sn + E[hi, K + k] * cs
            dre[k] = rre[k] - E[ti, k]
            dim[k] = rim[k] - E[ti, K + k]
            s += dre[k] * dre[k] + dim[k] * dim[k]
        n = np.sqrt(s)
        if n == 0.0:
            continue
        g = -coef[i] / n
        for k in range(K):
            cs, sn = np.cos(R[ri, k]), np.sin(R[ri, k])
            gE[hi, k] += g * (dre[k] * cs + dim[k] * sn)
            gE[hi, K + k] += g * (dim[k] * cs - dre[k] * sn)
            gE[ti, k] -= g * dre[k]
            gE[ti, K + k] -= g * dim[k]
            gR[ri, k] += g * (dim[k] * rre[k] - dre[k] * rim[k])


# hyperbolic helpers on single vectors ---------------------------------------

@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for k in range(a.shape[0]):
        s += a[k] * b[k]
    return s


@njit(cache=True)
def _tanh_ratio(z):
    if z < _SERIES_Z:
        return 1.0 - z * z / 3.0, -2.0 / 3.0 + 8.0 / 15.0 * z * z
    th = np.tanh(z)
    return th / z, (z * (1.0 - th * th) - th) / (z * z * z)


@njit(cache=True)
def _exp0(v, c, out):
    g, _ = _tanh_ratio(np.sqrt(c) * np.sqrt(_dot(v, v)))
    for k in range(v.shape[0]):
        out[k] = g * v[k]


@njit(cache=True)
def _exp0_vjp(v, c, gy, gv):
    n2 = _dot(v, v)
    g, phi = _tanh_ratio(np.sqrt(c) * np.sqrt(n2))
    vg = _dot(v, gy)
    for k in range(v.shape[0]):
        gv[k] = g * gy[k] + c * phi * vg * v[k]
    return 0.5 * phi * vg * n2


@njit(cache=True)
def _project(x, c, out):
    maxnorm = (1.0 - BALL_EPS) / np.sqrt(c)
    n = max(np.sqrt(_dot(x, x)), _TINY)
    f = maxnorm / n if n > maxnorm else 1.0
    for k in range(x.shape[0]):
        out[k] = x[k] * f


@njit(cache=True)
def _project_vjp(x, c, gy, gx):
    maxnorm = (1.0 - BALL_EPS) / np.sqrt(c)
    n = max(np.sqrt(_dot(x, x)), _TINY)
    if n <= maxnorm:
        for k in range(x.shape[0]):
            gx[k] = gy[k]
        return 0.0
    xg = _dot(x, gy)
    for k in range(x.shape[0]):
        gx[k] = (maxnorm / n) * (gy[k] - xg * x[k] / (n * n))
    return -(xg / n) * maxnorm / (2.0 * c)


@njit(cache=True)
def _mobius_add(x, y, c, out):
    xy, x2, y2 = _dot(x, y), _dot(x, x), _dot(y, y)
    a = 1.0 + 2.0 * c * xy + c * y2
    b = 1.0 - c * x2
    d = max(1.0 + 2.0 * c * xy + c * c * x2 * y2, _TINY)
    for k in range(x.shape[0]):
        out[k] = (a * x[k] + b * y[k]) / d


@njit(cache=True)
def _mobius_add_vjp(x, y, c, go, gx, gy):
    D = x.shape[0]
    xy, x2, y2 = _dot(x, y), _dot(x, x), _dot(y, y)
    a = 1.0 + 2.0 * c * xy + c * y2
    b = 1.0 - c * x2
    d = max(1.0 + 2.0 * c * xy + c * c * x2 * y2, _TINY)
    og = 0.0
    al = 0.0
    be = 0.0
    for k in range(D):
        og += go[k] * (a * x[k] + b * y[k]) / d
        al += go[k] * x[k]
        be += go[k] * y[k]
    gd = -og / d
    al /= d
    be /= d
    for k in range(D):
        gn = go[k] / d
        gx[k] = a * gn + 2 * c * al * y[k] - 2 * c * be * x[k] + gd * (2 * c * y[k] + 2 * c * c * y2 * x[k])
        gy[k] = b * gn + al * (2 * c * x[k] + 2 * c * y[k]) + gd * (2 * c * x[k] + 2 * c * c * x2 * y[k])
    return al * (2 * xy + y2) - be * x2 + gd * (2 * xy + 2 * c * x2 * y2)


# AttH ----------------------------------------------------------------------

@njit(cache=True)
def _atth_row(E, ROT, REF, TRANS, ATT, c, hi, ri, ti, x, u1, u2, q, p0, p, t0, tr, q0, qq, v0, v, w):
    """Forward pass for one triple; fills the work vectors, returns (w1, w2, m, d)."""
    D = E.shape[1]
    K = D // 2
    s = 1.0 / np.sqrt(D)
    for k in range(D):
        x[k] = E[hi, k]
    for k in range(K):
        cs, sn = np.cos(ROT[ri, k]), np.sin(ROT[ri, k])
        u1[2 * k] = cs * x[2 * k] - sn * x[2 * k + 1]
        u1[2 * k + 1] = sn * x[2 * k] + cs * x[2 * k + 1]
        cs, sn = np.cos(REF[ri, k]), np.sin(REF[ri, k])
        u2[2 * k] = cs * x[2 * k] + sn * x[2 * k + 1]
        u2[2 * k + 1] = sn * x[2 * k] - cs * x[2 * k + 1]
    l1, l2 = 0.0, 0.0
    for k in range(D):
        l1 += ATT[ri, k] * u1[k]
        l2 += ATT[ri, k] * u2[k]
    l1 *= s
    l2 *= s
    mx = max(l1, l2)
    e1, e2 = np.exp(l1 - mx), np.exp(l2 - mx)
    w1, w2 = e1 / (e1 + e2), e2 / (e1 + e2)
    for k in range(D):
        q[k] = w1 * u1[k] + w2 * u2[k]
    _exp0(q, c, p0)
    _project(p0, c, p)
    _exp0(TRANS[ri], c, t0)
    _project(t0, c, tr)
    _mobius_add(p, tr, c, q0)
    _project(q0, c, qq)
    _exp0(E[ti], c, v0)
    _project(v0, c, v)
    for k in range(D):
        x[k] = -qq[k]
    _mobius_add(x, v, c, w)
    for k in range(D):
        x[k] = E[hi, k]
    m = np.sqrt(_dot(w, w))
    sc = np.sqrt(c)
    d = 2.0 / sc * np.arctanh(min(sc * m, ARTANH_MAX))
    return w1, w2, m, d


@njit(cache=True)
def atth_score(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t):
    D = E.shape[1]
    work = np.empty((14, D))
    out = np.empty(h.shape[0])
    for i in range(h.shape[0]):
        c = CURV[r[i], 0]
        _, _, _, d = _atth_row(E, ROT, REF, TRANS, ATT, c, h[i], r[i], t[i], work[0], work[1], work[2],
                               work[3], work[4], work[5], work[6], work[7], work[8], work[9], work[10],
                               work[11], work[12])
        out[i] = -d * d + B[h[i], 0] + B[t[i], 0]
    return out


@njit(cache=True)
def atth_grad(E, B, ROT, REF, TRANS, ATT, CURV, h, r, t, coef,
              gE, gB, gROT, gREF, gTRANS, gATT, gCURV):
    D = E.shape[1]
    K = D // 2
    s = 1.0 / np.sqrt(D)
    work = np.empty((14, D))
    x, u1, u2, q, p0, p, t0, tr = work[0], work[1], work[2], work[3], work[4], work[5], work[6], work[7]
    q0, qq, v0, v, w, neg = work[8], work[9], work[10], work[11], work[12], work[13]
    grads = np.empty((8, D))
    ga, gb, gc_, gd_, gu1, gu2 = grads[0], grads[1], grads[2], grads[3], grads[4], grads[5]
    for i in range(h.shape[0]):
        hi, ri, ti = h[i], r[i], t[i]
        c = CURV[ri, 0]
        w1, w2, m, d = _atth_row(E, ROT, REF, TRANS, ATT, c, hi, ri, ti, x, u1, u2, q, p0, p, t0, tr,
                                 q0, qq, v0, v, w)
        cf = coef[i]
        gB[hi, 0] += cf
        gB[ti, 0] += cf
        sc = np.sqrt(c)
        z = sc * m
        g_d = -2.0 * d * cf
        if z < ARTANH_MAX:
            dd_dm = 2.0 / (1.0 - z * z)
            dd_dc = m / ((1.0 - z * z) * c) - d / (2.0 * c)
        else:
            dd_dm = 0.0
            dd_dc = -d / (2.0 * c)
        gcurv = g_d * dd_dc
        f = g_d * dd_dm / max(m, _TINY)
        for k in range(D):
            ga[k] = f * w[k]
            neg[k] = -qq[k]
        # ga: grad wrt w -> gb (grad -qq), gc_ (grad v)
        gcurv += _mobius_add_vjp(neg, v, c, ga, gb, gc_)
        gcurv += _project_vjp(v0, c, gc_, gd_)
        gcurv += _exp0_vjp(E[ti], c, gd_, ga)
        for k in range(D):
            gE[ti, k] += ga[k]
            gb[k] = -gb[k]
        gcurv += _project_vjp(q0, c, gb, ga)
        gcurv += _mobius_add_vjp(p, tr, c, ga, gb, gc_)
        gcurv += _project_vjp(t0, c, gc_, gd_)
        gcurv += _exp0_vjp(TRANS[ri], c, gd_, ga)
        for k in range(D):
            gTRANS[ri, k] += ga[k]
        gcurv += _project_vjp(p0, c, gb, gd_)
        gcurv += _exp0_vjp(q, c, gd_, ga)
        gCURV[ri, 0] += gcurv
        # ga now holds grad wrt q
        gw1 = _dot(ga, u1)
        gw2 = _dot(ga, u2)
        mean = w1 * gw1 + w2 * gw2
        gl1 = w1 * (gw1 - mean)
        gl2 = w2 * (gw2 - mean)
        for k in range(D):
            gATT[ri, k] += s * (gl1 * u1[k] + gl2 * u2[k])
            gu1[k] = w1 * ga[k] + s * gl1 * ATT[ri, k]
            gu2[k] = w2 * ga[k] + s * gl2 * ATT[ri, k]
        for k in range(K):
            cs, sn = np.cos(ROT[ri, k]), np.sin(ROT[ri, k])
            x0, x1 = x[2 * k], x[2 * k + 1]
            g0, g1 = gu1[2 * k], gu1[2 * k + 1]
            gE[hi, 2 * k] += cs * g0 + sn * g1
            gE[hi, 2 * k + 1] += -sn * g0 + cs * g1
            gROT[ri, k] += g0 * (-sn * x0 - cs * x1) + g1 * (cs * x0 - sn * x1)
            cs, sn = np.cos(REF[ri, k]), np.sin(REF[ri, k])
            g0, g1 = gu2[2 * k], gu2[2 * k + 1]
            gE[hi, 2 * k] += cs * g0 + sn * g1
            gE[hi, 2 * k + 1] += sn * g0 - cs * g1
            gREF[ri, k] += g0 * (-sn * x0 + cs * x1) + g1 * (cs * x0 + sn * x1)


# optimiser -----------------------------------------------------------------

@njit(cache=True)
def adagrad_rows(param, acc, grad, rows, lr, eps):
    for j in range(rows.shape[0]):
        i = rows[j]
        for k in range(param.shape[1]):
            g = grad[i, k]
            acc[i, k] += g * g
            param[i, k] -= lr * g / (np.sqrt(acc[i, k]) + eps)
            grad[i, k] = 0.0
