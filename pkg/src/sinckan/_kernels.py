"""Compiled evaluation of the Sinc edge sum used by plain-array SincKAN layers.

The layer needs, for every sample b and output q,

    out[b, q] = sum_{p, m, i} C[q, p, m, i] * sinc(pi * (xi[b, p] / h[m] - n[i]))

Writing sin(pi (y - n)) = (-1)^n sin(pi y) leaves a single sine per (b, p, m)
and one division per node.  The node nearest to y is evaluated directly so
the cardinal property survives rounding.  The kernels are wrapped as a JAX
primitive with a hand-written reverse rule.
"""

from __future__ import annotations

import math
from functools import lru_cache

import jax
import jax.numpy as jnp
import numba as nb
import numpy as np

_FM = {"reassoc", "contract", "arcp", "nsz"}


# Taylor coefficients of sin(z)/z and cos(z) in w = z^2; on |z| <= pi/2 the
# truncation error is below 1e-18, and the polynomials vectorise where libm
# calls do not.
_SIN = tuple((-1.0) ** k / math.factorial(2 * k + 1) for k in range(11))
_COS = tuple((-1.0) ** k / math.factorial(2 * k) for k in range(12))


@nb.njit(cache=True, fastmath=_FM, error_model="numpy", inline="always")
def _sincos(z):
    w = z * z
    sv = _SIN[10]
    for k in range(9, -1, -1):
        sv = sv * w + _SIN[k]
    cv = _COS[11]
    for k in range(10, -1, -1):
        cv = cv * w + _COS[k]
    return z * sv, cv


@nb.njit(cache=True, fastmath=_FM, error_model="numpy")
def _near(z, sz, cz):
    # sinc(z) and d/dz sinc(z) for |z| <= pi/2 given sin z, cos z
    if abs(z) < 0.1:
        w = z * z
        v = 1.0 - w / 6.0 * (1.0 - w / 20.0 * (1.0 - w / 42.0 * (1.0 - w / 72.0)))
        d = -z / 3.0 * (1.0 - w / 10.0 * (1.0 - w / 28.0 * (1.0 - w / 54.0 * (1.0 - w / 88.0))))
        return v, d
    v = sz / z
    return v, (cz - v) / z


@nb.njit(cache=True, fastmath=_FM, error_model="numpy")
def _prepare(xi_col, inv_h, n0, y, s, c, kf, z, sz, cz):
    # y = r + delta with r the nearest integer; sin(pi y) = (-1)^r sin(pi delta)
    for b in range(y.shape[0]):
        yb = xi_col[b] * inv_h
        r = np.floor(yb + 0.5)
        zb = np.pi * (yb - r)
        sv, cv = _sincos(zb)
        par = 1.0 - 2.0 * (r - 2.0 * np.floor(0.5 * r))
        y[b] = yb
        z[b] = zb
        sz[b] = sv
        cz[b] = cv
        s[b] = par * sv / np.pi
        c[b] = par * cv
        kf[b] = r - n0


@nb.njit(cache=True, fastmath=_FM, error_model="numpy")
def edge_sum_forward(xi, C, hs, nodes, sg):
    """Returns (out[B, Q], dout/dxi[B, P, Q]).

    Loops run over the batch axis innermost so they vectorise; the node
    nearest to each sample is masked out there and added in a scalar pass.
    """
    B, P = xi.shape
    Q, _, M, D = C.shape
    n0 = nodes[0]
    out = np.zeros((Q, B))
    grad = np.zeros((B, P, Q))
    y = np.empty(B)
    s = np.empty(B)
    c = np.empty(B)
    kf = np.empty(B)
    z = np.empty(B)
    sz = np.empty(B)
    cz = np.empty(B)
    t = np.empty(B)
    t2 = np.empty(B)
    A0 = np.empty((Q, B))
    A1 = np.empty((Q, B))
    xcol = np.empty(B)
    for p in range(P):
        for b in range(B):
            xcol[b] = xi[b, p]
        for m in range(M):
            inv_h = 1.0 / hs[m]
            _prepare(xcol, inv_h, n0, y, s, c, kf, z, sz, cz)
            A0[:, :] = 0.0
            A1[:, :] = 0.0
            for i in range(D):
                ni = nodes[i]
                sgi = sg[i]
                fi = float(i)
                for b in range(B):
                    hit = kf[b] == fi
                    d = 1.0 if hit else y[b] - ni
                    w = 0.0 if hit else sgi
                    tb = w / d
                    t[b] = tb
                    t2[b] = tb * tb * sgi
                for q in range(Q):
                    cq = C[q, p, m, i]
                    for b in range(B):
                        A0[q, b] += cq * t[b]
                        A1[q, b] += cq * t2[b]
            for b in range(B):
                k = int(kf[b])
                bk = 0.0
                dbk = 0.0
                if 0 <= k < D:
                    bk, dz = _near(z[b], sz[b], cz[b])
                    dbk = np.pi * dz
                else:
                    k = 0
                sb = s[b]
                cb = c[b]
                for q in range(Q):
                    ck = C[q, p, m, k]
                    out[q, b] += sb * A0[q, b] + ck * bk
                    grad[b, p, q] += (cb * A0[q, b] - sb * A1[q, b] + ck * dbk) * inv_h
    return out.T.copy(), grad


@nb.njit(cache=True, fastmath=_FM, error_model="numpy")
def edge_sum_coef_grad(xi, g, hs, nodes, sg, Q):
    """Returns d(sum_bq g[b,q] out[b,q]) / dC with shape (Q, P, M, D)."""
    B, P = xi.shape
    M = hs.shape[0]
    D = nodes.shape[0]
    n0 = nodes[0]
    gC = np.zeros((Q, P, M, D))
    gT = np.ascontiguousarray(g.T)
    y = np.empty(B)
    s = np.empty(B)
    c = np.empty(B)
    kf = np.empty(B)
    z = np.empty(B)
    sz = np.empty(B)
    cz = np.empty(B)
    bk = np.empty(B)
    bas = np.empty(B)
    xcol = np.empty(B)
    for p in range(P):
        for b in range(B):
            xcol[b] = xi[b, p]
        for m in range(M):
            _prepare(xcol, 1.0 / hs[m], n0, y, s, c, kf, z, sz, cz)
            for b in range(B):
                k = int(kf[b])
                bk[b] = _near(z[b], sz[b], cz[b])[0] if 0 <= k < D else 0.0
            for i in range(D):
                ni = nodes[i]
                sgi = sg[i]
                fi = float(i)
                for b in range(B):
                    hit = kf[b] == fi
                    d = 1.0 if hit else y[b] - ni
                    bas[b] = bk[b] if hit else s[b] * sgi / d
                for q in range(Q):
                    acc = 0.0
                    for b in range(B):
                        acc += gT[q, b] * bas[b]
                    gC[q, p, m, i] = acc
    return gC


@lru_cache(maxsize=None)
def edge_sum_op(hvalues: tuple, nodes: tuple):
    """JAX-callable ``f(xi, C) -> out`` for fixed step sizes and node indices."""
    hs = np.asarray(hvalues, dtype=np.float64)
    nd = np.asarray(nodes, dtype=np.float64)
    sg = np.where(np.mod(nd, 2.0) == 0.0, 1.0, -1.0)

    def _forward_host(xi, C):
        xi = np.ascontiguousarray(xi, dtype=np.float64)
        C = np.ascontiguousarray(C, dtype=np.float64)
        return edge_sum_forward(xi, C, hs, nd, sg)

    def _coef_host(xi, g):
        xi = np.ascontiguousarray(xi, dtype=np.float64)
        g = np.ascontiguousarray(g, dtype=np.float64)
        return edge_sum_coef_grad(xi, g, hs, nd, sg, g.shape[1])

    def _call_forward(xi, C):
        B, P = xi.shape
        Q = C.shape[0]
        shapes = (
            jax.ShapeDtypeStruct((B, Q), jnp.float64),
            jax.ShapeDtypeStruct((B, P, Q), jnp.float64),
        )
        return jax.pure_callback(_forward_host, shapes, xi, C)

    @jax.custom_vjp
    def op(xi, C):
        return _call_forward(xi, C)[0]

    def op_fwd(xi, C):
        out, grad = _call_forward(xi, C)
        return out, (xi, grad, C.shape)

    def op_bwd(res, g):
        xi, grad, cshape = res
        gxi = jnp.einsum("bq,bpq->bp", g, grad)
        gC = jax.pure_callback(_coef_host, jax.ShapeDtypeStruct(cshape, jnp.float64), xi, g)
        return gxi, gC

    op.defvjp(op_fwd, op_bwd)
    return op
