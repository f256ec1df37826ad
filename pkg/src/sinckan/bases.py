"""Univariate bases: Sinc series, cubic B-splines and Chebyshev polynomials.

Everything here accepts plain arrays or :class:`~sinckan.autodiff.Jet` inputs,
so the same code serves function evaluation and PDE residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax.numpy as jnp
import numpy as np

from . import autodiff as ad
from .autodiff import DomainError

__all__ = [
    "HGrid",
    "SincNodeSet",
    "SplineGrid",
    "sinc",
    "sinc_series",
    "sinc_interpolate",
    "sinc_approx_interval",
    "optimal_step",
    "make_hgrid",
    "input_transform",
    "log_transform",
    "bspline_basis",
    "chebyshev_features",
    "sinc_basis",
]


def sinc(x):
    """sin(x)/x, equal to 1 at the origin."""
    return ad.sinc(x)


def sinc_series(j, h: float, x):
    """Cardinal function S(j, h)(x) = sinc((pi/h)(x - j h))."""
    if h <= 0:
        raise ValueError("h must be positive")
    z = (np.pi / h) * (x - j * h)
    if isinstance(x, ad.Jet):
        return ad.sinc(z)
    # sin(pi m) is not exactly zero in floating point; pin the cardinal values
    t = jnp.asarray(x, dtype=jnp.float64) / h - j
    on_node = t == jnp.rint(t)
    return jnp.where(on_node, jnp.where(t == 0, 1.0, 0.0), ad.sinc(z))


def sinc_interpolate(samples, h: float, x):
    """Sinc series sum_j f(jh) S(j, h)(x) for samples indexed j = -N..N.

    ``samples`` has odd length 2N+1; ``x`` may be an array of any shape.
    """
    samples = jnp.asarray(samples, dtype=jnp.float64)
    if samples.ndim != 1 or samples.shape[0] % 2 != 1:
        raise ValueError("samples must be a 1-D array of odd length 2N+1")
    n = (samples.shape[0] - 1) // 2
    j = jnp.arange(-n, n + 1, dtype=jnp.float64)
    x = jnp.asarray(x, dtype=jnp.float64)
    basis = sinc_series(j, h, x[..., None])
    return basis @ samples


def _psi(xi, a, b):
    # inverse of log((x-a)/(b-x)): R -> (a, b)
    e = jnp.exp(-jnp.abs(xi))
    pos = (a * e + b) / (1.0 + e)
    neg = (a + b * e) / (1.0 + e)
    return jnp.where(xi >= 0, pos, neg)


def sinc_approx_interval(f: Callable, a: float, b: float, n: int, h: float, x, endpoint_line: bool = True):
    """Sinc approximation of ``f`` on (a, b) through the log map.

    Samples f at psi(jh), j = -n..n with psi: R -> (a, b) the inverse of
    ``log_transform``, and evaluates the series at log_transform(x).  With
    ``endpoint_line`` the chord through (a, f(a)) and (b, f(b)) is removed
    first so the interpolated remainder vanishes at both ends, then added back.
    """
    def line(t):
        if not endpoint_line:
            return np.zeros_like(t)
        fa, fb = (float(np.asarray(f(np.array([v])))[0]) for v in (a, b))
        return fa + (fb - fa) * (t - a) / (b - a)

    j = np.arange(-n, n + 1, dtype=np.float64)
    nodes = np.asarray(_psi(j * h, a, b))
    samples = np.asarray(f(nodes), dtype=np.float64) - line(nodes)
    xv = np.asarray(ad.value_of(x), dtype=np.float64)
    return sinc_interpolate(samples, h, log_transform(x, a, b)) + line(xv)


def optimal_step(d: float, beta: float, N: int) -> float:
    """Step size sqrt(pi d / (beta N)) balancing truncation and discretisation error."""
    if d <= 0 or beta <= 0 or N <= 0:
        raise ValueError(f"optimal_step needs positive d, beta, N (got {d}, {beta}, {N})")
    return float(np.sqrt(np.pi * d / (beta * N)))


@dataclass(frozen=True)
class HGrid:
    """Ordered set of Sinc step sizes."""

    scheme: str
    h0: float
    M: int
    values: tuple[float, ...] = field(repr=False)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype or np.float64)

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "h0": self.h0, "M": self.M}


def make_hgrid(scheme: str, h0: float, M: int) -> HGrid:
    """Step sizes h_i = 1/(i h0) ("inverse") or h_i = 1/h0^i ("exponential"), i = 1..M."""
    if h0 <= 1:
        raise ValueError(f"h0 must exceed 1 (got {h0})")
    if M < 1:
        raise ValueError(f"M must be at least 1 (got {M})")
    i = np.arange(1, M + 1, dtype=np.float64)
    if scheme == "inverse":
        values = 1.0 / (i * h0)
    elif scheme == "exponential":
        values = 1.0 / np.power(float(h0), i)
    else:
        raise ValueError(f"unknown h-grid scheme {scheme!r}; expected 'inverse' or 'exponential'")
    return HGrid(scheme, float(h0), int(M), tuple(float(v) for v in values))


@dataclass(frozen=True)
class SincNodeSet:
    """Node indices j = -N .. D-1-N for degree D, with N = floor((D-1)/2).

    Odd D gives the symmetric set -N..N; even D is right-heavy.
    """

    degree: int

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be positive")

    @property
    def N(self) -> int:
        return (self.degree - 1) // 2

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.N, self.degree - self.N, dtype=np.float64)


def input_transform(x):
    """Normalising map tanh: R -> (-1, 1)."""
    return ad.tanh(x)


def log_transform(x, a: float, b: float):
    """log((x - a)/(b - x)), mapping (a, b) onto the real line."""
    if not a < b:
        raise ValueError("log_transform needs a < b")
    v = ad.value_of(x)
    if ad.is_concrete(v):
        arr = np.asarray(v)
        outside = ~((arr > a) & (arr < b))
        if outside.any():
            raise DomainError(
                "log_transform", f"input {arr[outside].ravel()[0]!r} outside ({a}, {b})"
            )
    return ad.log((x - a) / (b - x))


@dataclass(frozen=True)
class SplineGrid:
    """Clamped cubic knot vector on [-1, 1] with G basis functions."""

    G: int
    order: int = 4

    def __post_init__(self):
        if self.G < self.order:
            raise ValueError(f"need at least {self.order} basis functions for order {self.order}")

    @property
    def knots(self) -> np.ndarray:
        k = self.order - 1
        inner = np.linspace(-1.0, 1.0, self.G - k + 1)
        return np.concatenate([np.full(k, -1.0), inner, np.full(k, 1.0)])


def bspline_basis(grid: SplineGrid, x):
    """Cox-de Boor evaluation of all G basis functions at ``x``; shape ``x.shape + (G,)``.

    Intervals are half-open [t_i, t_{i+1}); the last non-empty interval also
    holds its right endpoint so x = 1 is covered.
    """
    t = grid.knots
    v = jnp.asarray(ad.value_of(x))
    lo, hi = t[:-1], t[1:]
    last = np.max(np.nonzero(hi > lo)[0])
    ind = (v[..., None] >= lo) & (v[..., None] < hi)
    ind = ind.at[..., last].set(ind[..., last] | (v == t[-1]))
    B = ind.astype(jnp.float64)
    xe = x[..., None]
    for k in range(1, grid.order):
        n = B.shape[-1] - 1
        den_l = t[k : k + n] - t[:n]
        den_r = t[k + 1 : k + 1 + n] - t[1 : 1 + n]
        inv_l = np.where(den_l > 0, 1.0 / np.where(den_l > 0, den_l, 1.0), 0.0)
        inv_r = np.where(den_r > 0, 1.0 / np.where(den_r > 0, den_r, 1.0), 0.0)
        left = (xe - t[:n]) * inv_l
        right = (t[k + 1 : k + 1 + n] - xe) * inv_r
        B = left * B[..., :n] + right * B[..., 1 : n + 1]
    return B


def chebyshev_features(degree: int, x):
    """T_0(x) .. T_degree(x) by the three-term recurrence; shape ``x.shape + (degree+1,)``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    feats = [x * 0.0 + 1.0]
    if degree >= 1:
        feats.append(x)
    for _ in range(2, degree + 1):
        feats.append(2.0 * x * feats[-1] - feats[-2])
    return ad.stack(feats, axis=-1)


def sinc_basis(xi, hvalues, nodes):
    """S(i, h_m)(xi) for every step size and node; shape ``xi.shape + (M, D)``."""
    h = jnp.asarray(hvalues, dtype=jnp.float64)[:, None]
    j = jnp.asarray(nodes, dtype=jnp.float64)
    # (pi/h)(x - j h) written as pi (x/h - j); identical cardinal values
    z = (xi[..., None, None] * (np.pi / h)) - np.pi * j
    return ad.sinc(z)
