"""Exact derivatives for network evaluation and training.

Two mechanisms live here:

* :class:`Jet` carries a value together with first and pure second partial
  derivatives with respect to a small set of tracked input dimensions.  It is
  the forward-mode carrier used to evaluate PDE operators (``u_x``, ``u_xx``,
  ``u_t`` ...) on a network.
* :func:`param_gradient` and :func:`check_gradient` handle gradients of scalar
  losses with respect to a :class:`~sinckan.params.ParamStore`.  Reverse-mode
  accumulation is delegated to JAX; because every Jet primitive is written in
  ``jax.numpy``, reverse mode runs straight through jet computations.

The module-level functions (:func:`tanh`, :func:`sinc`, :func:`einsum` ...)
dispatch on their argument so the same network code accepts plain arrays and
Jets.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import jax
import jax.flatten_util
import jax.numpy as jnp
import numpy as np

__all__ = [
    "DomainError",
    "NonFiniteError",
    "Jet",
    "seed_jet",
    "jet_eval",
    "param_gradient",
    "check_gradient",
]

# Taylor fallback for the sinc value; below this |z| the series 1 - z^2/6 + z^4/120
# is exact to unit roundoff.
SINC_TAYLOR = 1e-4
# Derivative slots switch to a long series inside this band to avoid the
# cancellation in (cos z - sinc z) / z.
SINC_SERIES_BAND = 1.0


class DomainError(ValueError):
    """A primitive was evaluated outside its domain."""

    def __init__(self, primitive: str, message: str):
        self.primitive = primitive
        super().__init__(f"{primitive}: {message}")


class NonFiniteError(FloatingPointError):
    """A loss, gradient or jet slot became NaN or infinite."""

    def __init__(self, message: str, value=None):
        self.value = value
        super().__init__(message)


def is_concrete(x) -> bool:
    return not isinstance(x, jax.core.Tracer)


def _check(primitive: str, bad, v, what: str):
    """Raise DomainError when ``bad(v)`` holds anywhere and ``v`` is concrete."""
    if is_concrete(v):
        mask = np.asarray(bad(np.asarray(v)))
        if mask.any():
            first = np.asarray(v)[mask].ravel()[0]
            raise DomainError(primitive, f"{what} (offending value {first!r})")


def _bcast(d, shape):
    return jnp.broadcast_to(d, (d.shape[0],) + tuple(shape))


@jax.tree_util.register_pytree_node_class
class Jet:
    """Value with first and pure second partials per tracked input dimension.

    ``value`` has an arbitrary shape ``S``; ``d1`` and ``d2`` have shape
    ``(k,) + S`` where ``k`` is the number of tracked dimensions.  Constants
    combine with Jets by broadcasting against ``value``.
    """

    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, value, d1, d2):
        self.value = value
        self.d1 = d1
        self.d2 = d2

    # pytree protocol
    def tree_flatten(self):
        return (self.value, self.d1, self.d2), None

    @classmethod
    def tree_unflatten(cls, aux, children):
        return cls(*children)

    @classmethod
    def constant(cls, value, tracked: int) -> "Jet":
        value = jnp.asarray(value, dtype=jnp.float64)
        z = jnp.zeros((tracked,) + value.shape, dtype=value.dtype)
        return cls(value, z, z)

    @property
    def shape(self):
        return jnp.shape(self.value)

    @property
    def ndim(self):
        return jnp.ndim(self.value)

    @property
    def tracked(self) -> int:
        return self.d1.shape[0]

    def __repr__(self):
        return f"Jet(value={self.value!r}, d1={self.d1!r}, d2={self.d2!r})"

    def __len__(self):
        return self.shape[0]

    # elementwise chain rule: f(u) with f', f'' evaluated at u.value
    def _chain(self, f0, f1, f2) -> "Jet":
        return Jet(f0, f1 * self.d1, f2 * self.d1 * self.d1 + f1 * self.d2)

    # arithmetic
    def __neg__(self):
        return Jet(-self.value, -self.d1, -self.d2)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2)
        v = self.value + other
        shape = jnp.shape(v)
        return Jet(v, _bcast(self.d1, shape), _bcast(self.d2, shape))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            u, v = self, other
            return Jet(
                u.value * v.value,
                u.d1 * v.value + u.value * v.d1,
                u.d2 * v.value + 2.0 * u.d1 * v.d1 + u.value * v.d2,
            )
        return Jet(self.value * other, self.d1 * other, self.d2 * other)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.value
        _check("div", lambda a: a == 0, v, "division by zero")
        r = 1.0 / v
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        _check("div", lambda a: a == 0, other, "division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(log(self) * p)
        p = float(p)
        v = self.value
        if p == 0.0:
            return Jet.constant(jnp.ones_like(v), self.tracked)
        if p == 1.0:
            return self
        if p == 2.0:
            return self * self
        if not p.is_integer():
            _check("power", lambda a: a < 0, v, f"negative base with exponent {p}")
            if p < 2.0:
                _check("power", lambda a: a == 0, v, f"zero base with exponent {p}")
        return self._chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def __rpow__(self, base):
        return exp(self * jnp.log(base))

    # comparisons compare values only; used for piecewise branch selection
    def __lt__(self, other):
        return self.value < _val(other)

    def __le__(self, other):
        return self.value <= _val(other)

    def __gt__(self, other):
        return self.value > _val(other)

    def __ge__(self, other):
        return self.value >= _val(other)

    # linear structural operations act on every slot alike
    def __getitem__(self, key):
        return linear(lambda a: a[key], self)

    def reshape(self, *shape):
        return linear(lambda a: a.reshape(*shape), self)

    def sum(self, axis=None):
        return linear(lambda a: jnp.sum(a, axis=axis), self)

    @property
    def T(self):
        return linear(lambda a: a.T, self)

    def __matmul__(self, other):
        if isinstance(other, Jet):
            raise TypeError("Jet @ Jet is not supported; one operand must be constant")
        return linear(lambda a: a @ other, self)

    def __rmatmul__(self, other):
        return linear(lambda a: other @ a, self)


def _val(x):
    return x.value if isinstance(x, Jet) else x


def linear(fn: Callable, x: Jet) -> Jet:
    """Apply a linear map (indexing, reshape, contraction with constants) to all slots."""
    vf = jax.vmap(fn)
    return Jet(fn(x.value), vf(x.d1), vf(x.d2))


# ----------------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------------


def exp(x):
    if isinstance(x, Jet):
        e = jnp.exp(x.value)
        return x._chain(e, e, e)
    return jnp.exp(x)


def log(x):
    v = _val(x)
    _check("log", lambda a: a <= 0, v, "logarithm of a non-positive number")
    if isinstance(x, Jet):
        r = 1.0 / x.value
        return x._chain(jnp.log(x.value), r, -r * r)
    return jnp.log(x)


def sqrt(x):
    _check("sqrt", lambda a: a < 0, _val(x), "square root of a negative number")
    if isinstance(x, Jet):
        return x**0.5
    return jnp.sqrt(x)


def sin(x):
    if isinstance(x, Jet):
        s, c = jnp.sin(x.value), jnp.cos(x.value)
        return x._chain(s, c, -s)
    return jnp.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = jnp.sin(x.value), jnp.cos(x.value)
        return x._chain(c, -s, -c)
    return jnp.cos(x)


def tanh(x):
    if isinstance(x, Jet):
        t = jnp.tanh(x.value)
        dt = 1.0 - t * t
        return x._chain(t, dt, -2.0 * t * dt)
    return jnp.tanh(x)


def arctanh(x):
    v = _val(x)
    _check("arctanh", lambda a: np.abs(a) >= 1, v, "argument outside (-1, 1)")
    if isinstance(x, Jet):
        r = 1.0 / (1.0 - x.value * x.value)
        return x._chain(jnp.arctanh(x.value), r, 2.0 * x.value * r * r)
    return jnp.arctanh(x)


def sigmoid(x):
    if isinstance(x, Jet):
        s = jax.nn.sigmoid(x.value)
        ds = s * (1.0 - s)
        return x._chain(s, ds, ds * (1.0 - 2.0 * s))
    return jax.nn.sigmoid(x)


def silu(x):
    if isinstance(x, Jet):
        v = x.value
        s = jax.nn.sigmoid(v)
        ds = s * (1.0 - s)
        return x._chain(v * s, s + v * ds, 2.0 * ds + v * ds * (1.0 - 2.0 * s))
    return jax.nn.silu(x)


def square(x):
    return x * x


def abs(x):  # noqa: A001 - mirrors jnp.abs
    """Absolute value; at 0 the right-hand branch (slope +1) is taken."""
    if isinstance(x, Jet):
        sgn = jnp.where(x.value >= 0, 1.0, -1.0)
        return Jet(jnp.abs(x.value), sgn * x.d1, sgn * x.d2)
    return jnp.abs(x)


def clip(x, lo: float, hi: float):
    """Clamp into [lo, hi].  Derivatives pass through on [lo, hi) only."""
    if isinstance(x, Jet):
        inside = (x.value >= lo) & (x.value < hi)
        return Jet(
            jnp.clip(x.value, lo, hi),
            jnp.where(inside, x.d1, 0.0),
            jnp.where(inside, x.d2, 0.0),
        )
    return jnp.clip(x, lo, hi)


def where(cond, a, b):
    """Branch selection; ``cond`` must be a plain boolean array."""
    if isinstance(a, Jet) or isinstance(b, Jet):
        k = a.tracked if isinstance(a, Jet) else b.tracked
        a = a if isinstance(a, Jet) else Jet.constant(a, k)
        b = b if isinstance(b, Jet) else Jet.constant(b, k)
        return Jet(
            jnp.where(cond, a.value, b.value),
            jnp.where(cond, a.d1, b.d1),
            jnp.where(cond, a.d2, b.d2),
        )
    return jnp.where(cond, a, b)


def _sinc_value(z):
    small = jnp.abs(z) < SINC_TAYLOR
    zs = jnp.where(small, 1.0, z)
    z2 = z * z
    return jnp.where(small, 1.0 - z2 / 6.0 + z2 * z2 / 120.0, jnp.sin(zs) / zs)


# coefficients of sinc(z) = sum_k a_k w^k with w = z^2, a_k = (-1)^k / (2k+1)!
_SERIES = [(-1.0) ** k / math.factorial(2 * k + 1) for k in range(12)]


def _sinc_derivatives(z):
    """First and second derivatives of sin(z)/z, accurate for all z."""
    w = z * z
    # d/dz sum a_k z^2k = z * sum 2k a_k w^(k-1);  d2 = sum 2k(2k-1) a_k w^(k-1)
    s1 = 0.0
    s2 = 0.0
    for k in range(len(_SERIES) - 1, 0, -1):
        s1 = s1 * w + 2 * k * _SERIES[k]
        s2 = s2 * w + 2 * k * (2 * k - 1) * _SERIES[k]
    series_d1 = z * s1
    series_d2 = s2
    band = jnp.abs(z) < SINC_SERIES_BAND
    zs = jnp.where(band, 1.0, z)
    s = jnp.sin(zs) / zs
    d1 = (jnp.cos(zs) - s) / zs
    d2 = -s - 2.0 * d1 / zs
    return jnp.where(band, series_d1, d1), jnp.where(band, series_d2, d2)


def sinc(x):
    """sin(x)/x with the removable singularity filled (value 1 at 0)."""
    if isinstance(x, Jet):
        d1, d2 = _sinc_derivatives(x.value)
        return x._chain(_sinc_value(x.value), d1, d2)
    return _sinc_value(jnp.asarray(x, dtype=jnp.float64))


# ----------------------------------------------------------------------------
# linear helpers
# ----------------------------------------------------------------------------


def einsum(subscripts: str, x, w):
    """``jnp.einsum(subscripts, x, w)`` where only ``x`` may be a Jet."""
    if isinstance(w, Jet):
        raise TypeError("einsum: the second operand must be constant")
    if isinstance(x, Jet):
        return linear(lambda a: jnp.einsum(subscripts, a, w), x)
    return jnp.einsum(subscripts, x, w)


def sum(x, axis=None):  # noqa: A001
    if isinstance(x, Jet):
        return x.sum(axis=axis)
    return jnp.sum(x, axis=axis)


def stack(items: Sequence, axis: int = 0):
    if any(isinstance(i, Jet) for i in items):
        k = next(i.tracked for i in items if isinstance(i, Jet))
        items = [i if isinstance(i, Jet) else Jet.constant(i, k) for i in items]
        ax = axis if axis < 0 else axis + 1
        return Jet(
            jnp.stack([i.value for i in items], axis=axis),
            jnp.stack([i.d1 for i in items], axis=ax),
            jnp.stack([i.d2 for i in items], axis=ax),
        )
    return jnp.stack(items, axis=axis)


def value_of(x):
    """Plain array behind ``x``."""
    return _val(x)


# ----------------------------------------------------------------------------
# entry points
# ----------------------------------------------------------------------------


def seed_jet(x, tracked: Sequence[int] | None = None) -> Jet:
    """Independent-variable Jet for points ``x`` of shape ``(n,)`` or ``(B, n)``.

    Slot ``k`` of the result differentiates with respect to input dimension
    ``tracked[k]``; untracked dimensions behave as constants.
    """
    x = jnp.asarray(x, dtype=jnp.float64)
    n = x.shape[-1]
    dims = list(range(n)) if tracked is None else list(tracked)
    for d in dims:
        if not 0 <= d < n:
            raise IndexError(f"tracked dimension {d} out of range for {n} inputs")
    eye = jnp.eye(n, dtype=x.dtype)[jnp.asarray(dims, dtype=int)] if dims else jnp.zeros((0, n))
    d1 = jnp.broadcast_to(eye.reshape((len(dims),) + (1,) * (x.ndim - 1) + (n,)), (len(dims),) + x.shape)
    return Jet(x, d1, jnp.zeros_like(d1))


def jet_eval(f: Callable, x, tracked: Sequence[int] | None = None) -> Jet:
    """Evaluate ``f`` at ``x`` carrying first and pure second partials.

    ``f`` receives a Jet for the input point(s) and must be built from the
    primitives in this module.  Raises :class:`DomainError` when a primitive
    leaves its domain and :class:`NonFiniteError` when a slot becomes NaN.
    """
    seed = seed_jet(x, tracked)
    out = f(seed)
    if not isinstance(out, Jet):
        out = Jet.constant(out, seed.tracked)
    if is_concrete(out.value):
        for name, slot in (("value", out.value), ("d1", out.d1), ("d2", out.d2)):
            if not np.all(np.isfinite(np.asarray(slot))):
                raise NonFiniteError(f"non-finite entries in jet {name} slot")
    return out


def param_gradient(loss: Callable, params):
    """Gradient of scalar ``loss(params)`` as a store shaped like ``params``."""
    value, grads = jax.value_and_grad(loss)(params)
    if is_concrete(value) and not np.isfinite(float(value)):
        raise NonFiniteError(f"loss is not finite: {float(value)!r}", float(value))
    return grads


def check_gradient(
    loss: Callable,
    params,
    step: float = 1e-5,
    samples: int = 100,
    seed: int = 0,
) -> float:
    """Max relative error between reverse-mode and central differences.

    Draws ``max(samples, 100)`` coordinates (all of them if the store is
    smaller) and returns ``max |AD - FD| / (|FD| + 1e-10)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    grads = param_gradient(loss, params)
    flat, unravel = jax.flatten_util.ravel_pytree(params)
    gflat = np.asarray(jax.flatten_util.ravel_pytree(grads)[0])
    n = flat.shape[0]
    rng = np.random.default_rng(seed)
    count = min(n, max(samples, 100))
    idx = rng.choice(n, size=count, replace=False)
    f = jax.jit(lambda v: loss(unravel(v)))
    base = np.asarray(flat)
    worst = 0.0
    for i in idx:
        e = np.zeros_like(base)
        e[i] = step
        fd = (float(f(base + e)) - float(f(base - e))) / (2.0 * step)
        err = abs(gflat[i] - fd) / (abs(fd) + 1e-10)
        worst = max(worst, err)
    return worst

