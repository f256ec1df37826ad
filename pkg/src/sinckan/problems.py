"""Benchmark registry: one-dimensional target functions and PDE problems.

PDE exact solutions are written with the primitives of :mod:`sinckan.autodiff`
so they can be pushed through the same jet pipeline as a network; that is
how the registry checks its own residual operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import jax.numpy as jnp
import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, Jet

# ----------------------------------------------------------------------------
# grids
# ----------------------------------------------------------------------------


def make_grid(domain, counts) -> jnp.ndarray:
    """Uniform tensor-product grid including endpoints, last dimension fastest.

    ``domain`` is a sequence of (lo, hi) pairs and ``counts`` the number of
    points per dimension; the result has shape (prod(counts), len(domain)).
    """
    if len(domain) != len(counts):
        raise ValueError("domain and counts must have the same length")
    axes = []
    for (lo, hi), n in zip(domain, counts):
        if int(n) < 2:
            raise ValueError(f"each dimension needs at least 2 points (got {n})")
        axes.append(np.linspace(float(lo), float(hi), int(n)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return jnp.asarray(np.stack([m.ravel() for m in mesh], axis=-1))


def midpoint_grid(domain, counts) -> jnp.ndarray:
    """Cell-centred tensor grid: n points per dimension at (i + 1/2) / n."""
    axes = []
    for (lo, hi), n in zip(domain, counts):
        n = int(n)
        axes.append(lo + (np.arange(n) + 0.5) * (hi - lo) / n)
    mesh = np.meshgrid(*axes, indexing="ij")
    return jnp.asarray(np.stack([m.ravel() for m in mesh], axis=-1))


# ----------------------------------------------------------------------------
# target functions
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetFunction:
    """A scalar target on [a, b].  Piecewise branches are half-open [l, r)
    except the last, which also contains b."""

    name: str
    domain: tuple[float, float]
    branches: tuple[Callable, ...]
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        edges = (self.domain[0],) + self.breakpoints + (self.domain[1],)
        out = np.full(x.shape, np.nan)
        for i, f in enumerate(self.branches):
            lo, hi = edges[i], edges[i + 1]
            last = i == len(self.branches) - 1
            mask = (x >= lo) & ((x <= hi) if last else (x < hi))
            if mask.any():
                out[mask] = f(x[mask])
        return out


def _piecewise_1(x):
    return np.sin(20 * np.pi * x) + x**2


def _piecewise_2(x):
    return 0.5 * x * np.exp(-x) + np.abs(np.sin(5 * np.pi * x))


def _piecewise_3(x):
    return np.log(x - 1) / np.log(2) - np.cos(2 * np.pi * x)


FUNCTIONS: dict[str, TargetFunction] = {
    f.name: f
    for f in [
        TargetFunction("sin-low", (-1.0, 1.0), (lambda x: np.sin(4 * np.pi * x),)),
        TargetFunction("sin-high", (-1.0, 1.0), (lambda x: np.sin(400 * np.pi * x),)),
        TargetFunction("bl", (0.0, 1.0), (lambda x: np.exp(-100 * x),)),
        TargetFunction("sqrt", (0.0, 1.0), (np.sqrt,)),
        TargetFunction(
            "double-exponential",
            (0.0, 1.0),
            (lambda x: x * (1 - x) * np.exp(-x) / (0.25 + (x - 0.5) ** 2),),
        ),
        TargetFunction("multi-sqrt", (0.0, 1.0), (lambda x: np.sqrt(x) * (1 - x) ** 0.75,)),
        TargetFunction("piece-wise", (0.0, 2.0), (_piecewise_1, _piecewise_2, _piecewise_3), (0.5, 1.5)),
        TargetFunction(
            "spectral-bias",
            (-1.0, 1.0),
            (lambda x: sum(np.sin(k * x) for k in range(1, 5)) + 5, lambda x: np.cos(10 * x)),
            (0.0,),
        ),
    ]
}


def get_function(name: str) -> TargetFunction:
    try:
        return FUNCTIONS[name]
    except KeyError:
        raise KeyError(f"unknown function {name!r}; registered: {sorted(FUNCTIONS)}") from None


# ----------------------------------------------------------------------------
# PDE problems
# ----------------------------------------------------------------------------


@dataclass
class ConstraintSet:
    """Points plus what must hold there.

    kinds: ``initial`` / ``dirichlet`` (u[components] = values),
    ``robin`` (alpha u + beta d u / d x_dim = values), ``periodic``
    (value and d/d x_dim of u agree between ``points`` and ``partner``).
    """

    kind: str
    points: jnp.ndarray
    values: jnp.ndarray | None = None
    components: tuple[int, ...] = (0,)
    alpha: float = 1.0
    beta: float = 0.0
    dim: int = 0
    partner: jnp.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("initial", "dirichlet", "robin", "periodic"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "periodic" and (self.partner is None or self.partner.shape != self.points.shape):
            raise ValueError("periodic constraints need a partner array of the same shape")

    @property
    def needs_jet(self) -> bool:
        return self.kind in ("robin", "periodic")


@dataclass
class Problem:
    """A PDE benchmark on a box domain.

    ``residual_fn(x, U)`` receives plain points x (B, n) and the output jet U
    (value (B, out), d1/d2 (n, B, out)) and returns residuals of shape (B, r).
    """

    name: str
    dims: tuple[str, ...]
    domain: tuple[tuple[float, float], ...]
    out_dim: int
    params: dict
    exact_fn: Callable
    residual_fn: Callable
    constraint_fn: Callable[["Problem"], list[ConstraintSet]]
    train_counts: tuple[int, ...]
    batch_size: int
    singular: Callable | None = None
    component_names: tuple[str, ...] = ("u",)
    evaluate_components: tuple[int, ...] = (0,)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def in_dim(self) -> int:
        return len(self.dims)

    def exact(self, x):
        """Exact solution at points x (B, n) -> (B, out_dim).  Accepts jets."""
        return self.exact_fn(x, self.params)

    def residual(self, x, U):
        return self.residual_fn(x, U, self.params)

    def constraints(self) -> list[ConstraintSet]:
        if "constraints" not in self._cache:
            self._cache["constraints"] = self.constraint_fn(self)
        return self._cache["constraints"]

    def residual_points(self, counts=None) -> jnp.ndarray:
        """Training grid with every point on the box boundary removed."""
        counts = tuple(counts or self.train_counts)
        g = np.asarray(make_grid(self.domain, counts))
        keep = np.ones(len(g), dtype=bool)
        for k, (lo, hi) in enumerate(self.domain):
            keep &= (g[:, k] > lo) & (g[:, k] < hi)
        g = g[keep]
        if self.singular is not None:
            g = g[~np.asarray(self.singular(g))]
        return jnp.asarray(g)

    def eval_points(self, counts=None) -> jnp.ndarray:
        return midpoint_grid(self.domain, tuple(counts or self.train_counts))

    def check_points(self, x):
        """Raise DomainError if any point lies on a singular locus."""
        if self.singular is not None:
            v = np.asarray(ad.value_of(x))
            bad = np.asarray(self.singular(v))
            if bad.any():
                raise DomainError(self.name, f"residual undefined at point {v[bad][0].tolist()}")


def _col(x, k):
    return x[:, k]


def _d1(U, dim, comp=0):
    return U.d1[dim][:, comp]


def _d2(U, dim, comp=0):
    return U.d2[dim][:, comp]


def _u(U, comp=0):
    return U.value[:, comp]


def _stack_cols(*cols):
    return ad.stack(list(cols), axis=-1)


def _boundary_faces(domain, counts, spatial):
    """Points on the faces x_k = lo/hi for each k in ``spatial`` (duplicates removed)."""
    g = np.asarray(make_grid(domain, counts))
    on = np.zeros(len(g), dtype=bool)
    for k in spatial:
        lo, hi = domain[k]
        on |= (g[:, k] == lo) | (g[:, k] == hi)
    return g[on]


def _exact_values(problem, pts, components):
    v = np.asarray(problem.exact(jnp.asarray(pts)))
    return jnp.asarray(v[:, list(components)])


# --- perturbed --------------------------------------------------------------


def _perturbed_exact(x, p):
    eps = p["eps"]
    X = _col(x, 0)
    tail = math.exp(-1.0 / eps)
    u = 1.0 + X + (ad.exp((X - 1.0) / eps) - tail) / (1.0 - tail)
    return _stack_cols(u)


def _perturbed_residual(x, U, p):
    return _stack_cols(p["eps"] * _d2(U, 0) - _d1(U, 0) + 1.0)


def _endpoint_dirichlet(problem):
    (lo, hi), = problem.domain
    pts = np.array([[lo], [hi]])
    return [ConstraintSet("dirichlet", jnp.asarray(pts), _exact_values(problem, pts, (0,)))]


# --- nonlinear --------------------------------------------------------------


def _nonlinear_exact(x, p):
    X = _col(x, 0)
    return _stack_cols(X**2.5 * (1.0 - X) ** 2 + X**3 + 1.0)


def _nonlinear_rhs(X):
    return (-41.0 * X**2 + 34.0 * X - 1.0) * ad.sqrt(X) / 4.0 - 2.0 * X + 1.0 / X**2


def _nonlinear_residual(x, U, p):
    X = _col(x, 0)
    u, ux, uxx = _u(U), _d1(U, 0), _d2(U, 0)
    return _stack_cols(-uxx + ux / X + u / X**2 - _nonlinear_rhs(X))


def _nonlinear_constraints(problem):
    return [
        ConstraintSet("robin", jnp.asarray([[0.0]]), jnp.asarray([[1.0]]), alpha=1.0, beta=-2.0),
        ConstraintSet("robin", jnp.asarray([[1.0]]), jnp.asarray([[9.0]]), alpha=3.0, beta=1.0),
    ]


# --- burgers ----------------------------------------------------------------


def _burgers_exact(x, p):
    a, nu = p["a"], p["nu"]
    X, T = _col(x, 0), _col(x, 1)
    return _stack_cols(a / 2.0 - a * ad.tanh(a * (X - a * T / 2.0) / (4.0 * nu)) / 2.0)


def _burgers_residual(x, U, p):
    u = _u(U)
    return _stack_cols(_d1(U, 1) + u * _d1(U, 0) - p["nu"] * _d2(U, 0))


def _ic_and_x_walls(problem, walls=("lo", "hi")):
    nx, nt = problem.train_counts
    (xl, xh), (t0, t1) = problem.domain
    ic = np.asarray(make_grid([(xl, xh), (t0, t0 + 1.0)], [nx, 2]))
    ic = ic[ic[:, 1] == t0]
    ts = np.linspace(t0, t1, nt)
    sets = [ConstraintSet("initial", jnp.asarray(ic), _exact_values(problem, ic, (0,)))]
    for w in walls:
        xb = xl if w == "lo" else xh
        pts = np.column_stack([np.full(nt, xb), ts])
        sets.append(ConstraintSet("dirichlet", jnp.asarray(pts), _exact_values(problem, pts, (0,))))
    return sets


# --- t-nonlinear ------------------------------------------------------------


def _tnonlinear_exact(x, p):
    X, T = _col(x, 0), _col(x, 1)
    return _stack_cols(ad.cos((T + 1.0) * (X + 2.0)))


def _tnonlinear_residual(x, U, p):
    X, T = _col(x, 0), _col(x, 1)
    return _stack_cols(_d1(U, 1) - (X + 2.0) / (T + 1.0) * _d1(U, 0))


def _tnonlinear_constraints(problem):
    nx, nt = problem.train_counts
    (xl, xh), (t0, t1) = problem.domain
    X = np.linspace(xl, xh, nx)
    ic = np.column_stack([X, np.full(nx, t0)])
    ts = np.linspace(t0, t1, nt)
    bc = np.column_stack([np.full(nt, xh), ts])
    return [
        ConstraintSet("initial", jnp.asarray(ic), jnp.asarray(np.cos(X + 2.0))[:, None]),
        ConstraintSet("dirichlet", jnp.asarray(bc), jnp.asarray(np.cos(3.0 * (ts + 1.0)))[:, None]),
    ]


# --- convection-diffusion ---------------------------------------------------


def _cd_exact(x, p):
    a, eps = p["a"], p["eps"]
    X, T = _col(x, 0), _col(x, 1)
    u = 0.0 * X
    for k in range(0, 6):
        u = u + ad.sin(k * math.pi * X - k * a * math.pi * T) * ad.exp(-eps * k * k * math.pi**2 * T)
    return _stack_cols(u)


def _cd_residual(x, U, p):
    return _stack_cols(_d1(U, 1) + p["a"] * _d1(U, 0) - p["eps"] * _d2(U, 0))


def _cd_constraints(problem):
    nx, nt = problem.train_counts
    (xl, xh), (t0, t1) = problem.domain
    X = np.linspace(xl, xh, nx)
    ic = np.column_stack([X, np.full(nx, t0)])
    u0 = sum(np.sin(k * np.pi * X) for k in range(0, 6))
    ts = np.linspace(t0, t1, nt)
    left = np.column_stack([np.full(nt, xl), ts])
    right = np.column_stack([np.full(nt, xh), ts])
    return [
        ConstraintSet("initial", jnp.asarray(ic), jnp.asarray(u0)[:, None]),
        ConstraintSet("periodic", jnp.asarray(left), partner=jnp.asarray(right), dim=0),
    ]


# --- boundary layers --------------------------------------------------------


def _bl1d_exact(x, p):
    return _stack_cols(ad.exp(-p["eps"] * _col(x, 0)))


def _bl1d_residual(x, U, p):
    return _stack_cols(_d2(U, 0) / p["eps"] + _d1(U, 0))


def _bl2d_exact(x, p):
    X, Y = _col(x, 0), _col(x, 1)
    return _stack_cols(ad.exp(-p["alpha1"] * X) + ad.exp(-p["alpha2"] * Y))


def _bl2d_residual(x, U, p):
    return _stack_cols(_d2(U, 0) / p["alpha1"] + _d1(U, 0) + _d2(U, 1) / p["alpha2"] + _d1(U, 1))


def _box_dirichlet(problem):
    pts = _boundary_faces(problem.domain, problem.train_counts, range(problem.in_dim))
    return [ConstraintSet("dirichlet", jnp.asarray(pts), _exact_values(problem, pts, (0,)))]


# --- Taylor-Green vortex ----------------------------------------------------


def _tg_exact(x, p):
    nu = p["nu"]
    X, Y, T = _col(x, 0), _col(x, 1), _col(x, 2)
    e2 = ad.exp(-2.0 * nu * T)
    e4 = ad.exp(-4.0 * nu * T)
    u = -ad.cos(X) * ad.sin(Y) * e2
    v = ad.sin(X) * ad.cos(Y) * e2
    pr = -(ad.cos(2.0 * X) + ad.cos(2.0 * Y)) * e4 / 4.0
    return _stack_cols(u, v, pr)


def _tg_residual(x, U, p):
    nu = p["nu"]
    u, v = _u(U, 0), _u(U, 1)
    ux, uy, ut = _d1(U, 0, 0), _d1(U, 1, 0), _d1(U, 2, 0)
    vx, vy, vt = _d1(U, 0, 1), _d1(U, 1, 1), _d1(U, 2, 1)
    px, py = _d1(U, 0, 2), _d1(U, 1, 2)
    lap_u = _d2(U, 0, 0) + _d2(U, 1, 0)
    lap_v = _d2(U, 0, 1) + _d2(U, 1, 1)
    return _stack_cols(
        ut + u * ux + v * uy + px - nu * lap_u,
        vt + u * vx + v * vy + py - nu * lap_v,
        ux + vy,
    )


def _tg_constraints(problem):
    nx, ny, nt = problem.train_counts
    (xl, xh), (yl, yh), (t0, t1) = problem.domain
    ic = np.asarray(make_grid([(xl, xh), (yl, yh)], [nx, ny]))
    ic = np.column_stack([ic, np.full(len(ic), t0)])
    bc = _boundary_faces(problem.domain, problem.train_counts, (0, 1))
    return [
        ConstraintSet("initial", jnp.asarray(ic), _exact_values(problem, ic, (0, 1)), components=(0, 1)),
        ConstraintSet("dirichlet", jnp.asarray(bc), _exact_values(problem, bc, (0, 1)), components=(0, 1)),
    ]


# ----------------------------------------------------------------------------
# registry
# ----------------------------------------------------------------------------


def _make(name: str, **overrides) -> Problem:
    if name == "perturbed":
        prm = {"eps": 0.01}
        base = dict(dims=("x",), domain=((-1.0, 1.0),), out_dim=1, exact_fn=_perturbed_exact,
                    residual_fn=_perturbed_residual, constraint_fn=_endpoint_dirichlet,
                    train_counts=(1000,), batch_size=500)
    elif name == "nonlinear":
        prm = {}
        base = dict(dims=("x",), domain=((0.0, 1.0),), out_dim=1, exact_fn=_nonlinear_exact,
                    residual_fn=_nonlinear_residual, constraint_fn=_nonlinear_constraints,
                    train_counts=(1000,), batch_size=500, singular=lambda g: np.asarray(g)[:, 0] == 0.0)
    elif name == "burgers":
        prm = {"a": 0.5, "nu": 0.01}
        base = dict(dims=("x", "t"), domain=((-1.0, 1.0), (0.0, 0.1)), out_dim=1, exact_fn=_burgers_exact,
                    residual_fn=_burgers_residual, constraint_fn=_ic_and_x_walls,
                    train_counts=(1000, 11), batch_size=5000)
    elif name == "t-nonlinear":
        prm = {}
        base = dict(dims=("x", "t"), domain=((-1.0, 1.0), (0.0, 0.1)), out_dim=1, exact_fn=_tnonlinear_exact,
                    residual_fn=_tnonlinear_residual, constraint_fn=_tnonlinear_constraints,
                    train_counts=(1000, 11), batch_size=5000)
    elif name == "convection-diffusion":
        prm = {"eps": 0.01, "a": 0.1}
        base = dict(dims=("x", "t"), domain=((-1.0, 1.0), (0.0, 0.1)), out_dim=1, exact_fn=_cd_exact,
                    residual_fn=_cd_residual, constraint_fn=_cd_constraints,
                    train_counts=(1000, 11), batch_size=5000)
    elif name == "bl-1d":
        prm = {"eps": 1.0}
        base = dict(dims=("x",), domain=((0.0, 1.0),), out_dim=1, exact_fn=_bl1d_exact,
                    residual_fn=_bl1d_residual, constraint_fn=_endpoint_dirichlet,
                    train_counts=(1000,), batch_size=500)
    elif name == "bl-2d":
        prm = {"alpha1": 100.0, "alpha2": 100.0}
        base = dict(dims=("x", "y"), domain=((0.0, 1.0), (0.0, 1.0)), out_dim=1, exact_fn=_bl2d_exact,
                    residual_fn=_bl2d_residual, constraint_fn=_box_dirichlet,
                    train_counts=(100, 100), batch_size=5000)
    elif name == "ns-taylor-green":
        prm = {"nu": 1.0 / 400.0, "T": 1.0}
        base = dict(dims=("x", "y", "t"), domain=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)), out_dim=3,
                    exact_fn=_tg_exact, residual_fn=_tg_residual, constraint_fn=_tg_constraints,
                    train_counts=(100, 100, 11), batch_size=50000,
                    component_names=("u", "v", "p"), evaluate_components=(0, 1))
    else:
        raise KeyError(f"unknown problem {name!r}; registered: {list(PROBLEM_NAMES)}")
    unknown = set(overrides) - set(prm)
    if unknown:
        raise ValueError(f"problem {name!r} has no parameters {sorted(unknown)}; available: {sorted(prm)}")
    prm.update({k: float(v) for k, v in overrides.items()})
    if name == "ns-taylor-green":
        base["domain"] = ((0.0, 1.0), (0.0, 1.0), (0.0, prm["T"]))
    for k in ("eps", "nu", "alpha1", "alpha2", "T"):
        if k in prm and not prm[k] > 0:
            raise ValueError(f"{name}: parameter {k} must be positive")
    return Problem(name=name, params=prm, **base)


PROBLEM_NAMES = (
    "perturbed",
    "nonlinear",
    "burgers",
    "t-nonlinear",
    "convection-diffusion",
    "bl-1d",
    "bl-2d",
    "ns-taylor-green",
)


def get_problem(name: str, **params) -> Problem:
    """Fresh Problem instance; ``params`` override the defaults (e.g. eps=10 for bl-1d)."""
    return _make(name, **params)


def eval_exact_stable(problem: Problem, point):
    """Exact solution at ``point`` (n,) or (B, n), free of overflow."""
    x = jnp.asarray(point, dtype=jnp.float64)
    single = x.ndim == 1
    out = np.asarray(problem.exact(x[None, :] if single else x))
    if single:
        out = out[0]
        return float(out[0]) if out.shape == (1,) else out
    return out


def exact_jet(problem: Problem, x) -> Jet:
    """Exact solution carried through the jet pipeline at points x (B, n)."""
    return ad.jet_eval(problem.exact, x)
