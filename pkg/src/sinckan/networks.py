"""The five architectures: SincKAN, spline KAN, ChebyKAN, MLP and modified MLP.

Every forward pass accepts either a plain ``(B, in_dim)`` array or a
:class:`~sinckan.autodiff.Jet` over such an array, so the same network
serves supervised fitting and PDE residuals.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import jax.numpy as jnp
import numpy as np

from . import autodiff as ad
from ._kernels import edge_sum_op
from .bases import (
    HGrid,
    SincNodeSet,
    SplineGrid,
    bspline_basis,
    chebyshev_features,
    log_transform,
    make_hgrid,
    sinc_basis,
)
from .params import ParamStore

ARCHS = ("mlp", "modified_mlp", "kan", "chebykan", "sinckan")
SKIPS = ("linear", "silu", "none")
TRANSFORMS = ("tanh", "log", "none")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and size.

    ``depth`` counts affine maps for the MLP (so 10 x 100 means ten affine
    maps of width 100) and layers for the KAN family.  The modified MLP uses
    depth - 2 gating layers between its three input projections and the
    output map.
    """

    arch: str
    in_dim: int = 1
    out_dim: int = 1
    width: int = 8
    depth: int = 2
    degree: int = 8
    hgrid: HGrid | None = None
    skip: str = "linear"
    transform: str = "tanh"
    log_bounds: tuple[float, float] = (-2.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        for name in ("in_dim", "out_dim", "width", "depth", "degree"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.arch == "modified_mlp" and self.depth < 2:
            raise ValueError("modified_mlp needs depth >= 2")
        if self.arch == "kan" and self.degree < 4:
            raise ValueError("kan needs degree (basis count) >= 4 for cubic splines")
        if self.arch == "sinckan":
            if self.hgrid is None:
                raise ValueError("sinckan requires an hgrid")
            if self.skip not in SKIPS:
                raise ValueError(f"skip must be one of {SKIPS}, got {self.skip!r}")
            if self.transform not in TRANSFORMS:
                raise ValueError(f"transform must be one of {TRANSFORMS}, got {self.transform!r}")
            a, b = self.log_bounds
            if not a < b:
                raise ValueError("log_bounds must satisfy a < b")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def layer_dims(self) -> list[int]:
        return [self.in_dim] + [self.width] * (self.depth - 1) + [self.out_dim]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hgrid"] = self.hgrid.to_dict() if self.hgrid is not None else None
        d["log_bounds"] = list(self.log_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown network fields: {sorted(unknown)}")
        hg = d.get("hgrid")
        if isinstance(hg, dict):
            d["hgrid"] = make_hgrid(hg["scheme"], float(hg["h0"]), int(hg["M"]))
        if "log_bounds" in d:
            d["log_bounds"] = tuple(float(v) for v in d["log_bounds"])
        return cls(**d)

    def with_seed(self, seed: int) -> "NetworkSpec":
        return replace(self, seed=int(seed))


@dataclass
class SincLayerParams:
    """One SincKAN layer: coefficients C[out, in, M, D] and the skip weights.

    ``W1`` (in x out) and ``w2`` (out) form the linear skip; ``wb`` and
    ``ws`` (out x in) are the per-edge weights of the SiLU skip variant.
    """

    C: object
    W1: object = None
    w2: object = None
    wb: object = None
    ws: object = None


# ----------------------------------------------------------------------------
# initialisation
# ----------------------------------------------------------------------------


def _xavier(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init(spec: NetworkSpec) -> ParamStore:
    """Default initialisation, deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    p: dict[str, np.ndarray] = {}
    dims = spec.layer_dims
    if spec.arch == "mlp":
        for l, (n, m) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"layer{l}.W"] = _xavier(rng, n, m, (n, m))
            p[f"layer{l}.b"] = np.zeros(m)
    elif spec.arch == "modified_mlp":
        n, w = spec.in_dim, spec.width
        for name in ("U", "V", "layer0"):
            p[f"{name}.W"] = _xavier(rng, n, w, (n, w))
            p[f"{name}.b"] = np.zeros(w)
        for i in range(1, spec.depth - 1):
            p[f"layer{i}.W"] = _xavier(rng, w, w, (w, w))
            p[f"layer{i}.b"] = np.zeros(w)
        p["out.W"] = _xavier(rng, w, spec.out_dim, (w, spec.out_dim))
        p["out.b"] = np.zeros(spec.out_dim)
    elif spec.arch == "kan":
        G = spec.degree
        for l, (n, m) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"layer{l}.c"] = rng.normal(0.0, 0.1 / np.sqrt(n * G), size=(m, n, G))
            p[f"layer{l}.wb"] = _xavier(rng, n, m, (m, n))
            p[f"layer{l}.ws"] = np.ones((m, n))
    elif spec.arch == "chebykan":
        K = spec.degree + 1
        for l, (n, m) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"layer{l}.c"] = rng.normal(0.0, 0.1 / np.sqrt(n * K), size=(m, n, K))
    else:
        M, D = spec.hgrid.M, spec.degree
        for l, (n, m) in enumerate(zip(dims[:-1], dims[1:])):
            p[f"layer{l}.C"] = rng.normal(0.0, 0.1 / np.sqrt(n * M * D), size=(m, n, M, D))
            if spec.skip == "linear":
                p[f"layer{l}.W1"] = _xavier(rng, n, m, (n, m))
                p[f"layer{l}.w2"] = np.zeros(m)
            elif spec.skip == "silu":
                p[f"layer{l}.wb"] = _xavier(rng, n, m, (m, n))
                p[f"layer{l}.ws"] = np.ones((m, n))
    return ParamStore({k: jnp.asarray(v, dtype=jnp.float64) for k, v in p.items()})


def param_count(spec: NetworkSpec) -> int:
    """Closed-form number of scalar parameters for ``spec``."""
    dims = spec.layer_dims
    pairs = list(zip(dims[:-1], dims[1:]))
    if spec.arch == "mlp":
        return sum(n * m + m for n, m in pairs)
    if spec.arch == "modified_mlp":
        n, w, o = spec.in_dim, spec.width, spec.out_dim
        return 3 * (n * w + w) + (spec.depth - 2) * (w * w + w) + w * o + o
    if spec.arch == "kan":
        return sum(n * m * (spec.degree + 2) for n, m in pairs)
    if spec.arch == "chebykan":
        return sum(n * m * (spec.degree + 1) for n, m in pairs)
    M, D = spec.hgrid.M, spec.degree
    skip = {"linear": lambda n, m: n * m + m, "silu": lambda n, m: 2 * n * m, "none": lambda n, m: 0}
    return sum(m * n * M * D + skip[spec.skip](n, m) for n, m in pairs)


# ----------------------------------------------------------------------------
# SincKAN
# ----------------------------------------------------------------------------


def _check_finite(x):
    v = ad.value_of(x)
    if ad.is_concrete(v) and not np.all(np.isfinite(np.asarray(v))):
        raise ad.NonFiniteError("non-finite layer input")


def _transform(x, transform: str, log_bounds):
    if transform == "tanh":
        return ad.tanh(x)
    if transform == "log":
        return log_transform(x, *log_bounds)
    return x


def sinc_edge_sum(xi, C, hvalues, nodes, backend: str = "auto"):
    """sum_{p,m,i} C[q,p,m,i] S(i, h_m)(xi[b,p]) for a batch ``xi`` of shape (B, P)."""
    use_kernel = backend == "kernel" or (backend == "auto" and not isinstance(xi, ad.Jet))
    if use_kernel:
        if isinstance(xi, ad.Jet):
            raise TypeError("the compiled kernel does not propagate jets")
        op = edge_sum_op(tuple(float(h) for h in hvalues), tuple(float(n) for n in nodes))
        return op(jnp.asarray(xi, dtype=jnp.float64), C)
    basis = sinc_basis(xi, hvalues, nodes)
    return ad.einsum("bpmd,qpmd->bq", basis, C)


def sinckan_layer(
    params: SincLayerParams,
    x,
    hgrid,
    *,
    skip: str = "linear",
    transform: str = "tanh",
    log_bounds=(-2.0, 2.0),
    backend: str = "auto",
):
    """Apply one SincKAN layer to ``x`` of shape (B, in); returns (B, out)."""
    _check_finite(x)
    C = params.C
    nodes = SincNodeSet(int(C.shape[-1])).indices
    hv = np.asarray(hgrid, dtype=np.float64)
    xi = _transform(x, transform, log_bounds)
    if skip == "silu":
        C = C * params.ws[:, :, None, None]
    out = sinc_edge_sum(xi, C, hv, nodes, backend)
    if skip == "linear":
        out = out + (x @ params.W1 + params.w2)
    elif skip == "silu":
        out = out + ad.einsum("bp,qp->bq", ad.silu(x), params.wb)
    return out


def _sinc_layer_params(params: ParamStore, l: int, skip: str) -> SincLayerParams:
    lp = SincLayerParams(C=params[f"layer{l}.C"])
    if skip == "linear":
        lp.W1, lp.w2 = params[f"layer{l}.W1"], params[f"layer{l}.w2"]
    elif skip == "silu":
        lp.wb, lp.ws = params[f"layer{l}.wb"], params[f"layer{l}.ws"]
    return lp


# ----------------------------------------------------------------------------
# forward passes
# ----------------------------------------------------------------------------


def _kan_layer(params, l, grid, x):
    wb, ws, c = params[f"layer{l}.wb"], params[f"layer{l}.ws"], params[f"layer{l}.c"]
    B = bspline_basis(grid, ad.clip(x, -1.0, 1.0))
    return ad.einsum("bp,qp->bq", ad.silu(x), wb) + ad.einsum("bpg,qpg->bq", B, c * ws[:, :, None])


def _cheby_layer(params, l, degree, x):
    T = chebyshev_features(degree, ad.tanh(x))
    return ad.einsum("bpk,qpk->bq", T, params[f"layer{l}.c"])


def _check_params(spec: NetworkSpec, params: ParamStore):
    expected = init_shapes(spec)
    if params.shapes != expected:
        missing = sorted(set(expected) - set(params.shapes))
        extra = sorted(set(params.shapes) - set(expected))
        bad = sorted(k for k in set(expected) & set(params.shapes) if expected[k] != params.shapes[k])
        raise ValueError(
            f"parameters do not match {spec.arch} spec (missing {missing}, unexpected {extra}, wrong shape {bad})"
        )


@lru_cache(maxsize=64)
def _shapes_for(spec: NetworkSpec) -> dict:
    return init(spec).shapes


def init_shapes(spec: NetworkSpec) -> dict[str, tuple[int, ...]]:
    """Array shapes that :func:`init` produces for ``spec``."""
    return _shapes_for(replace(spec, seed=0))


def forward(spec: NetworkSpec, params: ParamStore, x, *, backend: str = "auto"):
    """Network output for points ``x`` of shape (B, in_dim) or (in_dim,)."""
    _check_params(spec, params)
    single = ad.value_of(x).ndim == 1
    if single:
        x = x[None, :]
    if ad.value_of(x).shape[-1] != spec.in_dim:
        raise ValueError(f"expected inputs with {spec.in_dim} columns, got shape {ad.value_of(x).shape}")
    n = spec.depth
    if spec.arch == "mlp":
        h = x
        for l in range(n):
            h = h @ params[f"layer{l}.W"] + params[f"layer{l}.b"]
            if l < n - 1:
                h = ad.tanh(h)
        out = h
    elif spec.arch == "modified_mlp":
        U = ad.tanh(x @ params["U.W"] + params["U.b"])
        V = ad.tanh(x @ params["V.W"] + params["V.b"])
        h = ad.tanh(x @ params["layer0.W"] + params["layer0.b"])
        for i in range(1, n - 1):
            z = ad.tanh(h @ params[f"layer{i}.W"] + params[f"layer{i}.b"])
            h = (1.0 - z) * U + z * V
        out = h @ params["out.W"] + params["out.b"]
    elif spec.arch == "kan":
        grid = SplineGrid(spec.degree)
        h = x
        for l in range(n):
            h = _kan_layer(params, l, grid, h)
        out = h
    elif spec.arch == "chebykan":
        h = x
        for l in range(n):
            h = _cheby_layer(params, l, spec.degree, h)
        out = h
    else:
        h = x
        for l in range(n):
            lp = _sinc_layer_params(params, l, spec.skip)
            h = sinckan_layer(
                lp, h, spec.hgrid, skip=spec.skip, transform=spec.transform,
                log_bounds=spec.log_bounds, backend=backend,
            )
        out = h
    return out[0] if single else out


def dump_activations(spec: NetworkSpec, params: ParamStore, layer: int, edge, xs) -> np.ndarray:
    """Samples (x, phi_{q,p}(x)) of one learned edge function, skip term excluded.

    ``edge`` is (p, q): input index p, output index q.  Returns an (n, 2) array.
    """
    if spec.arch not in ("kan", "chebykan", "sinckan"):
        raise ValueError(f"{spec.arch} has no learnable edge functions")
    dims = spec.layer_dims
    if not 0 <= layer < spec.depth:
        raise IndexError(f"layer {layer} out of range 0..{spec.depth - 1}")
    p, q = edge
    if not (0 <= p < dims[layer] and 0 <= q < dims[layer + 1]):
        raise IndexError(f"edge {edge} out of range for layer {layer} ({dims[layer]} -> {dims[layer + 1]})")
    xs = np.asarray(xs, dtype=np.float64).ravel()
    col = jnp.asarray(xs)[:, None]
    if spec.arch == "sinckan":
        C = params[f"layer{layer}.C"][q, p][None, None]
        if spec.skip == "silu":
            C = C * params[f"layer{layer}.ws"][q, p]
        nodes = SincNodeSet(spec.degree).indices
        xi = _transform(col, spec.transform, spec.log_bounds)
        phi = sinc_edge_sum(xi, C, np.asarray(spec.hgrid), nodes, backend="jax")[:, 0]
    elif spec.arch == "kan":
        c = params[f"layer{layer}.c"][q, p] * params[f"layer{layer}.ws"][q, p]
        phi = bspline_basis(SplineGrid(spec.degree), jnp.clip(col[:, 0], -1.0, 1.0)) @ c
    else:
        phi = chebyshev_features(spec.degree, jnp.tanh(col[:, 0])) @ params[f"layer{layer}.c"][q, p]
    return np.column_stack([xs, np.asarray(phi)])
