"""Adam with exponential learning-rate decay, metrics and the supervised fitting loop."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from . import autodiff as ad
from . import networks as nw
from .params import ParamStore

CSV_COLUMNS = ("iteration", "loss", "rmse_train", "rmse_fine", "lr", "seed")


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser and sampling settings.

    ``batch_size`` and ``n_train`` of ``None`` mean "use the mode default":
    3000 of 5000 grid points for approximation, the problem's own grid and
    batch for PINNs.  ``normalize`` maps the problem domain affinely onto
    [-1, 1] before the network sees it.
    """

    iterations: int = 20000
    batch_size: int | None = None
    lr0: float = 1e-3
    decay_rate: float = 0.9
    decay_every: int = 10000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1000
    seeds: tuple[int, ...] = (1, 2, 3)
    n_train: int | None = None
    n_fine: int = 10000
    normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.decay_rate < 1:
            raise ValueError("decay_rate must lie in (0, 1)")
        if self.decay_every < 1:
            raise ValueError("decay_every must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be unsigned")
        if self.n_train is not None and self.n_train < 2:
            raise ValueError("n_train must be at least 2")
        if self.n_fine < 2:
            raise ValueError("n_fine must be at least 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training fields: {sorted(unknown)}")
        return cls(**d)


class AdamState(NamedTuple):
    m: ParamStore
    v: ParamStore
    t: object


def adam_init(params: ParamStore) -> AdamState:
    zeros = params.map(jnp.zeros_like)
    return AdamState(zeros, zeros, jnp.asarray(0, dtype=jnp.int64))


def lr_at(config: TrainConfig, step):
    """lr0 * decay_rate ** (step / decay_every), continuous in ``step``."""
    return config.lr0 * config.decay_rate ** (step / config.decay_every)


def adam_step(state: AdamState, params: ParamStore, grads: ParamStore, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(state, params)``."""
    if set(grads) != set(params):
        raise ValueError("gradient and parameter stores have different arrays")
    for name in params:
        if np.shape(grads[name]) != np.shape(params[name]):
            raise ValueError(f"gradient shape mismatch for {name}")
        g = grads[name]
        if ad.is_concrete(g) and not np.all(np.isfinite(np.asarray(g))):
            raise ad.NonFiniteError(f"non-finite gradient in array {name!r}")
    t = state.t + 1
    m = jax.tree_util.tree_map(lambda m, g: beta1 * m + (1.0 - beta1) * g, state.m, grads)
    v = jax.tree_util.tree_map(lambda v, g: beta2 * v + (1.0 - beta2) * g * g, state.v, grads)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new = jax.tree_util.tree_map(
        lambda p, m, v: p - lr * (m / c1) / (jnp.sqrt(v / c2) + eps), params, m, v
    )
    return AdamState(m, v, t), new


def sample_batch(n: int, batch: int, rng: np.random.Generator) -> np.ndarray:
    """``batch`` distinct indices drawn uniformly from range(n)."""
    if batch > n:
        raise ValueError(f"batch size {batch} exceeds dataset size {n}")
    if batch < 1:
        raise ValueError("batch size must be positive")
    return rng.choice(n, size=batch, replace=False)


def rmse(y, yhat) -> float:
    y, yhat = np.asarray(y, dtype=np.float64), np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise ValueError("rmse needs at least one element")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def relative_l2(y, yhat) -> float:
    y, yhat = np.asarray(y, dtype=np.float64), np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if not np.any(y):
        raise ValueError("relative_l2 is undefined for a zero reference")
    # scale first: the squares of tiny or huge entries leave the normal range
    d = (y - yhat).ravel()
    sy, sd = np.max(np.abs(y)), np.max(np.abs(d))
    if sd == 0.0:
        return 0.0
    return float((sd / sy) * (np.linalg.norm(d / sd) / np.linalg.norm(y.ravel() / sy)))


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    records: list[dict]
    final: dict
    diverged: bool
    seconds: float
    params: ParamStore | None = field(default=None, repr=False)


@dataclass
class RunReport:
    """Seeded experiment output: per-seed histories, final metrics and their summary."""

    config: dict
    metric_names: list[str]
    seeds: list[SeedResult]
    wall_clock: float = 0.0

    @property
    def summary(self) -> dict:
        out = {}
        for name in self.metric_names:
            vals = np.array([s.final[name] for s in self.seeds], dtype=np.float64)
            out[name] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        return out

    @property
    def diverged(self) -> bool:
        return any(s.diverged for s in self.seeds)

    def to_dict(self) -> dict:
        iters = sum(s.records[-1]["iteration"] for s in self.seeds if s.records)
        return {
            "config": self.config,
            "metrics": self.metric_names,
            "seeds": [
                {
                    "seed": s.seed,
                    "final": s.final,
                    "diverged": s.diverged,
                    "seconds": s.seconds,
                    "records": s.records,
                }
                for s in self.seeds
            ],
            "summary": self.summary,
            "diverged": self.diverged,
            "wall_clock_seconds": self.wall_clock,
            "iterations_per_second": iters / self.wall_clock if self.wall_clock > 0 else None,
        }

    def csv_rows(self) -> list[dict]:
        rows = []
        for s in self.seeds:
            for r in s.records:
                rows.append({**{k: r[k] for k in CSV_COLUMNS if k != "seed"}, "seed": s.seed})
        return rows

    def write(self, outdir) -> Path:
        """Write ``report.json`` and ``metrics.csv`` into ``outdir``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        extra = [k for k in self.metric_names if k not in CSV_COLUMNS]
        with open(outdir / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(CSV_COLUMNS) + extra)
            for s in self.seeds:
                for r in s.records:
                    w.writerow([_fmt(r[k]) for k in CSV_COLUMNS[:-1]] + [s.seed] + [_fmt(r[k]) for k in extra])
        return outdir


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


# ----------------------------------------------------------------------------
# generic optimisation loop
# ----------------------------------------------------------------------------


def optimize(
    params: ParamStore,
    batch_loss: Callable,
    draw: Callable[[np.random.Generator], object],
    evaluate: Callable[[ParamStore], dict],
    config: TrainConfig,
    seed: int,
) -> SeedResult:
    """Run Adam on ``batch_loss(params, batch)`` with batches from ``draw(rng)``.

    ``evaluate`` returns the metric dict recorded every ``eval_every`` steps
    (its ``loss`` entry is checked for finiteness).  A non-finite batch loss
    stops the run; the last valid record is then the final result.
    """
    rng = np.random.default_rng(seed)
    b1, b2, eps = config.beta1, config.beta2, config.eps

    @jax.jit
    def step(params, state, batch):
        loss, grads = jax.value_and_grad(batch_loss)(params, batch)
        lr = lr_at(config, state.t.astype(jnp.float64))
        state, params = adam_step(state, params, grads, lr, b1, b2, eps)
        ok = jnp.isfinite(loss) & jnp.all(
            jnp.stack([jnp.all(jnp.isfinite(v)) for v in jax.tree_util.tree_leaves(params)])
        )
        return state, params, ok

    def record(it, p):
        r = {"iteration": it, **{k: float(v) for k, v in evaluate(p).items()}}
        r["lr"] = float(lr_at(config, float(it)))
        return r

    t0 = time.perf_counter()
    state = adam_init(params)
    records = [record(0, params)]
    diverged = not math.isfinite(records[0]["loss"])
    for it in range(1, config.iterations + 1):
        if diverged:
            break
        new_state, new_params, ok = step(params, state, draw(rng))
        if not bool(ok):
            diverged = True
            break
        state, params = new_state, new_params
        if it % config.eval_every == 0:
            r = record(it, params)
            if not math.isfinite(r["loss"]):
                diverged = True
                break
            records.append(r)
    valid = [r for r in records if all(math.isfinite(v) for v in r.values())]
    final = dict(valid[-1]) if valid else dict(records[-1])
    seconds = time.perf_counter() - t0
    return SeedResult(seed, records, final, diverged, seconds, params)


# ----------------------------------------------------------------------------
# supervised approximation
# ----------------------------------------------------------------------------


def domain_affine(domain, normalize: bool):
    """(shift, scale) with x_net = (x - shift) / scale."""
    lo = np.array([a for a, _ in domain], dtype=np.float64)
    hi = np.array([b for _, b in domain], dtype=np.float64)
    if not normalize:
        return np.zeros_like(lo), np.ones_like(lo)
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def make_model(spec: nw.NetworkSpec, shift, scale, backend: str = "auto"):
    """``model(params, x)`` evaluating the network on raw domain coordinates."""
    shift = np.asarray(shift, dtype=np.float64)
    inv = 1.0 / np.asarray(scale, dtype=np.float64)
    identity = bool(np.all(shift == 0.0) and np.all(inv == 1.0))

    def model(params, x):
        z = x if identity else (x - shift) * inv
        return nw.forward(spec, params, z, backend=backend)

    return model


def fit_approximation(target, spec: nw.NetworkSpec, config: TrainConfig, keep_params: bool = True) -> RunReport:
    """Fit ``target`` (a TargetFunction) by mini-batch MSE, once per seed."""
    from .problems import make_grid

    if spec.in_dim != 1 or spec.out_dim != 1:
        raise ValueError("approximation targets are scalar functions of one variable")
    lo, hi = target.domain
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError("target needs a finite domain")
    n_train = config.n_train or 5000
    batch = config.batch_size or 3000
    if batch > n_train:
        raise ValueError(f"batch size {batch} exceeds dataset size {n_train}")
    x_train = make_grid([(lo, hi)], [n_train])
    x_fine = make_grid([(lo, hi)], [config.n_fine])
    y_train = jnp.asarray(target(np.asarray(x_train[:, 0])))[:, None]
    y_fine = jnp.asarray(target(np.asarray(x_fine[:, 0])))[:, None]
    model = make_model(spec, *domain_affine([(lo, hi)], config.normalize))

    def batch_loss(params, idx):
        return jnp.mean((model(params, x_train[idx]) - y_train[idx]) ** 2)

    @jax.jit
    def evaluate(params):
        mse_train = jnp.mean((model(params, x_train) - y_train) ** 2)
        mse_fine = jnp.mean((model(params, x_fine) - y_fine) ** 2)
        return {"loss": mse_train, "rmse_train": jnp.sqrt(mse_train), "rmse_fine": jnp.sqrt(mse_fine)}

    def draw(rng):
        return jnp.asarray(sample_batch(n_train, batch, rng))

    echo = {"mode": "approx", "problem": target.name, "network": spec.to_dict(), "train": config.to_dict()}
    t0 = time.perf_counter()
    results = []
    for seed in config.seeds:
        s = spec.with_seed(seed)
        res = optimize(nw.init(s), batch_loss, draw, evaluate, config, seed)
        if not keep_params:
            res.params = None
        results.append(res)
    return RunReport(echo, ["rmse_train", "rmse_fine"], results, time.perf_counter() - t0)
