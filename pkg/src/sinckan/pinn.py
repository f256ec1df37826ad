"""Physics-informed losses and the PINN training loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from . import autodiff as ad
from . import networks as nw
from .problems import ConstraintSet, Problem
from .training import RunReport, TrainConfig, domain_affine, make_model, optimize, sample_batch


@jax.tree_util.register_pytree_node_class
@dataclass
class PinnLossBreakdown:
    L_r: object
    L_ic: object
    L_bc: object

    @property
    def total(self):
        return self.L_r + self.L_ic + self.L_bc

    def tree_flatten(self):
        return (self.L_r, self.L_ic, self.L_bc), None

    @classmethod
    def tree_unflatten(cls, aux, children):
        return cls(*children)

    def as_dict(self) -> dict:
        return {"L_r": float(self.L_r), "L_ic": float(self.L_ic), "L_bc": float(self.L_bc), "loss": float(self.total)}


def _as_model(spec, normalize_domain=None):
    """Turn a NetworkSpec (or an oracle callable x -> u) into model(params, x)."""
    if isinstance(spec, nw.NetworkSpec):
        if normalize_domain is None:
            return make_model(spec, 0.0, 1.0)
        return make_model(spec, *domain_affine(normalize_domain, True))
    if callable(spec):
        return lambda params, x: spec(x)
    raise TypeError("spec must be a NetworkSpec or a callable oracle")


def output_jet(model, params, x) -> ad.Jet:
    """u and its first/pure second partials in every input dimension."""
    return ad.jet_eval(lambda z: model(params, z), x)


def residual(problem: Problem, spec, params, point, *, model=None):
    """PDE left-hand side of ``problem`` for the network at ``point`` (n,) or (B, n).

    Returns a scalar for a single point of a scalar PDE, otherwise an array
    of shape (B, r) (r > 1 for systems).
    """
    model = model or _as_model(spec)
    x = jnp.asarray(point, dtype=jnp.float64)
    single = x.ndim == 1
    x = x[None, :] if single else x
    if x.shape[-1] != problem.in_dim:
        raise ValueError(f"{problem.name} points have {problem.in_dim} coordinates")
    problem.check_points(x)
    r = problem.residual(x, output_jet(model, params, x))
    if single:
        r = r[0]
        return r[0] if r.shape == (1,) else r
    return r


def constraint_errors(model, params, cs: ConstraintSet):
    """Squared mismatch per constraint point, shape (K,)."""
    if cs.kind in ("initial", "dirichlet"):
        u = model(params, cs.points)[:, list(cs.components)]
        return jnp.sum((u - cs.values) ** 2, axis=1)
    if cs.kind == "robin":
        U = output_jet(model, params, cs.points)
        c = cs.components[0]
        val = cs.alpha * U.value[:, c] + cs.beta * U.d1[cs.dim][:, c]
        return (val - cs.values[:, 0]) ** 2
    left = output_jet(model, params, cs.points)
    right = output_jet(model, params, cs.partner)
    comps = list(cs.components)
    dv = left.value[:, comps] - right.value[:, comps]
    dd = left.d1[cs.dim][:, comps] - right.d1[cs.dim][:, comps]
    return jnp.sum(dv**2 + dd**2, axis=1)


def pinn_loss(problem: Problem, spec, params, residual_points, constraints=None, *, model=None) -> PinnLossBreakdown:
    """Unit-weighted mean-square residual, initial and boundary losses."""
    model = model or _as_model(spec)
    x = jnp.asarray(residual_points, dtype=jnp.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("the residual batch must be a non-empty (B, n) array")
    constraints = problem.constraints() if constraints is None else constraints
    r = residual(problem, spec, params, x, model=model)
    L_r = jnp.mean(jnp.sum(r**2, axis=1))
    ic = [constraint_errors(model, params, c) for c in constraints if c.kind == "initial"]
    bc = [constraint_errors(model, params, c) for c in constraints if c.kind != "initial"]
    zero = jnp.zeros(())
    L_ic = jnp.mean(jnp.concatenate(ic)) if ic else zero
    L_bc = jnp.mean(jnp.concatenate(bc)) if bc else zero
    return PinnLossBreakdown(L_r, L_ic, L_bc)


def _component_metrics(problem: Problem, pred, exact):
    out = {}
    for c in problem.evaluate_components:
        key = "rel_l2" if len(problem.evaluate_components) == 1 else f"rel_l2_{problem.component_names[c]}"
        out[key] = jnp.linalg.norm(pred[:, c] - exact[:, c]) / jnp.linalg.norm(exact[:, c])
    return out


def fit_pinn(problem: Problem, spec: nw.NetworkSpec, config: TrainConfig, keep_params: bool = True) -> RunReport:
    """Minimise pinn_loss once per seed; track relative L2 on an independent grid."""
    if spec.in_dim != problem.in_dim or spec.out_dim != problem.out_dim:
        raise ValueError(
            f"{problem.name} needs in_dim={problem.in_dim}, out_dim={problem.out_dim} "
            f"(got {spec.in_dim}, {spec.out_dim})"
        )
    if config.n_train is not None:
        raise ValueError("n_train applies to approximation runs; PINN grids come from the problem")
    x_r = problem.residual_points()
    batch = config.batch_size or problem.batch_size
    batch = min(batch, x_r.shape[0]) if config.batch_size is None else batch
    if batch > x_r.shape[0]:
        raise ValueError(f"batch size {batch} exceeds the {x_r.shape[0]} residual points")
    x_e = problem.eval_points()
    u_r = jnp.asarray(problem.exact(x_r))
    u_e = jnp.asarray(problem.exact(x_e))
    constraints = problem.constraints()
    model = make_model(spec, *domain_affine(problem.domain, config.normalize))
    comps = list(problem.evaluate_components)

    def batch_loss(params, idx):
        return pinn_loss(problem, spec, params, x_r[idx], constraints, model=model).total

    @jax.jit
    def evaluate(params):
        parts = pinn_loss(problem, spec, params, x_r, constraints, model=model)
        pr = model(params, x_r)
        pe = model(params, x_e)
        m = {
            "loss": parts.total,
            "L_r": parts.L_r,
            "L_ic": parts.L_ic,
            "L_bc": parts.L_bc,
            "rmse_train": jnp.sqrt(jnp.mean((pr[:, comps] - u_r[:, comps]) ** 2)),
            "rmse_fine": jnp.sqrt(jnp.mean((pe[:, comps] - u_e[:, comps]) ** 2)),
        }
        m.update(_component_metrics(problem, pe, u_e))
        return m

    def draw(rng):
        return jnp.asarray(sample_batch(x_r.shape[0], batch, rng))

    metric_names = list(_component_metrics(problem, u_e, u_e)) + ["rmse_train", "rmse_fine", "L_r", "L_ic", "L_bc"]
    echo = {
        "mode": "pinn",
        "problem": problem.name,
        "problem_params": dict(problem.params),
        "network": spec.to_dict(),
        "train": config.to_dict(),
        "residual_points": int(x_r.shape[0]),
        "eval_points": int(x_e.shape[0]),
        "batch_size": int(batch),
    }
    t0 = time.perf_counter()
    results = []
    for seed in config.seeds:
        res = optimize(nw.init(spec.with_seed(seed)), batch_loss, draw, evaluate, config, seed)
        if not keep_params:
            res.params = None
        results.append(res)
    return RunReport(echo, metric_names, results, time.perf_counter() - t0)


def prediction_table(problem: Problem, model, params, points=None):
    """Header and rows (coordinates..., exact, predicted, abs error) per evaluated component."""
    x = problem.eval_points() if points is None else jnp.asarray(points)
    exact = np.asarray(problem.exact(x))
    pred = np.asarray(model(params, x))
    header = list(problem.dims)
    cols = [np.asarray(x)]
    comps = problem.evaluate_components
    for c in comps:
        name = problem.component_names[c]
        suffix = "" if len(comps) == 1 else f"_{name}"
        header += [f"u_exact{suffix}", f"u_pred{suffix}", f"abs_error{suffix}"]
        cols.append(np.column_stack([exact[:, c], pred[:, c], np.abs(exact[:, c] - pred[:, c])]))
    return header, np.column_stack(cols)


def write_table(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    return path
