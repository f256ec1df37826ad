"""Command-line experiment runner: ``sinckan run|sweep|dump|selftest``."""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# Default sizes: depth x width for the MLPs,
# width x degree for KAN/ChebyKAN, width x degree x M for SincKAN.
NETWORK_DEFAULTS = {
    "approx": {
        "mlp": {"width": 100, "depth": 10},
        "modified_mlp": {"width": 100, "depth": 10},
        "kan": {"width": 8, "degree": 8},
        "chebykan": {"width": 40, "degree": 40},
        "sinckan": {"width": 8, "degree": 100, "hgrid": {"scheme": "inverse", "h0": 6.0, "M": 6}},
    },
    "pinn": {
        "mlp": {"width": 100, "depth": 10},
        "modified_mlp": {"width": 100, "depth": 10},
        "kan": {"width": 8, "degree": 8},
        "chebykan": {"width": 40, "degree": 40},
        "sinckan": {"width": 8, "degree": 8, "hgrid": {"scheme": "inverse", "h0": 2.0, "M": 1}},
    },
}
ITERATION_DEFAULTS = {"approx": 20000, "pinn": 50000}

CONVENTIONS = {
    "mlp_depth": "number of affine maps (10 x 100: nine hidden tanh layers of width 100)",
    "modified_mlp_depth": "depth - 2 gating layers after the U, V and H1 projections",
    "kan_depth": "number of edge-function layers",
    "sinc_nodes": "degree D uses node indices -floor((D-1)/2) .. D-1-floor((D-1)/2)",
    "std": "population standard deviation over seeds",
}

SWEEP_ALIASES = {
    "h0": "network.hgrid.h0",
    "M": "network.hgrid.M",
    "scheme": "network.hgrid.scheme",
    "degree": "network.degree",
    "width": "network.width",
    "N_points": "train.n_train",
    "eps": "problem_params.eps",
    "skip": "network.skip",
    "transform": "network.transform",
    "arch": "network.arch",
}


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# experiment configuration
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class DumpFlags:
    activations: bool = False
    predictions: bool = False
    edges: tuple[tuple[int, int, int], ...] = ((0, 0, 0),)
    points: int = 1000

    def to_dict(self) -> dict:
        return {
            "activations": self.activations,
            "predictions": self.predictions,
            "edges": [list(e) for e in self.edges],
            "points": self.points,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    problem: str
    network: object
    train: object
    problem_params: dict = field(default_factory=dict)
    output: str = "runs/experiment"
    dump: DumpFlags = DumpFlags()
    save_params: bool = True

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "problem": self.problem,
            "problem_params": dict(self.problem_params),
            "network": self.network.to_dict(),
            "train": self.train.to_dict(),
            "output": self.output,
            "dump": self.dump.to_dict(),
            "save_params": self.save_params,
        }


def _section(name, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise ConfigError(f"{name}: {msg}") from None


def parse_config(d: dict) -> ExperimentConfig:
    """Validate a config tree and fill mode/arch defaults."""
    from .networks import NetworkSpec
    from .problems import FUNCTIONS, PROBLEM_NAMES, get_problem
    from .training import TrainConfig

    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    allowed = {"mode", "problem", "problem_params", "network", "train", "output", "dump", "save_params"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level fields: {sorted(unknown)}")
    mode = d.get("mode")
    if mode not in ("approx", "pinn"):
        raise ConfigError(f"mode: must be 'approx' or 'pinn' (got {mode!r})")
    name = d.get("problem")
    pp = dict(d.get("problem_params") or {})
    if mode == "approx":
        if name not in FUNCTIONS:
            raise ConfigError(f"problem: unknown function {name!r}; registered: {sorted(FUNCTIONS)}")
        if pp:
            raise ConfigError("problem_params: approximation targets take no parameters")
        in_dim, out_dim = 1, 1
    else:
        if name not in PROBLEM_NAMES:
            raise ConfigError(f"problem: unknown problem {name!r}; registered: {list(PROBLEM_NAMES)}")
        prob = _section("problem_params", lambda: get_problem(name, **pp))
        in_dim, out_dim = prob.in_dim, prob.out_dim
        pp = dict(prob.params)

    net = dict(d.get("network") or {})
    arch = net.get("arch", "sinckan")
    if arch not in NETWORK_DEFAULTS[mode]:
        raise ConfigError(f"network.arch: must be one of {sorted(NETWORK_DEFAULTS[mode])} (got {arch!r})")
    merged = copy.deepcopy(NETWORK_DEFAULTS[mode][arch])
    if isinstance(net.get("hgrid"), dict) and isinstance(merged.get("hgrid"), dict):
        merged["hgrid"].update(net.pop("hgrid"))
    merged.update(net)
    merged["arch"] = arch
    for k, v in (("in_dim", in_dim), ("out_dim", out_dim)):
        if merged.setdefault(k, v) != v:
            raise ConfigError(f"network.{k}: {name} needs {v} (got {merged[k]})")
    spec = _section("network", lambda: NetworkSpec.from_dict(merged))

    tr = dict(d.get("train") or {})
    tr.setdefault("iterations", ITERATION_DEFAULTS[mode])
    train = _section("train", lambda: TrainConfig.from_dict(tr))

    dd = dict(d.get("dump") or {})
    def _dump():
        unknown = set(dd) - {"activations", "predictions", "edges", "points"}
        if unknown:
            raise ValueError(f"unknown fields {sorted(unknown)}")
        edges = tuple(tuple(int(v) for v in e) for e in dd.get("edges", [[0, 0, 0]]))
        if any(len(e) != 3 for e in edges):
            raise ValueError("edges entries are [layer, p, q]")
        pts = int(dd.get("points", 1000))
        if pts < 2:
            raise ValueError("points must be at least 2")
        return DumpFlags(bool(dd.get("activations", False)), bool(dd.get("predictions", False)), edges, pts)
    dump = _section("dump", _dump)
    return ExperimentConfig(
        mode=mode,
        problem=name,
        network=spec,
        train=train,
        problem_params=pp,
        output=str(d.get("output", f"runs/{name}-{arch}")),
        dump=dump,
        save_params=bool(d.get("save_params", True)),
    )


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(tree: dict, path: str, value):
    """Set ``tree[a][b][c] = value`` for ``path`` 'a.b.c', creating dicts as needed."""
    keys = path.split(".")
    node = tree
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"{path}: {k} is not a section")
        node = nxt
    node[keys[-1]] = value


def apply_overrides(tree: dict, overrides) -> dict:
    tree = copy.deepcopy(tree)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like dotted.path=value")
        path, text = item.split("=", 1)
        set_path(tree, path.strip(), _coerce(text))
    return tree


def load_tree(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# ----------------------------------------------------------------------------
# verbs
# ----------------------------------------------------------------------------


def _model_for(cfg: ExperimentConfig):
    from .problems import get_function, get_problem
    from .training import domain_affine, make_model

    if cfg.mode == "approx":
        target = get_function(cfg.problem)
        domain = [target.domain]
    else:
        target = get_problem(cfg.problem, **cfg.problem_params)
        domain = target.domain
    return target, make_model(cfg.network, *domain_affine(domain, cfg.train.normalize))


def _write_dumps(cfg: ExperimentConfig, outdir: Path, params, seed: int, kinds) -> list[Path]:
    from .networks import dump_activations
    from .pinn import prediction_table, write_table
    from .problems import make_grid

    written = []
    target, model = _model_for(cfg)
    if "activations" in kinds:
        import numpy as np

        header, blocks = ["layer", "p", "q", "x", "phi"], []
        for layer, p, q in cfg.dump.edges:
            if layer > 0:
                lo, hi = -3.0, 3.0
            elif cfg.train.normalize:
                lo, hi = -1.0, 1.0
            elif cfg.mode == "approx":
                lo, hi = target.domain
            else:
                lo, hi = target.domain[p]
            xs = np.linspace(lo, hi, cfg.dump.points)
            for x, phi in dump_activations(cfg.network, params, layer, (p, q), xs):
                blocks.append([layer, p, q, repr(float(x)), repr(float(phi))])
        path = outdir / f"activations_seed{seed}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(blocks)
        written.append(path)
    if "predictions" in kinds:
        import numpy as np

        if cfg.mode == "approx":
            x = make_grid([target.domain], [cfg.train.n_fine])
            exact = target(np.asarray(x[:, 0]))
            pred = np.asarray(model(params, x))[:, 0]
            header = ["x", "u_exact", "u_pred", "abs_error"]
            rows = np.column_stack([np.asarray(x[:, 0]), exact, pred, np.abs(exact - pred)])
        else:
            header, rows = prediction_table(target, model, params)
        written.append(write_table(outdir / f"predictions_seed{seed}.csv", header, rows))
    return written


def run_experiment(cfg: ExperimentConfig, outdir=None):
    """Train per ``cfg``; writes config.json, report.json, metrics.csv and snapshots."""
    from .pinn import fit_pinn
    from .problems import get_function, get_problem
    from .training import fit_approximation

    outdir = Path(outdir or cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    if cfg.mode == "approx":
        report = fit_approximation(get_function(cfg.problem), cfg.network, cfg.train)
    else:
        report = fit_pinn(get_problem(cfg.problem, **cfg.problem_params), cfg.network, cfg.train)
    report.config = cfg.to_dict()
    report.write(outdir)
    rd = json.loads((outdir / "report.json").read_text())
    rd["conventions"] = CONVENTIONS
    (outdir / "report.json").write_text(json.dumps(rd, indent=2) + "\n")
    kinds = [k for k in ("activations", "predictions") if getattr(cfg.dump, k)]
    for s in report.seeds:
        if s.params is None:
            continue
        if cfg.save_params:
            s.params.save(outdir / f"params_seed{s.seed}.bin")
        if kinds:
            _write_dumps(cfg, outdir, s.params, s.seed, kinds)
    return report


def _expand_sweep(spec: dict):
    axes = spec.get("axes") or {}
    rows = spec.get("rows")
    if rows is not None:
        combos = []
        for r in rows:
            if not isinstance(r, dict):
                raise ConfigError("sweep rows must be objects mapping axis -> value")
            combos.append(dict(r))
        names = sorted({k for r in combos for k in r}, key=lambda k: list(axes).index(k) if k in axes else 99)
    else:
        if not axes:
            raise ConfigError("sweep needs 'axes' or 'rows'")
        names = list(axes)
        values = [list(axes[n]) for n in names]
        if spec.get("product", True):
            combos = [dict(zip(names, v)) for v in itertools.product(*values)]
        else:
            if len({len(v) for v in values}) != 1:
                raise ConfigError("zipped sweep axes must have equal lengths")
            combos = [dict(zip(names, v)) for v in zip(*values)]
    return names, combos


def sweep(spec: dict, outdir=None, overrides=None):
    """Run every combination of the sweep; returns (rows, summary_rows)."""
    import numpy as np

    base = apply_overrides(spec.get("base") or {}, overrides)
    cap = int(spec.get("cap", 64))
    names, combos = _expand_sweep(spec)
    if len(combos) > cap:
        raise ConfigError(f"sweep has {len(combos)} combinations, above the cap of {cap}")
    configs = []
    for combo in combos:
        tree = copy.deepcopy(base)
        for axis, value in combo.items():
            set_path(tree, SWEEP_ALIASES.get(axis, axis), value)
        configs.append(parse_config(tree))
    outdir = Path(outdir or spec.get("output") or base.get("output") or "runs/sweep")
    outdir.mkdir(parents=True, exist_ok=True)
    seed_rows, summary_rows, metric_names = [], [], None
    for i, (combo, cfg) in enumerate(zip(combos, configs)):
        rep = run_experiment(replace(cfg, save_params=cfg.save_params), outdir / f"combo{i:03d}")
        metric_names = metric_names or rep.metric_names
        for s in rep.seeds:
            seed_rows.append({"combo": i, "row": "seed", **combo, "seed": s.seed, "diverged": s.diverged,
                              **{m: s.final[m] for m in metric_names}})
        summ = {"combo": i, "row": "summary", **combo, "seed": "", "diverged": rep.diverged}
        for m in metric_names:
            vals = np.array([s.final[m] for s in rep.seeds])
            summ[m] = float(np.mean(vals))
            summ[f"{m}_std"] = float(np.std(vals))
        summary_rows.append(summ)
    cols = ["combo", "row"] + names + ["seed", "diverged"]
    for m in metric_names or []:
        cols += [m, f"{m}_std"]
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, restval="")
        w.writeheader()
        for i in range(len(combos)):
            for r in seed_rows:
                if r["combo"] == i:
                    w.writerow({k: _cell(v) for k, v in r.items()})
            w.writerow({k: _cell(v) for k, v in summary_rows[i].items()})
    return seed_rows, summary_rows


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def dump(run_dir, kind: str, seed=None, overrides=None) -> list[Path]:
    """Write activations or predictions for a finished run from its snapshot."""
    from .params import ParamStore

    run_dir = Path(run_dir)
    cfg = parse_config(apply_overrides(load_tree(run_dir / "config.json"), overrides))
    seed = cfg.train.seeds[0] if seed is None else int(seed)
    snap = run_dir / f"params_seed{seed}.bin"
    if not snap.exists():
        raise FileNotFoundError(f"no parameter snapshot {snap}; run with save_params=true first")
    if kind not in ("activations", "predictions"):
        raise ConfigError(f"dump kind must be 'activations' or 'predictions' (got {kind!r})")
    params = ParamStore.load(snap)
    return _write_dumps(cfg, run_dir, params, seed, [kind])


def selftest(verbose: bool = True) -> bool:
    """Registry residual oracle plus gradient checks; returns overall success."""
    import jax.numpy as jnp
    import numpy as np

    from . import autodiff as ad
    from . import networks as nw
    from .bases import make_hgrid
    from .pinn import constraint_errors, pinn_loss, residual
    from .problems import PROBLEM_NAMES, get_problem

    ok = True

    def report(name, value, tol):
        nonlocal ok
        passed = bool(value <= tol)
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3e} (tol {tol:g})")

    rng = np.random.default_rng(0)
    for name in PROBLEM_NAMES:
        P = get_problem(name)
        lo = np.array([a for a, _ in P.domain])
        hi = np.array([b for _, b in P.domain])
        x = jnp.asarray(lo + (hi - lo) * rng.uniform(0.001, 0.999, size=(1000, P.in_dim)))
        r = residual(P, P.exact, None, x)
        report(f"residual[{name}]", float(jnp.max(jnp.abs(r))), 1e-8)
        worst = max(float(jnp.max(constraint_errors(lambda p, z: P.exact(z), None, c))) for c in P.constraints())
        report(f"constraints[{name}]", np.sqrt(worst), 1e-10)
    xs = jnp.asarray(rng.uniform(-1, 1, size=(5, 1)))
    ys = jnp.sin(3 * xs)
    small = {
        "mlp": dict(width=6, depth=3),
        "modified_mlp": dict(width=6, depth=4),
        "kan": dict(width=3, degree=6),
        "chebykan": dict(width=3, degree=5),
        "sinckan": dict(width=3, degree=9, hgrid=make_hgrid("inverse", 2.0, 2)),
    }
    for arch, kw in small.items():
        spec = nw.NetworkSpec(arch, seed=1, **kw)
        params = nw.init(spec)
        err = ad.check_gradient(lambda p: jnp.mean((nw.forward(spec, p, xs) - ys) ** 2), params)
        report(f"gradient[{arch}]", err, 1e-5)
    for name in ("perturbed", "burgers", "bl-2d"):
        P = get_problem(name)
        spec = nw.NetworkSpec("sinckan", in_dim=P.in_dim, out_dim=P.out_dim, width=4, degree=8,
                              hgrid=make_hgrid("inverse", 2.0, 1), seed=1)
        params = nw.init(spec)
        xr = P.residual_points()[:: max(1, P.residual_points().shape[0] // 50)]
        cons = [replace(c, points=c.points[:20], values=None if c.values is None else c.values[:20],
                        partner=None if c.partner is None else c.partner[:20]) for c in P.constraints()]
        err = ad.check_gradient(lambda p: pinn_loss(P, spec, p, xr, cons).total, params)
        report(f"pinn gradient[{name}]", err, 1e-4)
    return ok


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sinckan", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="train one experiment")
    r.add_argument("config", help="JSON experiment config")
    r.add_argument("--set", action="append", default=[], metavar="PATH=VALUE", help="override a dotted config path")
    r.add_argument("--out", help="output directory (default: the config's output field)")
    s = sub.add_parser("sweep", help="run a hyperparameter sweep")
    s.add_argument("config", help="JSON sweep spec with 'base' and 'axes' (or 'rows')")
    s.add_argument("--set", action="append", default=[], metavar="PATH=VALUE", help="override a base config path")
    s.add_argument("--out", help="output directory")
    d = sub.add_parser("dump", help="write activations or predictions from a run's snapshot")
    d.add_argument("run_dir")
    d.add_argument("--kind", required=True, choices=["activations", "predictions"])
    d.add_argument("--seed", type=int)
    d.add_argument("--set", action="append", default=[], metavar="PATH=VALUE", help="override e.g. dump.edges")
    sub.add_parser("selftest", help="problem-registry oracle and gradient checks")
    return ap


def main(argv=None) -> int:
    # the classic CPU runtime is markedly faster for these small graphs
    os.environ.setdefault("XLA_FLAGS", "--xla_cpu_use_thunk_runtime=false")
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            cfg = parse_config(apply_overrides(load_tree(args.config), args.set))
            report = run_experiment(cfg, args.out)
            out = Path(args.out or cfg.output)
            summ = ", ".join(f"{k}={v['mean']:.3e}+-{v['std']:.1e}" for k, v in report.summary.items())
            print(f"{cfg.problem} [{cfg.network.arch}] {summ}{' (diverged)' if report.diverged else ''} -> {out}")
        elif args.verb == "sweep":
            spec = load_tree(args.config)
            _, summary = sweep(spec, args.out, args.set)
            for row in summary:
                print(json.dumps({k: v for k, v in row.items() if k != "row"}))
        elif args.verb == "dump":
            for p in dump(args.run_dir, args.kind, args.seed, args.set):
                print(p)
        elif args.verb == "selftest":
            return EXIT_OK if selftest() else EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
