import csv
import json

import pytest
from hypothesis import given, strategies as st

from sinckan import cli


def base_tree(tmp_path, **kw):
    tree = {
        "mode": "approx",
        "problem": "sin-low",
        "network": {"arch": "sinckan", "width": 3, "degree": 9, "hgrid": {"scheme": "inverse", "h0": 3.0, "M": 2}},
        "train": {"iterations": 20, "eval_every": 10, "seeds": [1, 2], "n_train": 100, "batch_size": 40, "n_fine": 200},
        "output": str(tmp_path / "run"),
    }
    tree.update(kw)
    return tree


def write(tmp_path, tree, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(tree))
    return str(p)


def test_config_echo_round_trip(tmp_path):
    cfg = cli.parse_config(base_tree(tmp_path))
    assert cli.parse_config(cfg.to_dict()) == cfg
    assert cli.parse_config(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("mode,problem", [("approx", "piece-wise"), ("pinn", "bl-2d"), ("pinn", "ns-taylor-green")])
@pytest.mark.parametrize("arch", ["mlp", "modified_mlp", "kan", "chebykan", "sinckan"])
def test_defaults_fill_and_round_trip(mode, problem, arch):
    cfg = cli.parse_config({"mode": mode, "problem": problem, "network": {"arch": arch}})
    assert cfg.train.iterations == cli.ITERATION_DEFAULTS[mode]
    assert cli.parse_config(cfg.to_dict()) == cfg
    if mode == "pinn" and arch == "sinckan":
        assert cfg.network.hgrid.to_dict() == {"scheme": "inverse", "h0": 2.0, "M": 1}


@pytest.mark.parametrize(
    "tree,field",
    [
        ({"mode": "fit", "problem": "sin-low"}, "mode"),
        ({"mode": "approx", "problem": "burgers"}, "problem"),
        ({"mode": "pinn", "problem": "sin-low"}, "problem"),
        ({"mode": "pinn", "problem": "burgers", "problem_params": {"nu": -1}}, "problem_params"),
        ({"mode": "approx", "problem": "sin-low", "network": {"arch": "resnet"}}, "network.arch"),
        ({"mode": "approx", "problem": "sin-low", "network": {"width": 0}}, "network"),
        ({"mode": "approx", "problem": "sin-low", "network": {"in_dim": 2}}, "network.in_dim"),
        ({"mode": "approx", "problem": "sin-low", "train": {"lr0": -1}}, "train"),
        ({"mode": "approx", "problem": "sin-low", "train": {"epochs": 3}}, "train"),
        ({"mode": "approx", "problem": "sin-low", "dump": {"edges": [[0, 1]]}}, "dump"),
        ({"mode": "approx", "problem": "sin-low", "colour": "red"}, "top-level"),
    ],
)
def test_config_errors_name_the_field(tree, field):
    with pytest.raises(cli.ConfigError, match=field):
        cli.parse_config(tree)


@given(path=st.lists(st.sampled_from("abc"), min_size=1, max_size=4), value=st.integers() | st.text(max_size=5))
def test_overrides_set_dotted_paths(path, value):
    tree = cli.apply_overrides({}, [".".join(path) + "=" + json.dumps(value)])
    node = tree
    for k in path[:-1]:
        node = node[k]
    assert node[path[-1]] == value


def test_override_coercion():
    t = cli.apply_overrides({"train": {}}, ["train.iterations=5", "train.seeds=[4]", "network.arch=kan"])
    assert t == {"train": {"iterations": 5, "seeds": [4]}, "network": {"arch": "kan"}}
    with pytest.raises(cli.ConfigError):
        cli.apply_overrides({}, ["no-equals-sign"])


def test_run_dump_and_artifacts(tmp_path, capsys):
    tree = base_tree(tmp_path, dump={"activations": True, "predictions": True, "points": 11})
    assert cli.main(["run", write(tmp_path, tree)]) == 0
    out = tmp_path / "run"
    for name in ("config.json", "report.json", "metrics.csv", "params_seed1.bin", "params_seed2.bin",
                 "activations_seed1.csv", "predictions_seed2.csv"):
        assert (out / name).exists(), name
    echo = json.loads((out / "config.json").read_text())
    assert cli.parse_config(echo) == cli.parse_config(tree)
    report = json.loads((out / "report.json").read_text())
    assert report["config"] == echo and "mlp_depth" in report["conventions"]
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert len(rows) == 6
    act = list(csv.reader(open(out / "activations_seed1.csv")))
    assert act[0] == ["layer", "p", "q", "x", "phi"] and len(act) == 12
    assert cli.main(["dump", str(out), "--kind", "activations", "--seed", "2", "--set", "dump.edges=[[1,2,0]]"]) == 0
    assert list(csv.reader(open(out / "activations_seed2.csv")))[1][:3] == ["1", "2", "0"]
    assert cli.main(["dump", str(out), "--kind", "predictions", "--seed", "9"]) == cli.EXIT_RUNTIME


def test_run_exit_codes(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["run", write(tmp_path, base_tree(tmp_path)), "--set", "network.arch=foo"]) == cli.EXIT_CONFIG
    # a numerically impossible run is a runtime failure: batch exceeds the grid
    assert cli.main(["run", write(tmp_path, base_tree(tmp_path)), "--set", "train.batch_size=1000"]) == cli.EXIT_RUNTIME


def test_diverged_run_exits_zero(tmp_path, capsys):
    tree = base_tree(tmp_path)
    tree["network"] = {"arch": "mlp", "width": 4, "depth": 2}
    tree["train"].update(lr0=1e12, iterations=30)
    assert cli.main(["run", write(tmp_path, tree)]) == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert isinstance(report["diverged"], bool)


def test_sweep_cap_checked_before_running(tmp_path):
    spec = {"base": base_tree(tmp_path), "axes": {"h0": [2, 3], "M": [1, 2]}, "cap": 3, "output": str(tmp_path / "sw")}
    assert cli.main(["sweep", write(tmp_path, spec)]) == cli.EXIT_CONFIG
    assert not (tmp_path / "sw").exists()
    spec = {"base": base_tree(tmp_path), "axes": {"network.foo": [1]}}
    assert cli.main(["sweep", write(tmp_path, spec)]) == cli.EXIT_CONFIG


def test_sweep_consolidated_csv(tmp_path):
    spec = {"base": base_tree(tmp_path), "axes": {"h0": [2, 3], "degree": [5, 7]}, "output": str(tmp_path / "sw")}
    seed_rows, summary = cli.sweep(spec)
    assert len(summary) == 4 and len(seed_rows) == 8
    rows = list(csv.DictReader(open(tmp_path / "sw" / "sweep.csv")))
    assert [r["row"] for r in rows] == ["seed", "seed", "summary"] * 4
    assert rows[2]["h0"] == "2" and rows[2]["degree"] == "5" and rows[2]["rmse_train_std"] != ""
    assert (tmp_path / "sw" / "combo003" / "metrics.csv").exists()


def test_sweep_rows_restrict_combinations(tmp_path):
    rows = [{"skip": "none", "transform": "none"}, {"skip": "silu", "transform": "tanh"}]
    spec = {"base": base_tree(tmp_path), "axes": {"skip": ["none", "linear", "silu"], "transform": ["none", "tanh", "log"]}, "rows": rows,
            "output": str(tmp_path / "sw")}
    _, summary = cli.sweep(spec)
    assert [(s["skip"], s["transform"]) for s in summary] == [("none", "none"), ("silu", "tanh")]


def test_zipped_axes_need_equal_lengths(tmp_path):
    spec = {"base": base_tree(tmp_path), "axes": {"h0": [2, 3], "M": [1]}, "product": False}
    with pytest.raises(cli.ConfigError):
        cli.sweep(spec)
