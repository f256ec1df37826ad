import csv

import numpy as np
import jax.numpy as jnp
import pytest
from hypothesis import given, strategies as st

from sinckan import networks as nw
from sinckan import pinn
from sinckan import problems as pr
from sinckan.bases import make_hgrid
from sinckan.training import TrainConfig


def sinc_spec(P, **kw):
    return nw.NetworkSpec("sinckan", in_dim=P.in_dim, out_dim=P.out_dim, width=4, degree=8,
                          hgrid=make_hgrid("inverse", 2.0, 1), seed=1, **kw)


@pytest.mark.parametrize("name", pr.PROBLEM_NAMES)
def test_exact_solution_has_zero_loss(name):
    P = pr.get_problem(name)
    parts = pinn.pinn_loss(P, P.exact, None, P.residual_points()[::7])
    assert float(parts.total) <= 1e-16
    assert float(parts.total) == float(parts.L_r + parts.L_ic + parts.L_bc)


@given(c=st.floats(-2, 2, allow_nan=False))
def test_bl1d_loss_by_hand(c):
    # u = c x: residual u_xx/eps + u_x = c, boundary data u(0)=1, u(1)=exp(-eps)
    P = pr.get_problem("bl-1d", eps=1.0)
    x = P.residual_points()
    parts = pinn.pinn_loss(P, lambda z: c * z, None, x)
    assert float(parts.L_r) == pytest.approx(c * c, rel=1e-12, abs=1e-15)
    assert float(parts.L_ic) == 0.0
    expect_bc = ((0 - 1) ** 2 + (c - np.exp(-1.0)) ** 2) / 2
    assert float(parts.L_bc) == pytest.approx(expect_bc, rel=1e-12)


def test_total_is_sum_of_parts_for_network():
    P = pr.get_problem("burgers")
    spec = sinc_spec(P)
    p = nw.init(spec)
    parts = pinn.pinn_loss(P, spec, p, P.residual_points()[:200])
    assert float(parts.total) == float(parts.L_r) + float(parts.L_ic) + float(parts.L_bc)
    assert set(parts.as_dict()) == {"L_r", "L_ic", "L_bc", "loss"}


def test_residual_single_point_and_batch():
    P = pr.get_problem("t-nonlinear")
    spec = sinc_spec(P)
    p = nw.init(spec)
    pts = jnp.array([[0.1, 0.05], [-0.3, 0.02]])
    batch = pinn.residual(P, spec, p, pts)
    assert batch.shape == (2, 1)
    assert float(pinn.residual(P, spec, p, pts[1])) == pytest.approx(float(batch[1, 0]), rel=1e-13)
    with pytest.raises(ValueError):
        pinn.residual(P, spec, p, jnp.zeros((2, 3)))


def test_taylor_green_residual_has_three_components():
    P = pr.get_problem("ns-taylor-green")
    spec = sinc_spec(P)
    r = pinn.residual(P, spec, nw.init(spec), P.residual_points()[:5])
    assert r.shape == (5, 3)


def test_periodic_constraint_detects_mismatch():
    P = pr.get_problem("convection-diffusion")
    cs = [c for c in P.constraints() if c.kind == "periodic"][0]
    err = pinn.constraint_errors(lambda p, z: z[:, :1] ** 2 + z[:, 1:], None, cs)
    # u = x^2 + t: values agree at x = +-1 but u_x = 2x differs by 4
    np.testing.assert_allclose(err, 16.0, rtol=1e-14)


def test_fit_pinn_short_run(tmp_path):
    P = pr.get_problem("bl-1d", eps=1.0)
    spec = sinc_spec(P)
    rep = pinn.fit_pinn(P, spec, TrainConfig(iterations=40, eval_every=20, seeds=(1,), batch_size=100))
    rec = rep.seeds[0].records
    assert [r["iteration"] for r in rec] == [0, 20, 40]
    assert rec[-1]["loss"] < rec[0]["loss"]
    assert rep.metric_names[0] == "rel_l2"
    assert rep.config["problem_params"] == {"eps": 1.0}
    header, rows = pinn.prediction_table(P, pinn._as_model(spec), rep.seeds[0].params)
    assert header == ["x", "u_exact", "u_pred", "abs_error"]
    np.testing.assert_allclose(rows[:, 3], np.abs(rows[:, 1] - rows[:, 2]))
    path = pinn.write_table(tmp_path / "pred.csv", header, rows)
    assert len(list(csv.reader(open(path)))) == rows.shape[0] + 1


def test_fit_pinn_input_checks():
    P = pr.get_problem("burgers")
    with pytest.raises(ValueError):
        pinn.fit_pinn(P, sinc_spec(pr.get_problem("bl-1d")), TrainConfig(iterations=1))
    with pytest.raises(ValueError):
        pinn.fit_pinn(P, sinc_spec(P), TrainConfig(iterations=1, n_train=10))
    with pytest.raises(ValueError):
        pinn.fit_pinn(P, sinc_spec(P), TrainConfig(iterations=1, batch_size=10**7))


def test_taylor_green_prediction_table_columns():
    P = pr.get_problem("ns-taylor-green")
    header, rows = pinn.prediction_table(P, lambda p, z: P.exact(z), None, P.eval_points((3, 3, 2)))
    assert header[:3] == ["x", "y", "t"]
    assert "u_pred_u" in header and "abs_error_v" in header
    assert rows.shape == (18, 3 + 6)
    assert np.max(rows[:, 5]) == 0.0
