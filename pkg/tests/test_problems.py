import numpy as np
import jax.numpy as jnp
import pytest
from hypothesis import given, strategies as st

from sinckan import autodiff as ad
from sinckan import problems as pr
from sinckan.pinn import constraint_errors, residual


def test_function_examples():
    f = pr.get_function
    assert abs(f("sin-low")(0.25)) < 1e-15
    assert f("sqrt")(0.25) == 0.5
    assert f("double-exponential")(0.5) == pytest.approx(0.6065306597126334, abs=1e-15)


def test_unknown_names_list_registry():
    with pytest.raises(KeyError, match="sin-low"):
        pr.get_function("sine")
    with pytest.raises(KeyError, match="burgers"):
        pr.get_problem("heat")


@pytest.mark.parametrize("name", sorted(pr.FUNCTIONS))
def test_targets_finite_on_domain(name):
    f = pr.get_function(name)
    x = np.linspace(*f.domain, 20001)
    assert np.all(np.isfinite(f(x[1:] if name == "piece-wise" else x)))


def test_piecewise_branches_half_open():
    f = pr.get_function("piece-wise")
    assert f(0.5) == pytest.approx(pr._piecewise_2(0.5), abs=0)
    assert f(1.5) == pytest.approx(pr._piecewise_3(1.5), abs=0)
    assert f(2.0) == pytest.approx(pr._piecewise_3(2.0), abs=0)
    g = pr.get_function("spectral-bias")
    assert g(0.0) == 1.0
    assert g(-1e-12) == pytest.approx(5.0, abs=1e-10)


def test_sin_high_has_400_periods():
    x = np.linspace(-1, 1, 10**6)
    y = pr.get_function("sin-high")(x)
    changes = np.count_nonzero(np.diff(np.sign(y)) != 0)
    assert abs(changes - 800) <= 2


def test_problem_examples():
    P = pr.get_problem("perturbed")
    assert pr.eval_exact_stable(P, [1.0]) == 3.0
    assert pr.eval_exact_stable(P, [0.0]) == pytest.approx(1.0, abs=1e-15)
    assert pr.eval_exact_stable(pr.get_problem("burgers"), [0.0, 0.0]) == pytest.approx(0.25, abs=1e-15)
    assert pr.eval_exact_stable(pr.get_problem("t-nonlinear"), [-1.0, 0.0]) == pytest.approx(0.5403023058681398, abs=1e-15)


def test_perturbed_stable_form_matches_closed_form():
    eps = 0.1  # small enough exponents for the direct formula
    P = pr.get_problem("perturbed", eps=eps)
    x = np.linspace(-1, 1, 101)
    direct = 1 + x + (np.exp(x / eps) - 1) / (np.exp(1 / eps) - 1)
    np.testing.assert_allclose(pr.eval_exact_stable(P, x[:, None])[:, 0], direct, rtol=1e-13, atol=1e-14)


def test_convection_diffusion_initial_condition():
    P = pr.get_problem("convection-diffusion")
    x = np.linspace(-1, 1, 201)
    pts = np.column_stack([x, np.zeros_like(x)])
    ic = sum(np.sin(k * np.pi * x) for k in range(6))
    np.testing.assert_allclose(pr.eval_exact_stable(P, pts)[:, 0], ic, atol=1e-14)


def test_problem_defaults():
    assert pr.get_problem("perturbed").params == {"eps": 0.01}
    assert pr.get_problem("burgers").params == {"nu": 0.01, "a": 0.5}
    assert pr.get_problem("convection-diffusion").params == {"eps": 0.01, "a": 0.1}
    assert pr.get_problem("bl-2d").params == {"alpha1": 100.0, "alpha2": 100.0}
    tg = pr.get_problem("ns-taylor-green").params
    assert tg["nu"] == 1 / 400 and tg["T"] == 1.0
    assert pr.get_problem("bl-1d", eps=1000).params["eps"] == 1000


def test_problem_parameter_errors():
    with pytest.raises(ValueError):
        pr.get_problem("bl-1d", eps=-1)
    with pytest.raises((TypeError, ValueError)):
        pr.get_problem("burgers", kappa=2.0)


@pytest.mark.parametrize("name", pr.PROBLEM_NAMES)
def test_registry_self_test(name):
    P = pr.get_problem(name)
    rng = np.random.default_rng(11)
    lo = np.array([a for a, _ in P.domain])
    hi = np.array([b for _, b in P.domain])
    x = jnp.asarray(lo + (hi - lo) * rng.uniform(0.001, 0.999, (1000, P.in_dim)))
    r = residual(P, P.exact, None, x)
    assert np.max(np.abs(r)) <= 1e-8
    for cs in P.constraints():
        assert np.sqrt(np.max(constraint_errors(lambda p, z: P.exact(z), None, cs))) <= 1e-10


@pytest.mark.parametrize("eps", [1.0, 10.0, 100.0, 1000.0])
def test_bl1d_family(eps):
    P = pr.get_problem("bl-1d", eps=eps)
    x = jnp.asarray(np.linspace(0.01, 0.99, 50))[:, None]
    assert np.max(np.abs(residual(P, P.exact, None, x))) <= 1e-8 * max(1.0, eps)


def test_taylor_green_divergence_free():
    P = pr.get_problem("ns-taylor-green")
    x = jnp.asarray(np.random.default_rng(3).uniform(0, 1, (500, 3)))
    U = pr.exact_jet(P, x)
    div = U.d1[0][:, 0] + U.d1[1][:, 1]
    assert np.max(np.abs(np.asarray(div))) <= 1e-12


def test_make_grid_examples():
    np.testing.assert_array_equal(pr.make_grid([(0, 1)], [5])[:, 0], [0, 0.25, 0.5, 0.75, 1])
    g = np.asarray(pr.make_grid([(-1, 1), (0, 0.1)], [3, 2]))
    np.testing.assert_allclose(g, [[-1, 0], [-1, 0.1], [0, 0], [0, 0.1], [1, 0], [1, 0.1]])
    d = np.diff(np.asarray(pr.make_grid([(0, 1)], [1000])[:, 0]))
    np.testing.assert_allclose(d, 1 / 999, rtol=1e-12)
    with pytest.raises(ValueError):
        pr.make_grid([(0, 1)], [1])


@given(counts=st.lists(st.integers(2, 6), min_size=1, max_size=3))
def test_grid_properties(counts):
    dom = [(-1.0, 2.0)] * len(counts)
    g = np.asarray(pr.make_grid(dom, counts))
    assert g.shape == (int(np.prod(counts)), len(counts))
    assert np.all(g >= -1) and np.all(g <= 2)
    m = np.asarray(pr.midpoint_grid(dom, counts))
    assert np.all(m > -1) and np.all(m < 2)


@pytest.mark.parametrize("name", pr.PROBLEM_NAMES)
def test_points_in_domain(name):
    P = pr.get_problem(name)
    lo = np.array([a for a, _ in P.domain])
    hi = np.array([b for _, b in P.domain])
    xr = np.asarray(P.residual_points())
    assert np.all(xr > lo) and np.all(xr < hi)
    for cs in P.constraints():
        pts = np.asarray(cs.points)
        assert np.all(pts >= lo - 1e-15) and np.all(pts <= hi + 1e-15)
    if P.singular is not None:
        assert not np.any(np.asarray(P.singular(xr)))


def test_singular_point_rejected():
    P = pr.get_problem("nonlinear")
    with pytest.raises(ad.DomainError):
        residual(P, P.exact, None, jnp.array([[0.0]]))


def test_constraint_set_validation():
    with pytest.raises(ValueError):
        pr.ConstraintSet("neumann", jnp.zeros((1, 1)))
    with pytest.raises(ValueError):
        pr.ConstraintSet("periodic", jnp.zeros((2, 2)), partner=jnp.zeros((1, 2)))
