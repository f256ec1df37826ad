import numpy as np
import jax.numpy as jnp
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import chebyshev as npcheb
from scipy.interpolate import BSpline

from sinckan import bases
from sinckan.autodiff import DomainError


def test_sinc_examples():
    assert float(bases.sinc(0.0)) == 1.0
    assert abs(float(bases.sinc(np.pi))) < 1e-16
    assert float(bases.sinc(np.pi / 2)) == pytest.approx(0.6366197723675814, abs=1e-16)


@given(x=st.floats(-50, 50, allow_nan=False))
def test_sinc_even_and_matches_numpy(x):
    assert float(bases.sinc(x)) == float(bases.sinc(-x))
    assert float(bases.sinc(x)) == pytest.approx(float(np.sinc(x / np.pi)), abs=1e-15)


def test_sinc_series_examples():
    assert float(bases.sinc_series(2, 0.5, 1.0)) == 1.0
    assert abs(float(bases.sinc_series(1, 0.5, 1.0))) < 1e-16
    assert float(bases.sinc_series(0, 1.0, 0.5)) == pytest.approx(0.6366197723675814, abs=1e-16)


def test_sinc_series_rejects_bad_step():
    with pytest.raises(ValueError):
        bases.sinc_series(0, 0.0, 1.0)


@given(
    samples=st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=41).filter(lambda s: len(s) % 2),
    h=st.sampled_from([0.1, 0.37, 1.0, 2.5]),
)
def test_interpolation_reproduces_samples(samples, h):
    n = (len(samples) - 1) // 2
    nodes = np.arange(-n, n + 1) * h
    np.testing.assert_allclose(bases.sinc_interpolate(samples, h, nodes), samples, rtol=0, atol=1e-13)


def test_interpolate_requires_odd_length():
    with pytest.raises(ValueError):
        bases.sinc_interpolate([1.0, 2.0], 0.5, 0.0)


def test_optimal_step_examples_and_scaling():
    assert bases.optimal_step(1.0, 1.0, 1) == pytest.approx(np.sqrt(np.pi), rel=1e-15)
    for N in (1, 7, 64):
        assert bases.optimal_step(1.4, 0.5, 4 * N) == pytest.approx(bases.optimal_step(1.4, 0.5, N) / 2, rel=1e-15)
    for bad in ((0, 1, 1), (1, -1, 1), (1, 1, 0)):
        with pytest.raises(ValueError):
            bases.optimal_step(*bad)


def test_hgrid_values():
    g = bases.make_hgrid("inverse", 2.0, 4)
    assert g.values == (1 / 2, 1 / 4, 1 / 6, 1 / 8)
    e = bases.make_hgrid("exponential", 2.0, 3)
    assert e.values == (0.5, 0.25, 0.125)
    np.testing.assert_array_equal(np.asarray(g), g.values)


@given(scheme=st.sampled_from(["inverse", "exponential"]), h0=st.floats(1.01, 20), M=st.integers(1, 24))
def test_hgrid_invariants(scheme, h0, M):
    v = np.array(bases.make_hgrid(scheme, h0, M).values)
    assert len(v) == M
    assert np.all(v > 0) and np.all(v < 1)
    assert np.all(np.diff(v) < 0)


@pytest.mark.parametrize("args", [("inverse", 1.0, 3), ("inverse", 2.0, 0), ("linear", 2.0, 3)])
def test_hgrid_errors(args):
    with pytest.raises(ValueError):
        bases.make_hgrid(*args)


@given(D=st.integers(1, 200))
def test_node_set(D):
    ns = bases.SincNodeSet(D)
    idx = ns.indices
    assert len(idx) == D
    assert idx[0] == -ns.N and idx[-1] == D - 1 - ns.N
    assert (D % 2 == 1) == bool(np.array_equal(idx, -idx[::-1]))


def test_node_set_rejects_zero():
    with pytest.raises(ValueError):
        bases.SincNodeSet(0)


def test_log_transform_domain_error():
    with pytest.raises(DomainError):
        bases.log_transform(jnp.array([0.5, 2.5]), 0.0, 2.0)
    with pytest.raises(ValueError):
        bases.log_transform(0.5, 1.0, 0.0)
    assert float(bases.log_transform(1.0, 0.0, 2.0)) == 0.0


@given(xi=st.floats(-12, 12, allow_nan=False))
def test_psi_inverts_log_transform(xi):
    x = float(bases._psi(jnp.asarray(xi), -2.0, 2.0))
    assert -2.0 < x < 2.0
    assert float(bases.log_transform(x, -2.0, 2.0)) == pytest.approx(xi, abs=1e-9)


@given(G=st.integers(4, 30))
def test_spline_partition_of_unity(G):
    grid = bases.SplineGrid(G)
    assert np.all(np.diff(grid.knots) >= 0)
    x = jnp.linspace(-1, 1, 257)
    B = np.asarray(bases.bspline_basis(grid, x))
    assert B.shape == (257, G)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-14)
    assert np.all(B >= -1e-15)


@given(G=st.integers(4, 16))
def test_spline_matches_scipy(G):
    grid = bases.SplineGrid(G)
    x = np.linspace(-1, 1, 101)
    B = np.asarray(bases.bspline_basis(grid, jnp.asarray(x)))
    ref = BSpline.design_matrix(x, grid.knots, 3).toarray()
    np.testing.assert_allclose(B, ref, atol=1e-14)


def test_spline_grid_too_small():
    with pytest.raises(ValueError):
        bases.SplineGrid(3)


@given(D=st.integers(0, 40), x=st.floats(-1, 1))
def test_chebyshev_matches_numpy(D, x):
    F = np.asarray(bases.chebyshev_features(D, jnp.asarray(x)))
    ref = [npcheb.chebval(x, np.eye(D + 1)[k]) for k in range(D + 1)]
    np.testing.assert_allclose(F, ref, atol=1e-12)


def test_sinc_basis_shape_and_cardinality():
    h = bases.make_hgrid("inverse", 2.0, 3)
    nodes = bases.SincNodeSet(5).indices
    S = np.asarray(bases.sinc_basis(jnp.asarray([0.0, 0.25]), np.asarray(h), nodes))
    assert S.shape == (2, 3, 5)
    # xi = 0 hits node j = 0 for every step size
    np.testing.assert_allclose(S[0], np.eye(5)[[2, 2, 2]], atol=1e-16)
    # xi = 1/4 is node j = 1 for h = 1/4
    assert S[1, 1, 3] == pytest.approx(1.0, abs=1e-15)


def test_transformed_interval_approximation_with_line_removed():
    x = np.linspace(0.001, 0.999, 501)
    h = bases.optimal_step(np.pi / 2, 0.5, 32)
    approx = np.asarray(bases.sinc_approx_interval(np.sqrt, 0.0, 1.0, 32, h, x))
    assert np.max(np.abs(approx - np.sqrt(x))) < 1e-5
