import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tamed_burgers.spectral_core import (
    SpectralOperator,
    TimeMesh,
    eigenvalue,
    floor_time,
    fractional_norm,
    mesh_max_gap,
    project,
    semigroup_apply,
    spectral_gap_norm,
)

PI2 = math.pi**2

coeffs = arrays(np.float64, st.integers(1, 24), elements=st.floats(-10, 10))


@pytest.mark.parametrize("n, c0, expected", [(1, 1.0, -PI2), (2, 1.0, -4 * PI2), (1, 2.0, -2 * PI2)])
def test_eigenvalue(n, c0, expected):
    assert eigenvalue(n, c0) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("n, c0", [(0, 1.0), (1, 0.0), (2, -1.0)])
def test_eigenvalue_rejects_bad_arguments(n, c0):
    with pytest.raises(ValueError):
        eigenvalue(n, c0)


def test_operator_spectrum_is_negative_and_decreasing():
    lam = SpectralOperator(64, 0.7).eigenvalues
    assert lam[0] < 0
    assert np.all(np.diff(lam) < 0)


def test_semigroup_identity_at_zero():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(semigroup_apply(v, 0.0, SpectralOperator(3)), v)


def test_semigroup_single_mode():
    out = semigroup_apply([1.0], 1.0, SpectralOperator(1))
    assert out[0] == pytest.approx(math.exp(-PI2), rel=1e-14)
    assert out[0] == pytest.approx(5.17e-5, rel=1e-2)


def test_semigroup_decays_monotonically():
    op = SpectralOperator(5)
    v = np.array([1.0, -1.0, 2.0, 0.5, -3.0])
    mags = np.array([np.abs(semigroup_apply(v, t, op)) for t in (0.0, 0.1, 1.0, 10.0)])
    assert np.all(np.diff(mags, axis=0) <= 0)
    assert np.all(mags[-1] < 1e-30)


def test_semigroup_rejects_negative_time():
    with pytest.raises(ValueError):
        semigroup_apply([1.0], -0.1, SpectralOperator(1))


@settings(max_examples=60, deadline=None)
@given(coeffs, st.floats(0, 2), st.floats(0, 2))
def test_semigroup_property(v, s, t):
    op = SpectralOperator(v.size)
    lhs = semigroup_apply(semigroup_apply(v, s, op), t, op)
    rhs = semigroup_apply(v, s + t, op)
    # atol only covers results in the subnormal range, where relative precision is lost
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13, atol=1e-300)


@settings(max_examples=60, deadline=None)
@given(coeffs, st.floats(0, 3), st.floats(-1, 1.5))
def test_semigroup_contracts_every_fractional_norm(v, t, r):
    op = SpectralOperator(v.size)
    assert fractional_norm(semigroup_apply(v, t, op), r, op) <= fractional_norm(v, r, op) * (1 + 1e-14)


@settings(max_examples=40, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-6, 1)), st.floats(1e-4, 2))
def test_smoothing_estimate_modewise(delta, t):
    lam = np.abs(SpectralOperator(2000).eigenvalues)
    sup = np.max(lam**delta * np.exp(-t * lam))
    bound = (delta / (math.e * t)) ** delta if delta > 0 else 1.0
    assert sup <= bound * (1 + 1e-12)
    assert bound <= t ** (-delta) * (1 + 1e-12)


def test_fractional_norm_examples():
    op = SpectralOperator(2)
    v = np.array([0.3, -1.7])
    assert fractional_norm(v, 0, op) == pytest.approx(np.linalg.norm(v))
    assert fractional_norm([1.0], 0.5, op) == pytest.approx(math.pi)
    expected = math.sqrt(math.pi**4 * 0.3**2 + 16 * math.pi**4 * 1.7**2)
    assert fractional_norm(v, 1, op) == pytest.approx(expected, rel=1e-14)


def test_fractional_norm_negative_order():
    op = SpectralOperator(3, 2.0)
    v = np.array([1.0, 1.0, 1.0])
    expected = math.sqrt(sum((2 * PI2 * n * n) ** -1 for n in (1, 2, 3)))
    assert fractional_norm(v, -0.5, op) == pytest.approx(expected, rel=1e-14)


def test_parseval_against_quadrature():
    rng = np.random.default_rng(3)
    N = 12
    a = rng.standard_normal(N)
    x, w = np.polynomial.legendre.leggauss(200)
    x, w = (x + 1) / 2, w / 2
    vals = np.sqrt(2) * np.sin(np.pi * np.outer(x, np.arange(1, N + 1))) @ a
    l2 = math.sqrt(np.sum(w * vals**2))
    assert fractional_norm(a, 0, SpectralOperator(N)) == pytest.approx(l2, rel=1e-10)


def test_project_truncates_and_pads():
    v = np.arange(1.0, 9.0)
    np.testing.assert_array_equal(project(v, 8), v)
    np.testing.assert_array_equal(project(v, 3), v[:3])
    np.testing.assert_array_equal(project(v, 10), np.r_[v, 0.0, 0.0])


@given(coeffs, st.integers(1, 30))
def test_project_is_a_contraction(v, N):
    assert np.linalg.norm(project(v, N)) <= np.linalg.norm(v) * (1 + 1e-15)


def test_spectral_gap_norm():
    assert spectral_gap_norm(5, 0.0) == 1.0
    assert spectral_gap_norm(1, 0.5) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    vals = [spectral_gap_norm(N, 0.3) for N in range(1, 30)]
    assert np.all(np.diff(vals) < 0)


def test_spectral_gap_norm_is_the_operator_norm():
    # sup of |lambda_n|^(-iota) over the complement of the first N modes
    lam = np.abs(SpectralOperator(200, 1.5).eigenvalues)
    for N in (1, 4, 17):
        assert spectral_gap_norm(N, 0.7, 1.5) == pytest.approx(np.max(lam[N:] ** -0.7), rel=1e-14)


@pytest.mark.parametrize(
    "points, gap",
    [([0, 0.5, 1.0], 0.5), ([0, 0.1, 0.5, 1.0], 0.5), ([0, 0.1, 0.5, 0.9], 0.4), ([0, 2.0], 2.0)],
)
def test_mesh_max_gap(points, gap):
    assert mesh_max_gap(TimeMesh(points)) == pytest.approx(gap, rel=1e-15)


def test_mesh_validation():
    with pytest.raises(ValueError):
        TimeMesh([0.1, 1.0])
    with pytest.raises(ValueError):
        TimeMesh([0.0, 0.5, 0.5, 1.0])
    mesh = TimeMesh.uniform(1.0, 8)
    assert mesh.points[0] == 0.0 and mesh.points[-1] == 1.0 and mesh.steps == 8


def test_floor_time_at_zero_and_at_mesh_points():
    mesh = TimeMesh.uniform(1.0, 4)
    assert floor_time(0.0, mesh) == 0.0
    for m in range(1, 5):
        assert floor_time(mesh.points[m], mesh) == mesh.points[m - 1]
    assert floor_time(0.3, mesh) == 0.25


def test_floor_time_rejects_outside_horizon():
    mesh = TimeMesh.uniform(1.0, 4)
    with pytest.raises(ValueError):
        floor_time(1.5, mesh)
    with pytest.raises(ValueError):
        floor_time(-0.1, mesh)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=10), st.floats(0, 1))
def test_floor_time_on_half_open_intervals(gaps, u):
    mesh = TimeMesh(np.concatenate([[0.0], np.cumsum(gaps)]))
    for m in range(mesh.steps):
        lo, hi = mesh.points[m], mesh.points[m + 1]
        t = min(hi, lo + (hi - lo) * max(u, 1e-9))
        if t > lo:
            assert floor_time(t, mesh) == lo
