import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tamed_burgers.burgers_drift import (
    BlowUpSignal,
    DriftConfig,
    drift,
    drift_exact,
    drift_pseudospectral,
    grid_coefficients,
    grid_values,
    local_lipschitz_bound,
)
from oracles import quadrature_drift

EXACT = DriftConfig(1.0, "exact-convolution")
FAST = DriftConfig(1.0, "pseudo-spectral")


def random_coeffs(rng, N, decay=1.0):
    return rng.standard_normal(N) / np.arange(1, N + 1) ** decay


def test_zero_input():
    for f in (drift_exact, drift_pseudospectral):
        np.testing.assert_array_equal(f(np.zeros(6), EXACT, 6), np.zeros(6))


def test_first_mode_closed_form():
    expected = np.array([0.0, math.pi / math.sqrt(2), 0.0, 0.0])
    np.testing.assert_allclose(drift_exact([1.0], EXACT, 4), expected, atol=1e-15)
    np.testing.assert_allclose(quadrature_drift(np.array([1.0]), 1.0, 4), expected, atol=1e-13)
    np.testing.assert_allclose(drift_pseudospectral([1.0], FAST, 4), expected, atol=1e-12)


@pytest.mark.parametrize("N", [1, 2, 3, 7, 16, 32])
def test_exact_matches_quadrature_oracle(N):
    rng = np.random.default_rng(N)
    for N_out in (N, max(1, N // 2), 2 * N):
        a = random_coeffs(rng, N)
        ref = quadrature_drift(a, 1.3, N_out)
        got = drift_exact(a, DriftConfig(1.3, "exact-convolution"), N_out)
        scale = max(np.linalg.norm(ref), 1e-300)
        assert np.linalg.norm(got - ref) <= 1e-8 * scale + 1e-14


@pytest.mark.parametrize("N", [1, 2, 5, 64, 128, 256])
def test_pseudospectral_matches_exact(N):
    rng = np.random.default_rng(100 + N)
    a = random_coeffs(rng, N, decay=0.5)
    ref = drift_exact(a, EXACT, N)
    got = drift_pseudospectral(a, FAST, N)
    if N == 1:
        assert np.abs(got).max() < 1e-14
    else:
        assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


def test_pseudospectral_batched_and_other_pad_factors():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 3, 20))
    ref = drift_exact(a, EXACT, 20)
    for pad in (2, 3, 4):
        got = drift_pseudospectral(a, DriftConfig(1.0, "pseudo-spectral", pad), 20)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-10 * np.abs(ref).max())


def test_transform_round_trip():
    for K in (4, 16, 64):
        N = K - 1
        eye = np.eye(N)
        np.testing.assert_allclose(grid_coefficients(grid_values(eye, K), N), eye, atol=1e-13)


def test_grid_values_against_direct_evaluation():
    a = np.array([0.4, -1.0, 0.25])
    K = 8
    x = np.arange(1, K) / K
    direct = np.sqrt(2) * np.sin(np.pi * np.outer(x, [1, 2, 3])) @ a
    np.testing.assert_allclose(grid_values(a, K), direct, atol=1e-14)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 128), st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_coercivity(N, seed, amp):
    a = amp * random_coeffs(np.random.default_rng(seed), N, decay=0.3)
    F = drift_exact(a, EXACT, N)
    assert abs(a @ F) <= 1e-10 * (1 + np.linalg.norm(a) * np.linalg.norm(F))


def test_coercivity_as_quadratic_form():
    # <v, v v'> = (1/3) int (v^3)' dx = 0 with Dirichlet ends
    a = random_coeffs(np.random.default_rng(9), 10)
    x, w = np.polynomial.legendre.leggauss(200)
    x, w = (x + 1) / 2, w / 2
    n = np.arange(1, 11)
    v = np.sqrt(2) * np.sin(np.pi * np.outer(x, n)) @ a
    dv = np.sqrt(2) * np.pi * np.cos(np.pi * np.outer(x, n)) @ (n * a)
    assert abs(np.sum(w * v * v * dv)) < 1e-12


def test_non_finite_input_signals_blowup():
    for f in (drift_exact, drift_pseudospectral):
        with pytest.raises(BlowUpSignal):
            f(np.array([1.0, np.nan]), EXACT, 2)


def test_dispatch():
    a = np.array([1.0, 0.5])
    np.testing.assert_array_equal(drift(a, EXACT, 2), drift_exact(a, EXACT, 2))
    np.testing.assert_array_equal(drift(a, FAST, 2), drift_pseudospectral(a, FAST, 2))
    with pytest.raises(ValueError):
        DriftConfig(1.0, "spectral")
    with pytest.raises(ValueError):
        DriftConfig(1.0, pad_factor=1)


def test_lipschitz_bound_zero_difference():
    v = np.array([1.0, 2.0, -0.5])
    assert local_lipschitz_bound(v, v, 1.0, 1.0) == 0.0
    assert np.linalg.norm(drift_exact(v, EXACT, 3) - drift_exact(v, EXACT, 3)) == 0.0


def test_lipschitz_bound_is_bilinear_homogeneous():
    rng = np.random.default_rng(2)
    v, w = rng.standard_normal(8), rng.standard_normal(8)
    assert local_lipschitz_bound(2 * v, 2 * w, 1.0, 1.0) == pytest.approx(
        4 * local_lipschitz_bound(v, w, 1.0, 1.0), rel=1e-14)


def test_lipschitz_inequality_random_pairs():
    rng = np.random.default_rng(11)
    N = 32
    v = random_coeffs(rng, N) * 3.0
    w = random_coeffs(rng, N) * 3.0
    for c0, c1 in [(1.0, 1.0), (0.3, -2.0), (2.0, 0.5)]:
        cfg = DriftConfig(c1, "exact-convolution")
        lhs = np.linalg.norm(drift_exact(v, cfg, N) - drift_exact(w, cfg, N))
        assert lhs <= local_lipschitz_bound(v, w, c0, c1)
