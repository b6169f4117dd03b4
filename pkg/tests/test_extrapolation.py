import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmcont.errors import ConfigError, NumericalError
from pmcont.extrapolation import (
    SweepTable,
    bernstein_rho,
    bias_bound,
    chebyshev_T,
    design_matrix,
    equispaced_grid,
    evaluate_at,
    extrapolate,
    least_squares_fit,
    min_singular_lower_bound,
    stability_bound,
    stability_bound_analytic,
)
from pmcont.params import LAMBDA_C


def test_chebyshev_values():
    assert chebyshev_T(2, 0.5) == pytest.approx(-0.5)
    assert chebyshev_T(2, LAMBDA_C) == pytest.approx(-7 - 8j)
    assert LAMBDA_C**2 == -3 - 4j
    assert chebyshev_T(3, LAMBDA_C) == pytest.approx(4 * LAMBDA_C**3 - 3 * LAMBDA_C)
    assert chebyshev_T(0, 0.3) == 1
    with pytest.raises(ConfigError):
        chebyshev_T(-1, 0.0)


@given(st.integers(0, 12), st.floats(-1, 1))
def test_trig_and_algebraic_forms_agree(m, x):
    assert chebyshev_T(m, x) == pytest.approx(chebyshev_T(m, complex(x, 0.0)).real, abs=1e-9)


def test_design_matrix_example():
    T = design_matrix([-1.0, 0.0, 1.0], 2)
    assert np.array_equal(T, [[1, -1, 1], [1, 0, -1], [1, 1, 1]])
    with pytest.raises(ConfigError):
        design_matrix([-1.0, 1.0], 2)


def test_grid():
    assert np.array_equal(equispaced_grid(5), [-1, -0.5, 0, 0.5, 1])
    with pytest.raises(ConfigError):
        equispaced_grid(1)


def test_ls_exact_for_polynomials():
    lam = equispaced_grid(13)
    c_true = np.array([0.3, -1.2, 0.5, 0.1])
    f = np.polynomial.chebyshev.chebval(lam, c_true)
    c, res = least_squares_fit(lam, f, 5)
    assert np.allclose(c[:4], c_true, atol=1e-12) and np.allclose(c[4:], 0, atol=1e-12)
    assert res < 1e-12
    assert evaluate_at(c, LAMBDA_C) == pytest.approx(np.polynomial.chebyshev.chebval(LAMBDA_C, c_true), abs=1e-10)


def test_ls_matches_normal_equations():
    rng = np.random.default_rng(4)
    lam = equispaced_grid(17)
    f = rng.normal(size=17)
    c, _ = least_squares_fit(lam, f, 6)
    T = design_matrix(lam, 6)
    assert np.allclose(c, np.linalg.solve(T.T @ T, T.T @ f), atol=1e-10)


def test_ls_trailing_axes():
    rng = np.random.default_rng(5)
    lam = equispaced_grid(9)
    f = rng.normal(size=(9, 3, 2))
    c, _ = least_squares_fit(lam, f, 4)
    assert c.shape == (5, 3, 2)
    c01, _ = least_squares_fit(lam, f[:, 0, 1], 4)
    assert np.allclose(c[:, 0, 1], c01, atol=1e-14)


def test_rank_deficient_grid():
    with pytest.raises(NumericalError):
        least_squares_fit(np.array([-1.0, -1.0 + 1e-15, 1.0]), np.zeros(3), 2)


def test_bernstein_rho():
    assert bernstein_rho(1) == pytest.approx(1)
    assert bernstein_rho(0) == pytest.approx(1)
    assert bernstein_rho(LAMBDA_C) == pytest.approx(4.611, abs=1e-3)
    z = complex(LAMBDA_C)
    s = np.sqrt(z * z - 1)
    assert abs(z + s) * abs(z - s) == pytest.approx(1)


def test_min_sv_bound():
    rep = min_singular_lower_bound(12, 2)
    assert rep.applicable and rep.relaxed == pytest.approx(math.sqrt(24 / 625))
    actual = np.linalg.svd(design_matrix(equispaced_grid(13), 2), compute_uv=False)[-1]
    assert rep.tight <= actual and rep.relaxed <= actual
    assert min_singular_lower_bound(12, 7) == (0.0, 0.0, False)


def _sigma_min(N, M):
    return np.linalg.svd(design_matrix(equispaced_grid(N + 1), M), compute_uv=False)[-1]


def test_relaxed_bound_small_grid():
    for M in range(1, 7):
        assert min_singular_lower_bound(12, M).relaxed <= _sigma_min(12, M)


@pytest.mark.parametrize("N", [8, 16, 32, 64, 100])
def test_tight_bound_holds(N):
    for M in range(0, N // 2 + 1):
        rep = min_singular_lower_bound(N, M)
        assert rep.tight <= _sigma_min(N, M) + 1e-12
        if rep.tight > 0:
            assert rep.relaxed <= _sigma_min(N, M) + 1e-12


def test_relaxed_bound_fails_beyond_tight_regime():
    # equispaced conditioning degrades once M^2 >> N; the relaxed form ignores this
    rep = min_singular_lower_bound(60, 30)
    assert rep.tight == 0 and rep.relaxed > _sigma_min(60, 30)


def test_bias_bound_properties():
    z = LAMBDA_C
    rz = bernstein_rho(z)
    assert bias_bound(4, 12, rz * 0.99, 1.0, z, 0.5) == math.inf
    assert bias_bound(4, 12, 10.0, 0.0, z, 0.5) == 0.0
    vals = [bias_bound(M, 40, 30.0, 1.0, z, 0.5) for M in range(2, 12)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert bias_bound(4, 12, 30.0, 2.0, z, 0.5) == pytest.approx(2 * bias_bound(4, 12, 30.0, 1.0, z, 0.5))
    with pytest.raises(ConfigError):
        bias_bound(4, 12, 0.5, 1.0, z, 0.5)


def test_bias_bound_covers_entire_function_error():
    # f = exp(z) is bounded by e^{(rho + 1/rho)/2} on the ellipse E_rho
    lam = equispaced_grid(25)
    z = LAMBDA_C
    for M in (6, 8, 10):
        c, _ = least_squares_fit(lam, np.exp(lam), M)
        err = abs(evaluate_at(c, z) - np.exp(z))
        min_sv = np.linalg.svd(design_matrix(lam, M), compute_uv=False)[-1]
        best = min(
            bias_bound(M, 24, rho, math.exp((rho + 1 / rho) / 2), z, min_sv) for rho in np.linspace(5, 40, 71)
        )
        assert err <= best


def test_stability_bound_monotone_in_order():
    lam = equispaced_grid(21)
    vals = [stability_bound(design_matrix(lam, M), LAMBDA_C, 1e-5) for M in range(1, 11)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert stability_bound(design_matrix(lam, 3), LAMBDA_C, 0.0) == 0.0


def test_stability_bound_below_analytic():
    lam = equispaced_grid(21)
    for M in range(1, 11):
        T = design_matrix(lam, M)
        min_sv = np.linalg.svd(T, compute_uv=False)[-1]
        assert stability_bound(T, LAMBDA_C, 1e-5) <= stability_bound_analytic(20, M, LAMBDA_C, 1e-5, min_sv)


def test_stability_bound_is_noise_std():
    rng = np.random.default_rng(6)
    lam = equispaced_grid(13)
    M, sigma = 4, 1e-3
    bound = stability_bound(design_matrix(lam, M), LAMBDA_C, sigma)
    c, _ = least_squares_fit(lam, rng.normal(scale=sigma, size=(13, 4000)), M)
    spread = np.sqrt(np.mean(np.abs(evaluate_at(c, LAMBDA_C)) ** 2))
    assert spread == pytest.approx(bound, rel=0.05)


def test_extrapolate_result():
    lam = equispaced_grid(9)
    r = extrapolate(lam, lam**2, 2, LAMBDA_C, 1e-4, rho=10.0, Q_rho=30.0)
    assert r.value_at_target == pytest.approx(-3 - 4j)
    assert r.err_bias is not None and r.err_stability > 0 and r.min_sv > 0


def test_sweep_table_validation():
    with pytest.raises(ConfigError):
        SweepTable(np.array([0.0, -1.0]), np.zeros(1), np.zeros((2, 1, 3)))
    with pytest.raises(ConfigError):
        SweepTable(equispaced_grid(3), np.zeros(2), np.zeros((3, 1, 3)))
    tab = SweepTable(equispaced_grid(3), np.zeros(2), np.zeros((3, 2, 3)))
    assert tab.stderr.shape == (3, 2, 3)
