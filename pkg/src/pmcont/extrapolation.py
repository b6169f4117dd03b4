"""Chebyshev least-squares fits on a real parameter grid, continuation to a
complex point, and a-priori error bounds for the continued value.

Grid size follows the convention of the bounds: ``N + 1`` points
``lam_r = -1 + 2 r / N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import ConfigError, NumericalError

__all__ = [
    "SweepTable",
    "ExtrapolationResult",
    "BoundReport",
    "equispaced_grid",
    "chebyshev_T",
    "design_matrix",
    "least_squares_fit",
    "evaluate_at",
    "bernstein_rho",
    "min_singular_lower_bound",
    "bias_bound",
    "stability_bound",
    "stability_bound_analytic",
    "extrapolate",
]


def equispaced_grid(n_points: int):
    if n_points < 2:
        raise ConfigError("a sweep needs at least two parameter values")
    return np.linspace(-1.0, 1.0, n_points)


@dataclass(frozen=True, eq=False)
class SweepTable:
    """Observable values ``values[lam, t, obs]`` on a real parameter grid.

    ``stderr`` has the same shape (zeros for noiseless data); ``noise_sigma``
    records injected noise.
    """

    lambda_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray
    observables: tuple = ("x", "y", "z")
    stderr: np.ndarray | None = None
    noise_sigma: float = 0.0

    def __post_init__(self):
        lg = np.asarray(self.lambda_grid, dtype=float)
        if lg.ndim != 1 or np.any(np.diff(lg) <= 0) or lg[0] < -1 or lg[-1] > 1:
            raise ConfigError("lambda grid must be strictly increasing inside [-1, 1]")
        vals = np.asarray(self.values)
        expected = (lg.size, np.size(self.t_grid), len(self.observables))
        if vals.shape != expected:
            raise ConfigError(f"sweep values have shape {vals.shape}, expected {expected}")
        object.__setattr__(self, "lambda_grid", lg)
        object.__setattr__(self, "t_grid", np.asarray(self.t_grid, dtype=float))
        object.__setattr__(self, "values", vals)
        if self.stderr is None:
            object.__setattr__(self, "stderr", np.zeros(vals.shape))


class ExtrapolationResult(NamedTuple):
    coeffs: np.ndarray
    value_at_target: complex
    order_M: int
    err_bias: float | None
    err_stability: float
    min_sv: float
    residual: float


def chebyshev_T(m: int, z):
    """First-kind Chebyshev polynomial; trigonometric form on [-1, 1], algebraic form elsewhere."""
    if m < 0:
        raise ConfigError("Chebyshev index must be non-negative")
    z = np.asarray(z)
    if np.isrealobj(z) and np.all(np.abs(z) <= 1):
        out = np.cos(m * np.arccos(z))
    else:
        zc = z.astype(complex)
        s = np.sqrt(zc * zc - 1)
        out = 0.5 * ((zc + s) ** m + (zc - s) ** m)
    return out[()] if out.ndim == 0 else out


def design_matrix(lambda_grid, order_M: int):
    """``T[r, m] = T_m(lam_r)`` by the three-term recurrence."""
    x = np.asarray(lambda_grid, dtype=float)
    if order_M < 0:
        raise ConfigError("order must be non-negative")
    if order_M > x.size - 1:
        raise ConfigError(f"order {order_M} needs at least {order_M + 1} grid points, got {x.size}")
    T = np.empty((x.size, order_M + 1))
    T[:, 0] = 1
    if order_M >= 1:
        T[:, 1] = x
    for m in range(2, order_M + 1):
        T[:, m] = 2 * x * T[:, m - 1] - T[:, m - 2]
    return T


def least_squares_fit(lambda_grid, values, order_M: int):
    """Chebyshev coefficients by Householder QR; ``values`` may carry trailing axes.

    Returns ``(coeffs, residual)`` with ``coeffs`` of shape ``(M+1, ...)``
    and the largest residual norm over the trailing cells.
    """
    T = design_matrix(lambda_grid, order_M)
    f = np.asarray(values)
    # a fixed memory layout keeps the result bit-reproducible (BLAS blocking
    # depends on strides, and continuation amplifies the last bits)
    flat = np.ascontiguousarray(f.reshape(f.shape[0], -1))
    q, r = linalg.qr(T, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-13 * diag.max():
        raise NumericalError("design matrix is rank deficient (degenerate grid)")
    c = linalg.solve_triangular(r, q.T @ flat)
    resid = float(np.max(np.linalg.norm(T @ c - flat, axis=0))) if flat.size else 0.0
    return c.reshape((order_M + 1,) + f.shape[1:]), resid


def evaluate_at(coeffs, z):
    """Clenshaw summation of ``sum_m c_m T_m(z)``; ``coeffs`` may carry trailing axes."""
    c = np.asarray(coeffs)
    b1 = np.zeros(c.shape[1:], dtype=np.result_type(c, z))
    b2 = np.zeros_like(b1)
    for k in range(c.shape[0] - 1, 0, -1):
        b1, b2 = 2 * z * b1 - b2 + c[k], b1
    out = z * b1 - b2 + c[0]
    return out[()] if np.ndim(out) == 0 else out


def bernstein_rho(z):
    """Bernstein ellipse parameter ``|z + sqrt(z^2 - 1)|`` on the branch with modulus >= 1."""
    z = complex(z)
    s = np.sqrt(z * z - 1)
    a, b = abs(z + s), abs(z - s)
    return max(a, b)


class BoundReport(NamedTuple):
    tight: float
    relaxed: float
    applicable: bool


def min_singular_lower_bound(N: int, M: int) -> BoundReport:
    """Lower bounds on the smallest singular value for ``N + 1`` equispaced points.

    Only valid under oversampling ``N >= 2M``; otherwise both entries are
    zero and ``applicable`` is false.
    """
    if N < 2 * M:
        return BoundReport(0.0, 0.0, False)
    tight2 = ((N - M**2 / 2) / (2 * M + 1) - 27 * math.sqrt(N) / (32 * math.pi)) / 25
    relaxed2 = 2 * N / (125 * (2 * M + 1))
    return BoundReport(math.sqrt(max(0.0, tight2)), math.sqrt(relaxed2), True)


def bias_bound(M, N, rho, Q_rho, z, min_sv, relaxed=False):
    """Truncation (bias) bound for the continued value.

    ``rho`` is the ellipse on which the continued function is bounded by
    ``Q_rho``.  Returns ``inf`` when ``rho <= rho_z`` (the tail series does
    not converge).
    """
    rz = bernstein_rho(z)
    if rho <= 1 or min_sv <= 0:
        raise ConfigError("need rho > 1 and a positive singular value")
    if Q_rho == 0:
        return 0.0
    if rho <= rz:
        return math.inf
    q = rz / rho
    if relaxed:
        return 2 * Q_rho * q**M * ((M + 1) * math.sqrt(N + 1) / min_sv + q / (1 - q))
    geo = (M + 1) if rz == 1 else (1 - rz ** (M + 1)) / (1 - rz)
    return 2 * Q_rho * (math.sqrt(N + 1) / min_sv * rho ** (-M) * geo / (rho - 1) + q ** (M + 1) / (1 - q))


def stability_bound(T, z, sigma_exp):
    """Noise-propagation bound ``sigma sqrt(sum_jm |P_mj|^2 |T_m(z)|^2)`` with ``P`` the pseudoinverse."""
    if sigma_exp == 0:
        return 0.0
    T = np.asarray(T, dtype=float)
    s = np.linalg.svd(T, compute_uv=False)
    if s[-1] <= 1e-13 * s[0]:
        raise NumericalError("design matrix is rank deficient")
    P = np.linalg.pinv(T)
    tz = np.array([chebyshev_T(m, complex(z)) for m in range(T.shape[1])])
    return float(sigma_exp * math.sqrt(np.sum(np.abs(P) ** 2 * np.abs(tz[:, None]) ** 2)))


def stability_bound_analytic(N, M, z, sigma_exp, min_sv):
    rz = bernstein_rho(z)
    geo = (M + 1) if rz == 1 else (1 - rz ** (M + 1)) / (1 - rz)
    return sigma_exp * math.sqrt(N + 1) * math.sqrt(M + 1) / min_sv * geo


def extrapolate(lambda_grid, values, order_M, z, sigma_exp=0.0, rho=None, Q_rho=None) -> ExtrapolationResult:
    """Fit one series of sweep values and continue it to ``z``."""
    coeffs, resid = least_squares_fit(lambda_grid, values, order_M)
    T = design_matrix(lambda_grid, order_M)
    min_sv = float(np.linalg.svd(T, compute_uv=False)[-1])
    err_b = None
    if rho is not None and Q_rho is not None:
        err_b = bias_bound(order_M, len(lambda_grid) - 1, rho, Q_rho, z, min_sv)
    return ExtrapolationResult(
        coeffs, complex(evaluate_at(coeffs, complex(z))), order_M, err_b, stability_bound(T, z, sigma_exp), min_sv, resid
    )
