"""Underdamped Brownian bath: spectral density, correlation functions and
their classical/quantum decomposition.

Units are arbitrary but consistent; most presets set ``omega0 = 1``.
Zero temperature is represented by ``beta = math.inf`` and always takes
dedicated code paths.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConfigError, NumericalError, QuadratureError, UnphysicalBathError

__all__ = [
    "BathSpec",
    "QuadratureConfig",
    "CorrelationSplit",
    "FieldCoefficients",
    "MatsubaraFit",
    "bath_correlation",
    "brownian_correlation_split",
    "zero_temperature_matsubara",
    "field_coefficients",
    "brownian_field_coefficients",
    "classical_spectrum",
    "quantum_spectrum",
    "crossover_beta",
    "fit_matsubara_modes",
]


@dataclass(frozen=True)
class BathSpec:
    """Brownian spectral density ``J(w) = gamma lam^2 w / ((w^2-w0^2)^2 + gamma^2 w^2)``."""

    omega0: float
    gamma: float
    lam: float
    beta: float = math.inf

    def __post_init__(self):
        for name in ("omega0", "gamma", "lam"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"bath.{name} must be positive and finite, got {value!r}")
        if not self.beta > 0 or math.isnan(self.beta):
            raise ConfigError(f"bath.beta must be positive, got {self.beta!r}")
        if self.gamma >= 2 * self.omega0:
            raise UnphysicalBathError(
                f"overdamped bath (gamma={self.gamma} >= 2*omega0={2 * self.omega0}) is not supported"
            )

    @classmethod
    def from_alpha(cls, alpha, Gamma, omega0=1.0, beta=math.inf):
        """Build from the coupling ``alpha = lam^2 gamma / omega0^4`` and width ``Gamma = gamma/2``."""
        gamma = 2.0 * Gamma
        return cls(omega0=omega0, gamma=gamma, lam=math.sqrt(alpha * omega0**4 / gamma), beta=beta)

    @property
    def lam2(self):
        return self.lam**2

    @property
    def Omega(self):
        return math.sqrt(self.omega0**2 - self.gamma**2 / 4)

    @property
    def Gamma(self):
        return self.gamma / 2

    @property
    def alpha(self):
        return self.lam2 * self.gamma / self.omega0**4

    @property
    def zero_temperature(self):
        return math.isinf(self.beta)

    def spectral_density(self, w):
        w = np.asarray(w, dtype=float)
        return self.gamma * self.lam2 * w / ((w**2 - self.omega0**2) ** 2 + self.gamma**2 * w**2)

    def _j_coth(self, w):
        """``J(w) coth(beta w / 2)`` with the finite limit at ``w = 0``."""
        w = np.asarray(w, dtype=float)
        reduced = self.gamma * self.lam2 / ((w**2 - self.omega0**2) ** 2 + self.gamma**2 * w**2)
        if self.zero_temperature:
            return reduced * np.abs(w)
        x = self.beta * w / 2
        small = np.abs(x) < 1e-6
        safe = np.where(small, 1.0, x)
        w_coth = np.where(small, (2 / self.beta) * (1 + x**2 / 3), w / np.tanh(safe))
        return reduced * w_coth


@dataclass(frozen=True)
class QuadratureConfig:
    omega_max_factor: float = 50.0
    epsabs: float = 1e-10
    epsrel: float = 1e-10
    limit: int = 2000
    include_tail: bool = True


def _quad(fun, a, b, cfg, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if math.isinf(b):
            # QAWF only honours epsabs; QAGI takes both
            if "weight" in kw:
                val, err = integrate.quad(fun, a, b, epsabs=cfg.epsabs, limlst=200, **kw)
            else:
                val, err = integrate.quad(fun, a, b, epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=cfg.limit)
        else:
            val, err = integrate.quad(fun, a, b, epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=cfg.limit, **kw)
    return val, err


def bath_correlation(t, bath: BathSpec, quad: QuadratureConfig = QuadratureConfig()):
    """Bath correlation ``C(t)`` by direct frequency quadrature.

    The integral over ``[0, omega_max]`` is done adaptively with an
    oscillatory weight; the remainder to infinity is added unless
    ``quad.include_tail`` is false.  Accepts a scalar or an array of times.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t_arr.shape, dtype=complex)
    w_max = quad.omega_max_factor * bath.omega0
    w_mid = min(2 * bath.omega0, w_max)
    re_f = lambda w: bath._j_coth(w) / math.pi  # noqa: E731
    im_f = lambda w: -bath.spectral_density(w) / math.pi  # noqa: E731
    for i, ti in enumerate(t_arr.flat):
        tau = abs(ti)
        pieces = [(0.0, w_mid), (w_mid, w_max)]
        if quad.include_tail:
            pieces.append((w_max, math.inf))
        re = im = 0.0
        err_total = 0.0
        for a, b in pieces:
            if tau == 0.0:
                v, e = _quad(re_f, a, b, quad)
                re += v
                err_total += e
            else:
                v, e = _quad(re_f, a, b, quad, weight="cos", wvar=tau)
                re += v
                err_total += e
                v, e = _quad(im_f, a, b, quad, weight="sin", wvar=tau)
                im += math.copysign(1.0, ti) * v
                err_total += e
        if not math.isfinite(re + im) or err_total > 1e3 * quad.epsabs + 1e-8 * abs(complex(re, im)):
            raise QuadratureError(f"bath correlation quadrature did not converge at t={ti}", err_total)
        out.flat[i] = complex(re, im)
    return out[0] if np.ndim(t) == 0 else out


# --- zero-temperature Matsubara integral ------------------------------------

_GL_ORDER = 20
_X_LO, _X_HI = 1e-4, 1e4


@lru_cache(maxsize=64)
def _mats_nodes(omega0, gamma):
    """Gauss-Legendre nodes and weights for ``int_0^inf x f(x) / P(x) dx``.

    ``P(x) = (x^2 + w0^2)^2 - gamma^2 x^2`` is the Brownian denominator on
    the imaginary frequency axis.  Panels are geometric in ``x`` with extra
    breakpoints around the near-critical minimum of ``P``.
    """
    edges = [0.0, *np.geomspace(_X_LO * omega0, _X_HI * omega0, 97)]
    if gamma**2 > 2 * omega0**2:
        x_pk = math.sqrt((gamma**2 - 2 * omega0**2) / 2)
        width = math.sqrt(omega0**2 - gamma**2 / 4)
        extra = x_pk + width * np.linspace(-8, 8, 33)
        edges.extend(extra[(extra > 0) & (extra < _X_HI * omega0)])
    edges = np.unique(np.asarray(edges))
    xg, wg = np.polynomial.legendre.leggauss(_GL_ORDER)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (b - a) * xg + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * wg).ravel()
    p = (x**2 + omega0**2) ** 2 - gamma**2 * x**2
    return x, w * x / p


def zero_temperature_matsubara(t, bath: BathSpec):
    """``M(t) = -(lam^2 gamma / pi) int_0^inf x exp(-x|t|) / P(x) dx``.

    This is the full classical correlation at zero temperature.  It is
    real, negative, and decays like ``-alpha / (pi t^2)``.
    """
    t_arr = np.abs(np.atleast_1d(np.asarray(t, dtype=float)))
    x, w = _mats_nodes(bath.omega0, bath.gamma)
    out = np.empty(t_arr.shape)
    flat = t_arr.ravel()
    res = out.reshape(-1)
    x_hi = _X_HI * bath.omega0
    for s in range(0, flat.size, 512):
        chunk = flat[s : s + 512]
        res[s : s + 512] = np.exp(-np.outer(chunk, x)) @ w + special.expn(3, x_hi * chunk) / x_hi**2
    out *= -bath.lam2 * bath.gamma / math.pi
    return out[0] if np.ndim(t) == 0 else out


def _zero_temperature_matsubara_quad(t, bath: BathSpec):
    """Scalar adaptive-quadrature version of :func:`zero_temperature_matsubara` (oracle)."""
    p = lambda x: (x**2 + bath.omega0**2) ** 2 - bath.gamma**2 * x**2  # noqa: E731
    val, _ = integrate.quad(lambda x: x * math.exp(-x * abs(t)) / p(x), 0, math.inf, epsabs=1e-14, epsrel=1e-12, limit=500)
    return -bath.lam2 * bath.gamma / math.pi * val


# --- classical/quantum split --------------------------------------------------


@dataclass(frozen=True)
class CorrelationSplit:
    """``C(t) = c_class(t) + c_q(t)`` for a Brownian bath.

    ``c_q`` is the zero-temperature resonant contribution, identical at
    every temperature.  ``c_class`` collects the thermal correction to the
    resonance plus all Matsubara terms; it is real and even in ``t``.
    """

    bath: BathSpec
    k_mats: int
    mats_weights: np.ndarray = field(repr=False)
    mats_rates: np.ndarray = field(repr=False)

    @property
    def coth_resonance(self):
        """``coth(beta (Omega + i Gamma) / 2)``; equals 1 at zero temperature."""
        b = self.bath
        if b.zero_temperature:
            return 1.0 + 0.0j
        return 1.0 / np.tanh(b.beta * complex(b.Omega, b.Gamma) / 2)

    def quantum(self, t):
        b = self.bath
        t = np.asarray(t, dtype=float)
        return b.lam2 / (2 * b.Omega) * np.exp(-1j * b.Omega * t - b.Gamma * np.abs(t))

    def resonant_classical(self, t):
        b = self.bath
        at = np.abs(np.asarray(t, dtype=float))
        z = self.coth_resonance
        return (
            b.lam2 / (2 * b.Omega) * ((z.real - 1) * np.cos(b.Omega * at) - z.imag * np.sin(b.Omega * at)) * np.exp(-b.Gamma * at)
        )

    def matsubara(self, t):
        """Non-resonant (Matsubara) part of ``c_class``."""
        if self.bath.zero_temperature:
            return zero_temperature_matsubara(t, self.bath)
        t = np.asarray(t, dtype=float)
        at = np.abs(t).ravel()
        out = np.zeros(at.shape)
        for s in range(0, self.k_mats, 256):
            rates = self.mats_rates[s : s + 256]
            out += np.exp(-np.outer(at, rates)) @ self.mats_weights[s : s + 256]
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def classical(self, t):
        return self.resonant_classical(t) + self.matsubara(t)

    def __call__(self, t):
        return self.classical(t) + self.quantum(t)


def _matsubara_terms(bath, k):
    nu = 2 * math.pi * np.arange(1, k + 1) / bath.beta
    p = (nu**2 + bath.omega0**2) ** 2 - bath.gamma**2 * nu**2
    return -(2 * bath.gamma * bath.lam2 / bath.beta) * nu / p, nu


def brownian_correlation_split(bath: BathSpec, k_mats: int | None = None, rel_tol: float = 1e-8, k_cap: int = 2_000_000):
    """Analytic classical/quantum split of the Brownian correlation.

    With ``k_mats=None`` the Matsubara sum is truncated at the first term
    whose magnitude falls below ``rel_tol * |c_class(0)|``.
    """
    if bath.zero_temperature:
        return CorrelationSplit(bath, 0, np.zeros(0), np.zeros(0))
    if k_mats is None:
        weights, _ = _matsubara_terms(bath, k_cap)
        z = 1.0 / np.tanh(bath.beta * complex(bath.Omega, bath.Gamma) / 2)
        c0 = bath.lam2 / (2 * bath.Omega) * (z.real - 1) + np.cumsum(weights)
        below = np.abs(weights[1:]) < rel_tol * np.abs(c0[:-1])
        if not below.any():
            raise NumericalError(f"Matsubara sum did not reach relative tolerance {rel_tol} within {k_cap} terms")
        k_mats = int(np.argmax(below)) + 1
    if k_mats < 0:
        raise ConfigError("k_mats must be non-negative")
    weights, rates = _matsubara_terms(bath, k_mats)
    return CorrelationSplit(bath, k_mats, weights, rates)


# --- cosine-series (field) coefficients ---------------------------------------


class FieldCoefficients(NamedTuple):
    coeffs: np.ndarray
    max_residual: float


def _cosine_series(coeffs, t, horizon_T):
    n = np.arange(1, len(coeffs))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full(t.shape, coeffs[0], dtype=np.result_type(coeffs, float))
    for s in range(0, n.size, 1024):
        nn = n[s : s + 1024]
        out = out + 2 * np.cos(np.outer(t, nn) * math.pi / horizon_T) @ coeffs[1:][s : s + 1024]
    return out


def _series_residual(c_fn, coeffs, horizon_T, n_check=2001):
    tc = np.linspace(0, horizon_T, n_check)
    return float(np.max(np.abs(_cosine_series(coeffs, tc, horizon_T) - c_fn(tc))))


def field_coefficients(c_fn: Callable, horizon_T: float, n_xi: int, order: int = 16) -> FieldCoefficients:
    """Cosine coefficients ``c_n = (1/T) int_0^T cos(n pi tau / T) c(tau) dtau`` for ``n = 0..n_xi``.

    ``c_fn`` must be vectorised and even in time.  Composite Gauss-Legendre
    on uniform panels, graded towards ``tau = 0`` where fast Matsubara
    exponentials live.
    """
    if horizon_T <= 0 or n_xi < 0:
        raise ConfigError("horizon_T must be positive and n_xi non-negative")
    n_panels = max(64, n_xi // 2 + 1)
    edges = np.union1d(np.linspace(0, horizon_T, n_panels + 1), horizon_T * np.geomspace(1e-8, 1.0 / n_panels, 24))
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    tau = (0.5 * (b - a) * xg + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * wg).ravel() * np.real(c_fn(tau)) / horizon_T
    coeffs = np.empty(n_xi + 1)
    n = np.arange(n_xi + 1)
    for s in range(0, n_xi + 1, 128):
        coeffs[s : s + 128] = np.cos(np.outer(n[s : s + 128], tau) * math.pi / horizon_T) @ w
    return FieldCoefficients(coeffs, _series_residual(c_fn, coeffs, horizon_T))


def _exp_cos_coeffs(rate, horizon_T, n):
    """``(1/T) int_0^T cos(w_n tau) exp(-rate tau) dtau`` for complex ``rate``."""
    wn = n * math.pi / horizon_T
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    return rate * (1 - sign * np.exp(-rate * horizon_T)) / (rate**2 + wn**2) / horizon_T


def brownian_field_coefficients(bath: BathSpec, horizon_T: float, n_xi: int, k_mats: int | None = None) -> FieldCoefficients:
    """Closed-form cosine coefficients of ``c_class`` for the Brownian bath."""
    split = brownian_correlation_split(bath, k_mats)
    n = np.arange(n_xi + 1)
    pref = bath.lam2 / (2 * bath.Omega)
    if bath.zero_temperature:
        x, w = _mats_nodes(bath.omega0, bath.gamma)
        wn = n * math.pi / horizon_T
        sign = np.where(n % 2 == 0, 1.0, -1.0)
        coeffs = np.empty(n_xi + 1)
        decay = np.exp(-x * horizon_T)
        for s in range(0, n_xi + 1, 256):
            sl = slice(s, s + 256)
            kernel = x * (1 - np.outer(sign[sl], decay)) / (x**2 + wn[sl, None] ** 2)
            coeffs[sl] = kernel @ w
        coeffs *= -bath.lam2 * bath.gamma / (math.pi * horizon_T)
    else:
        z = split.coth_resonance
        # (R-1) cos(W t) - I sin(W t) = Re[(R - 1 + i I) exp(i W t)]
        e_plus = _exp_cos_coeffs(complex(bath.Gamma, -bath.Omega), horizon_T, n)
        coeffs = pref * np.real((z.real - 1 + 1j * z.imag) * e_plus)
        for s in range(0, split.k_mats, 256):
            wk = split.mats_weights[s : s + 256]
            rk = split.mats_rates[s : s + 256]
            coeffs = coeffs + np.real(_exp_cos_coeffs(rk[None, :].astype(complex), horizon_T, n[:, None])) @ wk
    return FieldCoefficients(coeffs, _series_residual(split.classical, coeffs, horizon_T))


# --- spectra ------------------------------------------------------------------


def quantum_spectrum(omega, bath: BathSpec):
    w = np.asarray(omega, dtype=float)
    return (bath.lam2 * bath.Gamma / bath.Omega) / ((bath.Omega + w) ** 2 + bath.Gamma**2)


def classical_spectrum(omega, bath: BathSpec):
    """Fourier transform ``int c_class(t) exp(-i w t) dt`` (real)."""
    w = np.asarray(omega, dtype=float)
    aw = np.abs(w)
    j = bath.spectral_density(aw)
    jc = bath._j_coth(aw)
    s_b = np.where(w > 0, jc - j, np.where(w < 0, jc + j, jc))
    return s_b - quantum_spectrum(w, bath)


def crossover_beta(bath: BathSpec, rtol: float = 1e-6):
    """Inverse temperature at which ``S_class(0)`` changes sign.

    The closed form ``4 Omega / omega0^2`` is cross-checked against a
    bracketing root search on the spectrum itself.
    """
    closed = 4 * bath.Omega / bath.omega0**2

    def s0(beta):
        return float(classical_spectrum(0.0, BathSpec(bath.omega0, bath.gamma, bath.lam, beta)))

    lo, hi = closed * 1e-3, closed * 1e3
    if s0(lo) * s0(hi) > 0:
        raise NumericalError("classical spectrum at zero frequency does not change sign")
    root = optimize.brentq(s0, lo, hi, xtol=1e-14 * closed, rtol=1e-14)
    if abs(root - closed) > rtol * closed:
        raise NumericalError(f"crossover root {root} disagrees with closed form {closed}")
    return root


# --- Matsubara fitting ----------------------------------------------------------


class MatsubaraFit(NamedTuple):
    weights: np.ndarray
    rates: np.ndarray
    max_residual: float


def fit_matsubara_modes(
    t, values, n_mats: int, omega0: float = 1.0, n_starts: int = 6, reweight_iters: int = 30
) -> MatsubaraFit:
    """Least-squares fit ``values ~ sum_k w_k exp(-r_k t)`` with ``r_k > 0``.

    Variable projection: the weights are solved linearly for given rates,
    and the log-rates are refined by Levenberg-Marquardt from several
    log-spaced starting sets.  The unweighted optimum is then reweighted
    (Lawson iterations) towards the minimax fit, and the iterate with the
    smallest maximum residual is returned.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if n_mats == 0:
        return MatsubaraFit(np.zeros(0), np.zeros(0), float(np.max(np.abs(y))) if y.size else 0.0)
    if t.size < 2 * n_mats:
        raise ConfigError("need at least two samples per fitted exponential")

    def solve(log_r, sw):
        a = np.exp(-np.outer(t, np.exp(log_r)))
        w, *_ = np.linalg.lstsq(a * sw[:, None], y * sw, rcond=None)
        return a @ w - y, w

    def refine(p0, sw):
        sol = optimize.least_squares(lambda p: sw * solve(p, sw)[0], p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        return sol.x

    ones = np.ones_like(t)
    starts = []
    for shift in np.geomspace(0.3, 3.0, n_starts):
        p0 = np.log(np.geomspace(0.1, 10.0, n_mats) * omega0 * shift) if n_mats > 1 else np.log([omega0 * shift])
        p = refine(p0, ones)
        starts.append((float(np.max(np.abs(solve(p, ones)[0]))), p))
    best_cost, best_p = min(starts, key=lambda s: s[0])
    best_sw = ones
    floor = 1e-12 * max(float(np.max(np.abs(y))), 1e-300)
    weights = ones / t.size
    p = best_p
    for _ in range(reweight_iters if best_cost > floor else 0):
        sw = np.sqrt(weights)
        p = refine(p, sw)
        r, _w = solve(p, sw)
        cost = float(np.max(np.abs(r)))
        if cost < best_cost:
            best_cost, best_p, best_sw = cost, p, sw
        weights = weights * np.abs(r)
        if weights.sum() <= 0:
            break
        weights = weights / weights.sum()
    r, w = solve(best_p, best_sw)
    order = np.argsort(best_p)
    return MatsubaraFit(w[order], np.exp(best_p)[order], float(np.max(np.abs(r))))
