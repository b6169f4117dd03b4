"""Gaussian stochastic fields with a prescribed cosine-series correlation.

A field with coefficients ``c_n`` on horizon ``T`` is

    xi(t) = sum_{n=0}^{N} A_n (xi_n cos(w_n t) + xi_{-n} sin(w_n t)),
    w_n = n pi / T,  A_0 = sqrt(c_0),  A_n = sqrt(2 c_n),

with independent standard normal draws (``xi_{-0}`` is never used).
Negative ``c_n`` give purely imaginary amplitudes.  Every trajectory is
split into the real part built from the non-negative coefficients and the
coefficient of ``i`` built from the negative ones, so the regularised
field ``re + Xi * im`` can be formed from the same draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "FieldSpec",
    "FieldTrajectory",
    "FieldBatch",
    "sample_field",
    "regularized_field",
    "empirical_autocorrelation",
    "difference_field_spec",
    "stream_generator",
]


@dataclass(frozen=True, eq=False)
class FieldSpec:
    coeffs: np.ndarray
    horizon_T: float
    seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 1 or c.size == 0:
            raise ConfigError("field coefficients must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ConfigError("field coefficients must be finite")
        if not self.horizon_T > 0:
            raise ConfigError("field horizon_T must be positive")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_xi(self):
        return self.coeffs.size - 1

    @property
    def frequencies(self):
        return np.arange(self.n_xi + 1) * math.pi / self.horizon_T

    @property
    def is_real(self):
        return bool(np.all(np.real(self.coeffs) >= 0) and np.all(np.imag(self.coeffs) == 0))

    def amplitudes(self):
        """Split amplitudes ``(a_re, a_im)``; the sqrt(2) applies for ``n >= 1``."""
        c = np.real(self.coeffs)
        if np.any(np.imag(self.coeffs) != 0):
            raise ConfigError("complex field coefficients cannot be sampled; regularise them first")
        scale = np.full(c.size, 2.0)
        scale[0] = 1.0
        a_re = np.sqrt(scale * np.clip(c, 0, None))
        a_im = np.sqrt(scale * np.clip(-c, 0, None))
        return a_re, a_im

    def correlation(self, t):
        """Analytic correlation ``c_0 + 2 sum c_n cos(w_n t)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full(t.shape, self.coeffs[0], dtype=np.result_type(self.coeffs, float))
        w = self.frequencies[1:]
        for s in range(0, w.size, 1024):
            out = out + 2 * np.cos(np.outer(t, w[s : s + 1024])) @ self.coeffs[1:][s : s + 1024]
        return out


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one ``(seed, stream)`` pair.

    Streams are independent of each other and of how work is scheduled.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _basis(w, t):
    """Rows ``[cos(w_n t)]_{n=0..N}`` and ``[sin(w_n t)]_{n=1..N}`` stacked."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ph = np.outer(t, w)
    return np.concatenate([np.cos(ph), np.sin(ph[:, 1:])], axis=1)


@dataclass(frozen=True, eq=False)
class FieldTrajectory:
    spec: FieldSpec
    stream: int
    draws: np.ndarray

    def _weights(self):
        a_re, a_im = self.spec.amplitudes()
        n = self.spec.n_xi
        cos_d, sin_d = self.draws[: n + 1], self.draws[n + 1 :]
        w_re = np.concatenate([a_re * cos_d, a_re[1:] * sin_d])
        w_im = np.concatenate([a_im * cos_d, a_im[1:] * sin_d])
        return w_re, w_im

    def parts(self, t):
        """Real part and coefficient of ``i``, each real-valued."""
        w_re, w_im = self._weights()
        b = _basis(self.spec.frequencies, t)
        re, im = b @ w_re, b @ w_im
        if np.ndim(t) == 0:
            return float(re[0]), float(im[0])
        return re, im

    def __call__(self, t):
        re, im = self.parts(t)
        return np.asarray(re) + 1j * np.asarray(im) if np.ndim(t) else complex(re, im)


def sample_field(spec: FieldSpec, stream: int, antithetic: bool = False) -> FieldTrajectory:
    """Draw trajectory ``stream``.

    With ``antithetic`` set, odd streams reuse the draws of the preceding
    even stream with opposite sign.
    """
    base = stream - (stream % 2) if antithetic else stream
    draws = stream_generator(spec.seed, base).standard_normal(2 * spec.n_xi + 1)
    if antithetic and stream % 2:
        draws = -draws
    return FieldTrajectory(spec, stream, draws)


def regularized_field(traj: FieldTrajectory, lam):
    """Field ``t -> re(t) + Xi(lam) im(t)`` built from the draws of ``traj``."""
    xi = (1 + lam) / 2

    def field_fn(t):
        re, im = traj.parts(t)
        return np.asarray(re) + xi * np.asarray(im)

    return field_fn


class FieldBatch:
    """Many trajectories evaluated together, each with its own ``Xi`` factor.

    ``values(t)`` returns one complex (or real) sample per column.  This is
    what the batched propagator consumes.
    """

    def __init__(self, trajectories, xi_factors=None):
        if not trajectories:
            raise ConfigError("empty trajectory batch")
        spec = trajectories[0].spec
        if any(tr.spec.n_xi != spec.n_xi or tr.spec.horizon_T != spec.horizon_T for tr in trajectories):
            raise ConfigError("batched trajectories must share n_xi and horizon_T")
        self.frequencies = spec.frequencies
        xi = np.ones(len(trajectories)) if xi_factors is None else np.asarray(xi_factors)
        w_re, w_im = zip(*(tr._weights() for tr in trajectories))
        w = np.asarray(w_re) + xi[:, None] * np.asarray(w_im)
        keep = np.any(w != 0, axis=0)
        self._w = w[:, keep]
        n = self.frequencies.size
        self._cos_keep = keep[:n]
        self._sin_keep = keep[n:]
        self.size = len(trajectories)

    def values(self, t):
        ph = self.frequencies * t
        b = np.concatenate([np.cos(ph[self._cos_keep]), np.sin(ph[1:][self._sin_keep])])
        return self._w @ b


def empirical_autocorrelation(ensemble, t_grid, t_ref: float = 0.0):
    """Ensemble mean of ``xi(t) xi(t_ref)`` and its standard error."""
    t_grid = np.asarray(t_grid, dtype=float)
    prods = np.array([tr(t_grid) * tr(t_ref) for tr in ensemble])
    n = prods.shape[0]
    mean = prods.mean(axis=0)
    if n < 2:
        return mean, np.zeros(t_grid.shape)
    stderr = np.sqrt(prods.real.var(axis=0, ddof=1) + prods.imag.var(axis=0, ddof=1)) / math.sqrt(n)
    return mean, stderr


def difference_field_spec(target: FieldSpec, original: FieldSpec, seed: int | None = None) -> FieldSpec:
    """Field whose coefficients are ``target - original``."""
    if target.n_xi != original.n_xi or target.horizon_T != original.horizon_T:
        raise ConfigError("difference field needs equal lengths and horizons")
    return FieldSpec(target.coeffs - original.coeffs, target.horizon_T, target.seed if seed is None else seed)
