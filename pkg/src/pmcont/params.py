"""Pseudomode parameter sets, their regularisation and construction from a bath."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bath import (
    BathSpec,
    brownian_correlation_split,
    brownian_field_coefficients,
    fit_matsubara_modes,
)
from .errors import ConfigError
from .field import FieldSpec

__all__ = [
    "Mode",
    "PseudomodeSet",
    "LAMBDA_C",
    "xi_map",
    "regularize_param",
    "regularize_set",
    "antimode_set",
    "restructure_set",
    "merge_degenerate_modes",
    "brownian_hybrid_pm",
    "brownian_deterministic_pm",
]

LAMBDA_C = complex(-1, 2)
_KINDS = ("omega", "g2", "gamma", "nbar", "field")


def _is_physical(x):
    x = complex(x)
    return x.imag == 0 and x.real >= 0


@dataclass(frozen=True)
class Mode:
    """Damped bosonic mode: frequency, squared coupling, damping, occupation."""

    omega: complex
    g2: complex
    gamma: complex
    nbar: complex = 0.0
    fock_dim: int = 6

    def __post_init__(self):
        if self.fock_dim < 2:
            raise ConfigError("fock_dim must be at least 2")
        for name in ("omega", "g2", "gamma", "nbar"):
            if not np.isfinite(complex(getattr(self, name))):
                raise ConfigError(f"mode.{name} must be finite")

    @property
    def is_physical(self):
        return (
            _is_physical(self.omega) and _is_physical(self.g2) and _is_physical(self.gamma) and _is_physical(self.nbar)
        )

    def correlation(self, t):
        """Contribution ``g2 [(n+1) e^{-i W t} + n e^{i W t}] e^{-gamma |t|}`` to the bath correlation."""
        t = np.asarray(t, dtype=float)
        g2, w, gm, n = (complex(x) for x in (self.g2, self.omega, self.gamma, self.nbar))
        return g2 * ((n + 1) * np.exp(-1j * w * t) + n * np.exp(1j * w * t)) * np.exp(-gm * np.abs(t))


@dataclass(frozen=True)
class PseudomodeSet:
    modes: tuple = ()
    field: FieldSpec | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def is_physical(self):
        return all(m.is_physical for m in self.modes) and (self.field is None or self.field.is_real)

    def correlation(self, t):
        """Analytic total correlation (modes plus field series)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for m in self.modes:
            out = out + m.correlation(t)
        if self.field is not None:
            out = out + self.field.correlation(np.atleast_1d(t)).reshape(t.shape)
        return out

    def with_fock_dims(self, dims):
        if len(dims) != len(self.modes):
            raise ConfigError("one Fock dimension per mode is required")
        return replace(self, modes=tuple(replace(m, fock_dim=int(d)) for m, d in zip(self.modes, dims)))


def xi_map(lam):
    """``Xi(lam) = (1 + lam) / 2``; maps ``[-1, 1]`` onto ``[0, 1]`` and ``-1 + 2i`` onto ``i``."""
    return (1 + lam) / 2


def _f_lambda(x, lam):
    # theta(x) = 1 for x >= 0
    return x if x >= 0 else xi_map(lam) ** 2 * abs(x)


def regularize_param(eta, lam):
    """``F(Re eta) + Xi(lam) F(Im eta)``: physical for real ``lam`` in [-1, 1], ``eta`` at ``LAMBDA_C``."""
    eta = complex(eta)
    out = _f_lambda(eta.real, lam) + xi_map(lam) * _f_lambda(eta.imag, lam)
    if isinstance(lam, complex) and lam.imag != 0:
        return complex(out)
    out = complex(out)
    return out.real if out.imag == 0 else out


def _regularize_coeffs(c, lam):
    c = np.real(np.asarray(c))
    xi = xi_map(lam)
    return np.where(c >= 0, c, xi**2 * np.abs(c))


def regularize_set(pm: PseudomodeSet, lam, which=_KINDS) -> PseudomodeSet:
    """Apply :func:`regularize_param` to every parameter of the selected kinds.

    Physical entries are fixed points of the map, so the selector only
    matters for deliberately leaving unphysical entries untouched.
    """
    unknown = set(which) - set(_KINDS)
    if unknown:
        raise ConfigError(f"unknown parameter kinds {sorted(unknown)}")
    modes = []
    for m in pm.modes:
        kw = {k: regularize_param(getattr(m, k), lam) for k in ("omega", "g2", "gamma", "nbar") if k in which}
        modes.append(replace(m, **kw))
    fld = pm.field
    if fld is not None and "field" in which:
        fld = FieldSpec(_regularize_coeffs(fld.coeffs, lam), fld.horizon_T, fld.seed)
    return PseudomodeSet(tuple(modes), fld, pm.label)


def antimode_set(pm: PseudomodeSet) -> PseudomodeSet:
    """Negate every squared coupling and every field coefficient."""
    modes = tuple(replace(m, g2=-m.g2) for m in pm.modes)
    fld = None if pm.field is None else FieldSpec(-pm.field.coeffs, pm.field.horizon_T, pm.field.seed)
    return PseudomodeSet(modes, fld, f"anti({pm.label})" if pm.label else "anti")


def _add_fields(a: FieldSpec | None, b: FieldSpec | None):
    if a is None or b is None:
        return a if b is None else b
    if a.n_xi != b.n_xi or a.horizon_T != b.horizon_T:
        raise ConfigError("fields must share n_xi and horizon_T to be combined")
    return FieldSpec(a.coeffs + b.coeffs, a.horizon_T, a.seed)


def restructure_set(target: PseudomodeSet, original: PseudomodeSet) -> PseudomodeSet:
    """``target`` together with the antimodes of ``original``.

    Two independent Gaussian fields add to one whose coefficients are the sum.
    """
    anti = antimode_set(original)
    return PseudomodeSet(target.modes + anti.modes, _add_fields(target.field, anti.field), "restructure")


def merge_degenerate_modes(pm: PseudomodeSet, tol: float = 1e-14) -> PseudomodeSet:
    """Combine modes with identical ``(omega, gamma, nbar)`` by adding ``g2``.

    The merged couplings reproduce the same total correlation.  Modes whose
    summed ``g2`` vanishes decouple and are dropped.
    """
    groups: dict = {}
    for m in pm.modes:
        key = (complex(m.omega), complex(m.gamma), complex(m.nbar))
        if key in groups:
            prev = groups[key]
            groups[key] = replace(prev, g2=complex(prev.g2) + complex(m.g2), fock_dim=max(prev.fock_dim, m.fock_dim))
        else:
            groups[key] = m
    modes = tuple(m for m in groups.values() if abs(complex(m.g2)) > tol)
    return PseudomodeSet(modes, pm.field, pm.label)


def brownian_hybrid_pm(
    bath: BathSpec, horizon_T: float, n_xi: int, fock_dim: int = 6, seed: int = 0, k_mats: int | None = None
) -> PseudomodeSet:
    """One resonant zero-temperature mode plus the classical field."""
    res = Mode(omega=bath.Omega, g2=bath.lam2 / (2 * bath.Omega), gamma=bath.Gamma, nbar=0.0, fock_dim=fock_dim)
    coeffs = brownian_field_coefficients(bath, horizon_T, n_xi, k_mats).coeffs
    return PseudomodeSet((res,), FieldSpec(coeffs, horizon_T, seed), "hybrid")


def brownian_deterministic_pm(
    bath: BathSpec,
    n_mats: int = 2,
    fock_dim: int = 6,
    aux_fock_dim: int = 2,
    fit_horizon: float | None = None,
    n_fit: int = 400,
    k_mats: int | None = None,
) -> PseudomodeSet:
    """Mode-only representation of the full Brownian correlation.

    Finite temperature: a thermal resonant mode, two overdamped modes with
    complex rates carrying the ``sin`` part of the thermal correction, and
    ``n_mats`` modes fitted to the Matsubara tail.  Zero temperature: one
    resonant mode plus the fitted modes.  The auxiliary modes use
    ``aux_fock_dim`` levels.
    """
    split = brownian_correlation_split(bath, k_mats)
    W, G, lam2 = bath.Omega, bath.Gamma, bath.lam2
    if bath.zero_temperature:
        modes = [Mode(W, lam2 / (2 * W), G, 0.0, fock_dim)]
    else:
        z = split.coth_resonance
        modes = [
            Mode(W, lam2 / (2 * W), G, (z.real - 1) / 2, fock_dim),
            Mode(0.0, 1j * z.imag * lam2 / (4 * W), complex(G, -W), 0.0, aux_fock_dim),
            Mode(0.0, -1j * z.imag * lam2 / (4 * W), complex(G, W), 0.0, aux_fock_dim),
        ]
    if n_mats:
        horizon = 10.0 / bath.omega0 if fit_horizon is None else fit_horizon
        t = np.linspace(0, horizon, n_fit)
        fit = fit_matsubara_modes(t, split.matsubara(t), n_mats, bath.omega0)
        modes += [Mode(0.0, float(w), float(r), 0.0, aux_fock_dim) for w, r in zip(fit.weights, fit.rates)]
    return PseudomodeSet(tuple(modes), None, "deterministic")
