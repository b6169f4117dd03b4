"""End-to-end experiments: parameter sweeps over physical ensembles,
continuation to the target point, and comparison against oracles.

Scenarios
---------
``simulate``
    Hybrid model of the *target* bath (one zero-temperature resonant mode
    plus the classical field), imaginary field parts scaled by ``Xi``.
``mitigate``
    Deterministic model of the physical bath, plus the regularised
    resonant antimode and the regularised antifield.
``restructure``
    Deterministic model of the physical bath plus the regularised
    difference field between target and original temperature.
``direct``
    Hybrid model with a purely real field; no sweep is needed.

Stochastic runs use the same draws for a trajectory at every sweep point,
so each trajectory is a smooth function of the sweep parameter and the
continuation does not amplify the Monte Carlo scatter independently at
each point.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .bath import BathSpec, brownian_field_coefficients
from .errors import ConfigError, PropagationError
from .extrapolation import (
    SweepTable,
    design_matrix,
    equispaced_grid,
    evaluate_at,
    least_squares_fit,
    stability_bound,
)
from .field import FieldBatch, FieldSpec, difference_field_spec, sample_field, stream_generator
from .lindblad import (
    PAULI,
    IntegratorConfig,
    SystemSpec,
    bloch_vector,
    build_generator,
    initial_state,
    propagate,
)
from .params import (
    LAMBDA_C,
    Mode,
    PseudomodeSet,
    antimode_set,
    brownian_deterministic_pm,
    merge_degenerate_modes,
    regularize_set,
    xi_map,
)

__all__ = [
    "ExperimentPreset",
    "ReconstructionBundle",
    "Comparison",
    "run_lambda_sweep",
    "reconstruct",
    "physical_regularization",
    "inject_noise",
    "free_dynamics",
    "bath_dynamics",
    "hybrid_dynamics",
    "mitigation_experiment",
    "simulation_experiment",
    "restructuring_experiment",
    "direct_simulation",
    "gate_fidelity_experiment",
    "error_vs_order_study",
]

MODES = ("simulate", "mitigate", "restructure", "direct")
OBS = ("x", "y", "z")


@dataclass(frozen=True)
class ExperimentPreset:
    """Everything needed to run one experiment reproducibly."""

    name: str
    mode: str
    system: SystemSpec
    bath: BathSpec | None = None
    target_beta: float | None = None
    t_end: float = 10.0
    n_t: int = 101
    n_exp: int = 12
    order_M: int = 10
    n_traj: int = 0
    averaging: str = "auto"
    antifield: bool = True
    antithetic: bool = False
    traj_chunk: int = 32
    n_xi: int = 100
    horizon_T: float | None = None
    fock_dim: int = 6
    aux_fock_dim: int = 3
    n_mats: int = 2
    noise_sigma: float = 0.0
    seed: int = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    probe_time: float = 5.0
    m_range: tuple = (2, 16)
    n_resamples: int = 200
    gate_angle: float = math.pi
    gate_axis: str = "z"
    gate_times: tuple = ()
    oracle_traj: int | None = None
    sigmas: tuple = (1e-5,)

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))

    def validate(self):
        p = []
        if self.mode not in MODES:
            p.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.bath is None:
            p.append(f"{self.mode} needs a bath")
        if self.mode == "restructure" and self.target_beta is None:
            p.append("restructure needs target_beta")
        if self.target_beta is not None and not self.target_beta > 0:
            p.append("target_beta must be positive")
        if self.averaging not in ("auto", "stochastic", "deterministic"):
            p.append("averaging must be auto, stochastic or deterministic")
        if self.n_exp < 2:
            p.append("n_exp must be at least 2")
        if not 0 <= self.order_M <= self.n_exp - 1:
            p.append(f"order_M must lie in [0, n_exp-1] = [0, {self.n_exp - 1}]")
        if self.t_end <= 0 or self.n_t < 2:
            p.append("need t_end > 0 and n_t >= 2")
        if self.n_traj < 0 or self.traj_chunk < 1:
            p.append("n_traj must be non-negative and traj_chunk positive")
        if self.n_xi < 0:
            p.append("n_xi must be non-negative")
        if self.fock_dim < 2 or self.aux_fock_dim < 2:
            p.append("Fock dimensions must be at least 2")
        if self.noise_sigma < 0:
            p.append("noise_sigma must be non-negative")
        if self.oracle_traj is not None and self.oracle_traj < 1:
            p.append("oracle_traj must be positive")
        if any(s < 0 for s in self.sigmas):
            p.append("sigmas must be non-negative")
        if self.gate_axis not in OBS:
            p.append("gate_axis must be x, y or z")
        return p

    @property
    def t_grid(self):
        return np.linspace(0.0, self.t_end, self.n_t)

    @property
    def field_horizon(self):
        return 2.0 * self.t_end if self.horizon_T is None else self.horizon_T

    @property
    def lambda_grid(self):
        return equispaced_grid(self.n_exp)

    @property
    def deterministic(self):
        """Whether the sweep is evaluated without trajectories."""
        if self.averaging == "deterministic":
            return True
        if self.averaging == "stochastic":
            return False
        return self.n_traj == 0


# --- model assembly -------------------------------------------------------------


@lru_cache(maxsize=32)
def _field_coeffs(bath: BathSpec, horizon_T: float, n_xi: int):
    return brownian_field_coefficients(bath, horizon_T, n_xi).coeffs


@lru_cache(maxsize=32)
def _deterministic_bath(bath: BathSpec, n_mats: int, fock_dim: int, aux_fock_dim: int, fit_horizon: float):
    return brownian_deterministic_pm(bath, n_mats=n_mats, fock_dim=fock_dim, aux_fock_dim=aux_fock_dim, fit_horizon=fit_horizon)


def _resonant_mode(bath: BathSpec, fock_dim: int):
    return Mode(bath.Omega, bath.lam2 / (2 * bath.Omega), bath.Gamma, 0.0, fock_dim)


def _bath_pm(preset: ExperimentPreset, bath: BathSpec | None = None):
    b = preset.bath if bath is None else bath
    return _deterministic_bath(b, preset.n_mats, preset.fock_dim, preset.aux_fock_dim, max(preset.t_end, 1.0 / b.omega0))


def _scenario_field(preset: ExperimentPreset) -> FieldSpec | None:
    """Unregularised field of the sweep (imaginary parts are scaled by ``Xi`` later)."""
    T, n = preset.field_horizon, preset.n_xi
    b = preset.bath
    if preset.mode in ("simulate", "direct"):
        return FieldSpec(_field_coeffs(b, T, n), T, preset.seed)
    if preset.mode == "mitigate":
        if not preset.antifield or preset.deterministic:
            return None
        return FieldSpec(-_field_coeffs(b, T, n), T, preset.seed)
    target = FieldSpec(_field_coeffs(replace(b, beta=preset.target_beta), T, n), T, preset.seed)
    return difference_field_spec(target, FieldSpec(_field_coeffs(b, T, n), T, preset.seed))


def _scenario_modes(preset: ExperimentPreset, lam) -> PseudomodeSet:
    b = preset.bath
    if preset.mode in ("simulate", "direct"):
        return PseudomodeSet((_resonant_mode(b, preset.fock_dim),))
    bath_pm = _bath_pm(preset)
    if preset.mode == "restructure":
        return bath_pm
    anti_res = regularize_set(antimode_set(PseudomodeSet((_resonant_mode(b, preset.fock_dim),))), lam)
    modes = bath_pm.modes + anti_res.modes
    if preset.deterministic and preset.antifield:
        if not b.zero_temperature:
            raise ConfigError("deterministic averaging of the antifield is only available at zero temperature")
        # At zero temperature the classical correlation is the Matsubara part
        # alone, so the averaged (real) antifield is the antimode set of the
        # fitted Matsubara modes.
        mats = PseudomodeSet(bath_pm.modes[1:])
        modes = modes + antimode_set(mats).modes
    return merge_degenerate_modes(PseudomodeSet(modes))


def _lambda_dependent_modes(preset):
    return preset.mode == "mitigate"


# --- sweep execution ---------------------------------------------------------------


def _run_block(system, pm, t_grid, opts, trajectories=None, xi_factors=None):
    """Propagate one generator for a block of columns; returns Bloch data ``(n_t, B, 3)``."""
    gen = build_generator(system, pm)
    rho0 = initial_state(system, pm).reshape(-1, 1)
    if not trajectories:
        out = propagate(gen, rho0, t_grid, None, opts)
        return bloch_vector(out)
    batch = FieldBatch(trajectories, xi_factors)
    Y0 = np.repeat(rho0, batch.size, axis=1)
    out = propagate(gen, Y0, t_grid, batch.values, opts)
    return bloch_vector(out)


def _chunk_task(args):
    preset, lam_list, xi_list, streams, fld = args
    pm = _scenario_modes(preset, lam_list[0])
    trajs, xis = [], []
    for lam_xi in xi_list:
        for s in streams:
            trajs.append(sample_field(fld, s, preset.antithetic))
            xis.append(lam_xi)
    try:
        return _run_block(preset.system, pm, preset.t_grid, preset.integrator, trajs, xis)
    except PropagationError as exc:
        raise PropagationError(f"{exc} [lambda={lam_list}, trajectories {streams[0]}..{streams[-1]}]") from exc


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _stochastic_columns(preset, points, workers):
    """Trajectory-averaged Bloch vectors at each sweep point.

    ``points`` is a list of ``(lam, xi)`` pairs; ``lam`` selects the mode
    set and ``xi`` multiplies the imaginary field part.  Returns mean and
    standard error of shape ``(len(points), n_t, 3)``.
    """
    fld = _scenario_field(preset)
    n_traj = max(preset.n_traj, 1)
    chunks = [list(range(s, min(s + preset.traj_chunk, n_traj))) for s in range(0, n_traj, preset.traj_chunk)]
    if _lambda_dependent_modes(preset):
        groups = [([lam], [xi]) for lam, xi in points]
    else:
        groups = [([p[0] for p in points], [p[1] for p in points])]
    tasks = [(preset, lams, xis, ch, fld) for lams, xis in groups for ch in chunks]
    results = _map(_chunk_task, tasks, workers)
    # results[g * n_chunks + c] has shape (n_t, len(xis_g) * len(chunk_c), 3)
    per_point = []
    k = 0
    for lams, xis in groups:
        blocks = results[k : k + len(chunks)]
        k += len(chunks)
        for j in range(len(xis)):
            cols = [blk[:, j * len(ch) : (j + 1) * len(ch)] for blk, ch in zip(blocks, chunks)]
            per_point.append(np.concatenate(cols, axis=1))
    samples = np.stack(per_point)  # (P, n_t, n_traj, 3)
    mean = samples.mean(axis=2)
    if n_traj > 1:
        var = samples.real.var(axis=2, ddof=1) + samples.imag.var(axis=2, ddof=1)
        err = np.sqrt(var / n_traj)
    else:
        err = np.zeros(mean.shape)
    return mean, err


def _deterministic_columns(preset, lams):
    out = []
    for lam in lams:
        pm = _scenario_modes(preset, lam)
        out.append(_run_block(preset.system, pm, preset.t_grid, preset.integrator)[:, 0])
    arr = np.stack(out)  # (P, n_t, 3)
    return arr, np.zeros(arr.shape)


def _field_needed(preset):
    fld = _scenario_field(preset)
    return fld is not None and np.any(fld.coeffs != 0)


def run_lambda_sweep(preset: ExperimentPreset, workers: int = 1) -> SweepTable:
    """Observables ``<sigma_i>(t)`` at every real sweep point of ``preset``."""
    if preset.mode == "direct":
        raise ConfigError("direct mode has no sweep; use direct_simulation")
    grid = preset.lambda_grid
    if _field_needed(preset):
        mean, err = _stochastic_columns(preset, [(lam, xi_map(lam)) for lam in grid], workers)
    else:
        mean, err = _deterministic_columns(preset, grid)
    return SweepTable(grid, preset.t_grid, np.real(mean), OBS, err, 0.0)


def inject_noise(table: SweepTable, sigma: float, stream: int = 0, seed: int = 0) -> SweepTable:
    """Add iid ``N(0, sigma^2)`` to every sweep value."""
    if sigma < 0:
        raise ConfigError("noise sigma must be non-negative")
    if sigma == 0:
        return replace(table, noise_sigma=0.0)
    noise = stream_generator(seed, stream).normal(0.0, sigma, table.values.shape)
    return replace(table, values=table.values + noise, noise_sigma=sigma)


# --- reconstruction -----------------------------------------------------------------


class ReconstructionBundle(NamedTuple):
    t_grid: np.ndarray
    at_target: np.ndarray  # (n_t, 3) complex continued expectations
    bloch_reg: np.ndarray  # (n_t, 3) regularised Bloch vectors
    rho_reg: np.ndarray  # (n_t, 2, 2)
    err_stability: np.ndarray  # (n_t, 3)
    min_sv: float
    order_M: int
    n_points: int
    table: SweepTable


def physical_regularization(values):
    """Map continued expectations to a valid qubit state.

    Real parts form a Bloch vector ``r``; it is divided by
    ``Z = max(1, |r|^2)``.
    """
    r = np.real(np.asarray(values))
    z = np.maximum(1.0, np.sum(r**2, axis=-1, keepdims=True))
    r_reg = r / z
    rho = 0.5 * (np.eye(2) + sum(r_reg[..., i, None, None] * PAULI[k] for i, k in enumerate(OBS)))
    return r_reg, rho


def reconstruct(table: SweepTable, order_M: int, target=LAMBDA_C, sigma: float | None = None) -> ReconstructionBundle:
    """Fit every ``(t, observable)`` cell and continue it to ``target``."""
    if order_M > table.lambda_grid.size - 1:
        raise ConfigError("order_M exceeds the number of sweep points minus one")
    coeffs, _ = least_squares_fit(table.lambda_grid, table.values, order_M)
    at = evaluate_at(coeffs, complex(target))
    r_reg, rho = physical_regularization(at)
    T = design_matrix(table.lambda_grid, order_M)
    min_sv = float(np.linalg.svd(T, compute_uv=False)[-1])
    unit = stability_bound(T, target, 1.0)
    if sigma is None:
        sig = np.maximum(table.noise_sigma, np.max(table.stderr, axis=0))
    else:
        sig = np.full(table.values.shape[1:], sigma)
    return ReconstructionBundle(table.t_grid, at, r_reg, rho, unit * sig, min_sv, order_M, table.lambda_grid.size, table)


# --- reference dynamics ---------------------------------------------------------------


def free_dynamics(system: SystemSpec, t_grid):
    """Bloch vectors under ``H_S`` alone, from the exact propagator."""
    H = system.hamiltonian()
    w, v = linalg.eigh(H)
    rho0 = system.initial_rho()
    out = []
    for t in np.asarray(t_grid, dtype=float):
        U = (v * np.exp(-1j * w * t)) @ v.conj().T
        out.append(U @ rho0 @ U.conj().T)
    return np.real(bloch_vector(np.array(out)))


def bath_dynamics(preset: ExperimentPreset, bath: BathSpec | None = None):
    """System coupled to the deterministic model of ``bath`` (default: the preset bath)."""
    pm = _bath_pm(preset, bath)
    return _run_block(preset.system, pm, preset.t_grid, preset.integrator)


def hybrid_dynamics(preset: ExperimentPreset, bath: BathSpec, xi=1j, n_traj=None, seed=None, workers=1):
    """Hybrid model of ``bath`` with the imaginary field part scaled by ``xi``.

    ``xi = 1j`` gives the exact (possibly complex) field.  Returns mean and
    standard error of the Bloch vector, shape ``(n_t, 3)``.
    """
    p = replace(
        preset,
        mode="simulate",
        bath=bath,
        n_traj=preset.n_traj if n_traj is None else n_traj,
        seed=preset.seed if seed is None else seed,
        averaging="stochastic",
    )
    if not np.any(_scenario_field(p).coeffs):
        return _run_block(p.system, _scenario_modes(p, 0.0), p.t_grid, p.integrator)[:, 0], np.zeros((p.n_t, 3))
    mean, err = _stochastic_columns(p, [(0.0, xi)], workers)
    return mean[0], err[0]


class Comparison(NamedTuple):
    t_grid: np.ndarray
    reconstructed: np.ndarray  # regularised Bloch vectors (n_t, 3)
    reference: np.ndarray
    unmitigated: np.ndarray | None
    max_abs_dz: float
    mean_abs_dz: float
    bundle: ReconstructionBundle | None
    extra: dict


def _compare(t, rec, ref, unmit, bundle, **extra):
    dz = np.abs(np.real(rec[:, 2]) - np.real(ref[:, 2]))
    return Comparison(t, rec, ref, unmit, float(dz.max()), float(dz.mean()), bundle, extra)


def mitigation_experiment(preset: ExperimentPreset, workers: int = 1) -> Comparison:
    """Sweep, reconstruct, and compare with the bath-free dynamics."""
    if preset.mode != "mitigate":
        raise ConfigError("mitigation_experiment needs a mitigate preset")
    table = run_lambda_sweep(preset, workers)
    bundle = reconstruct(table, preset.order_M)
    free = free_dynamics(preset.system, preset.t_grid)
    noisy = np.real(bath_dynamics(preset)[:, 0])
    dz_noisy = np.abs(noisy[:, 2] - free[:, 2])
    return _compare(
        preset.t_grid, bundle.bloch_reg, free, noisy, bundle, unmitigated_max=float(dz_noisy.max()), unmitigated_mean=float(dz_noisy.mean())
    )


def simulation_experiment(preset: ExperimentPreset, workers: int = 1) -> Comparison:
    """Continue the sweep to the exact complex field; oracle uses the same draws."""
    if preset.mode != "simulate":
        raise ConfigError("simulation_experiment needs a simulate preset")
    grid = preset.lambda_grid
    if _field_needed(preset):
        points = [(lam, xi_map(lam)) for lam in grid] + [(LAMBDA_C, 1j)]
        mean, err = _stochastic_columns(preset, points, workers)
        table = SweepTable(grid, preset.t_grid, np.real(mean[:-1]), OBS, err[:-1])
        oracle = mean[-1]
    else:
        table = run_lambda_sweep(preset, workers)
        oracle = table.values[0]
    bundle = reconstruct(table, preset.order_M)
    nofield = _run_block(preset.system, _scenario_modes(preset, 0.0), preset.t_grid, preset.integrator)[:, 0]
    flat = bool(np.all(_scenario_field(preset).coeffs >= 0))
    return _compare(preset.t_grid, bundle.bloch_reg, np.real(oracle), np.real(nofield), bundle, field_is_real=flat)


def restructuring_experiment(preset: ExperimentPreset, workers: int = 1, oracle_traj: int | None = None) -> Comparison:
    """Restructure to ``target_beta`` and compare with the hybrid model at that temperature."""
    if preset.mode != "restructure":
        raise ConfigError("restructuring_experiment needs a restructure preset")
    table = run_lambda_sweep(preset, workers)
    bundle = reconstruct(table, preset.order_M)
    target = replace(preset.bath, beta=preset.target_beta)
    n_oracle = preset.oracle_traj if oracle_traj is None else oracle_traj
    ref, ref_err = hybrid_dynamics(preset, target, 1j, n_oracle, seed=preset.seed + 1, workers=workers)
    original = np.real(bath_dynamics(preset)[:, 0])
    target_det = np.real(bath_dynamics(preset, target)[:, 0])
    diff = _scenario_field(preset).coeffs
    return _compare(
        preset.t_grid,
        bundle.bloch_reg,
        np.real(ref),
        original,
        bundle,
        oracle_stderr=ref_err,
        deterministic_target=target_det,
        difference_min_coeff=float(diff.min()),
    )


def direct_simulation(preset: ExperimentPreset, workers: int = 1) -> Comparison:
    """Hybrid model with a physical field; compared with the deterministic model."""
    if preset.mode != "direct":
        raise ConfigError("direct_simulation needs a direct preset")
    fld = _scenario_field(preset)
    if np.any(fld.coeffs < 0):
        raise ConfigError(
            f"direct mode needs a real field but {int(np.sum(fld.coeffs < 0))} coefficients are negative; "
            "reduce n_xi or raise the temperature"
        )
    mean, err = hybrid_dynamics(preset, preset.bath, 1.0, workers=workers)
    oracle = np.real(bath_dynamics(preset)[:, 0])
    return _compare(preset.t_grid, np.real(mean), oracle, None, None, stderr=err, field_is_real=True)


# --- gate fidelity and error study ---------------------------------------------------------

_GATE_INITIAL = {"z": "plus", "x": "up", "y": "up"}


def _gate_system(preset, t_gate):
    rate = preset.gate_angle / t_gate
    kw = {"z": dict(omega_s=rate, delta=0.0), "x": dict(omega_s=0.0, delta=rate), "y": dict(omega_s=0.0, delta=0.0, omega_y=rate)}
    return replace(preset.system, initial=_GATE_INITIAL[preset.gate_axis], **kw[preset.gate_axis])


class GateRow(NamedTuple):
    t_gate: float
    fidelity_noisy: float
    fidelity_mitigated: float


def gate_fidelity_experiment(preset: ExperimentPreset, gate_times=None, workers: int = 1):
    """Fidelity of a single rotation against gate time, with and without mitigation.

    Returns ``(rows, t_res)`` where ``t_res = angle / Omega`` is the
    resonance time.
    """
    if preset.mode != "mitigate":
        raise ConfigError("gate experiments need a mitigate preset")
    times = preset.gate_times if gate_times is None else gate_times
    if not len(times):
        raise ConfigError("no gate times given")
    rows = []
    for tg in times:
        sysg = _gate_system(preset, tg)
        p = replace(preset, system=sysg, t_end=float(tg), n_t=2)
        ideal = free_dynamics(sysg, [0.0, tg])[-1]
        noisy = np.real(bath_dynamics(p)[-1, 0])
        bundle = reconstruct(run_lambda_sweep(p, workers), p.order_M)
        fid = lambda r: 0.5 * (1 + float(np.dot(ideal, r)))  # noqa: E731
        rows.append(GateRow(float(tg), fid(noisy), fid(bundle.bloch_reg[-1])))
    return rows, preset.gate_angle / preset.bath.Omega


class ErrorStudyRow(NamedTuple):
    order_M: int
    mean_error: float
    stderr: float
    stability_bound: float


def error_vs_order_study(preset: ExperimentPreset, sigmas=None, m_range=None, n_resamples=None, workers: int = 1):
    """Mean reconstruction error at the probe time against the fit order.

    The noiseless sweep is computed once; each resample adds fresh noise to
    every sweep value (the same draws for every order).
    """
    if preset.mode != "mitigate":
        raise ConfigError("the error study needs a mitigate preset (free dynamics is the reference)")
    lo, hi = preset.m_range if m_range is None else m_range
    if hi > preset.n_exp - 1:
        raise ConfigError(f"orders up to {hi} need at least {hi + 1} sweep points (n_exp={preset.n_exp})")
    n_res = preset.n_resamples if n_resamples is None else n_resamples
    sigmas = preset.sigmas if sigmas is None else sigmas
    p = replace(preset, t_end=preset.probe_time, n_t=2)
    clean = run_lambda_sweep(p, workers)
    ref_z = free_dynamics(p.system, [0.0, p.probe_time])[-1, 2]
    vals = clean.values[:, -1, :]
    out = {}
    for sigma in sigmas:
        rng = stream_generator(preset.seed, 7)
        noise = rng.normal(0.0, sigma, (n_res,) + vals.shape) if sigma > 0 else np.zeros((1,) + vals.shape)
        rows = []
        for M in range(lo, hi + 1):
            coeffs, _ = least_squares_fit(clean.lambda_grid, (vals[None] + noise).transpose(1, 0, 2), M)
            at = evaluate_at(coeffs, LAMBDA_C)  # (n_res, 3)
            r_reg, _ = physical_regularization(at)
            err = np.abs(r_reg[:, 2] - ref_z)
            se = float(err.std(ddof=1) / math.sqrt(err.size)) if err.size > 1 else 0.0
            bound = stability_bound(design_matrix(clean.lambda_grid, M), LAMBDA_C, sigma)
            rows.append(ErrorStudyRow(M, float(err.mean()), se, bound))
        out[sigma] = rows
    return out
