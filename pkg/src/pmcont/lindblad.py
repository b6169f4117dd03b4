"""Lindblad propagation of a qubit coupled to (possibly unphysical) pseudomodes.

The generator is built with explicit left and right actions so that
complex frequencies, couplings, rates and occupations are carried
through without ever taking an adjoint of a parameter:

    L rho = -i (H rho - rho H) + sum_k D_k rho,
    D_k rho = G_k (n_k + 1) (2 a rho a^T - a^T a rho - rho a^T a)
            + G_k n_k (2 a^T rho a - a a^T rho - rho a a^T),

with ``H = H_S + sum_k [W_k a_k^T a_k + g_k s (a_k + a_k^T)]`` and
``g_k`` the principal square root of ``g2_k``.  Ladder operators are real
matrices, so ``a^T`` is the creation operator.  An optional scalar drive
adds ``-i xi(t) [s, rho]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, sparse

from .errors import ConfigError, DimensionError, PropagationError
from .params import PseudomodeSet

__all__ = [
    "PAULI",
    "SystemSpec",
    "IntegratorConfig",
    "LindbladGenerator",
    "build_generator",
    "initial_state",
    "propagate",
    "reduce_to_system",
    "expectation",
    "bloch_vector",
    "pm_correlation_analytic",
    "pm_correlation_dynamic",
    "ensemble_average",
]

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

DEFAULT_MAX_DIM = 4096
SPARSE_SUPEROP_MAX_NNZ = 40_000_000  # ~800 MB of CSR storage


def _as_operator(op):
    if isinstance(op, str):
        try:
            return PAULI[op.lower().removeprefix("sigma_")]
        except KeyError:
            raise ConfigError(f"unknown qubit operator {op!r}") from None
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ConfigError("qubit operators must be 2x2")
    return op


@dataclass(frozen=True)
class SystemSpec:
    """Qubit ``H_S = (omega_s/2) sz + (delta/2) sx + (omega_y/2) sy`` coupled through ``coupling``."""

    omega_s: float
    delta: float
    coupling: object = "x"
    initial: object = "up"
    omega_y: float = 0.0

    def hamiltonian(self):
        return 0.5 * (self.omega_s * PAULI["z"] + self.delta * PAULI["x"] + self.omega_y * PAULI["y"])

    def coupling_op(self):
        return _as_operator(self.coupling)

    def initial_rho(self):
        init = self.initial
        if isinstance(init, str):
            states = {
                "up": [1, 0],
                "down": [0, 1],
                "plus": [1 / math.sqrt(2), 1 / math.sqrt(2)],
                "minus": [1 / math.sqrt(2), -1 / math.sqrt(2)],
                "plus_y": [1 / math.sqrt(2), 1j / math.sqrt(2)],
            }
            if init not in states:
                raise ConfigError(f"unknown initial state {init!r}")
            init = states[init]
        arr = np.asarray(init, dtype=complex)
        if arr.shape == (2,):
            arr = np.outer(arr, arr.conj()) / np.vdot(arr, arr).real
        if arr.shape != (2, 2):
            raise ConfigError("initial state must be a 2-vector or a 2x2 density matrix")
        return arr


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "RK45"
    max_step: float = math.inf


def _ladder(d):
    return sparse.diags(np.sqrt(np.arange(1, d)), 1, shape=(d, d), format="csr", dtype=complex)


def _embed(op, k, dims):
    """Operator ``op`` acting on factor ``k`` of a tensor product."""
    left = int(np.prod(dims[:k], dtype=int))
    right = int(np.prod(dims[k + 1 :], dtype=int))
    out = sparse.csr_matrix(op)
    if left > 1:
        out = sparse.kron(sparse.identity(left, format="csr"), out, format="csr")
    if right > 1:
        out = sparse.kron(out, sparse.identity(right, format="csr"), format="csr")
    return out


def _thermal(n, d):
    """Truncated (and renormalised) thermal populations; analytic in complex ``n``."""
    n = complex(n)
    if n == 0:
        p = np.zeros(d, dtype=complex)
        p[0] = 1
        return p
    p = (n / (n + 1)) ** np.arange(d) / (n + 1)
    return p / p.sum()


class LindbladGenerator:
    """Time-independent part ``L0`` and drive part ``S = -i[s, .]`` of the generator.

    States are row-major vectorised density matrices.  The superoperators
    are assembled as sparse matrices when their estimated number of
    non-zeros fits ``SPARSE_SUPEROP_MAX_NNZ``; otherwise they are applied
    matrix-free (slower per call, but memory stays at a few states).
    """

    def __init__(self, dims, hamiltonian, jumps, drive_op, has_system):
        self.dims = tuple(int(d) for d in dims)
        self.D = int(np.prod(self.dims))
        self.has_system = has_system
        self.H = sparse.csr_matrix(hamiltonian)
        self.jumps = [(complex(r), sparse.csr_matrix(c)) for r, c in jumps if complex(r) != 0]
        self.drive_op = None if drive_op is None else sparse.csr_matrix(drive_op)
        eff = sum((r * (c.T @ c) for r, c in self.jumps), sparse.csr_matrix((self.D, self.D), dtype=complex))
        self._K = (-1j * self.H - eff).tocsr()
        self._J = (1j * self.H - eff).tocsr()
        nnz = (self._K.nnz + self._J.nnz) * self.D + sum(c.nnz**2 for _, c in self.jumps)
        self.matrix_free = nnz > SPARSE_SUPEROP_MAX_NNZ
        if not self.matrix_free:
            eye = sparse.identity(self.D, format="csr", dtype=complex)
            sup = sparse.kron(self._K, eye) + sparse.kron(eye, self._J.T)
            for r, c in self.jumps:
                sup = sup + 2 * r * sparse.kron(c, c)
            self.L0 = sup.tocsr()
            if self.drive_op is not None:
                s = self.drive_op
                self.S = (-1j * (sparse.kron(s, eye) - sparse.kron(eye, s.T))).tocsr()

    def _apply_one(self, rho, xi=None):
        out = self._K @ rho + (self._J.T @ rho.T).T
        for r, c in self.jumps:
            out += 2 * r * (c @ (c @ rho.T).T)
        if xi is not None and self.drive_op is not None:
            s = self.drive_op
            out += -1j * xi * (s @ rho - (s.T @ rho.T).T)
        return out

    def apply(self, Y, xi=None):
        """Apply to a ``(D*D, B)`` block of vectorised states; ``xi`` has one entry per column."""
        if not self.matrix_free:
            out = self.L0 @ Y
            if xi is not None and self.drive_op is not None:
                out += (self.S @ Y) * xi[None, :]
            return out
        out = np.empty_like(Y)
        D = self.D
        for b in range(Y.shape[1]):
            x = None if xi is None else xi[b]
            out[:, b] = self._apply_one(Y[:, b].reshape(D, D), x).ravel()
        return out


def build_generator(system: SystemSpec | None, pm: PseudomodeSet, max_dim: int = DEFAULT_MAX_DIM) -> LindbladGenerator:
    """Assemble the generator for ``system`` plus all modes of ``pm``.

    With ``system=None`` only the modes are built, coupled to nothing
    (used for the dynamic correlation check).  The field of ``pm`` is not
    included; it enters through the ``drive`` of :func:`propagate`.
    """
    mode_dims = [m.fock_dim for m in pm.modes]
    dims = ([2] if system is not None else []) + mode_dims
    D = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if D > max_dim:
        raise DimensionError(f"Hilbert-space dimension {D} (dims {dims}) exceeds cap {max_dim}")
    off = 1 if system is not None else 0
    H = sparse.csr_matrix((D, D), dtype=complex)
    s_full = None
    if system is not None:
        H = H + _embed(system.hamiltonian(), 0, dims)
        s_full = _embed(system.coupling_op(), 0, dims)
    jumps = []
    for k, m in enumerate(pm.modes):
        a = _embed(_ladder(m.fock_dim), k + off, dims)
        ad = a.T.tocsr()
        omega, g2, gamma, n = (complex(x) for x in (m.omega, m.g2, m.gamma, m.nbar))
        H = H + omega * (ad @ a)
        if s_full is not None and g2 != 0:
            H = H + np.sqrt(g2) * (s_full @ (a + ad))
        jumps.append((gamma * (n + 1), a))
        jumps.append((gamma * n, ad))
    return LindbladGenerator(dims, H, jumps, s_full, system is not None)


def initial_state(system: SystemSpec | None, pm: PseudomodeSet):
    """Product of the qubit state and thermal states of occupation ``n_k``."""
    rho = np.ones((1, 1), dtype=complex) if system is None else system.initial_rho()
    for m in pm.modes:
        rho = np.kron(rho, np.diag(_thermal(m.nbar, m.fock_dim)))
    return rho


def reduce_to_system(Y, dims):
    """Partial trace onto the qubit for a ``(D*D, B)`` block; returns ``(B, 2, 2)``."""
    R = int(np.prod(dims[1:], dtype=int))
    Y = np.asarray(Y).reshape(2, R, 2, R, -1)
    return np.einsum("iajab->bij", Y)


def propagate(
    gen: LindbladGenerator,
    rho0,
    t_grid,
    drive: Callable | None = None,
    opts: IntegratorConfig = IntegratorConfig(),
    output: Callable | None = None,
):
    """Integrate ``d rho/dt = (L0 + xi(t) S) rho`` and record ``output`` on ``t_grid``.

    ``rho0`` is a ``(D, D)`` matrix or a ``(D*D, B)`` block (one column per
    trajectory).  ``drive(t)`` returns a scalar or one value per column.
    By default the reduced qubit states are recorded, giving an array of
    shape ``(len(t_grid), B, 2, 2)`` (``B`` squeezed for a single state);
    pass ``output=lambda Y: Y`` to keep full states.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be a non-empty increasing sequence")
    rho0 = np.asarray(rho0, dtype=complex)
    single = rho0.ndim == 2 and rho0.shape == (gen.D, gen.D)
    Y0 = rho0.reshape(gen.D * gen.D, 1) if single else rho0
    if Y0.shape[0] != gen.D * gen.D:
        raise ConfigError("initial state dimension does not match the generator")
    B = Y0.shape[1]
    if output is None:
        if not gen.has_system:
            raise ConfigError("mode-only generators need an explicit output function")
        output = lambda Y: reduce_to_system(Y, gen.dims)  # noqa: E731

    def rhs(t, y):
        Y = y.reshape(-1, B)
        xi = None
        if drive is not None:
            xi = np.broadcast_to(np.asarray(drive(t)), (B,))
        return gen.apply(Y, xi).ravel()

    results = []
    t0 = t_grid[0]
    results.append(output(Y0))
    if t_grid.size > 1:
        solver_cls = {"RK45": integrate.RK45, "DOP853": integrate.DOP853, "RK23": integrate.RK23}.get(opts.method)
        if solver_cls is None:
            raise ConfigError(f"unsupported integrator {opts.method!r}")
        solver = solver_cls(rhs, t0, Y0.ravel(), t_grid[-1], rtol=opts.rtol, atol=opts.atol, max_step=opts.max_step)
        idx = 1
        while idx < t_grid.size:
            msg = solver.step()
            if solver.status == "failed":
                raise PropagationError(f"integrator failed at t={solver.t:.6g}: {msg}")
            if not np.all(np.isfinite(solver.y)):
                raise PropagationError(f"non-finite state at t={solver.t:.6g}")
            if idx < t_grid.size and t_grid[idx] <= solver.t:
                interp = solver.dense_output()
                while idx < t_grid.size and t_grid[idx] <= solver.t:
                    y = solver.y if t_grid[idx] == solver.t else interp(t_grid[idx])
                    results.append(output(np.asarray(y).reshape(-1, B)))
                    idx += 1
    out = np.asarray(results)
    if single and out.ndim >= 2 and out.shape[1] == 1:
        out = out[:, 0]
    return out


def expectation(rho_s, obs):
    """``Tr[obs rho]`` over the last two axes."""
    return np.einsum("ij,...ji->...", _as_operator(obs), np.asarray(rho_s))


def bloch_vector(rho_s):
    """Complex Bloch components ``<sx>, <sy>, <sz>`` stacked on the last axis."""
    return np.stack([expectation(rho_s, k) for k in "xyz"], axis=-1)


def pm_correlation_analytic(pm: PseudomodeSet, t):
    return pm.correlation(t)


def pm_correlation_dynamic(pm: PseudomodeSet, t_grid, opts: IntegratorConfig = IntegratorConfig()):
    """``Tr[X exp(L t)(X rho_eq)]`` with ``X = sum_k g_k (a_k + a_k^T)`` on the modes alone."""
    if pm.field is not None and np.any(pm.field.coeffs):
        raise ConfigError("dynamic correlation is defined for mode-only sets")
    gen = build_generator(None, pm)
    dims = gen.dims
    X = sparse.csr_matrix((gen.D, gen.D), dtype=complex)
    for k, m in enumerate(pm.modes):
        a = _embed(_ladder(m.fock_dim), k, dims)
        X = X + np.sqrt(complex(m.g2)) * (a + a.T)
    rho_eq = initial_state(None, pm)
    sigma0 = X @ rho_eq
    Xt = X.T.tocsr()

    def trace_x(Y):
        # Tr[X rho] = sum_ij X_ji rho_ij
        rho = Y[:, 0].reshape(gen.D, gen.D)
        return np.sum(Xt.multiply(rho))

    return propagate(gen, np.asarray(sigma0), t_grid, None, opts, output=trace_x)


def ensemble_average(samples, axis: int = 0):
    """Mean and standard error along ``axis`` (complex-aware)."""
    samples = np.asarray(samples)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if n < 2:
        return mean, np.zeros(mean.shape)
    var = samples.real.var(axis=axis, ddof=1) + samples.imag.var(axis=axis, ddof=1)
    return mean, np.sqrt(var / n)
