"""CSV tables with round-trip float formatting.

Floats are written with ``repr`` (shortest string that parses back to the
same double), so reading a table returns bit-identical values.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .extrapolation import SweepTable

__all__ = [
    "write_table",
    "read_table",
    "write_correlation",
    "write_spectrum",
    "write_trajectories",
    "write_field_stats",
    "write_sweep",
    "read_sweep",
    "write_reconstruction",
    "write_comparison",
]


def _fmt(x):
    if isinstance(x, (str, int, np.integer)) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_table(path):
    """Header and rows (as strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty table (a header row is required)")
    return rows[0], rows[1:]


def write_correlation(path, t, values):
    v = np.asarray(values, dtype=complex)
    write_table(path, ("t", "re", "im"), zip(t, v.real, v.imag))


def write_spectrum(path, omega, values):
    write_table(path, ("omega", "value"), zip(omega, np.real(values)))


def write_trajectories(path, t, trajectories):
    """One block of rows per trajectory id."""
    rows = []
    for k, tr in enumerate(trajectories):
        re, im = tr.parts(np.asarray(t, dtype=float))
        rows += [(k, ti, a, b) for ti, a, b in zip(t, re, im)]
    write_table(path, ("traj", "t", "re_xi", "im_xi"), rows)


def write_field_stats(path, t, mean, stderr):
    m = np.asarray(mean, dtype=complex)
    write_table(path, ("t", "re_mean", "im_mean", "stderr"), zip(t, m.real, m.imag, stderr))


_SWEEP_HEADER = ("t", "lambda_re", "lambda_im", "obs", "re", "im", "stderr")


def write_sweep(path, table: SweepTable):
    """Sweep values; the stderr column absorbs any injected noise level."""
    err = np.maximum(table.stderr, table.noise_sigma)
    vals = np.asarray(table.values, dtype=complex)
    rows = []
    for i, lam in enumerate(table.lambda_grid):
        for j, t in enumerate(table.t_grid):
            for k, o in enumerate(table.observables):
                rows.append((t, lam, 0.0, o, vals[i, j, k].real, vals[i, j, k].imag, err[i, j, k]))
    write_table(path, _SWEEP_HEADER, rows)


def read_sweep(path) -> SweepTable:
    header, rows = read_table(path)
    if tuple(header) != _SWEEP_HEADER:
        raise ConfigError(f"{path}: expected columns {', '.join(_SWEEP_HEADER)}")
    try:
        lams = sorted({float(r[1]) for r in rows})
        ts = sorted({float(r[0]) for r in rows})
        obs = tuple(dict.fromkeys(r[3] for r in rows))
        li = {v: i for i, v in enumerate(lams)}
        ti = {v: i for i, v in enumerate(ts)}
        oi = {v: i for i, v in enumerate(obs)}
        vals = np.full((len(lams), len(ts), len(obs)), np.nan)
        err = np.zeros(vals.shape)
        for r in rows:
            idx = li[float(r[1])], ti[float(r[0])], oi[r[3]]
            vals[idx] = float(r[4])
            err[idx] = float(r[6])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed sweep row ({exc})") from exc
    if np.isnan(vals).any():
        raise ConfigError(f"{path}: incomplete sweep (missing lambda/t/observable cells)")
    return SweepTable(np.array(lams), np.array(ts), vals, obs, err)


def write_reconstruction(path, bundle, err_bias=None):
    """Per ``(t, observable)`` continued value and bounds.

    ``N`` follows the bound convention: the fit used ``N + 1`` sweep points.
    """
    at = np.asarray(bundle.at_target, dtype=complex)
    bias = np.full(at.shape, np.nan) if err_bias is None else np.broadcast_to(err_bias, at.shape)
    rows = []
    for j, t in enumerate(bundle.t_grid):
        for k, o in enumerate(bundle.table.observables):
            rows.append(
                (t, o, at[j, k].real, at[j, k].imag, bias[j, k], bundle.err_stability[j, k], bundle.min_sv, bundle.order_M, bundle.n_points - 1)
            )
    header = ("t", "obs", "re_reconstructed", "im_reconstructed", "err_bias", "err_stability", "min_sv", "M", "N")
    write_table(path, header, rows)


def write_comparison(path, comp):
    """Regularised reconstruction against the reference, one row per time."""
    un = comp.unmitigated if comp.unmitigated is not None else np.full(comp.reference.shape, np.nan)
    rows = []
    for j, t in enumerate(comp.t_grid):
        r, ref = np.real(comp.reconstructed[j]), np.real(comp.reference[j])
        rows.append((t, *r, *ref, np.real(un[j, 2]), abs(r[2] - ref[2])))
    header = ("t", "rec_x", "rec_y", "rec_z", "ref_x", "ref_y", "ref_z", "unmitigated_z", "abs_dz")
    write_table(path, header, rows)


def ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
