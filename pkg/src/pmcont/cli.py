"""Command-line front end.

Each subcommand writes its CSV tables plus ``manifest.json`` into an output
directory.  Everything is written into a temporary sibling first and then
moved into place, so a crash never leaves a half-written run behind.

Exit codes: 0 success, 2 configuration, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import io
from .bath import bath_correlation, brownian_correlation_split, classical_spectrum, crossover_beta, quantum_spectrum
from .errors import ConfigError, NumericalError
from .extrapolation import (
    bernstein_rho,
    bias_bound,
    design_matrix,
    equispaced_grid,
    min_singular_lower_bound,
    stability_bound,
    stability_bound_analytic,
)
from .params import LAMBDA_C
from .preset import load_preset, preset_from_mapping, snapshot_hash
from .protocols import (
    direct_simulation,
    error_vs_order_study,
    gate_fidelity_experiment,
    inject_noise,
    mitigation_experiment,
    reconstruct,
    restructuring_experiment,
    run_lambda_sweep,
    simulation_experiment,
)

__all__ = ["main", "build_parser", "parse_and_validate", "dispatch"]

log = logging.getLogger("pmcont")

OUT_ENV = "PMCONT_OUTPUT_DIR"
EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4
COMMANDS = ("correlation", "spectrum", "sweep", "reconstruct", "mitigate", "simulate", "restructure", "gate", "errstudy", "bounds")


def _tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<command> or ./runs/<command>)")
    common.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")
    common.add_argument("--seed", type=int, action="append", help="override the preset seed (last one wins)")
    common.add_argument("--workers", type=int, default=1, help="process pool size")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="pmcont", description="Pseudomode ensembles and analytic continuation.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    p = add("correlation", "bath correlation C(t)")
    p.add_argument("--bath", required=True, help="preset whose [bath] section is used")
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--part", choices=("total", "quantum", "classical", "matsubara"), default="total")

    p = add("spectrum", "classical or quantum spectrum")
    p.add_argument("--bath", required=True)
    p.add_argument("--wmax", type=float, default=5.0)
    p.add_argument("--n", type=int, default=501)
    p.add_argument("--kind", choices=("classical", "quantum"), default="classical")

    for name, help_ in (
        ("sweep", "observables over the real sweep grid"),
        ("mitigate", "sweep, continue, compare with free dynamics"),
        ("simulate", "sweep, continue, compare with the complex-field oracle"),
        ("restructure", "sweep, continue, compare with the target-temperature oracle"),
        ("gate", "gate fidelity against gate time"),
        ("errstudy", "reconstruction error against fit order"),
    ):
        p = add(name, help_)
        p.add_argument("--preset", required=True, help="preset path, shipped name, or run manifest")
        if name in ("sweep", "mitigate", "simulate", "restructure"):
            p.add_argument("--sigma", type=float, help="inject Gaussian noise of this width into the sweep")
        if name == "gate":
            p.add_argument("--angle", type=float)
            p.add_argument("--axis", choices=("x", "y", "z"))
            p.add_argument("--times", type=float, nargs="+")
        if name == "errstudy":
            p.add_argument("--sigmas", type=float, nargs="+")
            p.add_argument("--resamples", type=int)

    p = add("reconstruct", "re-fit a stored sweep")
    p.add_argument("--in", dest="input", required=True, help="sweep CSV")
    p.add_argument("--M", type=int, required=True)

    p = add("bounds", "singular-value and stability bounds at the target point")
    p.add_argument("--N", type=int, required=True, help="grid has N + 1 equispaced points")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--z", type=complex, default=LAMBDA_C, help="evaluation point, e.g. --z=-1+2j")
    p.add_argument("--q-rho", type=float, default=1.0, help="bound of the continued function on the ellipse")
    p.add_argument("--rho-factors", type=float, nargs="+", default=[1.5, 2.0, 4.0], help="ellipses scanned, in units of rho_z")
    return ap


def parse_and_validate(argv):
    """Parse arguments and load the preset; all preset problems are reported together."""
    args = build_parser().parse_args(argv)
    if args.seed and len(args.seed) > 1:
        log.warning("--seed given %d times; using the last value %d", len(args.seed), args.seed[-1])
    args.seed = args.seed[-1] if args.seed else None
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    args.preset_obj = args.snapshot = None
    ref = getattr(args, "preset", None) or getattr(args, "bath", None)
    if ref is not None:
        preset, raw = load_preset(ref)
        if args.seed is not None:
            raw = {k: dict(v) for k, v in raw.items()}
            raw.setdefault("output", {})["seed"] = str(args.seed)
            preset = preset_from_mapping(raw)
        args.preset_obj, args.snapshot = preset, raw
    return args


def _default_out(args):
    base = os.environ.get(OUT_ENV)
    name = args.command if args.preset_obj is None else f"{args.command}-{args.preset_obj.name}"
    return Path(base) / name if base else Path("runs") / name


@contextmanager
def _staged_dir(target: Path, overwrite: bool):
    """Yield a temporary directory that replaces ``target`` on success."""
    if target.exists() and (not target.is_dir() or any(target.iterdir())) and not overwrite:
        raise FileExistsError(f"{target} exists and is not empty; pass --overwrite to replace it")
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield tmp
        if target.exists():
            old = target.with_name(f".{target.name}.old")
            shutil.rmtree(old, ignore_errors=True)
            target.rename(old)
            tmp.rename(target)
            shutil.rmtree(old, ignore_errors=True)
        else:
            tmp.rename(target)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)


class _Timer:
    def __init__(self):
        self.stages = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        yield
        self.stages[name] = round(time.perf_counter() - t0, 6)


def _manifest(args, timer, outputs, summary):
    m = {
        "command": args.command,
        "argv": args.argv,
        "seed": None if args.preset_obj is None else args.preset_obj.seed,
        "preset": args.snapshot,
        "preset_sha256": None if args.snapshot is None else snapshot_hash(args.snapshot),
        "versions": {"tool": _tool_version(), "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": timer.stages,
        "outputs": outputs,
        "summary": summary,
    }
    return json.dumps(m, indent=2, sort_keys=True, default=str)


# --- command bodies: each returns (files written, summary dict) -------------------------


def _cmd_correlation(args, d, timer):
    bath = args.preset_obj.bath
    t = np.linspace(0.0, args.tmax, args.n)
    with timer.stage("correlation"):
        if args.part == "total":
            c = bath_correlation(t, bath)
        else:
            split = brownian_correlation_split(bath)
            c = {"quantum": split.quantum, "classical": split.classical, "matsubara": split.matsubara}[args.part](t)
    io.write_correlation(d / "correlation.csv", t, c)
    return ["correlation.csv"], {"part": args.part, "c0": [float(np.real(c[0])), float(np.imag(c[0]))]}


def _cmd_spectrum(args, d, timer):
    bath = args.preset_obj.bath
    w = np.linspace(-args.wmax, args.wmax, args.n)
    with timer.stage("spectrum"):
        s = (classical_spectrum if args.kind == "classical" else quantum_spectrum)(w, bath)
    io.write_spectrum(d / "spectrum.csv", w, s)
    summary = {"kind": args.kind}
    if args.kind == "classical":
        try:
            summary["beta_crossover"] = crossover_beta(bath)
        except NumericalError as exc:
            summary["beta_crossover"] = str(exc)
    return ["spectrum.csv"], summary


def _with_sigma(preset, args):
    sigma = getattr(args, "sigma", None)
    return preset if sigma is None else replace(preset, noise_sigma=sigma)


def _sweep(preset, args, timer):
    with timer.stage("sweep"):
        table = run_lambda_sweep(preset, args.workers)
    return inject_noise(table, preset.noise_sigma, stream=1, seed=preset.seed)


def _cmd_sweep(args, d, timer):
    preset = _with_sigma(args.preset_obj, args)
    table = _sweep(preset, args, timer)
    io.write_sweep(d / "sweep.csv", table)
    return ["sweep.csv"], {"n_exp": preset.n_exp, "noise_sigma": table.noise_sigma}


def _cmd_reconstruct(args, d, timer):
    table = io.read_sweep(args.input)
    with timer.stage("reconstruct"):
        bundle = reconstruct(table, args.M)
    io.write_reconstruction(d / "reconstruction.csv", bundle)
    return ["reconstruction.csv"], {"M": args.M, "min_sv": bundle.min_sv}


def _experiment(args, d, timer):
    preset = _with_sigma(args.preset_obj, args)
    if preset.noise_sigma > 0:
        raise ConfigError("noise injection is only supported by the sweep and errstudy commands")
    want = {"mitigate": ("mitigate",), "simulate": ("simulate", "direct"), "restructure": ("restructure",)}[args.command]
    if preset.mode not in want:
        raise ConfigError(f"preset {preset.name} has mode {preset.mode!r}; the {args.command} command needs {' or '.join(want)}")
    fn = {
        "mitigate": mitigation_experiment,
        "simulate": simulation_experiment,
        "restructure": restructuring_experiment,
        "direct": direct_simulation,
    }[preset.mode]
    with timer.stage(preset.mode):
        comp = fn(preset, workers=args.workers)
    files = ["comparison.csv"]
    io.write_comparison(d / "comparison.csv", comp)
    if comp.bundle is not None:
        io.write_sweep(d / "sweep.csv", comp.bundle.table)
        io.write_reconstruction(d / "reconstruction.csv", comp.bundle)
        files += ["sweep.csv", "reconstruction.csv"]
    summary = {"max_abs_dz": comp.max_abs_dz, "mean_abs_dz": comp.mean_abs_dz}
    summary.update({k: v for k, v in comp.extra.items() if np.ndim(v) == 0})
    return files, summary


def _cmd_gate(args, d, timer):
    p = args.preset_obj
    kw = {}
    if args.angle is not None:
        kw["gate_angle"] = args.angle
    if args.axis is not None:
        kw["gate_axis"] = args.axis
    p = replace(p, **kw)
    with timer.stage("gate"):
        rows, t_res = gate_fidelity_experiment(p, args.times, workers=args.workers)
    io.write_table(d / "gate.csv", ("t_gate", "fidelity_noisy", "fidelity_mitigated"), rows)
    return ["gate.csv"], {"t_res": t_res, "angle": p.gate_angle, "axis": p.gate_axis}


def _cmd_errstudy(args, d, timer):
    p = args.preset_obj
    with timer.stage("errstudy"):
        res = error_vs_order_study(p, args.sigmas, n_resamples=args.resamples, workers=args.workers)
    rows = [(s, r.order_M, r.mean_error, r.stderr, r.stability_bound) for s, rs in res.items() for r in rs]
    io.write_table(d / "errstudy.csv", ("sigma", "M", "mean_error", "stderr", "stability_bound"), rows)
    best = {repr(s): min(rs, key=lambda r: r.mean_error).order_M for s, rs in res.items()}
    return ["errstudy.csv"], {"argmin_M": best, "probe_time": p.probe_time}


def _cmd_bounds(args, d, timer):
    """One row per scanned ellipse ``rho = factor * rho_z``."""
    N, M, z, sigma = args.N, args.M, args.z, args.sigma
    with timer.stage("bounds"):
        T = design_matrix(equispaced_grid(N + 1), M)
        sv = float(np.linalg.svd(T, compute_uv=False)[-1])
        lb = min_singular_lower_bound(N, M)
        stab = stability_bound(T, z, sigma)
        stab_an = stability_bound_analytic(N, M, z, sigma, lb.relaxed) if lb.applicable else math.inf
        rz = bernstein_rho(z)
        rows = []
        for f in args.rho_factors:
            rho = f * rz
            bias = bias_bound(M, N, rho, args.q_rho, z, sv)
            bias_rel = bias_bound(M, N, rho, args.q_rho, z, sv, relaxed=True)
            rows.append((N, M, z.real, z.imag, rz, rho, args.q_rho, sv, lb.tight, lb.relaxed, int(lb.applicable), sigma, bias, bias_rel, stab, stab_an))
    header = (
        "N", "M", "re_z", "im_z", "rho_z", "rho", "Q_rho", "min_sv", "min_sv_lower_tight", "min_sv_lower_relaxed",
        "applicable", "sigma", "err_bias", "err_bias_relaxed", "err_stability", "err_stability_analytic",
    )  # fmt: skip
    io.write_table(d / "bounds.csv", header, rows)
    return ["bounds.csv"], dict(zip(header, rows[0]))


_HANDLERS = {
    "correlation": _cmd_correlation,
    "spectrum": _cmd_spectrum,
    "sweep": _cmd_sweep,
    "reconstruct": _cmd_reconstruct,
    "mitigate": _experiment,
    "simulate": _experiment,
    "restructure": _experiment,
    "gate": _cmd_gate,
    "errstudy": _cmd_errstudy,
    "bounds": _cmd_bounds,
}


def dispatch(args) -> int:
    out = Path(args.out) if args.out else _default_out(args)
    timer = _Timer()
    with _staged_dir(out, args.overwrite) as d:
        files, summary = _HANDLERS[args.command](args, d, timer)
        (d / "manifest.json").write_text(_manifest(args, timer, files, summary))
    print(json.dumps({"out": str(out), **summary}, default=str))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = parse_and_validate(argv)
        args.argv = argv
        return dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
