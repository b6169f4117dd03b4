import json
import logging
from importlib import resources

import numpy as np
import pytest

from pmcont import cli
from pmcont.bath import bath_correlation
from pmcont.extrapolation import design_matrix, equispaced_grid, stability_bound
from pmcont.io import read_table, write_table
from pmcont.params import LAMBDA_C
from pmcont.preset import load_preset, parse_preset_text, preset_from_mapping, shipped_presets
from pmcont.errors import ConfigError

SMALL_STOCHASTIC = """
[system]
omega_s = 1.0
delta = 0.0
[bath]
omega0 = 1.0
lam = 0.3
gamma = 0.3
[pseudomodes]
fock_dim = 3
[field]
n_xi = 8
horizon_T = 6.0
n_traj = 4
traj_chunk = 2
averaging = stochastic
[sweep]
mode = simulate
n_exp = 4
t_end = 1.0
n_t = 3
[extrapolation]
order_M = 3
[output]
name = tiny
seed = 3
"""


def run(argv):
    return cli.main([str(a) for a in argv])


def csv_floats(path):
    header, rows = read_table(path)
    return header, np.array([[float(x) for x in r] for r in rows])


def test_shipped_presets_load():
    names = shipped_presets()
    assert {"fig3", "fig4", "fig4y", "fig5", "fig6", "fig7", "fig8", "fig9"} <= set(names)
    for n in names:
        p, raw = load_preset(n)
        assert p.name == n and "sweep" in raw


def test_preset_aliases():
    base = {"system": {"omega_s": "1", "delta": "1"}, "sweep": {"mode": "mitigate"}}
    a = preset_from_mapping({**base, "bath": {"omega0": "1", "alpha": "0.02", "Gamma": "0.3"}})
    b = preset_from_mapping({**base, "bath": {"omega0": "1", "lam2": str(0.02 / 0.6), "gamma": "0.6"}})
    assert a.bath.lam2 == pytest.approx(b.bath.lam2) and a.bath.gamma == b.bath.gamma


def test_preset_errors_are_aggregated():
    raw = parse_preset_text("[system]\nomega_s = x\n[bath]\ngamma = 0.3\nlam = 0.1\n[sweep]\nmode = mitigate\nbogus = 1\n")
    with pytest.raises(ConfigError) as exc:
        preset_from_mapping(raw)
    msg = str(exc.value)
    for path in ("system.omega_s", "system.delta", "bath.omega0", "sweep.bogus"):
        assert path in msg


def test_correlation_command(tmp_path):
    out = tmp_path / "c"
    assert run(["correlation", "--bath", "fig3", "--tmax", 10, "--n", 11, "--out", out]) == 0
    header, data = csv_floats(out / "correlation.csv")
    assert header == ["t", "re", "im"] and data.shape == (11, 3)
    p, _ = load_preset("fig3")
    ref = bath_correlation(data[:, 0], p.bath)
    assert np.allclose(data[:, 1] + 1j * data[:, 2], ref, atol=1e-12)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "correlation" and man["outputs"] == ["correlation.csv"]
    assert len(man["preset_sha256"]) == 64 and "correlation" in man["wall_time_s"]


def test_spectrum_command(tmp_path):
    assert run(["spectrum", "--bath", "fig5", "--n", 21, "--out", tmp_path / "s"]) == 0
    header, data = csv_floats(tmp_path / "s" / "spectrum.csv")
    assert header == ["omega", "value"] and data.shape == (21, 2)
    assert np.allclose(data[:, 1], data[::-1, 1])


def test_bounds_command(tmp_path, capsys):
    out = tmp_path / "b"
    assert run(["bounds", "--N", 12, "--M", 10, "--sigma", 1e-5, "--out", out]) == 0
    header, rows = read_table(out / "bounds.csv")
    assert len(rows) == 3
    row = dict(zip(header, rows[0]))
    T = design_matrix(equispaced_grid(13), 10)
    assert float(row["min_sv"]) == np.linalg.svd(T, compute_uv=False)[-1]
    assert float(row["err_stability"]) == pytest.approx(stability_bound(T, LAMBDA_C, 1e-5), rel=1e-12)
    assert row["applicable"] == "0"
    summary = json.loads(capsys.readouterr().out)
    assert summary["out"] == str(out)


def test_missing_omega0_single_message(tmp_path, capsys):
    text = (resources.files("pmcont") / "presets" / "fig3.preset").read_text().replace("omega0 = 1.0\n", "")
    path = tmp_path / "bad.preset"
    path.write_text(text)
    assert run(["mitigate", "--preset", path, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.count("bath.omega0") == 1 and "missing required field" in err
    assert not (tmp_path / "o").exists()


def test_seed_twice_last_wins(tmp_path, caplog):
    path = tmp_path / "tiny.preset"
    path.write_text(SMALL_STOCHASTIC)
    with caplog.at_level(logging.WARNING, logger="pmcont"):
        assert run(["sweep", "--preset", path, "--seed", 42, "--seed", 7, "--out", tmp_path / "o"]) == 0
    assert any("last value 7" in r.getMessage() for r in caplog.records)
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 7 and man["preset"]["output"]["seed"] == "7"


def test_overwrite_required(tmp_path):
    out = tmp_path / "b"
    args = ["bounds", "--N", 12, "--M", 2, "--out", out]
    assert run(args) == 0
    assert run(args) == cli.EXIT_IO
    assert run(args + ["--overwrite"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["bounds.csv", "manifest.json"]
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_default_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert run(["bounds", "--N", 6, "--M", 2]) == 0
    assert (tmp_path / "bounds" / "bounds.csv").is_file()


def test_sweep_then_reconstruct_matches_fused_run(tmp_path):
    assert run(["mitigate", "--preset", "fig3", "--out", tmp_path / "fused"]) == 0
    assert run(["sweep", "--preset", "fig3", "--out", tmp_path / "sw"]) == 0
    assert run(["reconstruct", "--in", tmp_path / "sw" / "sweep.csv", "--M", 10, "--out", tmp_path / "rc"]) == 0
    fused = (tmp_path / "fused" / "reconstruction.csv").read_bytes()
    assert fused == (tmp_path / "rc" / "reconstruction.csv").read_bytes()
    assert (tmp_path / "fused" / "sweep.csv").read_bytes() == (tmp_path / "sw" / "sweep.csv").read_bytes()
    summary = json.loads((tmp_path / "fused" / "manifest.json").read_text())["summary"]
    assert summary["max_abs_dz"] <= 0.05


def test_manifest_reproduces_run(tmp_path):
    path = tmp_path / "tiny.preset"
    path.write_text(SMALL_STOCHASTIC)
    assert run(["simulate", "--preset", path, "--seed", 11, "--out", tmp_path / "a"]) == 0
    assert run(["simulate", "--preset", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b"]) == 0
    for name in ("sweep.csv", "reconstruction.csv", "comparison.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 11


def test_workers_reproduce_serial_output(tmp_path):
    path = tmp_path / "tiny.preset"
    path.write_text(SMALL_STOCHASTIC)
    assert run(["sweep", "--preset", path, "--out", tmp_path / "w1"]) == 0
    assert run(["sweep", "--preset", path, "--workers", 2, "--out", tmp_path / "w2"]) == 0
    assert (tmp_path / "w1" / "sweep.csv").read_bytes() == (tmp_path / "w2" / "sweep.csv").read_bytes()


def test_sweep_noise_recorded(tmp_path):
    path = tmp_path / "tiny.preset"
    path.write_text(SMALL_STOCHASTIC)
    assert run(["sweep", "--preset", path, "--sigma", 1e-3, "--out", tmp_path / "n"]) == 0
    header, rows = read_table(tmp_path / "n" / "sweep.csv")
    assert all(float(r[header.index("stderr")]) >= 1e-3 for r in rows)


def test_noise_rejected_for_experiments(tmp_path):
    assert run(["mitigate", "--preset", "fig3", "--sigma", 1e-3, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG


def test_mode_mismatch(tmp_path):
    assert run(["restructure", "--preset", "fig3", "--out", tmp_path / "o"]) == cli.EXIT_CONFIG


def test_numeric_error_exit_code(tmp_path):
    sweep = tmp_path / "degenerate.csv"
    rows = [(0.0, lam, 0.0, o, 0.1, 0.0, 0.0) for lam in (-1.0, -1.0 + 1e-15, 1.0) for o in "xyz"]
    write_table(sweep, ("t", "lambda_re", "lambda_im", "obs", "re", "im", "stderr"), rows)
    assert run(["reconstruct", "--in", sweep, "--M", 2, "--out", tmp_path / "o"]) == cli.EXIT_NUMERIC
    assert not (tmp_path / "o").exists()


def test_config_errors(tmp_path):
    assert run(["mitigate", "--preset", "no-such-preset", "--out", tmp_path / "o"]) == cli.EXIT_CONFIG
    assert run(["bounds", "--N", 4, "--M", 6, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG
    assert run(["bounds", "--N", 4, "--M", 1, "--workers", 0, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2


def test_missing_input_is_io_error(tmp_path):
    assert run(["reconstruct", "--in", tmp_path / "nope.csv", "--M", 2, "--out", tmp_path / "o"]) == cli.EXIT_IO
