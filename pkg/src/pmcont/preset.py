"""Preset documents: INI-style sections parsed into an :class:`ExperimentPreset`.

Every validation problem is collected and reported at once, each one
prefixed with its ``section.key`` path.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from importlib import resources
from pathlib import Path

from .bath import BathSpec
from .errors import ConfigError
from .lindblad import IntegratorConfig, SystemSpec
from .protocols import ExperimentPreset

__all__ = ["SECTIONS", "load_preset", "parse_preset_text", "preset_from_mapping", "snapshot_hash", "shipped_presets"]

SECTIONS = ("system", "bath", "pseudomodes", "field", "sweep", "extrapolation", "integrator", "output")


def _float(s):
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _int(s):
    return int(s)


def _bool(s):
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _floats(s):
    return tuple(_float(x) for x in str(s).replace(",", " ").split())


def _str(s):
    return str(s).strip()


# section -> key -> converter
SCHEMA = {
    "system": {
        "omega_s": _float,
        "delta": _float,
        "omega_y": _float,
        "coupling": _str,
        "initial": _str,
        "gate_angle": _float,
        "gate_axis": _str,
        "gate_times": _floats,
    },
    "bath": {
        "omega0": _float,
        "gamma": _float,
        "Gamma": _float,
        "lam": _float,
        "lam2": _float,
        "alpha": _float,
        "beta": _float,
        "target_beta": _float,
    },
    "pseudomodes": {"fock_dim": _int, "aux_fock_dim": _int, "n_mats": _int},
    "field": {
        "n_xi": _int,
        "horizon_T": _float,
        "n_traj": _int,
        "traj_chunk": _int,
        "antithetic": _bool,
        "antifield": _bool,
        "averaging": _str,
        "oracle_traj": _int,
    },
    "sweep": {"mode": _str, "n_exp": _int, "t_end": _float, "n_t": _int, "noise_sigma": _float},
    "extrapolation": {
        "order_M": _int,
        "probe_time": _float,
        "m_min": _int,
        "m_max": _int,
        "n_resamples": _int,
        "sigmas": _floats,
    },
    "integrator": {"rtol": _float, "atol": _float, "method": _str, "max_step": _float},
    "output": {"name": _str, "seed": _int},
}

REQUIRED = (("sweep", "mode"), ("system", "omega_s"), ("system", "delta"), ("bath", "omega0"))

# keys copied straight onto the preset
_DIRECT = {
    "pseudomodes": ("fock_dim", "aux_fock_dim", "n_mats"),
    "field": ("n_xi", "horizon_T", "n_traj", "traj_chunk", "antithetic", "antifield", "averaging", "oracle_traj"),
    "sweep": ("mode", "n_exp", "t_end", "n_t", "noise_sigma"),
    "extrapolation": ("order_M", "probe_time", "n_resamples", "sigmas"),
    "system": ("gate_angle", "gate_axis", "gate_times"),
    "output": ("name", "seed"),
}


def _convert(raw: dict, errors: list):
    out = {}
    for sec, items in raw.items():
        if sec not in SCHEMA:
            errors.append(f"{sec}: unknown section (expected one of {', '.join(SECTIONS)})")
            continue
        out[sec] = {}
        for key, text in items.items():
            conv = SCHEMA[sec].get(key)
            if conv is None:
                errors.append(f"{sec}.{key}: unknown key")
                continue
            try:
                out[sec][key] = conv(text)
            except (TypeError, ValueError) as exc:
                errors.append(f"{sec}.{key}: {exc}")
    return out


def _bath(b: dict, given: dict, errors: list):
    strengths = [k for k in ("lam", "lam2", "alpha") if k in b]
    widths = [k for k in ("gamma", "Gamma") if k in b]
    # keys that failed conversion were already reported
    if len([k for k in ("lam", "lam2", "alpha") if k in given]) != 1:
        errors.append("bath.lam: give exactly one of lam, lam2, alpha")
    if len([k for k in ("gamma", "Gamma") if k in given]) != 1:
        errors.append("bath.gamma: give exactly one of gamma, Gamma")
    if len(strengths) != 1 or len(widths) != 1 or "omega0" not in b:
        return None
    w0 = b["omega0"]
    gamma = b["gamma"] if "gamma" in b else 2 * b["Gamma"]
    beta = b.get("beta", math.inf)
    if strengths[0] == "alpha":
        lam2 = b["alpha"] * w0**4 / gamma if gamma > 0 else -1.0
    else:
        lam2 = b["lam"] ** 2 if strengths[0] == "lam" else b["lam2"]
    if lam2 < 0:
        errors.append("bath.lam: coupling strength must be non-negative")
        return None
    try:
        return BathSpec(omega0=w0, gamma=gamma, lam=math.sqrt(lam2), beta=beta)
    except ConfigError as exc:
        errors.append(f"bath: {exc}")
        return None


def preset_from_mapping(raw: dict) -> ExperimentPreset:
    """Build a preset from ``{section: {key: text}}``; raises one aggregated :class:`ConfigError`."""
    errors: list = []
    conf = _convert(raw, errors)
    for sec, key in REQUIRED:
        if key not in conf.get(sec, {}):
            errors.append(f"{sec}.{key}: missing required field")
    bath = _bath(conf.get("bath", {}), raw.get("bath", {}), errors)
    s = conf.get("system", {})
    system = SystemSpec(
        s.get("omega_s", 0.0), s.get("delta", 0.0), s.get("coupling", "x"), s.get("initial", "up"), s.get("omega_y", 0.0)
    )
    kw = {}
    for sec, keys in _DIRECT.items():
        for k in keys:
            if k in conf.get(sec, {}):
                kw[k] = conf[sec][k]
    ex = conf.get("extrapolation", {})
    if "m_min" in ex or "m_max" in ex:
        kw["m_range"] = (ex.get("m_min", 2), ex.get("m_max", 16))
    if "target_beta" in conf.get("bath", {}):
        kw["target_beta"] = conf["bath"]["target_beta"]
    integ = conf.get("integrator", {})
    kw["integrator"] = IntegratorConfig(**integ)
    kw.setdefault("name", "preset")
    kw.setdefault("mode", "mitigate")
    if errors:
        raise ConfigError("invalid preset:\n  " + "\n  ".join(errors))
    try:
        return ExperimentPreset(system=system, bath=bath, **kw)
    except ConfigError as exc:
        raise ConfigError("invalid preset:\n  " + str(exc).replace("; ", "\n  ")) from exc


def parse_preset_text(text: str, source: str = "<preset>") -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (gamma vs Gamma)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc
    return {sec: dict(cp.items(sec)) for sec in cp.sections()}


def shipped_presets():
    root = resources.files("pmcont") / "presets"
    return sorted(p.name[: -len(".preset")] for p in root.iterdir() if p.name.endswith(".preset"))


def _read_source(ref: str):
    path = Path(ref)
    if path.is_file():
        return path.read_text(), str(path)
    name = ref[: -len(".preset")] if ref.endswith(".preset") else ref
    res = resources.files("pmcont") / "presets" / f"{name}.preset"
    if res.is_file():
        return res.read_text(), f"preset:{name}"
    raise ConfigError(f"no preset file or shipped preset named {ref!r} (shipped: {', '.join(shipped_presets())})")


def load_preset(ref: str):
    """Load a preset by path, shipped name, or run manifest.

    Returns ``(preset, snapshot)`` where ``snapshot`` is the raw
    ``{section: {key: text}}`` mapping.
    """
    text, source = _read_source(ref)
    if source.endswith(".json"):
        try:
            raw = json.loads(text)["preset"]
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{source} is not a run manifest with a preset snapshot") from exc
    else:
        raw = parse_preset_text(text, source)
    return preset_from_mapping(raw), raw


def snapshot_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
