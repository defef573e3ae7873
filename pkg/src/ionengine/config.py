"""Run-configuration files: `key = value [unit]` lines with explicit units.

Frequencies are angular everywhere in this package, so bare "MHz" is
rejected outright: write `6.0 Mrad_s` for 6.0e6 rad/s or `0.955 cyc_MHz`
for the same thing as a cyclic frequency.  Any dimensioned quantity given
as a bare number is an error; only dimensionless keys (saturations,
counts, fractions) take bare values.

The parsed result is a flat {key: value} dict in SI units.  `echo_config`
writes it back in canonical units at full precision, and re-parsing the
echo reproduces the dict exactly.
"""
from __future__ import annotations

import math
from typing import Optional

__all__ = ["ConfigError", "parse_config", "parse_file", "echo_config",
           "beams_from_config", "geometry_from_config", "UNIT_TABLE"]


class ConfigError(ValueError):
    """Malformed key, value, or unit in a run-configuration file."""


# unit -> (dimension, factor to SI)
UNIT_TABLE = {
    "rad_s": ("frequency", 1.0),
    "krad_s": ("frequency", 1e3),
    "Mrad_s": ("frequency", 1e6),
    "Grad_s": ("frequency", 1e9),
    "cyc_Hz": ("frequency", 2.0 * math.pi),
    "cyc_kHz": ("frequency", 2.0 * math.pi * 1e3),
    "cyc_MHz": ("frequency", 2.0 * math.pi * 1e6),
    "cyc_GHz": ("frequency", 2.0 * math.pi * 1e9),
    "K": ("temperature", 1.0),
    "mK": ("temperature", 1e-3),
    "uK": ("temperature", 1e-6),
    "m": ("length", 1.0),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "rad": ("angle", 1.0),
    "deg": ("angle", math.pi / 180.0),
    "kg": ("mass", 1.0),
    "amu": ("mass", 1.66053906660e-27),
}

_AMBIGUOUS = {"Hz": "cyc_Hz (or rad_s for angular)",
              "kHz": "cyc_kHz (or krad_s)",
              "MHz": "cyc_MHz (or Mrad_s)",
              "GHz": "cyc_GHz (or Grad_s)"}

# Canonical echo units per dimension.
_ECHO_UNIT = {"frequency": "rad_s", "temperature": "K", "length": "m",
              "time": "s", "angle": "rad", "mass": "kg"}

# key pattern -> dimension; "*" matches one dotted segment.
_SCHEMA = {
    "geometry.theta": "angle",
    "geometry.r0": "length",
    "geometry.length": "length",
    "geometry.radial_freq": "frequency",
    "geometry.omega0x": "frequency",
    "geometry.omega0y": "frequency",
    "geometry.axial_freq": "frequency",
    "geometry.drive_freq": "frequency",
    "geometry.mass": "mass",
    "run.n_trajectories": "int",
    "run.seed": "int",
    "run.cycles": "int",
    "run.steps_per_cycle": "int",
    "run.measure_cycles": "int",
    "run.steady_window": "int",
    "run.trace_every": "int",
    "run.hist_bins": "int",
    "run.threads": "int",
    "run.steady_rel_tol": "float",
    "run.init_temperature": "temperature",
    "run.seed_amplitude": "length",
    "run.force_mode": ("choice", ("pseudopotential", "full_rf")),
    "beam.*.role": ("choice", ("heat", "cool", "dissipation")),
    "beam.*.direction": "vector3",
    "beam.*.wavelength": "length",
    "beam.*.detuning": "frequency",
    "beam.*.linewidth": "frequency",
    "beam.*.saturation": "float",
    "beam.*.gate": ("choice", ("always_on", "phase_window", "spatial_focus")),
    "beam.*.window_fraction": "float",
    "beam.*.phase_center": "angle",
    "beam.*.focus_z": "length",
    "beam.*.waist": "length",
    "cycle.omega1": "frequency",
    "cycle.omega2": "frequency",
    "cycle.T_cold": "temperature",
    "cycle.T_hot": "temperature",
    "ramp.kind": ("choice", ("sudden", "linear", "tabulated")),
    "ramp.duration": "time",
    "ramp.file": "str",
    "optimize.ratios": "floats",
    "optimize.speed": ("choice", ("adiabatic", "sudden", "both")),
    "optimize.beta1_hbar_omega1": "float",
    "expect.*": "float",
}


def _lookup(key: str):
    if key in _SCHEMA:
        return _SCHEMA[key]
    parts = key.split(".")
    for pattern, dim in _SCHEMA.items():
        pp = pattern.split(".")
        if len(pp) != len(parts) and not (pp[-1] == "*" and len(pp) <= len(parts)):
            continue
        if all(a == "*" or a == b for a, b in zip(pp, parts)) \
                and (len(pp) == len(parts) or pp[-1] == "*"):
            return dim
    raise ConfigError(f"unknown configuration key {key!r}")


def _parse_value(key: str, raw: str):
    dim = _lookup(key)
    tokens = raw.split()
    if not tokens:
        raise ConfigError(f"{key}: empty value")
    if isinstance(dim, tuple) and dim[0] == "choice":
        if raw not in dim[1]:
            raise ConfigError(f"{key}: {raw!r} not one of {dim[1]}")
        return raw
    if dim == "str":
        return raw
    if dim == "int":
        if len(tokens) != 1:
            raise ConfigError(f"{key}: expected a single integer")
        try:
            return int(tokens[0])
        except ValueError as e:
            raise ConfigError(f"{key}: {tokens[0]!r} is not an integer") from e
    if dim == "float":
        if len(tokens) != 1:
            raise ConfigError(f"{key}: expected a single bare number "
                              "(dimensionless)")
        return _float(key, tokens[0])
    if dim == "floats":
        return tuple(_float(key, t) for t in tokens)
    if dim == "vector3":
        if len(tokens) != 3:
            raise ConfigError(f"{key}: expected three components")
        return tuple(_float(key, t) for t in tokens)
    # Dimensioned quantity: number plus mandatory unit.
    if len(tokens) == 1:
        raise ConfigError(
            f"{key}: bare number {raw!r} is ambiguous; append a unit "
            f"(expected a {dim})")
    if len(tokens) != 2:
        raise ConfigError(f"{key}: expected '<number> <unit>', got {raw!r}")
    value = _float(key, tokens[0])
    unit = tokens[1]
    if unit in _AMBIGUOUS:
        raise ConfigError(
            f"{key}: unit {unit!r} is ambiguous between angular and cyclic "
            f"frequency; use {_AMBIGUOUS[unit]}")
    if unit not in UNIT_TABLE:
        raise ConfigError(f"{key}: unknown unit {unit!r}")
    udim, factor = UNIT_TABLE[unit]
    if udim != dim:
        raise ConfigError(f"{key}: expected a {dim}, got {unit!r} ({udim})")
    return value * factor


def _float(key: str, token: str) -> float:
    try:
        v = float(token)
    except ValueError as e:
        raise ConfigError(f"{key}: {token!r} is not a number") from e
    if not math.isfinite(v):
        raise ConfigError(f"{key}: non-finite value {token!r}")
    return v


def parse_config(text: str, overrides: Optional[list[str]] = None) -> dict:
    """Parse config text (and `key=value` override strings) to an SI dict."""
    out: dict = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {ln}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        out[key] = _parse_value(key, raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        out[key] = _parse_value(key, raw)
    return out


def parse_file(path, overrides: Optional[list[str]] = None) -> dict:
    with open(path) as fh:
        return parse_config(fh.read(), overrides)


def echo_config(cfg: dict) -> str:
    """Serialize an SI config dict back to parseable text, full precision."""
    lines = []
    for key in sorted(cfg):
        v = cfg[key]
        dim = _lookup(key)
        if isinstance(dim, tuple):
            lines.append(f"{key} = {v}")
        elif dim in ("str",):
            lines.append(f"{key} = {v}")
        elif dim == "int":
            lines.append(f"{key} = {int(v)}")
        elif dim == "float":
            lines.append(f"{key} = {v!r}")
        elif dim in ("floats", "vector3"):
            lines.append(f"{key} = {' '.join(repr(x) for x in v)}")
        else:
            lines.append(f"{key} = {v!r} {_ECHO_UNIT[dim]}")
    return "\n".join(lines) + "\n"


def geometry_from_config(cfg: dict):
    """TrapGeometry from geometry.* keys (package defaults fill gaps)."""
    from .trap import TrapGeometry, default_geometry
    base = default_geometry()
    radial = cfg.get("geometry.radial_freq", base.omega0x)
    return TrapGeometry(
        theta=cfg.get("geometry.theta", base.theta),
        r0=cfg.get("geometry.r0", base.r0),
        length=cfg.get("geometry.length", base.length),
        omega0x=cfg.get("geometry.omega0x", radial),
        omega0y=cfg.get("geometry.omega0y", radial),
        omega0z=cfg.get("geometry.axial_freq", base.omega0z),
        omega_rf=cfg.get("geometry.drive_freq", base.omega_rf),
        mass=cfg.get("geometry.mass", base.mass),
    )


def beams_from_config(cfg: dict):
    """(bath beams, dissipation beam or None) from beam.* keys."""
    from .reservoir import GateSpec, LaserBeam
    names = []
    for key in cfg:
        parts = key.split(".")
        if parts[0] == "beam" and len(parts) == 3 and parts[1] not in names:
            names.append(parts[1])
    beams = []
    dissipation = None
    for name in names:
        get = lambda field, default=None: cfg.get(f"beam.{name}.{field}", default)
        for required in ("role", "direction", "wavelength", "detuning",
                         "linewidth", "saturation"):
            if get(required) is None:
                raise ConfigError(f"beam.{name}: missing field {required!r}")
        gate_kind = get("gate", "always_on")
        gate = GateSpec(
            kind=gate_kind,
            window_fraction=get("window_fraction", 1.0),
            phase_center=get("phase_center", 0.0),
            focus_z=get("focus_z", 0.0),
            waist=get("waist", 1.0),
        )
        beam = LaserBeam(
            direction=get("direction"),
            k=2.0 * math.pi / get("wavelength"),
            detuning=get("detuning"),
            gamma=get("linewidth"),
            saturation=get("saturation"),
            role=get("role"),
            gate=gate,
            label=name,
        )
        if beam.role == "dissipation":
            if dissipation is not None:
                raise ConfigError("more than one dissipation beam configured")
            dissipation = beam
        else:
            beams.append(beam)
    return beams, dissipation
