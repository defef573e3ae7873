"""Command-line entry point.

    ionengine analyze    --config cycle.cfg --out out/
    ionengine optimize   --config curves.cfg --out out/
    ionengine simulate   --config engine.cfg --out out/ [--seed N] [--threads N]
    ionengine selfdriven --config engine.cfg --out out/

Exit codes: 0 success, 2 configuration/validation error, 3 runtime failure.
`--set key=value` overrides any config key (repeatable); `--threads` only
parallelizes trajectory blocks and never changes results.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

from . import adiabaticity, engine, optimizer, recordio, thermo
from .config import (ConfigError, beams_from_config, echo_config,
                     geometry_from_config, parse_file)
from .trap import ValidityError
from .units import KB_SI, SI

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ionengine",
                                description="Single-ion Otto engine toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, desc in (
            ("analyze", "exact cycle quantities for configured parameters"),
            ("optimize", "efficiency-at-maximum-power curves and optima"),
            ("simulate", "externally switched ensemble engine run"),
            ("selfdriven", "spatially gated self-driven engine run")):
        q = sub.add_parser(name, help=desc)
        q.add_argument("--config", required=True, help="run configuration file")
        q.add_argument("--out", required=True, help="output directory")
        q.add_argument("--seed", type=int, default=None,
                       help="override run.seed")
        q.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        q.add_argument("--threads", type=int, default=None,
                       help="trajectory-block workers (never affects results)")
    return p


def _ramp_qpair(cfg: dict, omega1: float, omega2: float):
    kind = cfg.get("ramp.kind", "sudden")
    if kind == "sudden":
        q = thermo.sudden_adiabaticity(omega1, omega2)
        return thermo.AdiabaticityPair(q, q), kind
    duration = cfg.get("ramp.duration")
    if duration is None:
        raise ConfigError("ramp.duration is required for non-sudden ramps")
    if kind == "tabulated":
        path = cfg.get("ramp.file")
        if path is None:
            raise ConfigError("ramp.file is required for tabulated ramps")
        base = adiabaticity.load_ramp(path, duration=duration)
        up = adiabaticity.make_ramp("tabulated", omega1, omega2, duration,
                                    base.samples)
        down = adiabaticity.make_ramp("tabulated", omega2, omega1, duration,
                                      base.samples)
    else:
        up = adiabaticity.make_ramp("linear", omega1, omega2, duration)
        down = adiabaticity.make_ramp("linear", omega2, omega1, duration)
    return thermo.AdiabaticityPair(adiabaticity.qstar_for_ramp(up),
                                   adiabaticity.qstar_for_ramp(down)), kind


def _cmd_analyze(cfg: dict, outdir: str) -> str:
    for key in ("cycle.omega1", "cycle.omega2", "cycle.T_cold", "cycle.T_hot"):
        if key not in cfg:
            raise ConfigError(f"analyze needs {key}")
    omega1 = cfg["cycle.omega1"]
    omega2 = cfg["cycle.omega2"]
    beta1 = 1.0 / (KB_SI * cfg["cycle.T_cold"])
    beta2 = 1.0 / (KB_SI * cfg["cycle.T_hot"])
    p = thermo.CycleParams(omega1, omega2, beta1, beta2, units=SI)
    q, ramp_kind = _ramp_qpair(cfg, omega1, omega2)
    e = thermo.stage_energies(p, q)
    r = thermo.stroke_quantities(p, q)
    q1_max, q2_min = thermo.engine_window(p)
    lines = [
        "# exact cycle quantities (SI)",
        f"omega1_rad_s = {omega1!r}",
        f"omega2_rad_s = {omega2!r}",
        f"ramp_kind = {ramp_kind}",
        f"q1 = {q.q1!r}",
        f"q2 = {q.q2!r}",
        f"E_A_J = {e.eA!r}",
        f"E_B_J = {e.eB!r}",
        f"E_C_J = {e.eC!r}",
        f"E_D_J = {e.eD!r}",
        f"W1_J = {r.w1!r}",
        f"Q2_J = {r.q2hot!r}",
        f"W3_J = {r.w3!r}",
        f"Q4_J = {r.q4cold!r}",
        f"q1_max = {q1_max!r}",
        f"q2_min = {q2_min!r}",
        f"is_engine = {thermo.is_engine(p, q)}",
    ]
    if thermo.is_engine(p, q):
        lines.append(f"eta = {thermo.efficiency(p, q)!r}")
    with open(os.path.join(outdir, "analysis.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    eta = thermo.efficiency(p, q) if thermo.is_engine(p, q) else math.nan
    return f"analyze: q1={q.q1:.6g} q2={q.q2:.6g} eta={eta:.6g}"


def _cmd_optimize(cfg: dict, outdir: str) -> str:
    ratios = cfg.get("optimize.ratios")
    if not ratios:
        raise ConfigError("optimize.ratios must list at least one ratio")
    speed = cfg.get("optimize.speed", "both")
    b1hw1 = cfg.get("optimize.beta1_hbar_omega1", 1e-3)
    speeds = ("adiabatic", "sudden") if speed == "both" else (speed,)
    first_rows = None
    for sp in speeds:
        rows = optimizer.efficiency_curve(ratios, speed=sp,
                                          beta1_hbar_omega1=b1hw1)
        first_rows = first_rows or rows
        path = os.path.join(outdir, f"numeric_optima_{sp}.tsv")
        with open(path, "w") as fh:
            fh.write("ratio\tomega2_opt_over_omega1\teta_numeric\n")
            for row in rows:
                fh.write(f"{row['ratio']!r}\t{row['omega2_opt_ratio']!r}"
                         f"\t{row['eta_numeric']!r}\n")
    with open(os.path.join(outdir, "efficiency_curves.tsv"), "w") as fh:
        fh.write("ratio\tcarnot\tcurzon_ahlborn\tsudden\n")
        for row in first_rows:
            fh.write(f"{row['ratio']!r}\t{row['carnot']!r}"
                     f"\t{row['curzon_ahlborn']!r}\t{row['sudden']!r}\n")
    return f"optimize: {len(first_rows)} ratios, speeds {','.join(speeds)}"


def _ensemble_config(cfg: dict, mode: str) -> engine.EnsembleConfig:
    g = geometry_from_config(cfg)
    beams, dissipation = beams_from_config(cfg)
    kwargs = {}
    for key, field in (
            ("run.n_trajectories", "n_trajectories"), ("run.seed", "seed"),
            ("run.cycles", "cycles"), ("run.steps_per_cycle", "steps_per_cycle"),
            ("run.init_temperature", "init_temperature"),
            ("run.seed_amplitude", "seed_amplitude"),
            ("run.measure_cycles", "measure_cycles"),
            ("run.steady_window", "steady_window"),
            ("run.steady_rel_tol", "steady_rel_tol"),
            ("run.trace_every", "trace_every"), ("run.hist_bins", "hist_bins"),
            ("run.threads", "threads"), ("run.force_mode", "force_mode")):
        if key in cfg:
            kwargs[field] = cfg[key]
    return engine.EnsembleConfig(geometry=g, beams=beams,
                                 dissipation=dissipation, mode=mode, **kwargs)


def _cmd_simulate(cfg: dict, outdir: str, mode: str) -> str:
    ecfg = _ensemble_config(cfg, mode)
    if mode == "self_driven":
        rec = engine.run_self_driven(ecfg)
    else:
        rec = engine.run_engine(ecfg)
    echo = {k: v for k, v in cfg.items() if k != "run.threads"}
    recordio.write_record(rec, outdir, config_echo=echo_config(echo))
    m = rec.measured
    line = (f"{mode}: eta={m['eta']:.4f} power={m['power']:.4g} W "
            f"alpha={rec.alpha:.3g} "
            f"T_hot={rec.realized['T_hot'] * 1e3:.1f} mK "
            f"T_cold={rec.realized['T_cold'] * 1e3:.1f} mK")
    if rec.growth is not None:
        line += (f" growth_factor={rec.growth['factor']:.4f}"
                 f" grew={rec.growth['grew']}")
    return line


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_file(args.config, overrides=args.set)
        if args.seed is not None:
            cfg["run.seed"] = args.seed
        if args.threads is not None:
            cfg["run.threads"] = args.threads
        os.makedirs(args.out, exist_ok=True)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "analyze":
            line = _cmd_analyze(cfg, args.out)
        elif args.command == "optimize":
            line = _cmd_optimize(cfg, args.out)
        elif args.command == "simulate":
            line = _cmd_simulate(cfg, args.out, "external_switch")
        else:
            line = _cmd_simulate(cfg, args.out, "self_driven")
    except (ConfigError, thermo.NotAnEngine) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (engine.NoSteadyState, ValidityError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    if args.command == "analyze" or args.command == "optimize":
        with open(os.path.join(args.out, "config_echo.cfg"), "w") as fh:
            fh.write(echo_config({k: v for k, v in cfg.items()
                                  if k != "run.threads"}))
    print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
