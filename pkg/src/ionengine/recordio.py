"""RunRecord serialization: one directory of self-describing text files.

Layout written by `write_record`:

    summary.txt       key = value lines (eta, power, alpha, temperatures,
                      effective stroke factors, audit terms, growth if any)
    corners.tsv       cycle  corner  time_s  omega_rad_s  energy_J
    axial_trace.tsv   time_s  z_mean_m  vz_mean_m_s
    amplitudes.tsv    cycle  amplitude_m
    hist_<corner>_<plane>.tsv
                      count grid; axis ranges in '#' header lines
    config_echo.cfg   the effective configuration (when supplied)

Everything is plain delimiter-separated text so any plotting tool can
consume it.
"""
from __future__ import annotations

import os

import numpy as np

from .engine import CORNER_TAGS, RunRecord

__all__ = ["write_record", "read_summary"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_record(rec: RunRecord, outdir, config_echo: str = "") -> None:
    os.makedirs(outdir, exist_ok=True)

    rows = ["# single-ion engine run summary"]
    for k in ("eta", "eta_stderr", "power", "power_stderr", "n_cycles"):
        rows.append(f"{k} = {_fmt(rec.measured[k])}")
    rows.append(f"alpha = {_fmt(rec.alpha)}")
    for k, v in rec.realized.items():
        rows.append(f"{k}_K = {_fmt(v)}")
    for k, v in rec.qeff.items():
        rows.append(f"{k} = {_fmt(v)}")
    for k, v in rec.audit.items():
        rows.append(f"audit.{k} = {_fmt(v)}")
    if rec.growth is not None:
        for k, v in rec.growth.items():
            rows.append(f"growth.{k} = {_fmt(v)}")
    rows.append(f"steady_start_cycle = {rec.steady_start}")
    rows.append(f"measure_cycles = {rec.measure_start} {rec.measure_stop}")
    rows.append(f"cycle_period_s = {_fmt(rec.cycle_period)}")
    for k, v in rec.meta.items():
        rows.append(f"meta.{k} = {_fmt(v)}")
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write("\n".join(rows) + "\n")

    with open(os.path.join(outdir, "corners.tsv"), "w") as fh:
        fh.write("cycle\tcorner\ttime_s\tomega_rad_s\tenergy_J\n")
        for cyc, ti, t, w, e in rec.corner_table:
            fh.write(f"{int(cyc)}\t{CORNER_TAGS[int(ti)]}\t{t!r}\t{w!r}\t{e!r}\n")

    with open(os.path.join(outdir, "axial_trace.tsv"), "w") as fh:
        fh.write("time_s\tz_mean_m\tvz_mean_m_s\n")
        np.savetxt(fh, rec.axial_trace, fmt="%.17g", delimiter="\t")

    with open(os.path.join(outdir, "amplitudes.tsv"), "w") as fh:
        fh.write("cycle\tamplitude_m\n")
        for i, a in enumerate(rec.amplitudes):
            fh.write(f"{i}\t{a!r}\n")

    for tag, planes in rec.phase_histograms.items():
        for plane, h in planes.items():
            path = os.path.join(outdir, f"hist_{tag}_{plane}.tsv")
            (r0, r1) = h["range"]
            with open(path, "w") as fh:
                fh.write(f"# rows: {h['axes'][0]} in [{r0[0]!r}, {r0[1]!r}]\n")
                fh.write(f"# cols: {h['axes'][1]} in [{r1[0]!r}, {r1[1]!r}]\n")
                fh.write(f"# counts over measured cycles, "
                         f"{h['counts'].shape[0]}x{h['counts'].shape[1]} bins\n")
                np.savetxt(fh, h["counts"], fmt="%g", delimiter="\t")

    if config_echo:
        with open(os.path.join(outdir, "config_echo.cfg"), "w") as fh:
            fh.write(config_echo)


def read_summary(outdir) -> dict:
    """Parse summary.txt back into a {key: float-or-str} dict."""
    out = {}
    with open(os.path.join(outdir, "summary.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            k, v = (p.strip() for p in line.split("=", 1))
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out
