"""Efficiency at maximum power: analytic regime results and numeric search.

The output work of one cycle is maximized over the compressed frequency
omega2 at fixed omega1 and fixed stroke durations, so maximizing power and
maximizing work coincide.  Closed forms exist in four regimes (adiabatic or
sudden strokes, classical or deep-quantum cold bath); the numeric optimizer
works from the exact corner energies and must reproduce each closed form in
its validity regime, which the test suite checks.

Sign convention: `total_work_highT` returns work done ON the oscillator, as
the high-temperature expansion naturally produces it; the engine's output
is its negative, and all maximization targets use the output sign.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import thermo
from .thermo import AdiabaticityPair, CycleParams, NotAnEngine, sudden_adiabaticity
from .units import NATURAL, UnitSystem

__all__ = [
    "Regime",
    "OptimumResult",
    "total_work_highT",
    "analytic_optimum",
    "numeric_max_power",
    "efficiency_curve",
    "golden_max",
    "adiabatic_q",
    "sudden_q",
    "NoEnginePoint",
]

SPEEDS = ("adiabatic", "sudden")
TEMPERATURES = ("classical_highT", "quantum_lowT")


class NoEnginePoint(NotAnEngine):
    """The whole search interval violates the engine conditions."""


@dataclass(frozen=True)
class Regime:
    """Which pair of closed-form assumptions applies."""

    speed: str
    temperature: str

    def __post_init__(self):
        if self.speed not in SPEEDS:
            raise ValueError(f"speed must be one of {SPEEDS}, got {self.speed!r}")
        if self.temperature not in TEMPERATURES:
            raise ValueError(
                f"temperature must be one of {TEMPERATURES}, got {self.temperature!r}")


@dataclass(frozen=True)
class OptimumResult:
    """Frequency ratio and efficiency at the power maximum."""

    omega2_opt: float
    eta_at_max_power: float
    power_at_opt: Optional[float] = None   # numeric path only


def adiabatic_q(omega1: float) -> Callable[[float], AdiabaticityPair]:
    """q-map for quasistatic strokes: both factors 1 at every omega2."""
    return lambda omega2: thermo.ADIABATIC


def sudden_q(omega1: float) -> Callable[[float], AdiabaticityPair]:
    """q-map for instantaneous strokes at each candidate omega2."""
    def q_of(omega2: float) -> AdiabaticityPair:
        q = sudden_adiabaticity(omega1, omega2)
        return AdiabaticityPair(q, q)
    return q_of


def total_work_highT(p: CycleParams, speed: str) -> float:
    """High-temperature total work input of the two frequency strokes.

    Valid for beta*hbar*omega << 1 at all four corners; a warning is issued
    when any corner argument exceeds 0.1.  Negative values mean the cycle
    produces net output work.
    """
    if speed not in SPEEDS:
        raise ValueError(f"speed must be one of {SPEEDS}, got {speed!r}")
    hbar = p.units.hbar
    worst = max(b * hbar * w for b in (p.beta1, p.beta2)
                for w in (p.omega1, p.omega2))
    if worst > 0.1:
        warnings.warn(
            f"high-temperature form used at beta*hbar*omega = {worst:.3g} > 0.1",
            stacklevel=2)
    r = p.omega2 / p.omega1
    if speed == "adiabatic":
        return (1.0 / p.beta1) * (r - 1.0) + (1.0 / p.beta2) * (1.0 / r - 1.0)
    return (0.5 / p.beta1) * (r * r - 1.0) + (0.5 / p.beta2) * (1.0 / (r * r) - 1.0)


def analytic_optimum(p: CycleParams, r: Regime) -> OptimumResult:
    """Closed-form optimum frequency and efficiency at maximum power.

    Classical forms depend only on the bath temperature ratio; the
    deep-quantum forms replace the cold-bath thermal energy with the
    oscillator ground-state energy and are leading-order asymptotics.
    """
    if p.beta1 <= p.beta2:
        raise ValueError("engine regime needs beta1 > beta2 (cold bath colder)")
    hbar = p.units.hbar
    ratio = p.beta2 / p.beta1
    if r.temperature == "classical_highT":
        s = math.sqrt(ratio)
        if r.speed == "adiabatic":
            return OptimumResult(omega2_opt=p.omega1 / s, eta_at_max_power=1.0 - s)
        return OptimumResult(omega2_opt=p.omega1 * ratio ** -0.25,
                             eta_at_max_power=(1.0 - s) / (2.0 + s))
    s = math.sqrt(0.5 * hbar * p.omega1 * p.beta2)
    if r.speed == "adiabatic":
        return OptimumResult(omega2_opt=math.sqrt(2.0 * p.omega1 / (hbar * p.beta2)),
                             eta_at_max_power=1.0 - s)
    return OptimumResult(omega2_opt=(2.0 * p.omega1 ** 3 / (hbar * p.beta2)) ** 0.25,
                         eta_at_max_power=(1.0 - s) / (2.0 + s))


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_max(f: Callable[[float], float], a: float, b: float,
               rel_tol: float = 1e-6) -> float:
    """Golden-section maximization of a unimodal f on [a, b].

    Returns the abscissa of the maximum to within rel_tol * (scale of x).
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    tol = rel_tol * max(abs(a), abs(b), 1e-300)
    if h <= tol:
        return 0.5 * (a + b)
    n = max(1, math.ceil(math.log(tol / h) / math.log(_INV_PHI)))
    c = a + _INV_PHI2 * h
    d = a + _INV_PHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(n - 1):
        if yc > yd:
            b, d, yd = d, c, yc
            h = _INV_PHI * h
            c = a + _INV_PHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h = _INV_PHI * h
            d = a + _INV_PHI * h
            yd = f(d)
    return 0.5 * (a + b)


def numeric_max_power(omega1: float, beta1: float, beta2: float,
                      q_of_omega2: Callable[[float], AdiabaticityPair],
                      search_interval: Optional[tuple[float, float]] = None,
                      units: UnitSystem = NATURAL,
                      total_duration: float = 1.0,
                      coarse_points: int = 256) -> OptimumResult:
    """Maximize output power over omega2 by coarse grid plus golden section.

    Stroke durations are held fixed across candidates (power maximization is
    then work maximization).  `q_of_omega2` supplies the stroke adiabaticity
    factors per candidate: constant (1, 1), the sudden form, or factors from
    solved ramps.  Raises NoEnginePoint if no candidate in the interval
    satisfies the engine conditions.
    """
    if search_interval is None:
        search_interval = (omega1, 20.0 * omega1)
    lo, hi = search_interval
    if not (0.0 < lo < hi):
        raise ValueError(f"bad search interval {search_interval!r}")
    if total_duration <= 0.0:
        raise ValueError("total_duration must be > 0")
    if coarse_points < 200:
        coarse_points = 200

    def out_work(omega2: float) -> float:
        p = CycleParams(omega1, omega2, beta1, beta2, units=units)
        q = q_of_omega2(omega2)
        if not thermo.is_engine(p, q):
            return -math.inf
        r = thermo.stroke_quantities(p, q)
        return -(r.w1 + r.w3)

    step = (hi - lo) / (coarse_points - 1)
    grid = [lo + i * step for i in range(coarse_points)]
    values = [out_work(w) for w in grid]
    best = max(range(coarse_points), key=values.__getitem__)
    if values[best] == -math.inf:
        raise NoEnginePoint(
            f"no engine point for omega2 in [{lo:g}, {hi:g}] "
            f"(beta1={beta1:g}, beta2={beta2:g})")

    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, coarse_points - 1)]
    w_opt = golden_max(out_work, a, b, rel_tol=1e-6)

    p = CycleParams(omega1, w_opt, beta1, beta2, units=units)
    q = q_of_omega2(w_opt)
    eta = thermo.efficiency(p, q)
    work = -(thermo.stroke_quantities(p, q).w1 + thermo.stroke_quantities(p, q).w3)
    return OptimumResult(omega2_opt=w_opt, eta_at_max_power=eta,
                         power_at_opt=work / total_duration)


def efficiency_curve(beta_ratios: Sequence[float], speed: str = "adiabatic",
                     beta1_hbar_omega1: float = 1e-3,
                     omega1: float = 1.0) -> list[dict]:
    """Efficiency-vs-temperature-ratio table: bounds, closed forms, numeric.

    Each row holds the Carnot bound, the Curzon-Ahlborn adiabatic form, the
    sudden-switch form, and the numeric optimum efficiency computed in the
    high-temperature regime for the requested stroke speed.  Ratios must lie
    in (0, 1]; the degenerate ratio 1 yields zeros without a numeric point.
    """
    if speed not in SPEEDS:
        raise ValueError(f"speed must be one of {SPEEDS}, got {speed!r}")
    if not beta_ratios:
        raise ValueError("need at least one temperature ratio")
    rows = []
    for ratio in beta_ratios:
        if not (0.0 < ratio <= 1.0):
            raise ValueError(f"temperature ratio must be in (0, 1], got {ratio!r}")
        s = math.sqrt(ratio)
        row = {
            "ratio": ratio,
            "carnot": 1.0 - ratio,
            "curzon_ahlborn": 1.0 - s,
            "sudden": (1.0 - s) / (2.0 + s),
        }
        if ratio < 1.0:
            beta1 = beta1_hbar_omega1 / omega1   # natural units: hbar = 1
            q_map = adiabatic_q(omega1) if speed == "adiabatic" else sudden_q(omega1)
            opt = numeric_max_power(omega1, beta1, ratio * beta1, q_map)
            row["eta_numeric"] = opt.eta_at_max_power
            row["omega2_opt_ratio"] = opt.omega2_opt / omega1
        else:
            row["eta_numeric"] = 0.0
            row["omega2_opt_ratio"] = 1.0
        rows.append(row)
    return rows
