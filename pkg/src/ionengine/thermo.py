"""Exact finite-time Otto-cycle quantities for a parametric harmonic oscillator.

The working medium is a single harmonic mode cycled between angular
frequencies omega1 (wide/cold corner) and omega2 (compressed/hot corner)
while alternating contact with two heat baths at inverse temperatures
beta1 > beta2.  Nonadiabatic driving during the frequency strokes enters
through a pair of dimensionless adiabaticity factors (1 for infinitely
slow strokes; see `ionengine.adiabaticity` for computing them from a ramp).

All quantities are returned in the energy units implied by the supplied
`UnitSystem` (joules for SI, dimensionless for natural units).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .units import NATURAL, UnitSystem

__all__ = [
    "CycleParams",
    "AdiabaticityPair",
    "StrokeDurations",
    "CycleEnergies",
    "CycleResult",
    "NotAnEngine",
    "coth",
    "stage_energies",
    "stroke_quantities",
    "engine_window",
    "is_engine",
    "efficiency",
    "power",
    "sudden_adiabaticity",
]


class NotAnEngine(ValueError):
    """The parameter set does not absorb heat from the hot bath.

    Raised when the engine conditions (upper bound on the compression
    adiabaticity factor, lower bound on the expansion one) fail, in which
    case the efficiency is not defined.
    """


def _positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


def coth(x: float) -> float:
    """Hyperbolic cotangent for x > 0, stable at both ends.

    Evaluated as 1 + 2/expm1(2x): expm1 keeps the small-x limit 1/x free of
    cancellation, and the large-x branch saturates to 1 before exp overflows.
    """
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"coth argument must be finite and > 0, got {x!r}")
    if x > 350.0:
        return 1.0
    return 1.0 + 2.0 / math.expm1(2.0 * x)


@dataclass(frozen=True)
class CycleParams:
    """Frequencies, bath inverse temperatures and constants of one cycle.

    omega1/omega2 are angular frequencies (rad/s); beta1/beta2 are inverse
    temperatures (1/J) of the cold and hot bath.  Engine operation requires
    beta1 > beta2 (cold bath colder); that ordering is asserted lazily by the
    operations that need it, not here, so non-engine cycles remain
    representable.
    """

    omega1: float
    omega2: float
    beta1: float
    beta2: float
    units: UnitSystem = NATURAL

    def __post_init__(self):
        for name in ("omega1", "omega2", "beta1", "beta2"):
            _positive_finite(name, getattr(self, name))

    @property
    def x1(self) -> float:
        """Dimensionless cold-corner argument beta1*hbar*omega1/2."""
        return 0.5 * self.beta1 * self.units.hbar * self.omega1

    @property
    def x2(self) -> float:
        """Dimensionless hot-corner argument beta2*hbar*omega2/2."""
        return 0.5 * self.beta2 * self.units.hbar * self.omega2


@dataclass(frozen=True)
class AdiabaticityPair:
    """Adiabaticity factors of the two frequency strokes (1 = adiabatic)."""

    q1: float
    q2: float

    def __post_init__(self):
        for name in ("q1", "q2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 1.0:
                raise ValueError(f"{name} must be finite and >= 1, got {v!r}")


ADIABATIC = AdiabaticityPair(1.0, 1.0)


def sudden_adiabaticity(omega1: float, omega2: float) -> float:
    """Adiabaticity factor of an instantaneous frequency jump."""
    _positive_finite("omega1", omega1)
    _positive_finite("omega2", omega2)
    return (omega1 * omega1 + omega2 * omega2) / (2.0 * omega1 * omega2)


@dataclass(frozen=True)
class StrokeDurations:
    """Durations of the four strokes, seconds."""

    tau1: float
    tau2: float
    tau3: float
    tau4: float

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3", "tau4"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def total(self) -> float:
        return self.tau1 + self.tau2 + self.tau3 + self.tau4


@dataclass(frozen=True)
class CycleEnergies:
    """Mean oscillator energy at the four cycle corners."""

    eA: float
    eB: float
    eC: float
    eD: float


@dataclass(frozen=True)
class CycleResult:
    """Per-cycle work, heat, efficiency and (optionally) power.

    Sign convention: w1/w3 are work done ON the oscillator, q2hot/q4cold heat
    absorbed BY it; w1 + w3 + q2hot + q4cold telescopes to zero.  The engine's
    output work is -(w1 + w3).
    """

    w1: float
    w3: float
    q2hot: float
    q4cold: float
    eta: Optional[float]
    power: Optional[float] = None


def stage_energies(p: CycleParams, q: AdiabaticityPair = ADIABATIC) -> CycleEnergies:
    """Mean energies at the four corners of the cycle.

    Thermal corners A and C carry (hbar*omega/2)*coth(beta*hbar*omega/2);
    the post-stroke corners B and D pick up the stroke's adiabaticity factor.
    """
    hbar = p.units.hbar
    c1 = coth(p.x1)
    c2 = coth(p.x2)
    eA = 0.5 * hbar * p.omega1 * c1
    eB = 0.5 * hbar * p.omega2 * q.q1 * c1
    eC = 0.5 * hbar * p.omega2 * c2
    eD = 0.5 * hbar * p.omega1 * q.q2 * c2
    return CycleEnergies(eA=eA, eB=eB, eC=eC, eD=eD)


def stroke_quantities(p: CycleParams, q: AdiabaticityPair = ADIABATIC) -> CycleResult:
    """Work and heat of the four strokes from corner-energy differences."""
    e = stage_energies(p, q)
    w1 = e.eB - e.eA
    q2hot = e.eC - e.eB
    w3 = e.eD - e.eC
    q4cold = e.eA - e.eD
    eta = None
    if is_engine(p, q) and q2hot > 0.0:
        eta = -(w1 + w3) / q2hot
    return CycleResult(w1=w1, w3=w3, q2hot=q2hot, q4cold=q4cold, eta=eta)


def engine_window(p: CycleParams) -> tuple[float, float]:
    """(q1_max, q2_min): the adiabaticity bounds for engine operation.

    Heat must flow in from the hot bath and out to the cold one, which bounds
    the compression factor from above and the expansion factor from below.
    """
    c1 = coth(p.x1)
    c2 = coth(p.x2)
    return c2 / c1, c1 / c2


def is_engine(p: CycleParams, q: AdiabaticityPair) -> bool:
    """True when the cycle absorbs heat hot-side and rejects it cold-side."""
    q1_max, q2_min = engine_window(p)
    return q.q1 <= q1_max and q.q2 >= q2_min


def efficiency(p: CycleParams, q: AdiabaticityPair = ADIABATIC) -> float:
    """Output work per cycle over heat received from the hot bath.

    For q1 = q2 = 1 the coth factors cancel algebraically and the value is
    exactly 1 - omega1/omega2.  Outside the engine window the ratio is
    meaningless and NotAnEngine is raised instead.
    """
    if not is_engine(p, q):
        raise NotAnEngine(
            "engine conditions violated: q1 <= coth(x2)/coth(x1) and "
            "q2 >= coth(x1)/coth(x2) required "
            f"(q1={q.q1}, q2={q.q2}, window={engine_window(p)})"
        )
    c1 = coth(p.x1)
    c2 = coth(p.x2)
    num = c1 - q.q2 * c2
    den = q.q1 * c1 - c2
    if den == 0.0:
        # Degenerate boundary point (x1 == x2, q1 == 1): no heat exchanged.
        raise NotAnEngine("degenerate cycle: no heat absorbed from the hot bath")
    return 1.0 - (p.omega1 / p.omega2) * (num / den)


def power(r: CycleResult, d: StrokeDurations) -> float:
    """Output power -(w1 + w3) / total duration; positive for an engine."""
    total = d.total
    if total <= 0.0:
        raise ValueError("total stroke duration must be > 0 to define power")
    return -(r.w1 + r.w3) / total
