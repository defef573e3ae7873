"""Adiabaticity factor of an arbitrary frequency ramp.

A harmonic oscillator whose angular frequency is swept from omega_i to
omega_f picks up excitation unless the sweep is infinitely slow.  The
dimensionless factor quantifying that excitation is computed here from the
fundamental-solution pair of the classical parametric-oscillator equation
x'' = -omega(t)^2 x.  It is exactly 1 for a constant frequency, approaches 1
for slow ramps, and equals (omega_i^2 + omega_f^2) / (2 omega_i omega_f) for
an instantaneous jump; those two limits are the correctness anchors the test
suite enforces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .integrators import pefrl_step

__all__ = [
    "FrequencyRamp",
    "FundamentalSolution",
    "make_ramp",
    "load_ramp",
    "solve_fundamental",
    "qstar",
    "qstar_for_ramp",
]

RAMP_KINDS = ("sudden", "linear", "tabulated")


@dataclass(frozen=True)
class FrequencyRamp:
    """Time profile omega(t) of one compression or expansion stroke.

    `samples` is only used by the tabulated kind: an (N, 2) array of
    (time, omega) pairs, strictly increasing in time, bracketing
    [0, duration].  omega(t) must stay positive everywhere.
    """

    kind: str
    omega_i: float
    omega_f: float
    duration: float
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in RAMP_KINDS:
            raise ValueError(f"unknown ramp kind {self.kind!r}, expected one of {RAMP_KINDS}")
        for name in ("omega_i", "omega_f"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        if not math.isfinite(self.duration) or self.duration < 0.0:
            raise ValueError(f"duration must be finite and >= 0, got {self.duration!r}")
        if self.kind == "sudden":
            if self.duration != 0.0:
                raise ValueError("sudden ramp must have zero duration")
        else:
            if self.duration == 0.0:
                raise ValueError(f"{self.kind} ramp needs a positive duration")
        if self.kind == "tabulated":
            s = self.samples
            if s is None or s.ndim != 2 or s.shape[1] != 2 or s.shape[0] < 2:
                raise ValueError("tabulated ramp needs an (N>=2, 2) samples array")
            t = s[:, 0]
            w = s[:, 1]
            if np.any(np.diff(t) <= 0):
                raise ValueError("tabulated sample times must be strictly increasing")
            if t[0] > 0.0 or t[-1] < self.duration:
                raise ValueError("tabulated samples must bracket [0, duration]")
            if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
                raise ValueError("tabulated omega values must be finite and > 0")
        elif self.samples is not None:
            raise ValueError("samples are only meaningful for the tabulated kind")

    def omega(self, t: float) -> float:
        """Instantaneous angular frequency at time t in [0, duration]."""
        if self.kind == "sudden":
            return self.omega_f if t > 0.0 else self.omega_i
        if self.kind == "linear":
            frac = min(max(t / self.duration, 0.0), 1.0)
            return self.omega_i + (self.omega_f - self.omega_i) * frac
        return float(np.interp(t, self.samples[:, 0], self.samples[:, 1]))

    @property
    def omega_max(self) -> float:
        if self.kind == "tabulated":
            return float(self.samples[:, 1].max())
        return max(self.omega_i, self.omega_f)


def make_ramp(kind: str, omega_i: float, omega_f: float, duration: float,
              samples: Optional[Sequence] = None) -> FrequencyRamp:
    """Build a ramp, normalizing tabulated samples to a float array.

    Tabulated samples are rescaled so the endpoint frequencies are honored
    exactly (the table supplies the shape, omega_i/omega_f the boundary
    values); pass omega_i == samples[0,1] and omega_f == samples[-1,1] if no
    rescaling is wanted.
    """
    arr = None
    if samples is not None:
        arr = np.asarray(samples, dtype=float)
        if kind == "tabulated" and arr.ndim == 2 and arr.shape[0] >= 2:
            w0, w1 = arr[0, 1], arr[-1, 1]
            if w0 > 0 and w1 > 0 and (w0 != omega_i or w1 != omega_f):
                # Affine map in omega pinning both endpoints.
                if w1 != w0:
                    scale = (omega_f - omega_i) / (w1 - w0)
                    arr = arr.copy()
                    arr[:, 1] = omega_i + (arr[:, 1] - w0) * scale
                else:
                    arr = arr.copy()
                    arr[:, 1] = omega_i
    return FrequencyRamp(kind=kind, omega_i=omega_i, omega_f=omega_f,
                         duration=duration, samples=arr)


def load_ramp(path, duration: Optional[float] = None) -> FrequencyRamp:
    """Load a tabulated ramp from a two-column text file (time, omega), SI."""
    data = np.loadtxt(path, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (time, omega)")
    dur = float(data[-1, 0]) if duration is None else float(duration)
    return FrequencyRamp(kind="tabulated", omega_i=float(data[0, 1]),
                         omega_f=float(data[-1, 1]), duration=dur, samples=data)


@dataclass(frozen=True)
class FundamentalSolution:
    """Fundamental-solution pair of x'' = -omega(t)^2 x at the final time.

    (x, xdot) evolve from X(0)=1, X'(0)=0 and (y, ydot) from Y(0)=0, Y'(0)=1,
    so y carries units of time.  The Wronskian x*ydot - xdot*y equals 1 for
    the exact flow; the integrator preserves it to round-off and the solver
    rejects solutions where it has degraded past 1e-9.
    """

    x: float
    xdot: float
    y: float
    ydot: float

    @property
    def wronskian(self) -> float:
        return self.x * self.ydot - self.xdot * self.y


WRONSKIAN_TOL = 1e-9
MIN_STEPS_PER_PERIOD = 50


def solve_fundamental(ramp: FrequencyRamp, dt: Optional[float] = None,
                      wronskian_samples: Optional[list] = None) -> FundamentalSolution:
    """Integrate the fundamental pair over [0, duration].

    dt defaults to 1/200 of the shortest oscillation period and must resolve
    at least MIN_STEPS_PER_PERIOD steps per period.  If `wronskian_samples`
    is a list, (t, wronskian_error) pairs are appended every 100 steps so
    conservation can be checked along the whole trajectory.
    """
    if ramp.duration == 0.0:
        return FundamentalSolution(x=1.0, xdot=0.0, y=0.0, ydot=1.0)

    period_min = 2.0 * math.pi / ramp.omega_max
    dt_max = period_min / MIN_STEPS_PER_PERIOD
    if dt is None:
        dt = period_min / 200.0
    if dt > dt_max * (1.0 + 1e-12):
        raise ValueError(
            f"dt={dt:g} too coarse: need <= {dt_max:g} "
            f"({MIN_STEPS_PER_PERIOD} steps per fastest period)")

    n_steps = max(1, math.ceil(ramp.duration / dt))
    h = ramp.duration / n_steps

    def accel(state, t):
        w = ramp.omega(t)
        if w <= 0.0:
            raise ValueError(f"non-positive omega({t}) = {w}")
        return (-w * w) * state

    pos = np.array([1.0, 0.0])   # [X, Y]
    vel = np.array([0.0, 1.0])   # [X', Y']
    t = 0.0
    for i in range(n_steps):
        pos, vel = pefrl_step(pos, vel, t, h, accel)
        t += h
        if wronskian_samples is not None and (i % 100 == 99 or i == n_steps - 1):
            w_err = pos[0] * vel[1] - vel[0] * pos[1] - 1.0
            wronskian_samples.append((t, w_err))

    sol = FundamentalSolution(x=float(pos[0]), xdot=float(vel[0]),
                              y=float(pos[1]), ydot=float(vel[1]))
    if abs(sol.wronskian - 1.0) > WRONSKIAN_TOL:
        raise RuntimeError(
            f"Wronskian drifted to {sol.wronskian!r}; integration unreliable")
    return sol


def qstar(sol: FundamentalSolution, omega_i: float, omega_f: float) -> float:
    """Adiabaticity factor from the fundamental solution of the ramp.

    Constructed so that a trivial ramp (identity solution at equal
    frequencies) gives exactly 1 and a zero-duration solution gives the
    sudden-jump value; both limits are asserted by the test suite.
    """
    for name, v in (("omega_i", omega_i), ("omega_f", omega_f)):
        if not math.isfinite(v) or v <= 0.0:
            raise ValueError(f"{name} must be finite and > 0, got {v!r}")
    wi2 = omega_i * omega_i
    wf2 = omega_f * omega_f
    num = wi2 * (wf2 * sol.y * sol.y + sol.ydot * sol.ydot) \
        + (wf2 * sol.x * sol.x + sol.xdot * sol.xdot)
    return num / (2.0 * omega_i * omega_f)


def qstar_for_ramp(ramp: FrequencyRamp, dt: Optional[float] = None) -> float:
    """Convenience wrapper: solve the ramp and evaluate its factor."""
    sol = solve_fundamental(ramp, dt=dt)
    return qstar(sol, ramp.omega_i, ramp.omega_f)
