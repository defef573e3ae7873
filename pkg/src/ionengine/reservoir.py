"""Engineered laser reservoirs: stochastic scattering, gating, thermometry.

Heat and cool baths are realized as detuned beams on a cycling transition:
a two-level Lorentzian scattering rate with saturation and first-order
Doppler shift, momentum kicks of hbar*k per absorption plus an isotropic
hbar*k emission recoil.  No Zeeman substructure, no polarization, and each
beam saturates independently of the others.

Bath temperatures are not set by a formula: they emerge from detuning,
saturation and exposure gating, and are calibrated by thermometry runs.
The one closed-form anchor is the Doppler limit hbar*Gamma/(2 kB), which
free-space cooling at half-linewidth red detuning must approach.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .units import HBAR_SI, KB_SI

__all__ = [
    "GateSpec",
    "LaserBeam",
    "ScatterOutcome",
    "ALWAYS_ON",
    "gate_active",
    "scattering_rate",
    "sample_scatter",
    "doppler_limit",
    "scatter_block",
    "free_space_ensemble",
    "GAMMA_CA40",
    "WAVELENGTH_CA40",
]

# Calcium-40 cycling transition defaults used by the shipped presets.
GAMMA_CA40 = 2.0 * math.pi * 21.6e6      # rad/s
WAVELENGTH_CA40 = 397e-9                 # m

GATE_KINDS = ("always_on", "phase_window", "spatial_focus")
ROLES = ("heat", "cool", "dissipation")

# Poisson thinning bound: at most this event probability per sampling slice.
MAX_RATE_DT = 0.1


@dataclass(frozen=True)
class GateSpec:
    """When/where a beam couples to the ion.

    phase_window gates on the ensemble axial phase (a window of width
    2*pi*window_fraction centered on phase_center); spatial_focus gates on
    the ion's own axial position through a Gaussian intensity profile.
    """

    kind: str = "always_on"
    window_fraction: float = 1.0
    phase_center: float = 0.0
    focus_z: float = 0.0
    waist: float = 1.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"gate kind must be one of {GATE_KINDS}, got {self.kind!r}")
        if self.kind == "phase_window" and not (0.0 < self.window_fraction <= 1.0):
            raise ValueError(
                f"window_fraction must be in (0, 1], got {self.window_fraction!r}")
        if self.kind == "spatial_focus" and not (self.waist > 0.0):
            raise ValueError(f"waist must be > 0, got {self.waist!r}")


ALWAYS_ON = GateSpec()


def gate_active(gate: GateSpec, axial_phase: float = 0.0, position=None):
    """Gate attenuation in [0, 1].

    Phase windows are hard on/off; spatial gates attenuate by the Gaussian
    intensity factor at the ion's axial position.  Works elementwise when
    `position` carries arrays.
    """
    if gate.kind == "always_on":
        return 1.0
    if gate.kind == "phase_window":
        if gate.window_fraction >= 1.0:
            return 1.0
        d = (axial_phase - gate.phase_center + math.pi) % (2.0 * math.pi) - math.pi
        return 1.0 if abs(d) <= math.pi * gate.window_fraction else 0.0
    z = position[2]
    dz = z - gate.focus_z
    return np.exp(-2.0 * dz * dz / (gate.waist * gate.waist))


@dataclass(frozen=True)
class LaserBeam:
    """One reservoir beam: direction, transition, detuning, intensity, gate."""

    direction: tuple[float, float, float]
    k: float                    # wavenumber, 1/m
    detuning: float             # rad/s, negative = red
    gamma: float                # transition linewidth, rad/s
    saturation: float
    role: str = "cool"
    gate: GateSpec = ALWAYS_ON
    label: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        d = self.direction
        norm = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if not (math.isfinite(norm) and norm > 0.0):
            raise ValueError("beam direction must be a nonzero vector")
        if abs(norm - 1.0) > 1e-9:
            object.__setattr__(self, "direction",
                               (d[0] / norm, d[1] / norm, d[2] / norm))
        if not (self.k > 0.0 and math.isfinite(self.k)):
            raise ValueError(f"wavenumber must be > 0, got {self.k!r}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"linewidth must be > 0, got {self.gamma!r}")
        if self.saturation < 0.0:
            raise ValueError(f"saturation must be >= 0, got {self.saturation!r}")
        if self.role == "heat" and self.detuning <= 0.0:
            raise ValueError("heat beams must be blue detuned (detuning > 0)")
        if self.role in ("cool", "dissipation") and self.detuning >= 0.0:
            raise ValueError(f"{self.role} beams must be red detuned (detuning < 0)")

    @property
    def recoil_momentum(self) -> float:
        return HBAR_SI * self.k


@dataclass(frozen=True)
class ScatterOutcome:
    """Result of one Poisson-thinned scattering trial."""

    occurred: bool
    momentum_kick: tuple[float, float, float]


def scattering_rate(beam: LaserBeam, velocity, position=None,
                    axial_phase: Optional[float] = None):
    """Photon scattering rate (events/s) for the Doppler-shifted ion.

    The effective saturation is the beam saturation times the gate
    attenuation; phase-gated beams need the schedule phase passed in.
    Vectorizes over velocity/position arrays.
    """
    if beam.gate.kind == "phase_window" and axial_phase is None:
        raise ValueError("phase-gated beam needs the schedule's axial phase")
    att = gate_active(beam.gate, axial_phase or 0.0, position)
    dx, dy, dz = beam.direction
    v_par = dx * velocity[0] + dy * velocity[1] + dz * velocity[2]
    delta_eff = beam.detuning - beam.k * v_par
    s_eff = beam.saturation * att
    lorentz = 1.0 + s_eff + (2.0 * delta_eff / beam.gamma) ** 2
    return 0.5 * beam.gamma * s_eff / lorentz


def sample_scatter(beam: LaserBeam, state, dt: float, rng: np.random.Generator,
                   axial_phase: Optional[float] = None) -> ScatterOutcome:
    """One Poisson-thinned scattering trial over dt for a single trajectory.

    Event probability is 1 - exp(-rate*dt); on an event the kick is the
    absorption momentum along the beam plus an isotropic emission recoil.
    Raises if rate*dt exceeds the thinning bound (the caller substeps).
    """
    rate = scattering_rate(beam, state.velocity, state.position, axial_phase)
    if rate * dt > MAX_RATE_DT:
        raise ValueError(
            f"rate*dt = {rate * dt:.3g} > {MAX_RATE_DT}: substep the scattering")
    if rng.random() >= -math.expm1(-rate * dt):
        return ScatterOutcome(occurred=False, momentum_kick=(0.0, 0.0, 0.0))
    pk = beam.recoil_momentum
    u = 2.0 * rng.random() - 1.0
    phi = 2.0 * math.pi * rng.random()
    s = math.sqrt(max(0.0, 1.0 - u * u))
    ex, ey, ez = s * math.cos(phi), s * math.sin(phi), u
    dx, dy, dz = beam.direction
    return ScatterOutcome(
        occurred=True,
        momentum_kick=(pk * (dx + ex), pk * (dy + ey), pk * (dz + ez)))


def doppler_limit(gamma: float) -> float:
    """Doppler cooling limit hbar*Gamma/(2 kB) in kelvin."""
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError(f"linewidth must be > 0, got {gamma!r}")
    return HBAR_SI * gamma / (2.0 * KB_SI)


def scatter_block(beam: LaserBeam, vel: np.ndarray, mass: float, dt: float,
                  rng: np.random.Generator, gate_factor=1.0) -> tuple[int, float, float]:
    """Apply one beam's scattering to a block of trajectories, in place.

    vel is (n, 3) and is updated with absorption plus emission kicks drawn
    from the block's private stream.  The slice dt is substepped so no
    substep violates the thinning bound even at full resonance.  Returns
    (events, total kinetic-energy change, axial kinetic-energy change) in J
    for the energy audit.
    """
    if np.isscalar(gate_factor) and gate_factor == 0.0:
        return 0, 0.0, 0.0
    s_top = beam.saturation * (gate_factor if np.isscalar(gate_factor)
                               else float(np.max(gate_factor)))
    if s_top <= 0.0:
        return 0, 0.0, 0.0
    d = beam.direction
    # Axis-aligned beams skip the matvec for the Doppler projection.
    axis = next((i for i in range(3) if abs(d[i]) == 1.0), None)
    d_arr = np.asarray(d)
    pk = beam.recoil_momentum / mass
    two_over_gamma = 2.0 / beam.gamma
    half_gamma = 0.5 * beam.gamma

    def rates(v):
        if axis is not None:
            v_par = v[:, axis] if d[axis] > 0 else -v[:, axis]
        else:
            v_par = v @ d_arr
        u_det = two_over_gamma * (beam.detuning - beam.k * v_par)
        s_eff = beam.saturation * gate_factor
        return half_gamma * s_eff / (1.0 + s_eff + u_det * u_det)

    def kicks(v_old, n_kick):
        u = 2.0 * rng.random(n_kick) - 1.0
        phi = (2.0 * math.pi) * rng.random(n_kick)
        s = np.sqrt(np.maximum(0.0, 1.0 - u * u))
        v_new = np.empty_like(v_old)
        v_new[:, 0] = v_old[:, 0] + pk * (d[0] + s * np.cos(phi))
        v_new[:, 1] = v_old[:, 1] + pk * (d[1] + s * np.sin(phi))
        v_new[:, 2] = v_old[:, 2] + pk * (d[2] + u)
        return v_new

    lam = rates(vel) * dt
    # Bulk population: event probability per step is small, one thinned
    # draw per trajectory is accurate to O(lam^2).
    p = -np.expm1(-lam)
    hit = rng.random(vel.shape[0]) < p
    fast = lam > MAX_RATE_DT
    hit &= ~fast
    idx = np.nonzero(hit)[0]
    n_events = int(idx.size)
    de_total = 0.0
    de_axial = 0.0
    if idx.size:
        v_old = vel[idx]
        v_new = kicks(v_old, idx.size)
        de_total += 0.5 * mass * float((v_new * v_new - v_old * v_old).sum())
        de_axial += 0.5 * mass * float((v_new[:, 2] ** 2 - v_old[:, 2] ** 2).sum())
        vel[idx] = v_new

    # Near-resonant subset: substep adaptively so each slice stays within
    # the thinning bound even as kicks move the velocity.
    fidx = np.nonzero(fast)[0]
    if fidx.size:
        sub = vel[fidx]
        if np.isscalar(gate_factor):
            sub_gate = gate_factor
        else:
            sub_gate = gate_factor[fidx]
        saved_gate = gate_factor
        gate_factor = sub_gate
        remaining = dt
        while remaining > 0.0:
            r = rates(sub)
            cap = float(r.max())
            if cap <= 0.0:
                break
            h = remaining if cap * remaining <= MAX_RATE_DT else MAX_RATE_DT / cap
            remaining -= h
            ps = -np.expm1(r * (-h))
            sidx = np.nonzero(rng.random(sub.shape[0]) < ps)[0]
            if sidx.size == 0:
                continue
            v_old = sub[sidx]
            v_new = kicks(v_old, sidx.size)
            de_total += 0.5 * mass * float((v_new * v_new - v_old * v_old).sum())
            de_axial += 0.5 * mass * float((v_new[:, 2] ** 2 - v_old[:, 2] ** 2).sum())
            sub[sidx] = v_new
            n_events += int(sidx.size)
        gate_factor = saved_gate
        vel[fidx] = sub
    return n_events, de_total, de_axial


def free_space_ensemble(beams, mass: float, n: int, dt: float, n_steps: int,
                        seed: int = 0, v0: float = 0.0,
                        sample_every: int = 50):
    """Trap-free ensemble under the given beams; returns (times, temperatures).

    Every trajectory starts at speed v0 along +x (0 for a motionless start).
    Temperature is from the full kinetic energy, 3 modes: T = m<v^2>/(3 kB).
    Free flight has no position dependence, so only velocities evolve.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    vel = np.zeros((n, 3))
    vel[:, 0] = v0
    times = []
    temps = []
    for i in range(n_steps):
        for beam in beams:
            scatter_block(beam, vel, mass, dt, rng)
        if i % sample_every == sample_every - 1:
            v2 = np.einsum("ij,ij->i", vel, vel)
            times.append((i + 1) * dt)
            temps.append(mass * float(v2.mean()) / (3.0 * KB_SI))
    return np.asarray(times), np.asarray(temps)
