"""Tapered linear Paul trap: fields, forces, calibration, trajectory stepping.

The trap's rf electrodes make an angle theta with the axis, so the radial
confinement stiffens toward one end.  Two force models are provided:

* ``pseudopotential`` - the time-averaged secular potential.  Radial
  confinement scales as r0^4 / (r0 + z tan(theta))^4, which couples the
  radial energy to the axial coordinate: a radially hot ion feels an axial
  force toward the wide end.
* ``full_rf`` - the oscillating saddle potential at the drive frequency,
  plus the static axial harmonic term (the rf saddle provides no axial
  confinement on its own).  Its amplitude u0 is fixed operationally by
  `calibrate_u0` so the secular frequency at the trap center matches the
  requested one.

Trajectories are advanced with the order-4 symplectic scheme from
`ionengine.integrators`; in a static potential the energy error stays
bounded below 1e-5 relative at 50 steps per period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .integrators import _D1, _D2, _D3, _K1, _K2, _T1, _T2, _T3, _T4
from .units import CA40_MASS_SI, KB_SI

__all__ = [
    "TrapGeometry",
    "IonState",
    "FORCE_MODES",
    "ValidityError",
    "default_geometry",
    "pseudopotential",
    "pseudo_force",
    "rf_potential",
    "rf_force",
    "local_radial_frequencies",
    "equilibrium_shift",
    "calibrate_u0",
    "calibrated",
    "step",
    "total_energy",
    "min_steps_per_period",
]

FORCE_MODES = ("pseudopotential", "full_rf")

# Trajectories must stay clear of the taper apex where the potential diverges.
VALIDITY_FRACTION = 0.9

min_steps_per_period = 50


class ValidityError(RuntimeError):
    """Trajectory left the region where the tapered-field model holds."""


@dataclass(frozen=True)
class TrapGeometry:
    """Electrode geometry, secular frequencies, drive and ion mass (SI).

    theta is the electrode angle to the trap axis; r0 the radial distance of
    the ion to the electrodes at the center; omega0x/y/z the secular
    frequencies at the trap center (angular, rad/s); omega_rf the drive
    frequency; u0 the calibrated rf amplitude (J), None until calibrated.
    """

    theta: float
    r0: float
    length: float
    omega0x: float
    omega0y: float
    omega0z: float
    omega_rf: float
    mass: float
    u0: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.theta < 0.5 * math.pi):
            raise ValueError(f"theta must be in [0, pi/2), got {self.theta!r}")
        for name in ("r0", "length", "omega0x", "omega0y", "omega0z",
                     "omega_rf", "mass"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        ratio = self.omega_rf / max(self.omega0x, self.omega0y)
        if ratio < 5.0:
            raise ValueError(
                f"drive must be well above the secular frequencies "
                f"(omega_rf/omega0 = {ratio:.2f} < 5)")
        if ratio < 10.0:
            import warnings
            warnings.warn(
                f"omega_rf/omega0 = {ratio:.2f} < 10: pseudopotential "
                "description is getting marginal", stacklevel=2)

    @property
    def tan_theta(self) -> float:
        return math.tan(self.theta)

    def z_validity(self) -> float:
        """Half-width of |z tan(theta)| < VALIDITY_FRACTION * r0 (inf at theta=0)."""
        if self.theta == 0.0:
            return math.inf
        return VALIDITY_FRACTION * self.r0 / self.tan_theta


def default_geometry(omega0z: float = 2.0 * math.pi / 10e-6) -> TrapGeometry:
    """Stock tapered-trap geometry: 20 deg taper, r0 = 1 mm, 5 mm long,
    radial secular 6.0e6 rad/s, drive 6.0e7 rad/s, one calcium-40 ion.

    The axial frequency defaults to an oscillation period of 10 us.
    """
    return TrapGeometry(theta=math.radians(20.0), r0=1e-3, length=5e-3,
                        omega0x=6.0e6, omega0y=6.0e6, omega0z=omega0z,
                        omega_rf=6.0e7, mass=CA40_MASS_SI)


@dataclass(frozen=True)
class IonState:
    """Position (m), velocity (m/s) and time (s) of one trajectory."""

    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    time: float = 0.0


def _check_validity(g: TrapGeometry, z: float) -> None:
    if abs(z) * g.tan_theta >= VALIDITY_FRACTION * g.r0:
        raise ValidityError(
            f"|z tan(theta)| = {abs(z) * g.tan_theta:.3e} reached "
            f"{VALIDITY_FRACTION} * r0; tapered-field model invalid")


def local_radial_frequencies(g: TrapGeometry, z: float) -> tuple[float, float]:
    """Radial secular frequencies at axial position z."""
    _check_validity(g, z)
    R = g.r0 + z * g.tan_theta
    s = (g.r0 / R) ** 2
    return g.omega0x * s, g.omega0y * s


def pseudopotential(g: TrapGeometry, pos) -> float:
    """Secular potential energy (J) at (x, y, z)."""
    x, y, z = pos
    _check_validity(g, z)
    R = g.r0 + z * g.tan_theta
    f = (g.r0 / R) ** 4
    rad = 0.5 * g.mass * (g.omega0x ** 2 * x * x + g.omega0y ** 2 * y * y) * f
    return rad + 0.5 * g.mass * g.omega0z ** 2 * z * z


def _pseudo_accel(g: TrapGeometry, x, y, z):
    """Acceleration under the secular potential; works on floats or arrays.

    The axial component carries +4 tan(theta)/R times the radial potential
    energy per unit mass: radially hot ions are pushed toward the wide end.
    """
    tt = g.tan_theta
    R = g.r0 + z * tt
    rr = (g.r0 * g.r0) / (R * R)
    f = rr * rr
    wx2 = g.omega0x * g.omega0x
    wy2 = g.omega0y * g.omega0y
    ax = -wx2 * x * f
    ay = -wy2 * y * f
    vrad2 = wx2 * x * x + wy2 * y * y      # 2 * (radial PE per unit mass)
    az = -g.omega0z * g.omega0z * z + (2.0 * tt / R) * vrad2 * f
    return ax, ay, az


def pseudo_force(g: TrapGeometry, pos) -> tuple[float, float, float]:
    """Analytic -grad of the secular potential (N)."""
    x, y, z = pos
    _check_validity(g, z)
    ax, ay, az = _pseudo_accel(g, x, y, z)
    return g.mass * ax, g.mass * ay, g.mass * az


def rf_potential(g: TrapGeometry, pos, t: float) -> float:
    """Oscillating saddle potential plus static axial confinement (J)."""
    if g.u0 is None:
        raise ValueError("geometry is uncalibrated: run calibrate_u0 first")
    x, y, z = pos
    _check_validity(g, z)
    R = g.r0 + z * g.tan_theta
    saddle = g.u0 * math.sin(g.omega_rf * t) * (x * x - y * y) / (R * R)
    return saddle + 0.5 * g.mass * g.omega0z ** 2 * z * z


def _rf_accel_factory(g: TrapGeometry):
    if g.u0 is None:
        raise ValueError("geometry is uncalibrated: run calibrate_u0 first")
    tt = g.tan_theta
    u0_m = g.u0 / g.mass
    wz2 = g.omega0z * g.omega0z
    wrf = g.omega_rf
    r0 = g.r0

    def accel(x, y, z, t):
        R = r0 + z * tt
        drive = math.sin(wrf * t) * u0_m
        inv_R2 = 1.0 / (R * R)
        ax = -2.0 * drive * x * inv_R2
        ay = 2.0 * drive * y * inv_R2
        az = -wz2 * z + 2.0 * drive * tt * (x * x - y * y) * inv_R2 / R
        return ax, ay, az

    return accel


def rf_force(g: TrapGeometry, pos, t: float) -> tuple[float, float, float]:
    """Analytic -grad of the rf potential at time t (N)."""
    x, y, z = pos
    _check_validity(g, z)
    ax, ay, az = _rf_accel_factory(g)(x, y, z, t)
    return g.mass * ax, g.mass * ay, g.mass * az


def accel_function(g: TrapGeometry, mode: str) -> Callable:
    """(x, y, z, t) -> (ax, ay, az); floats or numpy arrays both work in
    pseudopotential mode, full_rf needs scalar t either way."""
    if mode == "pseudopotential":
        return lambda x, y, z, t: _pseudo_accel(g, x, y, z)
    if mode == "full_rf":
        return _rf_accel_factory(g)
    raise ValueError(f"mode must be one of {FORCE_MODES}, got {mode!r}")


def _fastest_period(g: TrapGeometry, mode: str, z: float) -> float:
    if mode == "full_rf":
        return 2.0 * math.pi / g.omega_rf
    wx, wy = local_radial_frequencies(g, z)
    return 2.0 * math.pi / max(wx, wy, g.omega0z)


def step(state: IonState, g: TrapGeometry, mode: str = "pseudopotential",
         extra_force: Optional[tuple[float, float, float]] = None,
         dt: float = None, n_steps: int = 1) -> IonState:
    """Advance one trajectory by n_steps symplectic steps of size dt.

    dt must resolve the fastest local period with at least 50 steps.  Any
    `extra_force` (N) is treated as constant over the span; stochastic laser
    kicks belong between calls (see `ionengine.reservoir`), never inside.
    Raises ValidityError if the trajectory reaches the taper guard.
    """
    if dt is None or dt <= 0.0:
        raise ValueError("dt must be a positive step size")
    x, y, z = state.position
    vx, vy, vz = state.velocity
    t = state.time
    _check_validity(g, z)
    if dt > _fastest_period(g, mode, z) / min_steps_per_period * (1.0 + 1e-12):
        raise ValueError(
            f"dt = {dt:g} too large: need >= {min_steps_per_period} steps per "
            f"fastest period {_fastest_period(g, mode, z):g}")
    accel = accel_function(g, mode)
    eax = eay = eaz = 0.0
    if extra_force is not None:
        eax, eay, eaz = (f / g.mass for f in extra_force)
    zmax = g.z_validity()

    for _ in range(n_steps):
        # Order-4 stage sequence, unrolled on plain floats for speed.
        x += _D1 * dt * vx; y += _D1 * dt * vy; z += _D1 * dt * vz
        ax, ay, az = accel(x, y, z, t + _T1 * dt)
        c = _K1 * dt
        vx += c * (ax + eax); vy += c * (ay + eay); vz += c * (az + eaz)
        x += _D2 * dt * vx; y += _D2 * dt * vy; z += _D2 * dt * vz
        ax, ay, az = accel(x, y, z, t + _T2 * dt)
        c = _K2 * dt
        vx += c * (ax + eax); vy += c * (ay + eay); vz += c * (az + eaz)
        x += _D3 * dt * vx; y += _D3 * dt * vy; z += _D3 * dt * vz
        ax, ay, az = accel(x, y, z, t + _T3 * dt)
        vx += c * (ax + eax); vy += c * (ay + eay); vz += c * (az + eaz)
        x += _D2 * dt * vx; y += _D2 * dt * vy; z += _D2 * dt * vz
        ax, ay, az = accel(x, y, z, t + _T4 * dt)
        c = _K1 * dt
        vx += c * (ax + eax); vy += c * (ay + eay); vz += c * (az + eaz)
        x += _D1 * dt * vx; y += _D1 * dt * vy; z += _D1 * dt * vz
        t += dt
        if abs(z) >= zmax:
            raise ValidityError(
                f"trajectory reached |z| = {abs(z):.3e} m at t = {t:.3e} s; "
                "taper model invalid there")

    return IonState(position=(x, y, z), velocity=(vx, vy, vz), time=t)


def total_energy(g: TrapGeometry, state: IonState,
                 mode: str = "pseudopotential") -> float:
    """Kinetic plus potential energy (J); rf mode uses the instantaneous field."""
    x, y, z = state.position
    vx, vy, vz = state.velocity
    ke = 0.5 * g.mass * (vx * vx + vy * vy + vz * vz)
    if mode == "pseudopotential":
        return ke + pseudopotential(g, state.position)
    return ke + rf_potential(g, state.position, state.time)


def equilibrium_shift(g: TrapGeometry, T: float) -> float:
    """Axial equilibrium displacement of a radially thermal ion (m).

    Balances the static axial restoring force against the taper force with
    the radial potential energy at its classical thermal mean (kB*T for the
    two radial modes); solved by bisection on the bracketing interval.
    """
    if T < 0.0 or not math.isfinite(T):
        raise ValueError(f"temperature must be finite and >= 0, got {T!r}")
    if T == 0.0 or g.theta == 0.0:
        return 0.0
    tt = g.tan_theta
    c = 4.0 * tt * KB_SI * T

    def balance(z):
        return g.mass * g.omega0z ** 2 * z * (g.r0 + z * tt) - c

    lo = 0.0
    hi = g.z_validity() * (1.0 - 1e-12)
    if balance(hi) < 0.0:
        raise ValueError(
            f"no equilibrium inside the validity region at T = {T:g} K "
            "(temperature too high for this geometry)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if balance(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(hi, 1e-30):
            break
    return 0.5 * (lo + hi)


def _measure_secular_frequency(g: TrapGeometry, x0: float, n_periods: int,
                               steps_per_rf: int = 64) -> float:
    """Secular frequency from interpolated x zero crossings in full_rf mode.

    Micromotion multiplies the secular motion, so it moves no zero crossing;
    counting crossings over many periods is insensitive to it.
    """
    accel = _rf_accel_factory(g)
    dt = 2.0 * math.pi / g.omega_rf / steps_per_rf
    t_end = n_periods * 2.0 * math.pi / g.omega0x
    n_steps = int(t_end / dt)
    x, y, z = x0, 0.0, 0.0
    vx = vy = vz = 0.0
    t = 0.0
    crossings = []
    x_prev, t_prev = x, t
    amp_limit = 100.0 * abs(x0)
    for _ in range(n_steps):
        x += _D1 * dt * vx
        ax, _, _ = accel(x, y, z, t + _T1 * dt)
        vx += _K1 * dt * ax
        x += _D2 * dt * vx
        ax, _, _ = accel(x, y, z, t + _T2 * dt)
        vx += _K2 * dt * ax
        x += _D3 * dt * vx
        ax, _, _ = accel(x, y, z, t + _T3 * dt)
        vx += _K2 * dt * ax
        x += _D2 * dt * vx
        ax, _, _ = accel(x, y, z, t + _T4 * dt)
        vx += _K1 * dt * ax
        x += _D1 * dt * vx
        t += dt
        if abs(x) > amp_limit:
            raise RuntimeError(
                "unstable rf drive: secular motion unbounded during calibration")
        if x_prev < 0.0 <= x or x_prev >= 0.0 > x:
            # Linear interpolation of the crossing time.
            frac = x_prev / (x_prev - x)
            crossings.append(t_prev + frac * dt)
        x_prev, t_prev = x, t
    if len(crossings) < 4:
        raise RuntimeError("too few oscillations to measure a secular frequency")
    return math.pi * (len(crossings) - 1) / (crossings[-1] - crossings[0])


def calibrate_u0(g: TrapGeometry, n_periods: int = 120) -> float:
    """rf amplitude u0 (J) reproducing omega0x at the trap center.

    Starts from the small-q stability estimate and iterates against the
    measured secular frequency of a center test trajectory until the match
    is well inside 0.5%.  The taper plays no role at the center, so the
    calibration runs on an untapered copy of the geometry.
    """
    target = g.omega0x
    u0 = g.mass * g.r0 ** 2 * g.omega_rf * target / math.sqrt(2.0)
    flat = replace(g, theta=0.0, u0=u0)
    x0 = 1e-6 * g.r0 if g.r0 > 0 else 1e-9
    for _ in range(6):
        measured = _measure_secular_frequency(flat, x0, n_periods)
        if abs(measured - target) <= 1e-3 * target:
            break
        flat = replace(flat, u0=flat.u0 * target / measured)
    else:
        raise RuntimeError(
            f"u0 calibration did not converge: measured {measured:g} "
            f"vs target {target:g}")
    return flat.u0


def calibrated(g: TrapGeometry, **kwargs) -> TrapGeometry:
    """Copy of g with u0 set by calibration."""
    return replace(g, u0=calibrate_u0(g, **kwargs))
