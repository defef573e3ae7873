"""Physical constants and the unit system the analytics run in.

All frequencies throughout the package are angular (rad/s).  Internal
computations are strict SI; lab-unit conversion happens only at the config
boundary (see `ionengine.config`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

HBAR_SI = 1.054571817e-34    # J s
KB_SI = 1.380649e-23         # J / K
AMU_SI = 1.66053906660e-27   # kg
CA40_MASS_SI = 39.962590850 * AMU_SI


@dataclass(frozen=True)
class UnitSystem:
    """Values of hbar and kB the thermodynamic formulas are evaluated with."""

    hbar: float
    kB: float

    def __post_init__(self):
        for name in ("hbar", "kB"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")


NATURAL = UnitSystem(hbar=1.0, kB=1.0)
SI = UnitSystem(hbar=HBAR_SI, kB=KB_SI)
