"""Single-ion Otto heat engine toolkit.

Analytics: exact cycle thermodynamics (`thermo`), frequency-ramp
adiabaticity factors (`adiabaticity`), efficiency at maximum power
(`optimizer`).  Simulation: tapered Paul trap (`trap`), laser reservoirs
(`reservoir`), ensemble Monte-Carlo engine runs (`engine`).  The `cli`
module exposes all of it as the `ionengine` command.
"""

__version__ = "0.1.0"
