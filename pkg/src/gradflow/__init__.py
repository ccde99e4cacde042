"""Generalized JKO scheme with perspective-function proximal maps.

Each implicit step minimizes a transport cost (in perspective form) plus the
internal energy subject to a discrete continuity constraint, and is solved by
primal-dual splitting.  The main entry points are :func:`solve_jko_step` for a
single step and :func:`run_evolution` for a full time loop.
"""
from .config import RunConfig, load_config, parse_config, to_evolution
from .costs import ConeLimit, Power, QuadraticLimit, Relativistic
from .energies import Entropy, Indicator, PowerEnergy, doubly_nonlinear_energy
from .grid import GridSpec, build_constraint, estimate_operator_norm
from .jko import EvolutionConfig, InitialCondition, RunManifest, Snapshot, run_evolution
from .pd import PDConfig, solve_jko_step
from .perspective import prox_perspective
from .presets import PRESETS, run_preset
from .validation import BarenblattParams, barenblatt_value, error_norms

__version__ = "0.1.0"

__all__ = [
    "BarenblattParams", "ConeLimit", "Entropy", "EvolutionConfig", "GridSpec", "Indicator",
    "InitialCondition", "PDConfig", "PRESETS", "Power", "PowerEnergy", "QuadraticLimit",
    "Relativistic", "RunConfig", "RunManifest", "Snapshot", "barenblatt_value",
    "build_constraint", "doubly_nonlinear_energy", "error_norms", "estimate_operator_norm",
    "load_config", "parse_config", "prox_perspective", "run_evolution", "run_preset",
    "solve_jko_step", "to_evolution",
]
