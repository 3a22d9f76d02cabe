"""Quantum random walk search on the hypercube with phase-parametrized Householder coins."""

from qrws.walk import (
    CoinPhases,
    WalkConfig,
    WalkState,
    apply_coins,
    apply_oracle,
    apply_shift,
    init_state,
    run_walk,
    success_probability,
    walk_iteration,
)
from qrws.schedule import (
    PhaseSchedule,
    PolarPoint,
    SequenceKind,
    iteration_count,
    omega_bound,
    polar_to_phases,
    schedule_phases,
)
from qrws.hill import HillParams, fit_hill, hill_eval, hill_sigma, robustness_epsilon

__version__ = "0.1.0"

__all__ = [
    "CoinPhases",
    "WalkConfig",
    "WalkState",
    "apply_coins",
    "apply_oracle",
    "apply_shift",
    "init_state",
    "run_walk",
    "success_probability",
    "walk_iteration",
    "PhaseSchedule",
    "PolarPoint",
    "SequenceKind",
    "iteration_count",
    "omega_bound",
    "polar_to_phases",
    "schedule_phases",
    "HillParams",
    "fit_hill",
    "hill_eval",
    "hill_sigma",
    "robustness_epsilon",
    "__version__",
]
