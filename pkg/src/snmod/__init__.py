"""Moment dynamics and Floquet stability of a square-wave modulated
oscillator with a self-gravity frequency shift."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, NoFixedPointError, QuadratureError, TrajectoryError
from .params import InitialConditions, ModulationSchedule, PhysicalParams, compute_omega_sn, reference_params
from .states import CovarianceState, MeanState

__all__ = [
    "ConfigError",
    "CovarianceState",
    "DomainError",
    "InitialConditions",
    "MeanState",
    "ModulationSchedule",
    "NoFixedPointError",
    "PhysicalParams",
    "QuadratureError",
    "TrajectoryError",
    "compute_omega_sn",
    "reference_params",
]
