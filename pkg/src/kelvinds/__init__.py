"""Kelvin-mode dynamics on uniform-gradient base flows and the
quasi-linear DS model, with spectral self-consistency audits."""

__version__ = "0.1.0"

from .flowcore import (
    BaseFlowSpec,
    ConsistencyError,
    DomainError,
    IntegrationError,
    KelvinError,
    UsageError,
    ValidationError,
    base_flow_matrix,
    incompressible_projection,
    validate_base_flow,
)
from .kelvin import (
    KelvinMode,
    ModeTrajectory,
    SimulationConfig,
    integrate_mode,
    kelvin_rhs,
    pressure_amplitude,
)

__all__ = [
    "BaseFlowSpec",
    "ConsistencyError",
    "DomainError",
    "IntegrationError",
    "KelvinError",
    "KelvinMode",
    "ModeTrajectory",
    "SimulationConfig",
    "UsageError",
    "ValidationError",
    "base_flow_matrix",
    "incompressible_projection",
    "integrate_mode",
    "kelvin_rhs",
    "pressure_amplitude",
    "validate_base_flow",
]
