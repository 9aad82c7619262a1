"""Gamma-Phi multiclass losses: risks, calibration checks and counterexamples."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DimensionError,
    DomainError,
    GammaPhiError,
    PreconditionError,
    SolverError,
    ValidationError,
)
from .losses import (
    ConditionReport,
    GammaSpec,
    LossSpec,
    PhiSpec,
    check_conditions,
    loss_components,
    loss_jacobian,
    preset,
)
from .risk import (
    ExtendedScore,
    SolverOptions,
    bayes_conditional_risk,
    conditional_risk,
    conditional_risk_gradient,
    constrained_bayes_risk,
    extended_risk,
)

__all__ = [
    "__version__",
    "ConditionReport",
    "ConfigurationError",
    "DimensionError",
    "DomainError",
    "ExtendedScore",
    "GammaPhiError",
    "GammaSpec",
    "LossSpec",
    "PhiSpec",
    "PreconditionError",
    "SolverError",
    "SolverOptions",
    "ValidationError",
    "bayes_conditional_risk",
    "check_conditions",
    "conditional_risk",
    "conditional_risk_gradient",
    "constrained_bayes_risk",
    "extended_risk",
    "loss_components",
    "loss_jacobian",
    "preset",
]
