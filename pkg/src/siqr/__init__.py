"""Nonautonomous SIQR epidemic models: simulation and threshold analysis."""
from ._backend import BACKEND
from .errors import (IntegrationError, LinearizationUndefined, PathError, PreconditionError,
                     SchemaError, SiqrError, ValidationError)
from .hypotheses import HypothesisReport, check_hypotheses
from .model import (MassAction, ParameterSet, PsiG, QuarantineAdjusted, Standard, State,
                    incidence_eval, linearized_incidence, rhs)
from .odeint import IntegratorConfig, Trajectory, convergence_probe, integrate
from .scenarios import load_scenario, paper_suite, run, sweep
from .thresholds import (autonomous_thresholds, compute_thresholds, periodic_thresholds,
                         solve_auxiliary, windowed_special_thresholds)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "IntegrationError", "LinearizationUndefined", "PathError", "PreconditionError",
    "SchemaError", "SiqrError", "ValidationError", "HypothesisReport", "check_hypotheses",
    "MassAction", "ParameterSet", "PsiG", "QuarantineAdjusted", "Standard", "State",
    "incidence_eval", "linearized_incidence", "rhs", "IntegratorConfig", "Trajectory",
    "convergence_probe", "integrate", "load_scenario", "paper_suite", "run", "sweep",
    "autonomous_thresholds", "compute_thresholds", "periodic_thresholds", "solve_auxiliary",
    "windowed_special_thresholds",
]
