"""Quasiconvex systemic risk measures on finite probability spaces.

A systemic risk measure is ``R(X) = rho(Lambda(X))``: an aggregation
function ``Lambda`` collapses a vector of entity outcomes to one societal
outcome per scenario and a quasiconvex risk measure ``rho`` evaluates it.
The package computes ``R``, its penalty function and left inverse, and its
dual representation, with independent numerical routes for cross-checking.
"""

from .aggregation import (
    AggregatorKind,
    AggregatorSpec,
    ClearingResult,
    Network,
    aggregate,
    clearing_fixed_point,
    clearing_lp,
    conjugate_phi,
    phi_perspective,
)
from .duality_engine import (
    DualReport,
    DualVariables,
    MinimaxProbe,
    OptimizerSettings,
    ProbeReport,
    composition_left_inverse,
    composition_penalty,
    dual_objective,
    dual_risk,
    primal_risk,
    quasiconvexity_probe,
    scalarization_left_inverse,
    scalarization_penalty,
    verify_minimax,
)
from .errors import ComputationError, QRiskError, ValidationError
from .prob_core import ConeSpec, Density, FiniteProbabilitySpace, RandomVector, pairing
from .risk_measures import (
    LossKind,
    LossSpec,
    RiskForm,
    RiskMeasureSpec,
    penalty_closed_form,
    penalty_left_inverse_closed_form,
    rho_eval,
    solve_beta,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatorKind",
    "AggregatorSpec",
    "ClearingResult",
    "ComputationError",
    "ConeSpec",
    "Density",
    "DualReport",
    "DualVariables",
    "FiniteProbabilitySpace",
    "LossKind",
    "LossSpec",
    "MinimaxProbe",
    "Network",
    "OptimizerSettings",
    "ProbeReport",
    "QRiskError",
    "RandomVector",
    "RiskForm",
    "RiskMeasureSpec",
    "ValidationError",
    "aggregate",
    "clearing_fixed_point",
    "clearing_lp",
    "composition_left_inverse",
    "composition_penalty",
    "conjugate_phi",
    "dual_objective",
    "dual_risk",
    "pairing",
    "penalty_closed_form",
    "penalty_left_inverse_closed_form",
    "phi_perspective",
    "primal_risk",
    "quasiconvexity_probe",
    "rho_eval",
    "scalarization_left_inverse",
    "scalarization_penalty",
    "solve_beta",
    "verify_minimax",
]
