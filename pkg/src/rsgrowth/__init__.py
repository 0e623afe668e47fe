"""Long-run risk-sensitive portfolio optimisation on controlled Markov factor models."""

__version__ = "0.1.0"

from ._validation import DomainError, ModelError, ShapeError
from .diagnostics import (
    ContractionCertificate,
    contraction_certificate,
    empirical_contraction,
    gamma_sweep,
    lemma1_check,
    rsc_upper_bound,
    tilted_drift_check,
)
from .entropic import (
    DiscreteLaw,
    TiltedLaw,
    entropic_utility,
    esscher_tilt,
    pushforward_tilt,
    relative_entropy,
)
from .grid import GridFunction, GridSpec, WeightFunction
from .model import (
    ActionSet,
    MarketModel,
    MinorizationCertificate,
    builtin,
    factor_step,
    finite_chain,
    log_return,
    minorization_check,
    validate_growth,
)
from .montecarlo import RscEstimate, TrajectoryBatch, estimate_rsc, simulate, verify
from .norms import (
    CenteringResult,
    DiscreteSignedMeasure,
    centering_constants,
    omega_norm,
    omega_span,
    weighted_variation,
)
from .solver import BellmanSolution, RiskSensitiveRVI, apply_R, apply_T, solve

__all__ = [
    "ActionSet", "BellmanSolution", "CenteringResult", "ContractionCertificate",
    "DiscreteLaw", "DiscreteSignedMeasure", "DomainError", "GridFunction", "GridSpec",
    "MarketModel", "MinorizationCertificate", "ModelError", "RiskSensitiveRVI", "RscEstimate",
    "ShapeError", "TiltedLaw", "TrajectoryBatch", "WeightFunction", "apply_R", "apply_T",
    "builtin", "centering_constants", "contraction_certificate", "empirical_contraction",
    "entropic_utility", "esscher_tilt", "estimate_rsc", "factor_step", "finite_chain",
    "gamma_sweep", "lemma1_check", "log_return", "minorization_check", "omega_norm",
    "omega_span", "pushforward_tilt", "relative_entropy", "rsc_upper_bound", "simulate",
    "solve", "tilted_drift_check", "validate_growth", "verify", "weighted_variation",
]
