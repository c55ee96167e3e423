"""Sequential percentile-finding workbench.

Walk engines for the up-and-down design family, exact Markov-chain
analytics, nonparametric point and interval estimators, Bayesian and hybrid
allocation rules, a reproducible simulation lab, and a live trial-conduct
service.
"""

from .designs import (
    Bcd,
    BoundaryPolicy,
    DesignRule,
    Gud,
    Kr,
    Orientation,
    Sud,
    TreatmentGrid,
    WalkState,
    detect_reversals,
    downshift,
    imputed_values,
    nth_hit,
    nth_reversal,
    target_of,
    zero_state_subchain,
)
from .bayes import (
    CBud,
    CcdBud,
    LogisticModel,
    PosteriorSummary,
    PowerModel,
    QuadConfig,
    RBud,
    WeibullModel,
    bud_allocate,
    ccd_allocate,
    crm_allocate,
    default_logistic_model,
    default_power_model,
    default_weibull_model,
    delta_window,
    log_likelihood,
    posterior_summary,
)
from .chain import (
    StationaryProfile,
    TransitionMatrix,
    build_tpm,
    first_reversal_distribution,
    gamma_profile,
    internal_state_profile,
    mode_basin_ratio,
    peakedness_compare,
    progression,
    reversal_stationary,
    second_eigenvalue,
    stationary_bias_approx,
    stationary_profile,
    stationary_vector,
    trials_to_convergence,
)
from .dist import REGISTRY, ScenarioSpec, ThresholdModel, get_scenario
from .estimators import (
    AllFromReversal,
    AutoDetect,
    EstimateWithCI,
    GeomWeighted,
    IsotonicFit,
    ResponseTable,
    ReversalOnly,
    Wbar,
    averaging_estimate,
    cir,
    cir_confidence,
    inverse_estimate,
    linearized_quantile,
    pava,
    tabulate,
)
from .simlab import (
    BudPolicy,
    CcdPolicy,
    CrmPolicy,
    EnsembleMetrics,
    EstimatorSpec,
    PolicyDriver,
    Scenario,
    coverage_study,
    precision_curve,
    run_ensemble,
    run_single,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
