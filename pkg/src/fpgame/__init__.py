"""Investment-consumption games under forward performance criteria.

Closed-form n-player and mean-field equilibria with relative performance
concerns, verified by best-response iteration, residual checks of the
consistency ODE/PDE system, and Monte Carlo martingale tests.
"""
from .core_types import (
    AgentType,
    ConsumptionPath,
    Discrete,
    EquilibriumStrategy,
    MarketConfig,
    Sampler,
    TypeDistribution,
    sample_types,
    validate_agent,
)
from .errors import (
    BlowUpHorizon,
    DegenerateConsumption,
    DegenerateElasticity,
    DegenerateMarket,
    DomainError,
    FpgameError,
    KappaOneError,
    MismatchError,
    NoConvergence,
    QuadratureError,
)
from .forward_fields import (
    FTimeFactor,
    PdeCoefficients,
    PowerField,
    eval_U,
    f_from_consumption,
    fenchel_legendre_V,
    ode_residual,
    pde_residual,
)
from .nash_solver import (
    BestResponse,
    NashEquilibrium,
    NPlayerAggregates,
    best_response,
    fixed_point_nash,
    nash_consumption,
    nash_lambda_beta,
    nash_pi,
    nash_rho,
    solve_aggregates,
    solve_nash,
    theta_crit_single_stock,
)
from .mfg_solver import (
    ConvergenceTable,
    MfgEquilibrium,
    MfgMoments,
    convergence_study,
    mfg_consumption,
    mfg_lambda_beta,
    mfg_moments,
    mfg_pi,
    mfg_rho,
    mfg_theta_crit,
    solve_mfg,
)
from .consumption_analysis import (
    RegimeReport,
    classify,
    eis,
    elasticity_of_conformity,
    monotonicity_check,
)
from .simulator import (
    DriftTest,
    MfConsistency,
    PathEnsemble,
    Perturbation,
    SimConfig,
    mf_consistency_test,
    q_drift_test,
    relative_wealth,
    simulate_wealth,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core types
    "AgentType",
    "ConsumptionPath",
    "Discrete",
    "EquilibriumStrategy",
    "MarketConfig",
    "Sampler",
    "TypeDistribution",
    "sample_types",
    "validate_agent",
    # errors
    "BlowUpHorizon",
    "DegenerateConsumption",
    "DegenerateElasticity",
    "DegenerateMarket",
    "DomainError",
    "FpgameError",
    "KappaOneError",
    "MismatchError",
    "NoConvergence",
    "QuadratureError",
    # forward fields
    "FTimeFactor",
    "PdeCoefficients",
    "PowerField",
    "eval_U",
    "f_from_consumption",
    "fenchel_legendre_V",
    "ode_residual",
    "pde_residual",
    # n-player
    "BestResponse",
    "NashEquilibrium",
    "NPlayerAggregates",
    "best_response",
    "fixed_point_nash",
    "nash_consumption",
    "nash_lambda_beta",
    "nash_pi",
    "nash_rho",
    "solve_aggregates",
    "solve_nash",
    "theta_crit_single_stock",
    # mean field
    "ConvergenceTable",
    "MfgEquilibrium",
    "MfgMoments",
    "convergence_study",
    "mfg_consumption",
    "mfg_lambda_beta",
    "mfg_moments",
    "mfg_pi",
    "mfg_rho",
    "mfg_theta_crit",
    "solve_mfg",
    # consumption analysis
    "RegimeReport",
    "classify",
    "eis",
    "elasticity_of_conformity",
    "monotonicity_check",
    # simulator
    "DriftTest",
    "MfConsistency",
    "PathEnsemble",
    "Perturbation",
    "SimConfig",
    "mf_consistency_test",
    "q_drift_test",
    "relative_wealth",
    "simulate_wealth",
]
