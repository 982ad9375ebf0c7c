"""Context-aware local privacy: optimal channels, audits, MMSE aggregation,
and seeded tradeoff simulation."""

from .core import (
    Alphabet,
    LatentModel,
    Mechanism,
    Prior,
    PriorSet,
    output_marginal,
    posterior,
)
from .mechanisms import (
    direct_release_values,
    lip_feasibility_threshold,
    optimal_bp_lip_binary,
    optimal_latent_binary,
    optimal_ldp,
    optimal_lip,
    wc_lip,
)
from .audit import (
    AuditReport,
    audit_channel,
    d_infinity,
    di_epsilon,
    latent_lip_epsilon,
    ldp_epsilon,
    lip_epsilon,
    max_leakage,
    mutual_information,
)
from .estimators import (
    UserConfig,
    binary_mse_ldp,
    binary_mse_lip,
    estimator_variance,
    histogram_estimate,
    histogram_mse_analytic,
    local_mmse,
    mse_analytic,
    prior_free_estimate,
    prior_free_mse,
    weighted_sum_estimate,
)
from .solver import (
    SolverOptions,
    SolverResult,
    grid_oracle,
    solve_bp_lip_mimo,
    solve_latent_mimo,
)
from .simulate import (
    DecompositionReport,
    DomainSweepRow,
    SimConfig,
    TradeoffPoint,
    decomposition_check,
    domain_size_sweep,
    make_population,
    perturb,
    run_simulation,
)
from .dataio import (
    Dataset,
    DatasetError,
    empirical_conditional,
    empirical_prior,
    export_tradeoff,
    load_dataset,
    load_tradeoff,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
