"""Gaussian graphical models regressed on external network data.

Two estimation routes share the core types: a network graphical LASSO
(per-edge penalties log-linear in the networks, solved by a block-coordinate
dual) and a network spike-and-slab model (slab probability, location and
scale regressed on the networks, sampled with Hamiltonian Monte Carlo).
"""

__version__ = "0.1.0"

from .core import (
    CovariateMatrix,
    DataMatrix,
    NetworkStack,
    NotPositiveDefiniteError,
    PrecisionParam,
    SampleCov,
    assemble_precision,
    gaussian_loglik,
    partial_corr_of,
    precision_param_of,
    residualize,
    sample_cov,
)
from .golazo import (
    GlassoSolution,
    GolazoConvergenceError,
    PenaltyModel,
    count_edges,
    laplace_prior_logvar,
    solve,
)
from .selection import (
    GridSpec,
    SelectionResult,
    bayes_opt,
    beta0_upper_bound,
    bic,
    cv_loglik,
    ebic,
    grid_search,
)

__all__ = [
    "CovariateMatrix",
    "DataMatrix",
    "NetworkStack",
    "NotPositiveDefiniteError",
    "PrecisionParam",
    "SampleCov",
    "assemble_precision",
    "gaussian_loglik",
    "partial_corr_of",
    "precision_param_of",
    "residualize",
    "sample_cov",
    "GlassoSolution",
    "GolazoConvergenceError",
    "PenaltyModel",
    "count_edges",
    "laplace_prior_logvar",
    "solve",
    "GridSpec",
    "SelectionResult",
    "bayes_opt",
    "beta0_upper_bound",
    "bic",
    "cv_loglik",
    "ebic",
    "grid_search",
]
