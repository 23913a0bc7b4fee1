"""Scalar-on-function regression with points of impact.

The model combines a smooth functional effect with direct effects of
the trajectory values at a few unknown time points.  This package
provides the sequential pre-select / estimate / sub-select pipelines,
the penalized natural-cubic-spline solver with GCV smoothing, an
FPCA-series benchmark with simultaneous BIC selection, the covariance
smoothness diagnostic, and a reproducible Monte-Carlo study lab.
"""

from . import errors
from .dataset import (
    CenteredDataset,
    FunctionalDataset,
    Grid,
    StandardizedDataset,
    center,
    load_csv,
    standardize,
    write_csv,
)
from .fpca import FpcaDecomposition, KpsConfig, fpca, kps_fit
from .impact_search import (
    DeltaSpec,
    PoICandidate,
    PoICandidateList,
    estimate_kappa,
    make_delta_spec,
    search_potential_pois,
    second_diff,
)
from .penalty import PenaltyBundle, build_curvature, build_penalty, build_projection
from .ridge import (
    AugmentedDesign,
    SlopeEstimate,
    augment,
    default_rho_grid,
    fit_penalized,
    optimize_gcv,
    smoother_trace_and_rss,
    standard_errors,
)
from .select import (
    FitResult,
    ImpactTerm,
    SelectorConfig,
    bic_delta,
    bic_subset,
    default_delta_grid,
    neutralize_response,
    run_variant,
    subselect,
)
from .simulate import (
    DgpSpec,
    StudyOptions,
    StudyReport,
    detection_check,
    gen_brownian,
    gen_response,
    make_dgp,
    run_study,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
