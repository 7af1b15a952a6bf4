"""Fast functional PCA for binary, count and continuous curves.

The estimator works in four steps: slice the grid into bins, fit a
random-intercept GLMM in each bin, smooth the covariance of the
resulting latent estimates and take its leading eigenfunctions, then
refit a global mixed model on the full grid with those eigenfunctions
held fixed.
"""

__version__ = "1.0.0"

from .binning import BinSpec, build_bins
from .data import (
    DailyProfileSet,
    FunctionalDataset,
    binarize_profiles,
    load_daily_csv,
    load_long_csv,
    write_long_csv,
)
from .errors import ConfigError, DataError, FgfpcaError, NumericalError, StageError
from .families import get_family
from .fpca import FpcaBasis, SmoothOptions, fpca_latent, project_to_full_grid
from .local_glmm import LatentEstimates, LocalFit, LocalGlmmOptions, fit_all_bins, fit_local_glmm
from .metrics import EvalReport, ise_beta0, mise_eta, mise_phi, predictive_metrics
from .pipeline import PipelineConfig, fast_gfpca
from .refit import (
    GfpcaFit,
    RefitOptions,
    refit_global,
    refit_global_subsampled,
    score_only_fit,
)
from .simulate import SimScenario, SimTruth, binned_cov_oracle, generate, simulate_from_fit
from .study import MethodSpec, evaluate_fit, parse_methods, run_study

__all__ = [
    "__version__",
    "BinSpec",
    "build_bins",
    "DailyProfileSet",
    "FunctionalDataset",
    "binarize_profiles",
    "load_daily_csv",
    "load_long_csv",
    "write_long_csv",
    "FgfpcaError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "StageError",
    "get_family",
    "FpcaBasis",
    "SmoothOptions",
    "fpca_latent",
    "project_to_full_grid",
    "LatentEstimates",
    "LocalFit",
    "LocalGlmmOptions",
    "fit_all_bins",
    "fit_local_glmm",
    "EvalReport",
    "ise_beta0",
    "mise_eta",
    "mise_phi",
    "predictive_metrics",
    "PipelineConfig",
    "fast_gfpca",
    "GfpcaFit",
    "RefitOptions",
    "refit_global",
    "refit_global_subsampled",
    "score_only_fit",
    "SimScenario",
    "SimTruth",
    "binned_cov_oracle",
    "generate",
    "simulate_from_fit",
    "MethodSpec",
    "evaluate_fit",
    "parse_methods",
    "run_study",
]
