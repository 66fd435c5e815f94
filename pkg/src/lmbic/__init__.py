"""Consistent model selection among parametric, semiparametric and
nonparametric regressions estimated by series methods."""

from .basis import (
    CandidateSet,
    ModelSpec,
    SeriesForm,
    TermDescriptor,
    build_candidate_set,
    compute_an,
    evaluate_design,
    power_basis,
    spline_basis,
    tensor_terms,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateFitError,
    LmBicError,
    SelectionFailedError,
    SpecNotNestedError,
)
from .linreg import FitResult, annihilate, fit_ols, pinv_psd
from .lmstat import LmStatistics, lm_statistics, t_statistic, xi_hc, xi_homoskedastic
from .montecarlo import DgpConfig, StudyReport, candidate_set_for_study, gen_dgp, run_study
from .select import (
    SelectionResult,
    TuningParams,
    default_gamma,
    default_kappa,
    evaluate_candidates,
    msc,
    select_all,
    select_dt,
    select_lm_bic,
    select_ut,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "ConfigError",
    "DataError",
    "DegenerateFitError",
    "DgpConfig",
    "FitResult",
    "LmBicError",
    "LmStatistics",
    "ModelSpec",
    "SelectionFailedError",
    "SelectionResult",
    "SeriesForm",
    "SpecNotNestedError",
    "StudyReport",
    "TermDescriptor",
    "TuningParams",
    "annihilate",
    "build_candidate_set",
    "candidate_set_for_study",
    "compute_an",
    "default_gamma",
    "default_kappa",
    "evaluate_candidates",
    "evaluate_design",
    "fit_ols",
    "gen_dgp",
    "lm_statistics",
    "msc",
    "pinv_psd",
    "power_basis",
    "run_study",
    "select_all",
    "select_dt",
    "select_lm_bic",
    "select_ut",
    "spline_basis",
    "t_statistic",
    "tensor_terms",
    "xi_hc",
    "xi_homoskedastic",
]
