"""Multivariate realized GARCH with matrix-log correlation dynamics."""

from .blocks import (
    BlockCorr,
    BlockPartition,
    Loading,
    block_corr_from_dense,
    block_corr_to_dense,
    block_inverse,
    block_logdet,
    block_quadform,
    identity_loading,
    loading_matrix,
)
from .corrmap import (
    corr_to_vec,
    decompose_realized,
    sym_exp,
    sym_log,
    unvecl,
    vec_to_corr,
    vec_to_corr_many,
    vecl,
)
from .errors import (
    ArgumentError,
    DataError,
    DimensionError,
    DomainError,
    EstimationError,
    GarchError,
    NumericalError,
    RankError,
)
from .estimator import EstimationSpec, FitResult, estimate, two_stage_estimate
from .forecast import (
    BacktestReport,
    ForecastDistribution,
    ModelBacktest,
    backtest,
    equal_weights,
    gmv_weights,
    multi_step_forecast,
    qq_points,
)
from .io import (
    RunConfig,
    load_config,
    load_dataset,
    load_fit_params,
    load_params,
    load_realized,
    load_returns,
    save_fit,
    save_params,
)
from .likelihood import (
    LogLikReport,
    concentrate_sigma,
    loglik_report,
    predictive_return_loglik,
    return_loglik,
)
from .model import (
    Dataset,
    InitialState,
    ModelParams,
    StateSeries,
    filter_states,
    initial_state_from_data,
    one_step_forecast,
)
from .simulate import SimConfig, preset_params, realized_matrices, simulate

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "BacktestReport",
    "BlockCorr",
    "BlockPartition",
    "DataError",
    "Dataset",
    "DimensionError",
    "DomainError",
    "EstimationError",
    "EstimationSpec",
    "FitResult",
    "ForecastDistribution",
    "GarchError",
    "InitialState",
    "Loading",
    "LogLikReport",
    "ModelBacktest",
    "ModelParams",
    "NumericalError",
    "RankError",
    "RunConfig",
    "SimConfig",
    "StateSeries",
    "backtest",
    "block_corr_from_dense",
    "block_corr_to_dense",
    "block_inverse",
    "block_logdet",
    "block_quadform",
    "concentrate_sigma",
    "corr_to_vec",
    "decompose_realized",
    "equal_weights",
    "estimate",
    "filter_states",
    "gmv_weights",
    "identity_loading",
    "initial_state_from_data",
    "load_config",
    "load_dataset",
    "load_fit_params",
    "load_params",
    "load_realized",
    "load_returns",
    "loading_matrix",
    "loglik_report",
    "multi_step_forecast",
    "one_step_forecast",
    "predictive_return_loglik",
    "preset_params",
    "qq_points",
    "realized_matrices",
    "return_loglik",
    "save_fit",
    "save_params",
    "simulate",
    "sym_exp",
    "sym_log",
    "two_stage_estimate",
    "unvecl",
    "vec_to_corr",
    "vec_to_corr_many",
    "vecl",
    "__version__",
]
