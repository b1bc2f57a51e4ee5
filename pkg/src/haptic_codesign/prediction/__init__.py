"""Synthetic trajectories, AR prediction and the prediction-error surface."""

from .predictor import (
    InsufficientWindowsError,
    PredictorFitError,
    PredictorModel,
    count_exceedances,
    estimate_error_prob,
    fit_predictor,
    predict,
    rrmse,
)
from .tradeoff import (
    TableClampWarning,
    TableCoverageError,
    TableFormatError,
    TradeoffTable,
    load,
    project_monotone,
    save,
    table_lookup,
)
from .trajectories import OUProcess, SinusoidMix, TrajectoryDataset, generate_trajectories

__all__ = [
    "InsufficientWindowsError", "PredictorFitError", "PredictorModel", "count_exceedances",
    "estimate_error_prob", "fit_predictor", "predict", "rrmse", "TableClampWarning",
    "TableCoverageError", "TableFormatError", "TradeoffTable", "load", "project_monotone", "save",
    "table_lookup", "OUProcess", "SinusoidMix", "TrajectoryDataset", "generate_trajectories",
]
