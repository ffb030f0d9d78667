"""Conformalized quantile regression with importance-weighted per-cluster calibration."""

from .clustering import ClusteringModel, KMeansConfig, KSelectionConfig, assign, kmeans, select_k, variance_explained
from .conformal import (
    CalibrationResult,
    ConformalConfig,
    GroupCalibration,
    IntervalSet,
    PredictionInterval,
    calibrate_cqr,
    calibrate_icqr,
    calibrate_naive,
    corrected_quantile,
    cqr_score,
    interval_cqr,
    interval_icqr,
    interval_naive,
    interval_qr,
    intervals_cqr,
    intervals_icqr,
    intervals_naive,
    intervals_qr,
    naive_score,
)
from .data import Dataset, Normalizer, SplitSpec, apply_normalizer, fit_normalizer, load_csv, split, write_csv
from .importance import ImportanceConfig, ImportanceVector, permutation_importance, weight_features
from .quantile_net import QuantileModel, QuantileNetConfig, QuantilePrediction, pinball_loss, train

__version__ = "0.1.0"
