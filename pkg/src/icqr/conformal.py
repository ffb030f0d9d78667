"""Split-conformal calibration: naive, QR, CQR and importance-clustered CQR intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np

from .clustering import ClusteringModel, KSelectionConfig, select_k
from .data import Dataset
from .importance import ImportanceConfig, ImportanceVector, permutation_importance, weight_matrix
from .quantile_net import QuantileModel, QuantilePrediction


@dataclass(frozen=True)
class ConformalConfig:
    miscoverage: float = 0.1

    def __post_init__(self):
        if not 0 < self.miscoverage < 1:
            raise ValueError("miscoverage must lie in (0, 1)")


def conformal_rank(n: int, alpha: float) -> int:
    """1-based order-statistic index ``min(n, ceil((n + 1)(1 - alpha)))``.

    Computed in exact rational arithmetic on the binary value of ``alpha``
    so products like 10 * 0.9 cannot round up past an integer.
    """
    if n < 1:
        raise ValueError("need at least one score")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return min(n, math.ceil((n + 1) * (1 - Fraction(alpha))))


def corrected_quantile(scores, alpha: float) -> float:
    """Finite-sample conformal quantile of ``scores`` with the min(1, .) clamp.

    No interpolation: returns the order statistic at :func:`conformal_rank`.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("empty score set")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    r = conformal_rank(s.size, alpha)
    return float(np.partition(s, r - 1)[r - 1])


def naive_score(prediction, y):
    return np.abs(np.asarray(y, dtype=np.float64) - prediction)


def cqr_score(p: QuantilePrediction, y: float) -> float:
    return max(p.lower - y, y - p.upper)


def cqr_scores(preds: np.ndarray, y) -> np.ndarray:
    """Vectorized CQR score for an (n, 3) array of sorted head outputs."""
    y = np.asarray(y, dtype=np.float64)
    return np.maximum(preds[:, 0] - y, y - preds[:, 2])


@dataclass(frozen=True)
class CalibrationResult:
    method: Literal["naive", "cqr"]
    q_hat: float
    n_cal: int


@dataclass(frozen=True)
class GroupCalibration:
    clustering: ClusteringModel
    importance: ImportanceVector
    q_hats: np.ndarray
    group_sizes: np.ndarray
    group_scores: tuple[np.ndarray, ...] = field(repr=False, default=())
    alpha: float = 0.1

    @property
    def k(self) -> int:
        return len(self.q_hats)


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float
    group: int | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, y) -> bool:
        return self.lower <= y <= self.upper


@dataclass(frozen=True)
class IntervalSet:
    """Intervals for a batch of inputs; ``groups`` is set for ICQR only."""

    lower: np.ndarray
    upper: np.ndarray
    groups: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def covers(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return (self.lower <= y) & (y <= self.upper)

    def __getitem__(self, i) -> PredictionInterval:
        g = None if self.groups is None else int(self.groups[i])
        return PredictionInterval(float(self.lower[i]), float(self.upper[i]), g)


def _check_cal(cal: Dataset, m: QuantileModel):
    if cal.n_samples < 1:
        raise ValueError("empty calibration set")
    if cal.n_features != m.input_dimension:
        raise ValueError(f"model expects {m.input_dimension} features, got {cal.n_features}")


def calibrate_naive(m: QuantileModel, cal: Dataset, cfg: ConformalConfig) -> CalibrationResult:
    """Absolute residuals of the median head, reduced to one conformal quantile."""
    _check_cal(cal, m)
    med = m.predict_batch(cal.features)[:, 1]
    q = corrected_quantile(naive_score(med, cal.response), cfg.miscoverage)
    return CalibrationResult("naive", q, cal.n_samples)


def calibrate_cqr(m: QuantileModel, cal: Dataset, cfg: ConformalConfig) -> CalibrationResult:
    _check_cal(cal, m)
    scores = cqr_scores(m.predict_batch(cal.features), cal.response)
    return CalibrationResult("cqr", corrected_quantile(scores, cfg.miscoverage), cal.n_samples)


def calibrate_icqr(
    m: QuantileModel,
    cal: Dataset,
    cfg: ConformalConfig,
    ksel: KSelectionConfig,
    icfg: ImportanceConfig,
) -> GroupCalibration:
    """One CQR quantile per cluster of the importance-weighted calibration features.

    Permutation importance is measured on ``cal``; the weighted calibration
    matrix is clustered with :func:`select_k`, and each cluster's CQR
    scores get their own clamped conformal quantile.
    """
    _check_cal(cal, m)
    importance = permutation_importance(m, cal, icfg)
    weighted = weight_matrix(cal.features, importance)
    clustering = select_k(weighted, ksel)
    scores = cqr_scores(m.predict_batch(cal.features), cal.response)
    labels = clustering.assignments
    groups = tuple(scores[labels == i] for i in range(clustering.k))
    if any(g.size == 0 for g in groups):
        raise RuntimeError("a cluster received no calibration points")
    q_hats = np.array([corrected_quantile(g, cfg.miscoverage) for g in groups])
    sizes = np.array([g.size for g in groups])
    return GroupCalibration(clustering, importance, q_hats, sizes, groups, cfg.miscoverage)


def _as_matrix(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _shift(preds: np.ndarray, q) -> tuple[np.ndarray, np.ndarray]:
    lo = preds[:, 0] - q
    hi = preds[:, 2] + q
    # a negative q wider than half the band would invert it: collapse to the band midpoint
    crossed = lo > hi
    if crossed.any():
        mid = 0.5 * (preds[:, 0] + preds[:, 2])
        lo = np.where(crossed, mid, lo)
        hi = np.where(crossed, mid, hi)
    return lo, hi


def intervals_naive(m: QuantileModel, X, r: CalibrationResult) -> IntervalSet:
    med = m.predict_batch(X)[:, 1]
    return IntervalSet(med - r.q_hat, med + r.q_hat)


def intervals_qr(m: QuantileModel, X) -> IntervalSet:
    preds = m.predict_batch(X)
    return IntervalSet(preds[:, 0].copy(), preds[:, 2].copy())


def intervals_cqr(m: QuantileModel, X, r: CalibrationResult) -> IntervalSet:
    return IntervalSet(*_shift(m.predict_batch(X), r.q_hat))


def intervals_icqr(m: QuantileModel, X, g: GroupCalibration) -> IntervalSet:
    """``X`` is in normalized (unweighted) feature space; weighting happens here."""
    X = np.asarray(X, dtype=np.float64)
    groups = g.clustering.assign_batch(weight_matrix(X, g.importance))
    lo, hi = _shift(m.predict_batch(X), g.q_hats[groups])
    return IntervalSet(lo, hi, groups)


def interval_naive(m, x, r: CalibrationResult) -> PredictionInterval:
    return intervals_naive(m, _as_matrix(x)[0], r)[0]


def interval_qr(m, x) -> PredictionInterval:
    return intervals_qr(m, _as_matrix(x)[0])[0]


def interval_cqr(m, x, r: CalibrationResult) -> PredictionInterval:
    return intervals_cqr(m, _as_matrix(x)[0], r)[0]


def interval_icqr(m, x, g: GroupCalibration) -> PredictionInterval:
    return intervals_icqr(m, _as_matrix(x)[0], g)[0]
