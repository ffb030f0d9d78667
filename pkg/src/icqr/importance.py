"""Permutation feature importance and importance-weighted feature spaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset
from .quantile_net import QuantileModel, mean_pinball_loss


def _pinball_metric(model: QuantileModel, X, y) -> float:
    # averaged (not summed) over the three heads
    return mean_pinball_loss(model.levels, y, model.predict_batch(X)) / 3.0


def _mae_metric(model: QuantileModel, X, y) -> float:
    return float(np.mean(np.abs(y - model.predict_batch(X)[:, 1])))


METRICS: dict[str, Callable[[QuantileModel, np.ndarray, np.ndarray], float]] = {
    "pinball": _pinball_metric,
    "mae": _mae_metric,
}


@dataclass(frozen=True)
class ImportanceConfig:
    repetitions: int = 5
    seed: int = 0
    metric: str = "pinball"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; choose from {sorted(METRICS)}")


@dataclass(frozen=True)
class ImportanceVector:
    values: np.ndarray
    baseline_error: float
    column_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.values)

    def to_records(self) -> list[dict]:
        names = self.column_names or tuple(f"x{j}" for j in range(len(self.values)))
        return [{"column_name": n, "importance": float(v)} for n, v in zip(names, self.values)]


def permutation_importance(
    model: QuantileModel,
    eval_set: Dataset,
    cfg: ImportanceConfig,
    permute: Callable[[np.random.Generator, int], np.ndarray] | None = None,
) -> ImportanceVector:
    """Mean absolute change in the metric when one column is shuffled.

    For feature j, each of ``cfg.repetitions`` shuffles uses a generator
    spawned for j from ``cfg.seed``, so results do not depend on the order
    the features are processed in. ``permute(rng, n)`` overrides how the
    row permutation is drawn.
    """
    X, y = eval_set.features, eval_set.response
    if X.shape[1] != model.input_dimension:
        raise ValueError(
            f"model expects {model.input_dimension} features, eval set has {X.shape[1]}"
        )
    if X.shape[0] < 2:
        raise ValueError("permutation importance needs at least 2 rows")
    metric = METRICS[cfg.metric]
    permute = permute or (lambda rng, n: rng.permutation(n))
    n, d = X.shape
    # one working buffer so baseline and permuted passes share memory layout
    work = np.array(X)
    baseline = metric(model, work, y)
    streams = np.random.SeedSequence(cfg.seed).spawn(d)
    values = np.empty(d)
    for j in range(d):
        rng = np.random.default_rng(streams[j])
        original = work[:, j].copy()
        deltas = []
        for _ in range(cfg.repetitions):
            work[:, j] = original[permute(rng, n)]
            deltas.append(abs(baseline - metric(model, work, y)))
        work[:, j] = original
        values[j] = np.mean(deltas)
    values.setflags(write=False)
    return ImportanceVector(values, baseline, eval_set.column_names)


def weight_matrix(X, iv: ImportanceVector) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != len(iv.values):
        raise ValueError(f"{len(iv.values)} importances for {X.shape[-1]} columns")
    return X * iv.values


def weight_features(d: Dataset, iv: ImportanceVector) -> Dataset:
    """Scale column j by its importance I_j; the response is left alone."""
    return Dataset(weight_matrix(d.features, iv), d.response, d.column_names)
