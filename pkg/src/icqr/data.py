"""Tabular datasets: CSV ingestion, z-score normalization and three-way splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Feature matrix of shape (N, D) with a response vector of length N."""

    features: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = _frozen(self.features, 2)
        y = _frozen(self.response, 1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} responses")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"dataset needs N >= 1 and D >= 1, got shape {X.shape}")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError(f"{len(names)} column names for {X.shape[1]} columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "column_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n_samples

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.features[rows], self.response[rows], self.column_names)

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.column_names.index(name)]


def load_csv(path, response_column: str) -> Dataset:
    """Read a header-first CSV file, splitting off ``response_column`` as the target.

    Every cell must parse as a float; the error message names the offending
    row (1-based, header excluded) and column.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if response_column not in header:
            raise KeyError(f"{path}: response column {response_column!r} not in header {header}")
        rows = []
        for lineno, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(record)} cells, expected {len(header)}"
                )
            values = []
            for name, cell in zip(header, record):
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {name!r}"
                    ) from None
                if not math.isfinite(v):
                    raise ValueError(
                        f"{path}: non-finite cell {cell!r} at row {lineno}, column {name!r}"
                    )
                values.append(v)
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    r = header.index(response_column)
    feature_idx = [j for j in range(len(header)) if j != r]
    return Dataset(
        table[:, feature_idx],
        table[:, r],
        tuple(header[j] for j in feature_idx),
    )


def write_csv(d: Dataset, path, response_column: str = "y") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*d.column_names, response_column])
        for x, y in zip(d.features, d.response):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True)
class Normalizer:
    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        c = _frozen(self.center, 1)
        s = _frozen(self.scale, 1)
        if c.shape != s.shape:
            raise ValueError("center and scale lengths differ")
        if not (s > 0).all():
            raise ValueError("scale values must be strictly positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "scale", s)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.center.shape[0]:
            raise ValueError(f"normalizer fitted on {self.center.shape[0]} columns, got {X.shape[-1]}")
        return (X - self.center) / self.scale

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.center.shape[0]:
            raise ValueError(f"normalizer fitted on {self.center.shape[0]} columns, got {X.shape[-1]}")
        return X * self.scale + self.center


def fit_normalizer(d: Dataset) -> Normalizer:
    """Column mean and population standard deviation; constant columns get scale 1."""
    if d.n_samples < 2:
        raise ValueError("fitting a normalizer needs at least 2 rows")
    center = d.features.mean(axis=0)
    scale = d.features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Normalizer(center, scale)


def apply_normalizer(n: Normalizer, d: Dataset) -> Dataset:
    return Dataset(n.transform(d.features), d.response, d.column_names)


def invert_normalizer(n: Normalizer, d: Dataset) -> Dataset:
    return Dataset(n.inverse_transform(d.features), d.response, d.column_names)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5
    cal_fraction: float = 0.25
    val_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.cal_fraction, self.val_fraction)
        if not all(0 < f < 1 for f in fr):
            raise ValueError(f"split fractions must lie in (0, 1), got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def sizes(self, n: int) -> tuple[int, int, int]:
        n_cal = math.floor(self.cal_fraction * n)
        n_val = math.floor(self.val_fraction * n)
        return n - n_cal - n_val, n_cal, n_val


def split(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle rows with ``s.seed`` and cut into (train, calibration, validation).

    Partition sizes are floor(fraction * N); leftover rows go to training.
    """
    n_train, n_cal, n_val = s.sizes(d.n_samples)
    if min(n_train, n_cal, n_val) < 1:
        raise ValueError(
            f"N={d.n_samples} gives an empty partition (sizes {n_train}, {n_cal}, {n_val})"
        )
    order = np.random.default_rng(s.seed).permutation(d.n_samples)
    return (
        d.take(order[:n_train]),
        d.take(order[n_train:n_train + n_cal]),
        d.take(order[n_train + n_cal:]),
    )
