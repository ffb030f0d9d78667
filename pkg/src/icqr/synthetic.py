"""Seeded heteroscedastic regression data with a group-identifying feature.

Generative law with G groups::

    g   ~ Categorical(proportions)
    x_1 ~ Uniform(-1, 1)            (plus ``n_distractors`` more, unused by y)
    y   = slope * x_1 + offsets[g] + noise_stds[g] * N(0, 1)

Columns are ``group`` (the integer g), ``x1`` and ``z1..z{n_distractors}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class SyntheticSpec:
    proportions: tuple[float, ...]
    noise_stds: tuple[float, ...]
    offsets: tuple[float, ...] | None = None
    slope: float = 2.0
    n_samples: int = 4000
    n_distractors: int = 1

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=np.float64)
        if p.ndim != 1 or p.size < 1 or (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise ValueError(f"group proportions must be non-negative and sum to 1, got {self.proportions}")
        if len(self.noise_stds) != p.size or any(s < 0 for s in self.noise_stds):
            raise ValueError("need one non-negative noise std per group")
        if self.offsets is not None and len(self.offsets) != p.size:
            raise ValueError("need one offset per group")
        if self.n_samples < 1 or self.n_distractors < 0:
            raise ValueError("n_samples must be >= 1 and n_distractors >= 0")

    @property
    def n_groups(self) -> int:
        return len(self.proportions)

    @property
    def column_names(self) -> tuple[str, ...]:
        return ("group", "x1", *(f"z{i + 1}" for i in range(self.n_distractors)))

    def mean_function(self, features) -> np.ndarray:
        """Noise-free response for raw (unnormalized) feature rows."""
        X = np.asarray(features, dtype=np.float64)
        offsets = np.asarray(self.offsets or (0.0,) * self.n_groups)
        return self.slope * X[:, 1] + offsets[X[:, 0].astype(int)]

    def noise_std(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        return np.asarray(self.noise_stds)[X[:, 0].astype(int)]


BUILTIN: dict[str, SyntheticSpec] = {
    "two_group": SyntheticSpec(proportions=(0.5, 0.5), noise_stds=(1.0, 5.0)),
    "abcd": SyntheticSpec(
        proportions=(0.5, 0.4, 0.05, 0.05),
        noise_stds=(1.0, 1.0, 10.0, 10.0),
        offsets=(0.0, 0.0, 5.0, 5.0),
    ),
    "noiseless": SyntheticSpec(proportions=(1.0,), noise_stds=(0.0,), n_samples=2000),
}


def generate_synthetic(spec: SyntheticSpec | str, seed: int = 0, n_samples: int | None = None) -> Dataset:
    if isinstance(spec, str):
        try:
            spec = BUILTIN[spec]
        except KeyError:
            raise KeyError(f"unknown synthetic generator {spec!r}; choose from {sorted(BUILTIN)}") from None
    n = spec.n_samples if n_samples is None else n_samples
    rng = np.random.default_rng(seed)
    g = rng.choice(spec.n_groups, size=n, p=np.asarray(spec.proportions))
    x = rng.uniform(-1.0, 1.0, size=(n, 1 + spec.n_distractors))
    X = np.column_stack([g.astype(np.float64), x])
    y = spec.mean_function(X) + spec.noise_std(X) * rng.standard_normal(n)
    return Dataset(X, y, spec.column_names)
