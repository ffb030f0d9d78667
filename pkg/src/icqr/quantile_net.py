"""Feed-forward network with three quantile heads trained on the pinball loss."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def pinball_loss(level, y, prediction):
    """Quantile loss ``max(level*e, (level-1)*e)`` with ``e = y - prediction``.

    Broadcasts over arrays; returns a float for scalar inputs.
    """
    if not np.all((0 < np.asarray(level)) & (np.asarray(level) < 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    e = np.asarray(y, dtype=np.float64) - np.asarray(prediction, dtype=np.float64)
    out = np.maximum(level * e, (level - 1.0) * e)
    return float(out) if out.ndim == 0 else out


def mean_pinball_loss(levels, y, predictions) -> float:
    """Sum over heads of each head's mean pinball loss.

    ``predictions`` has shape (n, len(levels)), one column per level.
    """
    levels = np.asarray(levels, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)[:, None]
    return float(pinball_loss(levels, y, predictions).mean(axis=0).sum())


def pinball_grad(levels, y, predictions) -> np.ndarray:
    """Gradient of :func:`mean_pinball_loss` with respect to ``predictions``.

    At ``e == 0`` the (level - 1) branch is taken, i.e. d/dpred = 1 - level.
    """
    levels = np.asarray(levels, dtype=np.float64)
    e = np.asarray(y, dtype=np.float64)[:, None] - predictions
    g = np.where(e > 0, -levels, 1.0 - levels)
    return g / predictions.shape[0]


@dataclass(frozen=True)
class QuantileNetConfig:
    hidden_layers: tuple[int, ...] = (64, 64)
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 64
    weight_decay: float = 0.0
    seed: int = 0
    quantile_levels: tuple[float, float, float] = (0.05, 0.5, 0.95)

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        object.__setattr__(self, "quantile_levels", tuple(float(q) for q in self.quantile_levels))
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer widths must be positive")
        q = self.quantile_levels
        if len(q) != 3 or not (0 < q[0] < q[1] < q[2] < 1):
            raise ValueError(f"need three strictly increasing levels in (0, 1), got {q}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")

    @classmethod
    def for_alpha(cls, alpha: float, **kwargs) -> "QuantileNetConfig":
        return cls(quantile_levels=(alpha / 2, 0.5, 1 - alpha / 2), **kwargs)


@dataclass(frozen=True)
class QuantilePrediction:
    lower: float
    median: float
    upper: float


@dataclass
class QuantileModel:
    """Trained parameters of the network.

    ``weights[i]`` has shape (fan_in, fan_out); ReLU between layers, linear
    output with three units ordered (lower, median, upper).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: QuantileNetConfig
    input_dimension: int
    history: list[float] = field(default_factory=list)

    @classmethod
    def initialize(cls, cfg: QuantileNetConfig, input_dimension: int, rng=None) -> "QuantileModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        sizes = [input_dimension, *cfg.hidden_layers, 3]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, cfg, input_dimension)

    @property
    def levels(self) -> tuple[float, float, float]:
        return self.config.quantile_levels

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dimension:
            raise ValueError(
                f"model expects {self.input_dimension} features, got shape {X.shape}"
            )
        return X

    def _forward(self, X: np.ndarray):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def raw_outputs(self, X) -> np.ndarray:
        """Head outputs before monotonic repair, shape (n, 3)."""
        return self._forward(self._check(X))[-1]

    def predict_batch(self, X) -> np.ndarray:
        """Sorted head outputs (lower, median, upper), shape (n, 3)."""
        return np.sort(self.raw_outputs(X), axis=1)

    def predict(self, x) -> QuantilePrediction:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("predict takes a single feature vector; use predict_batch")
        lo, med, hi = self.predict_batch(x[None, :])[0]
        return QuantilePrediction(float(lo), float(med), float(hi))

    def loss(self, X, y) -> float:
        """Training objective: summed per-head mean pinball loss plus weight decay."""
        out = self.raw_outputs(X)
        penalty = sum(float(np.sum(p * p)) for p in self.parameters())
        return mean_pinball_loss(self.levels, y, out) + self.config.weight_decay * penalty

    def gradients(self, X, y):
        """Backpropagated gradients of :meth:`loss` for (weights, biases)."""
        acts = self._forward(X)
        delta = pinball_grad(self.levels, y, acts[-1])
        wd = 2.0 * self.config.weight_decay
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            gW[i] = acts[i].T @ delta + wd * self.weights[i]
            gb[i] = delta.sum(axis=0) + wd * self.biases[i]
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return gW, gb

    def copy(self) -> "QuantileModel":
        return QuantileModel(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.config,
            self.input_dimension,
            list(self.history),
        )

    def save(self, path) -> None:
        arrays = {f"W{i}": W for i, W in enumerate(self.weights)}
        arrays.update({f"b{i}": b for i, b in enumerate(self.biases)})
        meta = {
            "format_version": FORMAT_VERSION,
            "input_dimension": self.input_dimension,
            "config": asdict(self.config),
        }
        with Path(path).open("wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path) -> "QuantileModel":
        with np.load(Path(path), allow_pickle=False) as npz:
            meta = json.loads(str(npz["meta"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported model format {meta.get('format_version')}")
            cfg = QuantileNetConfig(**meta["config"])
            n_layers = len(cfg.hidden_layers) + 1
            weights = [npz[f"W{i}"].copy() for i in range(n_layers)]
            biases = [npz[f"b{i}"].copy() for i in range(n_layers)]
        return cls(weights, biases, cfg, int(meta["input_dimension"]))


def train(train_set: Dataset, cfg: QuantileNetConfig) -> QuantileModel:
    """Fit the three-head network with seeded mini-batch SGD.

    The final partial batch of each epoch is kept. If training ends with a
    higher objective than the initial parameters had, the initial
    parameters are returned instead.

    Raises
    ------
    FloatingPointError
        If the objective becomes non-finite (learning rate too large).
    """
    X, y = train_set.features, train_set.response
    n = X.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"{n} training rows is fewer than batch_size={cfg.batch_size}")
    rng = np.random.default_rng(cfg.seed)
    model = QuantileModel.initialize(cfg, X.shape[1], rng)
    initial = model.copy()
    initial_loss = model.loss(X, y)
    model.history.append(initial_loss)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                gW, gb = model.gradients(X[idx], y[idx])
                for W, g in zip(model.weights, gW):
                    W -= lr * g
                for b, g in zip(model.biases, gb):
                    b -= lr * g
            current = model.loss(X, y)
        if not np.isfinite(current):
            raise FloatingPointError(
                f"training loss became non-finite at epoch {epoch + 1}; lower the learning rate"
            )
        model.history.append(current)
    if model.history[-1] > initial_loss:
        logger.warning(
            "final loss %.6g exceeds initial %.6g; keeping initial parameters",
            model.history[-1], initial_loss,
        )
        initial.history = model.history
        return initial
    return model
