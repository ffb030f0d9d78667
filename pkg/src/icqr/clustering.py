"""Lloyd's k-means with k-means++ seeding and variance-explained k selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansConfig:
    max_iterations: int = 300
    seed: int = 0
    restarts: int = 5
    min_cluster_size: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be >= 1")
        if self.min_cluster_size < 0:
            raise ValueError("min_cluster_size must be non-negative")


@dataclass(frozen=True)
class KSelectionConfig:
    """Try k = min_k, min_k + 1, ..., max_k until variance explained exceeds the threshold."""

    variance_threshold: float = 0.9
    max_k: int = 10
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    min_k: int = 2

    def __post_init__(self):
        if not 0 < self.variance_threshold < 1:
            raise ValueError("variance_threshold must lie in (0, 1)")
        if self.min_k < 1 or self.max_k < self.min_k:
            raise ValueError(f"need 1 <= min_k <= max_k, got {self.min_k}, {self.max_k}")


@dataclass(frozen=True)
class ClusteringModel:
    centroids: np.ndarray
    assignments: np.ndarray
    cluster_sizes: np.ndarray
    global_mean: np.ndarray
    variance_explained: float
    objective: float
    history: tuple[float, ...] = ()
    converged: bool = True
    # filled by select_k: (k, variance explained) per k tried, and whether the threshold was met
    candidates: tuple[tuple[int, float], ...] = ()
    threshold_met: bool | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def assign(self, x) -> int:
        return assign(self, x)

    def assign_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.centroids.shape[1]:
            raise ValueError(
                f"centroids have dimension {self.centroids.shape[1]}, got shape {X.shape}"
            )
        return _sq_dists(X, self.centroids).argmin(axis=1)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], C.shape[0]))
    for j, c in enumerate(C):
        diff = X - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def _objective(X, C, labels) -> float:
    diff = X - C[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _means(X, labels, k) -> np.ndarray:
    # same reduction as X.mean(axis=0), so k = 1 reproduces the global mean bitwise
    return np.array([X[labels == j].mean(axis=0) for j in range(k)])


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = _sq_dists(X, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        d2 = np.minimum(d2, _sq_dists(X, X[idx][None, :])[:, 0])
    return np.array(centers)


def _assign_step(X, C):
    """Nearest-centroid labels; empty clusters steal the point farthest from its centroid."""
    d = _sq_dists(X, C)
    labels = d.argmin(axis=1)
    k = C.shape[0]
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = d[np.arange(len(labels)), labels]
        # only take from clusters that keep at least one point
        own[counts[labels] <= 1] = -1.0
        p = int(own.argmax())
        counts[labels[p]] -= 1
        counts[j] += 1
        labels[p] = j
        C[j] = X[p]
        d[:, j] = _sq_dists(X, X[p][None, :])[:, 0]
    return labels


def _lloyd(X, C, max_iterations):
    C = C.copy()
    k = C.shape[0]
    labels = None
    history = []
    converged = False
    for _ in range(max_iterations):
        new = _assign_step(X, C)
        history.append(_objective(X, C, new))
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = new
        C = _means(X, labels, k)
    if not converged:
        labels = _assign_step(X, C)
        history.append(_objective(X, C, labels))
    return C, labels, history, converged


def _build(X, C, labels, history, converged) -> ClusteringModel:
    sizes = np.bincount(labels, minlength=C.shape[0])
    mu = X.mean(axis=0)
    for a in (C, labels, sizes, mu):
        a.setflags(write=False)
    return ClusteringModel(
        centroids=C,
        assignments=labels,
        cluster_sizes=sizes,
        global_mean=mu,
        variance_explained=_variance_explained(X, C, labels, mu),
        objective=_objective(X, C, labels),
        history=tuple(history),
        converged=converged,
    )


def kmeans(points, k: int, cfg: KMeansConfig = KMeansConfig()) -> ClusteringModel:
    """Best-of-``cfg.restarts`` Lloyd runs from k-means++ seeds.

    Restart r draws its seed from ``SeedSequence(cfg.seed).spawn`` so the
    result is independent of run order; equal objectives go to the lower
    restart index. With ``min_cluster_size > 0`` undersized clusters are
    merged into the cluster with the nearest centroid and Lloyd is rerun
    with one cluster fewer, until every cluster is large enough or k = 1.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    best = None
    for ss in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = np.random.default_rng(ss)
        run = _lloyd(X, _kmeanspp(X, k, rng), cfg.max_iterations)
        obj = _objective(X, run[0], run[1])
        if best is None or obj < best[0]:
            best = (obj, run)
    C, labels, history, converged = best[1]

    m = cfg.min_cluster_size
    while m > 0 and C.shape[0] > 1:
        sizes = np.bincount(labels, minlength=C.shape[0])
        if sizes.min() >= m:
            break
        small = int(sizes.argmin())
        gap = _sq_dists(C[small][None, :], C)[0]
        gap[small] = np.inf
        target = int(gap.argmin())
        labels = np.where(labels == small, target, labels)
        keep = [j for j in range(C.shape[0]) if j != small]
        labels = np.searchsorted(keep, labels)
        C = _means(X, labels, len(keep))
        logger.debug("merged undersized cluster (%d points); k -> %d", sizes[small], len(keep))
        C, labels, more, converged = _lloyd(X, C, cfg.max_iterations)
        history = history + more
    return _build(X, C, labels, history, converged)


def _variance_explained(X, C, labels, mu) -> float:
    k = C.shape[0]
    sizes = np.bincount(labels, minlength=k)
    row = np.einsum("ij,ij->i", X - mu, X - mu)
    # total accumulated cluster by cluster so singleton clusters match the between term exactly
    total = float(np.sum(np.bincount(labels, weights=row, minlength=k)))
    if total == 0.0:
        return 1.0
    between = float(np.sum(sizes * np.einsum("ij,ij->i", C - mu, C - mu)))
    return min(1.0, max(0.0, between / total))


def variance_explained(model: ClusteringModel, points) -> float:
    """Between-cluster sum of squares over total sum of squares.

    ``sum_i n_i |c_i - mu|^2 / sum_x |x - mu|^2``; 1 when every point is identical.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    labels = model.assignments if len(model.assignments) == len(X) else model.assign_batch(X)
    return _variance_explained(X, model.centroids, labels, X.mean(axis=0))


def select_k(points, cfg: KSelectionConfig = KSelectionConfig()) -> ClusteringModel:
    """First k in ``min_k..max_k`` whose variance explained exceeds the threshold.

    Falls back to the ``max_k`` model with ``threshold_met=False``. k never
    exceeds the number of points.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("k selection needs at least 2 points")
    candidates = []
    model = None
    met = False
    for k in range(cfg.min_k, min(cfg.max_k, X.shape[0]) + 1):
        model = kmeans(X, k, cfg.kmeans)
        candidates.append((k, model.variance_explained))
        if model.variance_explained > cfg.variance_threshold:
            met = True
            break
    if not met:
        logger.info(
            "variance threshold %.3g not reached by k=%d (sigma=%.4f)",
            cfg.variance_threshold, model.k, model.variance_explained,
        )
    return ClusteringModel(
        **{f: getattr(model, f) for f in (
            "centroids", "assignments", "cluster_sizes", "global_mean",
            "variance_explained", "objective", "history", "converged",
        )},
        candidates=tuple(candidates),
        threshold_met=met,
    )


def assign(model: ClusteringModel, x) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("assign takes a single vector; use ClusteringModel.assign_batch")
    return int(model.assign_batch(x[None, :])[0])
