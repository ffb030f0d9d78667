"""Repeated split / train / calibrate / evaluate experiments over the four interval methods."""

from __future__ import annotations

import configparser
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .clustering import KMeansConfig, KSelectionConfig
from .conformal import (
    ConformalConfig,
    IntervalSet,
    calibrate_cqr,
    calibrate_icqr,
    calibrate_naive,
    intervals_cqr,
    intervals_icqr,
    intervals_naive,
    intervals_qr,
)
from .data import Dataset, SplitSpec, apply_normalizer, fit_normalizer, load_csv, split
from .importance import ImportanceConfig
from .quantile_net import QuantileNetConfig, train
from .synthetic import generate_synthetic

logger = logging.getLogger(__name__)

METHODS = ("naive", "qr", "cqr", "icqr")
STAT_NAMES = ("min", "max", "mean", "std", "q1", "median", "q3", "iqr")
WIDTH_QUANTILE_LEVELS = np.linspace(0.0, 1.0, 101)


class TrialError(RuntimeError):
    def __init__(self, trial: int, cause: BaseException):
        super().__init__(f"trial {trial}: {type(cause).__name__}: {cause}")
        self.trial = trial


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    response: str = "y"
    synthetic: str | None = None
    synthetic_n: int | None = None
    group_column: str | None = None
    alpha: float = 0.1
    variance_threshold: float = 0.9
    max_k: int = 10
    min_k: int = 2
    trials: int = 10
    train_fraction: float = 0.5
    cal_fraction: float = 0.25
    val_fraction: float = 0.25
    seed: int = 0
    methods: tuple[str, ...] = METHODS
    net: QuantileNetConfig = field(default_factory=QuantileNetConfig)
    importance: ImportanceConfig = field(default_factory=ImportanceConfig)
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.variance_threshold < 1:
            raise ValueError("variance_threshold must lie in (0, 1)")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if (self.dataset is None) == (self.synthetic is None):
            raise ValueError("set exactly one of dataset or synthetic")
        SplitSpec(self.train_fraction, self.cal_fraction, self.val_fraction)
        KSelectionConfig(self.variance_threshold, self.max_k, self.kmeans, self.min_k)

    def load_data(self) -> Dataset:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic, seed=self.seed, n_samples=self.synthetic_n)
        return load_csv(self.dataset, self.response)

    @property
    def effective_group_column(self) -> str | None:
        if self.group_column is None and self.synthetic is not None:
            return "group"
        return self.group_column


# flat key -> (sub-config attribute or None, field name, parser)
def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(t) for t in v.replace(",", " ").split())


def _names(v: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in v.split(",") if t.strip())


def _opt(conv):
    return lambda v: None if v.strip().lower() in ("", "none") else conv(v)


CONFIG_KEYS = {
    "dataset": (None, "dataset", _opt(str)),
    "response": (None, "response", str),
    "synthetic": (None, "synthetic", _opt(str)),
    "synthetic_n": (None, "synthetic_n", _opt(int)),
    "group_column": (None, "group_column", _opt(str)),
    "alpha": (None, "alpha", float),
    "variance_threshold": (None, "variance_threshold", float),
    "max_k": (None, "max_k", int),
    "min_k": (None, "min_k", int),
    "trials": (None, "trials", int),
    "train_fraction": (None, "train_fraction", float),
    "cal_fraction": (None, "cal_fraction", float),
    "val_fraction": (None, "val_fraction", float),
    "seed": (None, "seed", int),
    "methods": (None, "methods", _names),
    "hidden_layers": ("net", "hidden_layers", _ints),
    "learning_rate": ("net", "learning_rate", float),
    "epochs": ("net", "epochs", int),
    "batch_size": ("net", "batch_size", int),
    "weight_decay": ("net", "weight_decay", float),
    "importance_repetitions": ("importance", "repetitions", int),
    "importance_metric": ("importance", "metric", str),
    "kmeans_restarts": ("kmeans", "restarts", int),
    "kmeans_max_iterations": ("kmeans", "max_iterations", int),
    "min_cluster_size": ("kmeans", "min_cluster_size", int),
}


def config_from_mapping(values: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config from flat ``key -> string`` pairs, on top of ``base``."""
    top: dict = {}
    nested: dict[str, dict] = {"net": {}, "importance": {}, "kmeans": {}}
    for key, raw in values.items():
        if key not in CONFIG_KEYS:
            raise KeyError(f"unknown config key {key!r}")
        target, name, conv = CONFIG_KEYS[key]
        (top if target is None else nested[target])[name] = conv(raw)
    if base is None:
        if "synthetic" not in top and "dataset" not in top:
            raise ValueError("config must set dataset or synthetic")
        base = ExperimentConfig(synthetic="two_group")
        top.setdefault("synthetic", None)
        top.setdefault("dataset", None)
    for sub, kw in nested.items():
        if kw:
            top[sub] = replace(getattr(base, sub), **kw)
    return replace(base, **top)


def load_config(path) -> ExperimentConfig:
    """Read ``key = value`` lines (``#`` comments allowed) into an ExperimentConfig."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[experiment]\n" + text, source=str(path))
    return config_from_mapping(dict(parser["experiment"]))


def config_to_mapping(cfg: ExperimentConfig) -> dict:
    out = {}
    for key, (target, name, _) in CONFIG_KEYS.items():
        v = getattr(cfg if target is None else getattr(cfg, target), name)
        out[key] = list(v) if isinstance(v, tuple) else v
    return out


@dataclass(frozen=True)
class SummaryStats:
    min: float
    max: float
    mean: float
    std: float
    q1: float
    median: float
    q3: float
    iqr: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in STAT_NAMES}


def summarize(values) -> SummaryStats:
    """Location/spread summary; quartiles use linear interpolation, std uses n - 1."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot summarize an empty list")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    lo, hi = float(v.min()), float(v.max())
    # clip guards against interpolation rounding past the extremes
    q1, med, q3 = (float(np.clip(q, lo, hi)) for q in (q1, med, q3))
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return SummaryStats(lo, hi, float(v.mean()), std, q1, med, q3, q3 - q1)


@dataclass
class TrialResult:
    trial: int
    seed: int
    y_val: np.ndarray
    intervals: dict[str, IntervalSet]
    groups: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def coverage(self, method: str) -> float:
        return float(self.intervals[method].covers(self.y_val).mean())

    def widths(self, method: str) -> np.ndarray:
        return self.intervals[method].widths

    def group_coverage(self, method: str, labels: np.ndarray | None = None) -> dict:
        labels = self.groups if labels is None else labels
        if labels is None:
            return {}
        hit = self.intervals[method].covers(self.y_val)
        return {_label(g): float(hit[labels == g].mean()) for g in np.unique(labels)}


def _label(g) -> str:
    g = float(g)
    return str(int(g)) if g.is_integer() else repr(g)


@dataclass
class MethodReport:
    method: str
    width_stats: SummaryStats
    coverage_stats: SummaryStats
    per_group_coverage: list[dict] | None = None
    group_coverage: dict[str, float] | None = None
    width_quantiles: list[float] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def derive_seeds(base_seed: int, trial: int, n: int = 4) -> list[int]:
    """Independent per-trial seeds: SeedSequence entropy mixed from (base_seed, trial)."""
    return [int(s) for s in np.random.SeedSequence([base_seed, trial]).generate_state(n)]


def run_trial(cfg: ExperimentConfig, data: Dataset, trial: int) -> TrialResult:
    split_seed, net_seed, imp_seed, km_seed = derive_seeds(cfg.seed, trial)
    train_raw, cal_raw, val_raw = split(
        data, SplitSpec(cfg.train_fraction, cfg.cal_fraction, cfg.val_fraction, split_seed)
    )
    norm = fit_normalizer(train_raw)
    train_set, cal, val = (apply_normalizer(norm, d) for d in (train_raw, cal_raw, val_raw))

    a = cfg.alpha
    net_cfg = replace(cfg.net, seed=net_seed, quantile_levels=(a / 2, 0.5, 1 - a / 2))
    model = train(train_set, net_cfg)
    conf = ConformalConfig(a)

    intervals: dict[str, IntervalSet] = {}
    diagnostics: dict = {"final_training_loss": model.history[-1]}
    for method in cfg.methods:
        if method == "naive":
            r = calibrate_naive(model, cal, conf)
            intervals[method] = intervals_naive(model, val.features, r)
            diagnostics["naive_q_hat"] = r.q_hat
        elif method == "qr":
            intervals[method] = intervals_qr(model, val.features)
        elif method == "cqr":
            r = calibrate_cqr(model, cal, conf)
            intervals[method] = intervals_cqr(model, val.features, r)
            diagnostics["cqr_q_hat"] = r.q_hat
        elif method == "icqr":
            ksel = KSelectionConfig(
                cfg.variance_threshold, cfg.max_k, replace(cfg.kmeans, seed=km_seed), cfg.min_k
            )
            g = calibrate_icqr(model, cal, conf, ksel, replace(cfg.importance, seed=imp_seed))
            iv = intervals_icqr(model, val.features, g)
            intervals[method] = iv
            hit = iv.covers(val.response)
            cl = g.clustering
            diagnostics["icqr"] = {
                "k": cl.k,
                "variance_explained": cl.variance_explained,
                "threshold_met": cl.threshold_met,
                "candidates": [{"k": k, "variance_explained": s} for k, s in cl.candidates],
                "objective": cl.objective,
                "centroids": cl.centroids.tolist(),
                "q_hats": g.q_hats.tolist(),
                "group_sizes": g.group_sizes.tolist(),
                "importances": g.importance.to_records(),
                "cluster_coverage": {
                    str(i): float(hit[iv.groups == i].mean())
                    for i in range(cl.k) if (iv.groups == i).any()
                },
            }
    gcol = cfg.effective_group_column
    groups = val_raw.column(gcol).copy() if gcol and gcol in val_raw.column_names else None
    return TrialResult(trial, split_seed, val.response, intervals, groups, diagnostics)


def _run_one(args):
    cfg, data, t = args
    try:
        return run_trial(cfg, data, t)
    except Exception as exc:
        raise TrialError(t, exc) from exc


def run_trials(cfg: ExperimentConfig, data: Dataset | None = None, jobs: int = 1) -> list[TrialResult]:
    """Run every trial, optionally across ``jobs`` worker processes; sorted by trial index."""
    data = cfg.load_data() if data is None else data
    tasks = [(cfg, data, t) for t in range(cfg.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = []
        for task in tasks:
            results.append(_run_one(task))
            logger.info("trial %d/%d done", task[2] + 1, cfg.trials)
    return sorted(results, key=lambda r: r.trial)


def aggregate(trials: list[TrialResult], methods) -> list[MethodReport]:
    """Pool widths over trials and validation points; one coverage value per trial."""
    trials = sorted(trials, key=lambda r: r.trial)
    reports = []
    for method in methods:
        widths = np.concatenate([t.widths(method) for t in trials])
        cov = [t.coverage(method) for t in trials]
        group_cov = None
        if trials[0].groups is not None:
            per = [t.group_coverage(method) for t in trials]
            keys = sorted({k for p in per for k in p}, key=float)
            group_cov = {k: float(np.mean([p[k] for p in per if k in p])) for k in keys}
        per_cluster = None
        diag: dict = {}
        if method == "icqr":
            icqr = [t.diagnostics["icqr"] for t in trials]
            per_cluster = [d["cluster_coverage"] for d in icqr]
            names = [r["column_name"] for r in icqr[0]["importances"]]
            mean_imp = np.mean([[r["importance"] for r in d["importances"]] for d in icqr], axis=0)
            diag = {
                "selected_k": [d["k"] for d in icqr],
                "variance_explained": [d["variance_explained"] for d in icqr],
                "mean_importances": [
                    {"column_name": n, "importance": float(v)} for n, v in zip(names, mean_imp)
                ],
                "trials": icqr,
            }
        elif method in ("naive", "cqr"):
            diag = {"q_hat": [t.diagnostics[f"{method}_q_hat"] for t in trials]}
        reports.append(MethodReport(
            method=method,
            width_stats=summarize(widths),
            coverage_stats=summarize(cov),
            per_group_coverage=per_cluster,
            group_coverage=group_cov,
            width_quantiles=np.quantile(widths, WIDTH_QUANTILE_LEVELS).tolist(),
            diagnostics=diag,
        ))
    return reports


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None, jobs: int = 1) -> list[MethodReport]:
    return aggregate(run_trials(cfg, data, jobs), cfg.methods)
