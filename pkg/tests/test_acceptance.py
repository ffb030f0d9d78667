"""Acceptance gate: one test per criterion, each recording a PASS/FAIL/SKIP line.

The lines are printed by the terminal-summary hook in ``conftest.py`` and also
echoed immediately (visible with ``pytest -s``).
"""

import itertools
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE
from icqr import cli
from icqr.bench import ExperimentConfig, run_trials
from icqr.clustering import KMeansConfig, KSelectionConfig, kmeans
from icqr.conformal import (
    ConformalConfig,
    calibrate_cqr,
    calibrate_icqr,
    corrected_quantile,
    intervals_cqr,
    intervals_icqr,
)
from icqr.data import Dataset
from icqr.importance import ImportanceConfig, permutation_importance
from icqr.quantile_net import QuantileModel, QuantileNetConfig, mean_pinball_loss, pinball_grad, train
from icqr.synthetic import generate_synthetic

H = 1e-5
GRAD_ATOL = 1e-4


def record(number: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE[number] = (status, detail)
    print(f"\ncriterion {number:2d}: {status}  {detail}")
    assert ok, detail


def sort_oracle(scores, alpha):
    """Smallest sorted score whose rank/(n+1) reaches 1 - alpha, else the largest."""
    s = sorted(float(v) for v in scores)
    target = 1 - Fraction(alpha)
    for rank, value in enumerate(s, start=1):
        if Fraction(rank, len(s) + 1) >= target:
            return value
    return s[-1]


def best_bipartition(X):
    best = np.inf
    for mask in itertools.product([False, True], repeat=len(X) - 1):
        side = np.array((False, *mask))
        if side.any():
            best = min(best, sum(((P - P.mean(0)) ** 2).sum() for P in (X[side], X[~side])))
    return best


def test_01_finite_sample_coverage():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    scores = rng.uniform(size=(10_000, 100))
    hits = sum(s[99] <= corrected_quantile(s[:99], 0.1) for s in scores)
    cov = hits / 10_000
    elapsed = time.perf_counter() - start
    record(1, 0.89 <= cov <= 0.93 and elapsed < 10,
           f"coverage {cov:.4f} in [0.89, 0.93], {elapsed:.2f}s < 10s")


def test_02_corrected_quantile_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    for i in range(1000):
        n = int(rng.integers(1, 501))
        # every third multiset is drawn from a small integer range to force ties
        s = rng.integers(0, 10, n).astype(float) if i % 3 == 0 else rng.normal(size=n)
        for alpha in (0.01, 0.1, 0.5):
            mismatches += corrected_quantile(s, alpha) != sort_oracle(s, alpha)
    elapsed = time.perf_counter() - start
    record(2, mismatches == 0 and elapsed < 5,
           f"{mismatches} mismatches over 3000 cases, {elapsed:.2f}s < 5s")


@pytest.fixture(scope="module")
def two_group_run():
    cfg = ExperimentConfig(synthetic="two_group", trials=10, seed=0,
                           net=QuantileNetConfig(epochs=5))
    start = time.perf_counter()
    trials = run_trials(cfg)
    return trials, time.perf_counter() - start


def test_03_cqr_restores_coverage(two_group_run):
    trials, elapsed = two_group_run
    mean = {m: np.mean([t.coverage(m) for t in trials]) for m in ("qr", "cqr", "icqr")}
    ok = (mean["qr"] <= 0.9 - 0.03
          and all(0.88 <= mean[m] <= 0.93 for m in ("cqr", "icqr"))
          and elapsed < 300)
    record(3, ok, f"QR {mean['qr']:.3f}, CQR {mean['cqr']:.3f}, ICQR {mean['icqr']:.3f}, "
                  f"{elapsed:.1f}s < 300s")


def _iqr(w):
    q1, q3 = np.quantile(w, [0.25, 0.75])
    return q3 - q1


def _gap(t, method):
    return np.mean([abs(c - 0.9) for c in t.group_coverage(method).values()])


def test_04_icqr_adaptivity(two_group_run):
    trials, elapsed = two_group_run
    wider = sum(_iqr(t.widths("icqr")) > _iqr(t.widths("cqr")) for t in trials)
    tighter = sum(_gap(t, "icqr") < _gap(t, "cqr") for t in trials)
    record(4, wider >= 8 and tighter >= 7 and elapsed < 300,
           f"width IQR larger in {wider}/10 (need 8), group gap smaller in {tighter}/10 (need 7)")


def test_05_single_cluster_degenerates_to_cqr():
    data = generate_synthetic("two_group", seed=3, n_samples=3000)
    train_set, cal, val = data.take(np.arange(1000)), data.take(np.arange(1000, 2000)), data.take(np.arange(2000, 3000))
    model = train(train_set, QuantileNetConfig(hidden_layers=(16,), epochs=5, batch_size=32))
    cfg = ConformalConfig(0.1)
    g = calibrate_icqr(model, cal, cfg, KSelectionConfig(0.9, max_k=1, min_k=1), ImportanceConfig())
    a = intervals_icqr(model, val.features, g)
    b = intervals_cqr(model, val.features, calibrate_cqr(model, cal, cfg))
    same = a.lower.tobytes() == b.lower.tobytes() and a.upper.tobytes() == b.upper.tobytes()
    record(5, same and g.k == 1 and len(a.lower) == 1000, f"k={g.k}, 1000 intervals bitwise equal: {same}")


def test_06_kmeans_matches_exhaustive_optimum():
    matched, monotone = 0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(int(rng.integers(2, 9)), 2))
        m = kmeans(X, 2, KMeansConfig(seed=seed, restarts=5))
        matched += abs(m.objective - best_bipartition(X)) <= 1e-9
        monotone += bool(np.all(np.diff(m.history) <= 0))
    record(6, matched >= 95 and monotone == 100,
           f"optimum matched in {matched}/100 (need 95), non-increasing history in {monotone}/100")


def test_07_variance_explained_identity():
    worst, ones, zeros = 0.0, 0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 60))
        X = rng.normal(size=(n, int(rng.integers(1, 5)))) * rng.uniform(0.1, 10)
        k = int(rng.integers(1, min(n, 8) + 1))
        m = kmeans(X, k, KMeansConfig(seed=seed, restarts=2))
        total = ((X - X.mean(0)) ** 2).sum()
        worst = max(worst, abs(m.variance_explained - (1 - m.objective / total)))
        zeros += kmeans(X, 1).variance_explained == 0.0
        ones += kmeans(np.unique(X, axis=0), len(np.unique(X, axis=0))).variance_explained == 1.0
    record(7, worst <= 1e-9 and zeros == 100 and ones == 100,
           f"max |sigma - (1 - L/T)| = {worst:.2e}, sigma_1 == 0 in {zeros}/100, sigma_N == 1 in {ones}/100")


def test_08_permutation_importance():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3))
    blind = QuantileModel.initialize(QuantileNetConfig(hidden_layers=(8, 8), seed=1), 3)
    blind.weights[0][1, :] = 0.0
    iv = permutation_importance(blind, Dataset(X, X.sum(1)), ImportanceConfig(repetitions=5))
    exact = iv.values[1] == 0.0

    dominant = 0
    for seed in range(10):
        r = np.random.default_rng(100 + seed)
        Z = r.normal(size=(3000, 2))
        d = Dataset(Z, 10 * Z[:, 0] + r.normal(size=3000))
        fit = train(d.take(np.arange(2000)),
                    QuantileNetConfig(hidden_layers=(32,), epochs=30, batch_size=32, seed=seed))
        imp = permutation_importance(fit, d.take(np.arange(2000, 3000)), ImportanceConfig(seed=seed))
        dominant += imp.values[0] > 10 * imp.values[1]
    record(8, exact and dominant >= 9,
           f"ignored feature importance {float(iv.values[1])!r}, I_1 > 10 I_2 in {dominant}/10 (need 9)")


def test_09_pinball_gradient():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        levels = np.sort(rng.uniform(0.01, 0.99, 3))
        y = rng.normal(size=1)
        e = rng.choice([-1, 1], 3) * rng.uniform(1e-3, 3, 3)
        pred = (y[0] - e)[None, :]
        analytic = pinball_grad(levels, y, pred)[0]
        for j in range(3):
            up, down = pred.copy(), pred.copy()
            up[0, j] += H
            down[0, j] -= H
            fd = (mean_pinball_loss(levels, y, up) - mean_pinball_loss(levels, y, down)) / (2 * H)
            worst = max(worst, abs(fd - analytic[j]))

    # the same check through the network, away from ReLU kinks and zero residuals
    model = QuantileModel.initialize(QuantileNetConfig(hidden_layers=(5,), weight_decay=1e-3, seed=3), 2)
    Xn = rng.normal(size=(4, 2))
    yn = rng.normal(size=4) * 5
    gw, gb = model.gradients(Xn, yn)
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + H
                up = model.loss(Xn, yn)
                p[idx] = old - H
                down = model.loss(Xn, yn)
                p[idx] = old
                worst = max(worst, abs((up - down) / (2 * H) - g[idx]))
    record(9, worst <= GRAD_ATOL, f"max |analytic - central difference| = {worst:.2e} <= {GRAD_ATOL}")


def test_10_naive_constant_width():
    cfg = ExperimentConfig(synthetic="two_group", trials=10, seed=0, methods=("naive",),
                           net=QuantileNetConfig(epochs=5))
    spreads = [float(np.ptp(t.widths("naive"))) for t in run_trials(cfg)]
    record(10, max(spreads) < 1e-9, f"largest per-trial width spread {max(spreads):.2e} < 1e-9")


def test_11_external_datasets(tmp_path, capsys):
    # The reference datasets are not shipped; point ICQR_DATASET at a CSV to run the real check.
    path = os.environ.get("ICQR_DATASET")
    if path is None:
        code = cli.main(["run", "--synthetic", "abcd", "--trials", "2", "--epochs", "3",
                         "--format", "json", "--output", str(tmp_path / "r.json")])
        capsys.readouterr()
        assert code == 0
        ACCEPTANCE[11] = ("SKIP", "external dataset not supplied (set ICQR_DATASET); "
                                  "CLI smoke run on synthetic abcd data completed")
        print(f"\ncriterion 11: SKIP  {ACCEPTANCE[11][1]}")
        pytest.skip("external dataset not supplied")

    cfg = ExperimentConfig(dataset=path, response=os.environ.get("ICQR_RESPONSE", "y"),
                           trials=int(os.environ.get("ICQR_TRIALS", "10")), methods=("qr", "cqr", "icqr"))
    trials = run_trials(cfg)
    cov = {m: np.mean([t.coverage(m) for t in trials]) for m in cfg.methods}
    wider = np.mean([_iqr(t.widths("icqr")) for t in trials]) > np.mean([_iqr(t.widths("cqr")) for t in trials])
    ok = (all(abs(cov[m] - 0.9) <= 0.02 for m in ("cqr", "icqr"))
          and abs(cov["qr"] - 0.9) > 0.02 and wider)
    record(11, ok, f"QR {cov['qr']:.3f}, CQR {cov['cqr']:.3f}, ICQR {cov['icqr']:.3f}, "
                   f"ICQR width IQR larger: {wider}")
