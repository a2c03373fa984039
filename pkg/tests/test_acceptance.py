"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary.  Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import io
import time

import numpy as np
import pytest

from gradcheck import check_gradient
from kgam.checkpoint import dumps, load_checkpoint, save_checkpoint
from kgam.cli import RunConfig, cmd_glm, cmd_psi, run_experiment
from kgam.datasets import friedman_generate, iris_binarize, iris_load
from kgam.embedding import embed_batch, fit_normalizer
from kgam.koppen import KstParams, psi_values
from kgam.model import format_confusion, predict_batch
from kgam.smoothers import KernelSpec, attention, glm_fit, nw_predict

# Iris split: among seeds 0..4999 whose 45 test rows hold 22 negatives and
# 23 positives (the published confusion totals), seed 3022 gives the 105-row
# GLM fit closest to the published one (coefficients in standard-error units
# plus log-likelihood).  Test-set outcomes played no part in the choice.
IRIS_SPLIT_SEED = 3022
FRIEDMAN_SEED = 0

FRIEDMAN_RUNS = {
    "shared_g": dict(outer_mode="shared_g", width=200, depth=0, learning_rate=1e-5),
    "per_channel_g": dict(outer_mode="per_channel_g", width=16, depth=2, learning_rate=3e-3),
}

IRIS_CONFIG = dict(
    task="binary_classification",
    dataset={"kind": "iris", "train_n": 105, "split_seed": IRIS_SPLIT_SEED},
    outer_mode="per_channel_g",
    width=16,
    depth=1,
    lambda_mode="geometric",
    lambda_base=0.9,
)


def parse_csv(text):
    return np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)


def test_criterion_01_koppen_invariants(acceptance_report):
    start = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 10_001)
    problems = []
    for n in (2, 3, 5):
        for k in range(1, 7):
            v = psi_values(grid, 10, k, n)
            if np.any(np.diff(v) < 0):
                problems.append(f"n={n} k={k} not monotone")
            if v.min() < 0 or v.max() > 1:
                problems.append(f"n={n} k={k} leaves [0, 1]")
            d1 = np.arange(10) / 10
            if not np.array_equal(psi_values(d1, 10, k, n), d1):
                problems.append(f"n={n} k={k} D_1 fixed points")
            if k > 1:
                coarse = np.arange(10 ** (k - 1)) / 10 ** (k - 1)
                if not np.array_equal(psi_values(coarse, 10, k, n), psi_values(coarse, 10, k - 1, n)):
                    problems.append(f"n={n} k={k} refinement")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 10
    acceptance_report(1, ok, f"36 (n, k) cases, {elapsed:.2f}s" + (f" {problems}" if problems else ""))


def test_criterion_02_koppen_values(acceptance_report):
    a = float(psi_values(0.31, 10, 2, 2))
    b = float(psi_values(0.39, 10, 2, 2))
    ok = abs(a - 0.301) <= 1e-12 and abs(b - 0.354) <= 1e-12
    acceptance_report(2, ok, f"psi_2(0.31)={a!r} psi_2(0.39)={b!r}")


def test_criterion_03_figure_series(acceptance_report):
    full = {k: parse_csv(cmd_psi(10, k, 2, 1001)) for k in (3, 4, 5)}
    zoom = {k: parse_csv(cmd_psi(10, k, 2, 1001, lo=0.0, hi=0.2)) for k in (3, 4, 5)}
    monotone = all(np.all(np.diff(s[:, 1]) >= 0) for s in (*full.values(), *zoom.values()))
    # every full-grid point is a 3-digit rational; every 5th zoom point is
    refines = all(np.array_equal(full[k][:, 1], full[3][:, 1]) for k in (4, 5))
    refines &= all(np.array_equal(zoom[k][::5, 1], zoom[3][::5, 1]) for k in (4, 5))
    acceptance_report(3, monotone and refines, f"monotone={monotone} k=4,5 refine k=3={refines}")


def test_criterion_04_gradient_check(acceptance_report):
    start = time.perf_counter()
    worst = max(check_gradient(seed) for seed in range(100))
    elapsed = time.perf_counter() - start
    acceptance_report(4, worst < 1e-5 and elapsed < 30, f"100 nets, worst rel err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_05_attention_is_nadaraya_watson(acceptance_report):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, dk, v = rng.integers(1, 33), rng.integers(1, 9), rng.integers(1, 4)
        q, K, V = rng.normal(size=(1, dk)), rng.normal(size=(n, dk)), rng.normal(size=(n, v))
        kernel = KernelSpec("exp_inner_product", float(np.sqrt(dk)))
        nw = np.array([nw_predict(K, V[:, j], q[0], kernel) for j in range(v)])
        worst = max(worst, float(np.max(np.abs(attention(q, K, V)[0] - nw))))
    acceptance_report(5, worst < 1e-12, f"50 instances, max abs diff {worst:.1e}")


def test_criterion_06_friedman(acceptance_report):
    start = time.perf_counter()
    var_y = float(np.var(friedman_generate(100, FRIEDMAN_SEED, 1.0).y))
    parts, ok = [], True
    for name, overrides in FRIEDMAN_RUNS.items():
        cfg = RunConfig(
            dataset={"kind": "friedman", "n": 100, "noise_sd": 1.0, "seed": FRIEDMAN_SEED},
            optimizer="sgd_momentum",
            momentum=0.9,
            epochs=2000,
            **overrides,
        )
        _, _, trace, metrics = run_experiment(cfg)
        ratio = trace[-1] / var_y
        ok &= metrics["embedding_width"] == 11 and len(trace) == 2000 and ratio <= 0.25
        parts.append(f"{name} MSE/var(y)={ratio:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    acceptance_report(6, ok, f"{', '.join(parts)}, width 11, {elapsed:.0f}s")


def test_criterion_07_iris_kgam(acceptance_report):
    _, _, _, metrics = run_experiment(RunConfig(**IRIS_CONFIG))
    test = metrics["test"]
    print(format_confusion(test["confusion"]))
    ok = (
        metrics["embedding_width"] == 7
        and test["n"] == 45
        and test["accuracy"] >= 0.70
        and 0.20 <= test["rmse"] <= 0.40
    )
    acceptance_report(
        7, ok, f"accuracy {test['accuracy']:.3f}, probability RMSE {test['rmse']:.3f}, confusion {test['confusion']}"
    )


def test_criterion_08_glm(acceptance_report):
    ds = iris_binarize(iris_load())
    full = glm_fit(ds.X, ds.y, names=ds.feature_names)
    signs = np.sign(full.coefficients[1:]).tolist() == [1.0, 1.0, -1.0]
    result = cmd_glm(seed=IRIS_SPLIT_SEED)
    fit, rmse = result["fit"], result["test"]["rmse"]
    ll, n = fit["log_likelihood"], fit["n"]
    criteria = np.isclose(fit["aic"], 2 * 4 - 2 * ll) and np.isclose(fit["bic"], 4 * np.log(n) - 2 * ll)
    ok = signs and abs(rmse - 0.26) <= 0.08 and bool(criteria) and full.converged
    acceptance_report(
        8, ok, f"full-data signs (+,+,-)={signs}, split RMSE {rmse:.3f}, AIC {fit['aic']:.1f}, BIC {fit['bic']:.1f}"
    )


def test_criterion_09_determinism_and_persistence(acceptance_report, tmp_path):
    cfg = RunConfig(**{**IRIS_CONFIG, "epochs": 50})
    model, data, trace, first = run_experiment(cfg)
    _, _, _, second = run_experiment(cfg)
    same_metrics = dumps(first) == dumps(second)

    path = tmp_path / "checkpoint.json"
    save_checkpoint(path, model, cfg.to_dict(), trace)
    loaded, config, trace2 = load_checkpoint(path)
    again = tmp_path / "again.json"
    save_checkpoint(again, loaded, config, trace2)
    rng = np.random.default_rng(0)
    lo, hi = data.X.min(axis=0), data.X.max(axis=0)
    X = lo + (hi - lo) * rng.uniform(size=(1000, data.d))
    same_pred = predict_batch(model, X).tobytes() == predict_batch(loaded, X).tobytes()
    same_file = path.read_bytes() == again.read_bytes()
    ok = same_metrics and same_pred and same_file
    acceptance_report(
        9, ok, f"metrics JSON identical={same_metrics}, predictions identical={same_pred}, file identical={same_file}"
    )


def test_criterion_10_embedding_separation(acceptance_report):
    ds = iris_binarize(iris_load())
    p = KstParams(d=3, gamma=10, k_digits=6)
    Z = embed_batch(ds.X, fit_normalizer(ds.X, p), p)
    gaps = [float(np.min(np.diff(np.sort(Z[:, q])))) for q in range(Z.shape[1])]
    ok = Z.shape == (150, 7) and min(gaps) > 1e-12
    distinct = np.unique(ds.X, axis=0)
    Zd = embed_batch(distinct, fit_normalizer(ds.X, p), p)
    distinct_gap = min(float(np.min(np.diff(np.sort(Zd[:, q])))) for q in range(Zd.shape[1]))
    acceptance_report(
        10,
        ok,
        f"min gap over 150 values {min(gaps):.1e}; over the {len(distinct)} distinct rows {distinct_gap:.1e}",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
