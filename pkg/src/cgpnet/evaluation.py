"""Metrics, data splits, detrending, and the synthetic benchmark harness."""
from __future__ import annotations

import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import svar_group_lasso, svar_predictor
from .datagen import generate_dataset
from .model import AdjacencyMatrix, TimeSeriesMatrix, cgp_predictor
from .solver import (
    CoefficientVector,
    SolverConfig,
    basic_algorithm,
    extended_algorithm,
    extended_refinement,
)

__all__ = [
    "BenchmarkSpec",
    "MetricsReport",
    "entry_mse",
    "prediction_mse",
    "support_metrics",
    "sparsity_pnnz",
    "even_odd_split",
    "linear_detrend",
    "highpass_detrend",
    "run_benchmark",
    "BENCHMARK_METHODS",
]

DEFAULT_EPS = 1e-6

BENCHMARK_METHODS = ("cgp-basic", "cgp-extended", "cgp-gradient", "svar")


def _mat(a) -> np.ndarray:
    if isinstance(a, AdjacencyMatrix):
        return a.w
    return np.asarray(a, dtype=float)


def _series(x) -> np.ndarray:
    if isinstance(x, TimeSeriesMatrix):
        return x.data
    return np.asarray(x, dtype=float)


def entry_mse(a_true, a_hat) -> float:
    """Mean squared error of adjacency entries, ||A - A_hat||_F^2 / n^2."""
    at = _mat(a_true)
    ah = _mat(a_hat)
    if at.shape != ah.shape:
        raise ValueError(f"shape mismatch {at.shape} vs {ah.shape}")
    d = at - ah
    return float(np.vdot(d, d)) / at.shape[0] ** 2


def prediction_mse(predictor, x, m: int) -> float:
    """Average squared one-step-ahead error over columns m..T-1.

    `predictor` maps an n x m history (oldest to newest) to the next
    column; CGP, SVAR, and distance-graph predictors all conform.
    """
    data = _series(x)
    n, t = data.shape
    if t <= m:
        raise ValueError(f"need more than m={m} columns, got {t}")
    err = 0.0
    for k in range(m, t):
        e = data[:, k] - predictor(data[:, k - m : k])
        err += float(e @ e)
    return err / (n * (t - m))


def support_metrics(a_true, a_hat, eps: float = DEFAULT_EPS) -> dict:
    """Precision/recall/F1 of the estimated edge support at threshold eps."""
    true_mask = np.abs(_mat(a_true)) > eps
    hat_mask = np.abs(_mat(a_hat)) > eps
    tp = int(np.sum(true_mask & hat_mask))
    fp = int(np.sum(~true_mask & hat_mask))
    fn = int(np.sum(true_mask & ~hat_mask))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def sparsity_pnnz(a, eps: float = DEFAULT_EPS) -> float:
    """Proportion of entries with magnitude above eps."""
    w = _mat(a)
    return float(np.mean(np.abs(w) > eps))


def even_odd_split(x, swap: bool = False):
    """Split columns into (even-index, odd-index) halves; swap=True flips them."""
    data = _series(x)
    train, test = data[:, 0::2], data[:, 1::2]
    if swap:
        train, test = test, train
    return TimeSeriesMatrix(train), TimeSeriesMatrix(test)


def linear_detrend(series) -> np.ndarray:
    """Remove the per-row least-squares line (intercept + slope * t)."""
    data = _series(series)
    k = data.shape[1]
    t = np.arange(k, dtype=float)
    design = np.stack([np.ones(k), t], axis=1)
    coef, *_ = np.linalg.lstsq(design, data.T, rcond=None)
    return data - (design @ coef).T


def highpass_detrend(series, cutoff_period: float) -> np.ndarray:
    """Ideal high-pass: zero every Fourier bin (DC included) whose period is
    at least cutoff_period samples, then invert; the real part is returned."""
    if cutoff_period <= 0:
        raise ValueError("cutoff_period must be positive")
    data = _series(series)
    k = data.shape[1]
    spec = np.fft.rfft(data, axis=1)
    idx = np.arange(spec.shape[1])
    # bin i has period k/i samples; i = 0 is DC (infinite period)
    low = idx * cutoff_period <= k * (1.0 + 1e-9)
    spec[:, low] = 0.0
    return np.fft.irfft(spec, n=k, axis=1).real


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkSpec:
    """Grid of synthetic recovery experiments.

    lambda1_grid / lambda2_grid hold multipliers of the data-scaled default
    penalty weight; per cell, the (lambda1, lambda2) combination with the
    lowest entry MSE is recorded. Trials share their RNG stream across the
    K grid so sample-size comparisons are paired.
    """

    n_list: tuple = (50,)
    k_list: tuple = (100,)
    m: int = 3
    trials: int = 5
    methods: tuple = ("cgp-basic",)
    lambda1_grid: tuple = (1.0,)
    lambda2_grid: tuple = (1.0,)
    seed: int = 0
    noise_std: float = 1.0
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for method in self.methods:
            if method not in BENCHMARK_METHODS:
                raise ValueError(f"unknown method {method!r}; expected one of {BENCHMARK_METHODS}")


@dataclass
class MetricsReport:
    entry_mse: float
    prediction_mse_train: float
    prediction_mse_test: float
    p_nnz: float
    precision: float
    recall: float
    f1: float
    runtime_seconds: float


CSV_COLUMNS = (
    "status",
    "method",
    "n",
    "k",
    "trial",
    "lambda1_scale",
    "lambda2_scale",
    "entry_mse",
    "p_nnz",
    "precision",
    "recall",
    "f1",
    "prediction_mse_train",
    "prediction_mse_test",
)


def _estimate_for_method(method: str, x, m: int, config: SolverConfig):
    """Run one estimator; returns (a_hat, predictor)."""
    if method == "cgp-basic":
        res = basic_algorithm(x, m, config)
        return res.a.w, cgp_predictor(res.a, res.c)
    if method == "cgp-extended":
        res = extended_algorithm(x, m, config)
        return res.a.w, cgp_predictor(res.a, res.c)
    if method == "cgp-gradient":
        n = _series(x).shape[0]
        zero_a = AdjacencyMatrix(np.zeros((n, n)))
        zero_c = CoefficientVector.from_free(m, np.zeros(CoefficientVector.length(m) - 2))
        res = extended_refinement(x, zero_a, zero_c, config)
        return res.a.w, cgp_predictor(res.a, res.c)
    if method == "svar":
        res = svar_group_lasso(x, m, lam=config.lambda1, config=config)
        # the lag-1 matrix stands in for "the network" of the SVAR fit
        return np.array(res.mats[0]), svar_predictor(res.mats)
    raise ValueError(f"unknown method {method!r}")


def _cell_metrics(method: str, spec: BenchmarkSpec, n: int, k: int, trial: int) -> dict:
    dataset = generate_dataset(
        n,
        spec.m,
        k,
        seed=np.random.SeedSequence([spec.seed, n, trial]),
        noise_std=spec.noise_std,
    )
    test = generate_dataset(
        n,
        spec.m,
        k,
        seed=np.random.SeedSequence([spec.seed, n, trial, 1]),
        noise_std=spec.noise_std,
    )
    start = time.perf_counter()
    base = spec.config.resolved(dataset.x)
    best = None
    for g1 in spec.lambda1_grid:
        for g2 in spec.lambda2_grid:
            config = replace(base, lambda1=base.lambda1 * g1, lambda2=base.lambda2 * g2)
            a_hat, predictor = _estimate_for_method(method, dataset.x, spec.m, config)
            mse = entry_mse(dataset.a, a_hat)
            if best is None or mse < best[0]:
                sup = support_metrics(dataset.a, a_hat)
                report = MetricsReport(
                    entry_mse=mse,
                    prediction_mse_train=prediction_mse(predictor, dataset.x, spec.m),
                    prediction_mse_test=prediction_mse(predictor, test.x, spec.m),
                    p_nnz=sparsity_pnnz(a_hat),
                    precision=sup["precision"],
                    recall=sup["recall"],
                    f1=sup["f1"],
                    runtime_seconds=0.0,
                )
                best = (mse, g1, g2, report)
    _, g1, g2, report = best
    report.runtime_seconds = time.perf_counter() - start
    return {
        "status": "ok",
        "method": method,
        "n": n,
        "k": k,
        "trial": str(trial),
        "lambda1_scale": g1,
        "lambda2_scale": g2,
        "entry_mse": report.entry_mse,
        "p_nnz": report.p_nnz,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "prediction_mse_train": report.prediction_mse_train,
        "prediction_mse_test": report.prediction_mse_test,
    }


def _run_cell(payload) -> dict:
    spec, method, n, k, trial = payload
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return _cell_metrics(method, spec, n, k, trial)
    except Exception as err:  # cell failures must not kill the sweep
        row = {col: "" for col in CSV_COLUMNS}
        row.update(
            status="failed", method=method, n=n, k=k, trial=str(trial),
        )
        row["error"] = f"{type(err).__name__}: {err}"
        return row


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _cell_key(row) -> tuple:
    return (row["method"], int(row["n"]), int(row["k"]), row["trial"])


def _read_table(path) -> dict:
    rows = {}
    if not os.path.exists(path):
        return rows
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            values = line.rstrip("\n").split(",")
            row = dict(zip(header, values))
            if row.get("trial", "") in ("mean", "stderr"):
                continue  # aggregates are recomputed
            rows[_cell_key(row)] = row
    return rows


def _aggregate(cells, spec: BenchmarkSpec):
    metric_cols = CSV_COLUMNS[7:]
    out = []
    for method in spec.methods:
        for n in spec.n_list:
            for k in spec.k_list:
                group = [
                    c
                    for c in cells
                    if c["method"] == method
                    and int(c["n"]) == n
                    and int(c["k"]) == k
                    and c["status"] == "ok"
                ]
                if not group:
                    continue
                for stat in ("mean", "stderr"):
                    row = {col: "" for col in CSV_COLUMNS}
                    row.update(status="aggregate", method=method, n=n, k=k, trial=stat)
                    for col in metric_cols:
                        vals = np.array([float(c[col]) for c in group])
                        if stat == "mean":
                            row[col] = float(vals.mean())
                        else:
                            row[col] = (
                                float(vals.std(ddof=1) / np.sqrt(len(vals)))
                                if len(vals) > 1
                                else 0.0
                            )
                    out.append(row)
    return out


def run_benchmark(spec: BenchmarkSpec, output_path=None, workers: int | None = None):
    """Run every (method, n, k, trial) cell and aggregate mean/stderr rows.

    Cells already present in the output file are skipped (the sweep is
    resumable); failed cells are logged to stderr and marked in the table.
    The table is rewritten in canonical order, so identical spec + seed
    give byte-identical files. Worker count defaults to the CGPNET_THREADS
    environment variable (1 if unset).
    """
    if workers is None:
        workers = int(os.environ.get("CGPNET_THREADS", "1"))
    workers = max(1, workers)

    done = _read_table(output_path) if output_path else {}
    pending = []
    for method in spec.methods:
        for n in spec.n_list:
            for k in spec.k_list:
                for trial in range(spec.trials):
                    key = (method, n, k, str(trial))
                    if key not in done:
                        pending.append((spec, method, n, k, trial))

    results = dict(done)
    if pending:
        print(
            f"benchmark: {len(pending)} cells to run ({len(done)} already present)",
            file=sys.stderr,
        )
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_run_cell, pending):
                results[_cell_key(row)] = row
                _log_cell(row)
    else:
        for payload in pending:
            row = _run_cell(payload)
            results[_cell_key(row)] = row
            _log_cell(row)

    cells = []
    for method in spec.methods:
        for n in spec.n_list:
            for k in spec.k_list:
                for trial in range(spec.trials):
                    row = results.get((method, n, k, str(trial)))
                    if row is not None:
                        cells.append(row)
    rows = cells + _aggregate(cells, spec)
    if output_path:
        with open(output_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row.get(col, "")) for col in CSV_COLUMNS) + "\n")
    return rows


def _log_cell(row) -> None:
    if row["status"] == "ok":
        print(
            f"benchmark cell {row['method']} n={row['n']} k={row['k']} "
            f"trial={row['trial']}: entry_mse={_fmt(row['entry_mse'])}",
            file=sys.stderr,
        )
    else:
        print(
            f"benchmark cell {row['method']} n={row['n']} k={row['k']} "
            f"trial={row['trial']} FAILED: {row.get('error', 'unknown error')}",
            file=sys.stderr,
        )
