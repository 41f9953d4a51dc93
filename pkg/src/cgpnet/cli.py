"""Command-line front end: simulate | estimate | evaluate | detrend | benchmark.

stdout carries a single machine-readable JSON summary per command; human
progress goes to stderr. All numeric file output is written with 17
significant digits so re-ingestion is lossless, and every artifact is a
pure function of the flags and the seed (byte-identical reruns).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import baselines, datagen, evaluation, model, solver

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_NOT_CONVERGED = 2

CGP_METHODS = ("cgp-basic", "cgp-extended")
METHODS = CGP_METHODS + ("svar", "distance")


def _write_matrix(path, mat) -> None:
    np.savetxt(path, np.asarray(mat, dtype=float), fmt="%.17g", delimiter=",")


def _read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _write_series(path, data) -> None:
    data = np.asarray(data, dtype=float)
    header = ",".join(f"t{j}" for j in range(data.shape[1]))
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def _read_series(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (2**32))
    print(f"no --seed given; drew seed {seed} from system entropy", file=sys.stderr)
    return seed


def _solver_config(args) -> solver.SolverConfig:
    return solver.SolverConfig(
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        lambda3=args.lambda3,
        max_sweeps=args.max_sweeps,
        tol_rel=args.tol,
        seed=args.seed,
        a_method=args.a_method,
        c_method=args.c_method,
    )


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    os.makedirs(args.output, exist_ok=True)
    dataset = datagen.generate_dataset(
        args.n, args.m, args.k, seed=seed, noise_std=args.noise_std, burn_in=args.burn_in
    )
    x_path = os.path.join(args.output, "X.csv")
    a_path = os.path.join(args.output, "A_true.csv")
    c_path = os.path.join(args.output, "c_true.json")
    meta_path = os.path.join(args.output, "meta.json")
    _write_series(x_path, dataset.x.data)
    _write_matrix(a_path, dataset.a.w)
    _write_json(c_path, {"m": dataset.c.m, "values": list(dataset.c.values)})
    _write_json(
        meta_path,
        {
            "command": "simulate",
            "seed": seed,
            "n": args.n,
            "k": args.k,
            "m": args.m,
            "noise_std": args.noise_std,
            "burn_in": args.burn_in,
            "graph_spec": {
                "threshold_lo": 1.6,
                "threshold_hi": 1.8,
                "diag_lo": -1.0,
                "diag_hi": -0.5,
            },
        },
    )
    _emit({"command": "simulate", "seed": seed, "files": [x_path, a_path, c_path, meta_path]})
    return EXIT_OK


def _config_echo(cfg: solver.SolverConfig) -> dict:
    return {
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "lambda3": cfg.lambda3,
        "max_sweeps": cfg.max_sweeps,
        "max_inner_iter": cfg.max_inner_iter,
        "tol_rel": cfg.tol_rel,
        "a_method": cfg.a_method,
        "c_method": cfg.c_method,
    }


def cmd_estimate(args) -> int:
    data = _read_series(args.input)
    x = model.TimeSeriesMatrix(data)
    os.makedirs(args.output, exist_ok=True)
    result_path = os.path.join(args.output, "result.json")
    result = {"command": "estimate", "method": args.method, "m": args.m, "input": args.input}
    converged = True

    if args.method in CGP_METHODS:
        cfg = _solver_config(args).resolved(x)
        run = (
            solver.basic_algorithm(x, args.m, cfg)
            if args.method == "cgp-basic"
            else solver.extended_algorithm(x, args.m, cfg)
        )
        converged = bool(run.converged)
        _write_matrix(os.path.join(args.output, "A_hat.csv"), run.a.w)
        _write_json(
            os.path.join(args.output, "c_hat.json"),
            {"method": args.method, "m": run.c.m, "values": list(run.c.values)},
        )
        result.update(
            converged=converged,
            sweeps_used=run.sweeps_used,
            objective_trace=list(map(float, run.objective_trace)),
            config=_config_echo(cfg),
        )
    elif args.method == "svar":
        cfg = _solver_config(args).resolved(x)
        run = baselines.svar_group_lasso(x, args.m, lam=cfg.lambda1, config=cfg)
        converged = bool(run.converged)
        _write_json(
            os.path.join(args.output, "svar_mats.json"),
            {
                "method": "svar",
                "m": args.m,
                "mats": [m_.tolist() for m_ in run.mats],
                "support": run.support.tolist(),
            },
        )
        result.update(
            converged=converged,
            sweeps_used=len(run.objective_trace) - 1,
            objective_trace=list(map(float, run.objective_trace)),
            config=_config_echo(cfg),
        )
    elif args.method == "distance":
        if not args.dist:
            raise ValueError("--dist is required for the distance method")
        graph = baselines.distance_adjacency(_read_matrix(args.dist), k_nn=args.knn)
        lam = args.lambda3 if args.lambda3 is not None else args.lambda1
        coeffs = baselines.fit_distance_graph(x, graph, args.m, degree=args.degree, lam=lam)
        _write_matrix(os.path.join(args.output, "A_hat.csv"), graph.adj)
        _write_json(
            os.path.join(args.output, "c_hat.json"),
            {
                "method": "distance",
                "m": args.m,
                "degree": coeffs.shape[1] - 1,
                "k_nn": args.knn,
                "coeffs": coeffs.tolist(),
            },
        )
        result.update(converged=True, config={"lambda": lam, "k_nn": args.knn})
    else:
        raise ValueError(f"unknown method {args.method!r}")

    _write_json(result_path, result)
    _emit({"command": "estimate", "method": args.method, "converged": converged, "output": args.output})
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _load_predictor(args):
    """Build (predictor, m, a_hat) from whatever model files were produced."""
    if args.svar_mats:
        blob = _read_json(args.svar_mats)
        mats = [np.asarray(m_, dtype=float) for m_ in blob["mats"]]
        return baselines.svar_predictor(mats), blob["m"], mats[0]
    if not args.c_hat:
        if args.a_hat:
            return None, args.m, _read_matrix(args.a_hat)
        return None, args.m, None
    blob = _read_json(args.c_hat)
    a_hat = _read_matrix(args.a_hat) if args.a_hat else None
    if blob.get("method") == "distance":
        if a_hat is None:
            raise ValueError("--a-hat (the distance adjacency) is required")
        graph = baselines.DistanceGraph(
            dist=np.zeros_like(a_hat), k_nn=blob.get("k_nn", 8), adj=a_hat
        )
        return (
            baselines.distance_predictor(graph, np.asarray(blob["coeffs"])),
            blob["m"],
            a_hat,
        )
    if a_hat is None:
        raise ValueError("--a-hat is required alongside --c-hat")
    c = solver.CoefficientVector(blob["m"], np.asarray(blob["values"]))
    return model.cgp_predictor(model.AdjacencyMatrix(a_hat), c), blob["m"], a_hat


def cmd_evaluate(args) -> int:
    data = _read_series(args.input)
    predictor, m, a_hat = _load_predictor(args)
    metrics: dict = {"command": "evaluate", "input": args.input, "m": m}

    if predictor is not None:
        if args.split == "even-odd":
            train, test = evaluation.even_odd_split(data, swap=args.swap_split)
            metrics["prediction_mse_train"] = evaluation.prediction_mse(predictor, train, m)
            metrics["prediction_mse_test"] = evaluation.prediction_mse(predictor, test, m)
        else:
            full = evaluation.prediction_mse(predictor, data, m)
            metrics["prediction_mse_train"] = full
            metrics["prediction_mse_test"] = full

    if a_hat is not None:
        metrics["p_nnz"] = evaluation.sparsity_pnnz(a_hat, eps=args.eps)
        if args.a_true:
            a_true = _read_matrix(args.a_true)
            metrics["entry_mse"] = evaluation.entry_mse(a_true, a_hat)
            metrics.update(evaluation.support_metrics(a_true, a_hat, eps=args.eps))

    out_path = os.path.join(args.output, "metrics.json")
    os.makedirs(args.output, exist_ok=True)
    _write_json(out_path, metrics)
    _emit({"command": "evaluate", "metrics": out_path})
    return EXIT_OK


def cmd_detrend(args) -> int:
    data = _read_series(args.input)
    detrended = evaluation.highpass_detrend(
        evaluation.linear_detrend(data), args.cutoff_period
    )
    os.makedirs(args.output, exist_ok=True)
    out_path = os.path.join(args.output, "X_detrended.csv")
    _write_series(out_path, detrended)
    _emit({"command": "detrend", "output": out_path})
    return EXIT_OK


def cmd_benchmark(args) -> int:
    blob = _read_json(args.config)
    spec = evaluation.BenchmarkSpec(
        n_list=tuple(blob.get("n_list", [50])),
        k_list=tuple(blob.get("k_list", [100])),
        m=blob.get("m", 3),
        trials=blob.get("trials", 5),
        methods=tuple(blob.get("methods", ["cgp-basic"])),
        lambda1_grid=tuple(blob.get("lambda1_grid", [1.0])),
        lambda2_grid=tuple(blob.get("lambda2_grid", [1.0])),
        seed=blob.get("seed", 0),
        noise_std=blob.get("noise_std", 1.0),
    )
    os.makedirs(args.output, exist_ok=True)
    out_path = os.path.join(args.output, "benchmark.csv")
    rows = evaluation.run_benchmark(spec, output_path=out_path)
    _emit({"command": "benchmark", "rows": len(rows), "output": out_path})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgpnet",
        description="Estimate a directed graph and filter coefficients from multivariate time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", default=".", help="output directory")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--burn-in", type=int, default=200)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit a model to X.csv")
    common(p)
    p.add_argument("--input", required=True, help="X.csv path")
    p.add_argument("--method", choices=METHODS, default="cgp-extended")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--lambda3", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-sweeps", type=int, default=50)
    p.add_argument("--a-method", choices=("r1", "commutator"), default="r1")
    p.add_argument("--c-method", choices=("data", "stack"), default="data")
    p.add_argument("--dist", default=None, help="distance matrix CSV (distance method)")
    p.add_argument("--knn", type=int, default=8)
    p.add_argument("--degree", type=int, default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="score an estimate against data and optional truth")
    common(p)
    p.add_argument("--input", required=True, help="X.csv path")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--a-hat", default=None)
    p.add_argument("--c-hat", default=None)
    p.add_argument("--svar-mats", default=None)
    p.add_argument("--a-true", default=None)
    p.add_argument("--split", choices=("none", "even-odd"), default="none")
    p.add_argument("--swap-split", action="store_true")
    p.add_argument("--eps", type=float, default=1e-6)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("detrend", help="linear + ideal high-pass detrending")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--cutoff-period", type=float, default=365.0)
    p.set_defaults(func=cmd_detrend)

    p = sub.add_parser("benchmark", help="run a benchmark spec (JSON config)")
    common(p)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USER_ERROR


if __name__ == "__main__":
    sys.exit(main())
