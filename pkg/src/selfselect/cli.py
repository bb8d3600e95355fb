"""``selfselect <mode> --config <path> [--out <dir>] [--seed <n>]``.

Exit codes: 0 success, 2 configuration or validation error, 3 file error,
4 estimator error.  On failure one JSON line ``{"error": category,
"message": ...}`` goes to standard error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import warnings

import numpy as np

from . import io
from .config import MODES, ExperimentConfig, load_config
from .errors import ConfigError, SelfSelectError
from .grid import grid_estimate
from .k2 import k2_estimate
from .known_index import PSGDConfig, psgd_estimate
from .report import EstimationReport
from .rules import SelectionRule
from .synthetic import (KnownIndexDataset, UnknownIndexDataset, random_weights, sample_known_index,
                        sample_unknown_index, substream, validate_weights)


def _weights(cfg: ExperimentConfig) -> np.ndarray:
    m = cfg.model
    if m.weights == "random":
        return random_weights(m.d, m.k, m.weight_norms, seed=cfg.seed, orthogonal=m.orthogonal)
    W = io.read_weights_csv(cfg.resolve(m.weights))
    if W.shape != (m.d, m.k):
        raise ConfigError(f"weights file is {W.shape[0]} x {W.shape[1]}, config says {m.d} x {m.k}")
    return validate_weights(W, m.B)


def _truth(cfg: ExperimentConfig):
    """Ground truth for error reporting: only when a weights file is named."""
    if cfg.model.weights == "random":
        return None
    return _weights(cfg)


def _covariates(cfg: ExperimentConfig):
    cov = cfg.data.covariates
    return cov if cov == "gaussian" else io.read_design_csv(cfg.resolve(cov))


def _generate_known(cfg: ExperimentConfig, W) -> KnownIndexDataset:
    cov = _covariates(cfg)
    n = cfg.data.n if isinstance(cov, str) else None
    return sample_known_index(W, cfg.model.sigma, cfg.model.selection_rule(), cov, n, cfg.seed)


def _known_data(cfg: ExperimentConfig):
    if cfg.data.path:
        return io.read_known_csv(cfg.resolve(cfg.data.path), cfg.model.sigma, cfg.model.k), _truth(cfg)
    W = _weights(cfg)
    return _generate_known(cfg, W), W


def _unknown_data(cfg: ExperimentConfig):
    if cfg.data.path:
        return io.read_unknown_csv(cfg.resolve(cfg.data.path)), _truth(cfg)
    W = _weights(cfg)
    return sample_unknown_index(W, cfg.data.n, cfg.seed), W


def _write_report(out: str, name: str, report: EstimationReport) -> str:
    path = os.path.join(out, name)
    try:
        with open(path, "w") as fh:
            fh.write(report.to_json() + "\n")
    except OSError as exc:
        from .errors import DataIOError
        raise DataIOError(f"cannot write {path}: {exc}") from exc
    return path


def run_generate(cfg: ExperimentConfig, out: str) -> dict:
    W = _weights(cfg)
    io.write_weights_csv(os.path.join(out, "weights.csv"), W)
    path = os.path.join(out, "dataset.csv")
    if cfg.data.setting == "known":
        ds = _generate_known(cfg, W)
        io.write_known_csv(path, ds)
        freq = np.bincount(ds.jstar, minlength=ds.k) / ds.n
        summary = {"setting": "known", "n": ds.n, "d": ds.d, "k": ds.k, "winner_frequencies": freq.tolist(),
                   "thickness": ds.thickness()}
    else:
        ds = sample_unknown_index(W, cfg.data.n, cfg.seed)
        io.write_unknown_csv(path, ds)
        summary = {"setting": "unknown", "n": ds.n, "d": ds.d, "k": cfg.model.k}
    summary.update(dataset=path, weights=os.path.join(out, "weights.csv"), seed=cfg.seed)
    print(f"wrote {summary['n']} records to {path}")
    return summary


def run_estimate_known(cfg: ExperimentConfig, out: str) -> dict:
    ds, truth = _known_data(cfg)
    report = psgd_estimate(ds, cfg.model.selection_rule(), cfg.psgd(ds.n), truth)
    print(report.summary())
    return {"report": _write_report(out, "report.json", report)}


def run_estimate_grid(cfg: ExperimentConfig, out: str) -> dict:
    ds, truth = _unknown_data(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = grid_estimate(ds, cfg.model.k, dataclasses.replace(cfg.grid, seed=cfg.seed), truth)
    res.report.diagnostics["warnings"] = [str(w.message) for w in caught]
    cand = os.path.join(out, "candidates.csv")
    res.write_candidates(cand)
    print(res.report.summary())
    return {"report": _write_report(out, "report.json", res.report), "candidates": cand}


def run_estimate_k2(cfg: ExperimentConfig, out: str) -> dict:
    if cfg.model.k != 2:
        raise ConfigError("estimate-unknown-k2 needs k = 2")
    ds, truth = _unknown_data(cfg)
    k = cfg.k2
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = k2_estimate(ds, None, k.eps, k.delta, k.B, k.exclusion, k.fail_prob, truth=truth)
    res.report.diagnostics["warnings"] = [str(w.message) for w in caught]
    surf = os.path.join(out, "k2_surface.csv")
    res.first.write_csv(surf)
    print(res.report.summary())
    return {"report": _write_report(out, "report.json", res.report), "surface": surf}


BENCHMARK_WEIGHTS = np.array([[1.0, -1.0]])


def run_benchmark(cfg: ExperimentConfig, out: str) -> dict:
    """Known-index PSGD against naive OLS on the one-dimensional two-model recipe:
    ``w = (1, -1)``, ``sigma = 1``, arg-max selection, ``x ~ N(covariate_mean, 1)``."""
    b = cfg.benchmark
    rule = SelectionRule.argmax(2)
    rows = []
    for s in range(b.seeds):
        seed = cfg.seed + s
        X = substream(seed, "covariates").standard_normal((b.n, 1)) + b.covariate_mean
        ds = sample_known_index(BENCHMARK_WEIGHTS, 1.0, rule, X, seed=seed)
        psgd_cfg = PSGDConfig(T=b.T, lam=cfg.psgd_lambda, B=cfg.psgd_B or cfg.model.B or 2.0,
                              langevin=cfg.langevin, seed=seed)
        rep = psgd_estimate(ds, rule, psgd_cfg, BENCHMARK_WEIGHTS)
        rows.append(("psgd", seed, float(np.linalg.norm(rep.W_hat - BENCHMARK_WEIGHTS))))
        rows.append(("naive", seed, float(np.linalg.norm(rep.naive - BENCHMARK_WEIGHTS))))
        print(f"seed {seed}: psgd {rows[-2][2]:.4f}  naive {rows[-1][2]:.4f}")
    path = os.path.join(out, "benchmark.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "seed", "error"])
        for method, seed, err in rows:
            w.writerow([method, seed, f"{err:.17g}"])
    med = {m: float(np.median([e for mm, _, e in rows if mm == m])) for m in ("psgd", "naive")}
    summary = {"csv": path, "median_error": med, "psgd_beats_naive": med["psgd"] < med["naive"],
               "covariate_mean": b.covariate_mean, "n": b.n, "T": b.T, "seeds": b.seeds}
    print(f"median error: psgd {med['psgd']:.4f}, naive {med['naive']:.4f}")
    with open(os.path.join(out, "benchmark_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


RUNNERS = {
    "generate": run_generate,
    "estimate-known": run_estimate_known,
    "estimate-unknown-grid": run_estimate_grid,
    "estimate-unknown-k2": run_estimate_k2,
    "benchmark": run_benchmark,
}


def run(mode: str, config_path, out=None, seed=None) -> int:
    """Run one mode; returns the process exit code."""
    try:
        cfg = load_config(config_path)
        if cfg.mode is not None and cfg.mode != mode:
            raise ConfigError(f"config is for mode {cfg.mode!r}, not {mode!r}")
        if seed is not None:
            cfg.seed = int(seed)
        out_dir = out if out is not None else cfg.resolve(cfg.out)
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            from .errors import DataIOError
            raise DataIOError(f"cannot create {out_dir}: {exc}") from exc
        RUNNERS[mode](cfg, out_dir)
        return 0
    except SelfSelectError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="selfselect", description="Linear regression under self-selection.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="INI experiment configuration")
    parser.add_argument("--out", help="output directory (overrides [experiment] out)")
    parser.add_argument("--seed", type=int, help="top-level seed (overrides [experiment] seed)")
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be nonnegative")
    return run(args.mode, args.config, args.out, args.seed)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
