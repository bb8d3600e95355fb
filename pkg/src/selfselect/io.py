"""CSV persistence for datasets and weight matrices.

Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly.  Winner indices are 1-based on disk.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import DataIOError
from .synthetic import KnownIndexDataset, UnknownIndexDataset

FLOAT_FMT = "%.17g"


def _header(path) -> list[str]:
    try:
        with open(path) as fh:
            line = fh.readline()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    if not line.strip():
        raise DataIOError(f"{path} is empty")
    return [h.strip() for h in line.strip().split(",")]


def _load(path, ncols: int) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise DataIOError(f"cannot parse {path}: {exc}") from exc
    if data.size == 0:
        data = data.reshape(0, ncols)
    if data.shape[1] != ncols:
        raise DataIOError(f"{path}: expected {ncols} columns, found {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        raise DataIOError(f"{path}: non-finite values")
    return data


def _save(path, header: list[str], data: np.ndarray, fmt) -> None:
    parent = os.path.dirname(os.fspath(path))
    try:
        if parent:
            os.makedirs(parent, exist_ok=True)
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=fmt)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def _covariate_names(d: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d)]


def write_known_csv(path, dataset: KnownIndexDataset) -> None:
    d = dataset.d
    data = np.column_stack([dataset.X, dataset.y, dataset.jstar + 1])
    _save(path, _covariate_names(d) + ["y", "jstar"], data, [FLOAT_FMT] * (d + 1) + ["%d"])


def read_known_csv(path, sigma: float, k: int | None = None) -> KnownIndexDataset:
    header = _header(path)
    d = len(header) - 2
    if d < 1 or header != _covariate_names(d) + ["y", "jstar"]:
        raise DataIOError(f"{path}: header must be x1,...,xd,y,jstar")
    data = _load(path, d + 2)
    js = data[:, -1]
    if np.any(js != np.round(js)) or np.any(js < 1):
        raise DataIOError(f"{path}: jstar must be a positive integer")
    jstar = js.astype(np.int64) - 1
    k_seen = int(jstar.max()) + 1 if jstar.size else 1
    k = k_seen if k is None else k
    if k_seen > k:
        raise DataIOError(f"{path}: jstar {k_seen} exceeds k={k}")
    return KnownIndexDataset(np.ascontiguousarray(data[:, :d]), data[:, d].copy(), jstar, k, float(sigma), "fixed")


def write_unknown_csv(path, dataset: UnknownIndexDataset) -> None:
    _save(path, _covariate_names(dataset.d) + ["y"], np.column_stack([dataset.X, dataset.y]), FLOAT_FMT)


def read_unknown_csv(path) -> UnknownIndexDataset:
    header = _header(path)
    d = len(header) - 1
    if d < 1 or header != _covariate_names(d) + ["y"]:
        raise DataIOError(f"{path}: header must be x1,...,xd,y")
    data = _load(path, d + 1)
    return UnknownIndexDataset(np.ascontiguousarray(data[:, :d]), data[:, d].copy())


def write_weights_csv(path, W) -> None:
    """One column per model (``w1..wk``), one row per coordinate."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    _save(path, [f"w{j + 1}" for j in range(W.shape[1])], W, FLOAT_FMT)


def read_weights_csv(path) -> np.ndarray:
    header = _header(path)
    k = len(header)
    if header != [f"w{j + 1}" for j in range(k)]:
        raise DataIOError(f"{path}: header must be w1,...,wk")
    W = _load(path, k)
    if W.shape[0] < 1:
        raise DataIOError(f"{path}: no rows")
    return W


def write_design_csv(path, X) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _save(path, _covariate_names(X.shape[1]), X, FLOAT_FMT)


def read_design_csv(path) -> np.ndarray:
    header = _header(path)
    d = len(header)
    if header != _covariate_names(d):
        raise DataIOError(f"{path}: header must be x1,...,xd")
    return _load(path, d)
