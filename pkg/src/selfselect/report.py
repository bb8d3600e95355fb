"""Estimation reports and their JSON form.

Weights are stored as lists of columns.  Column and winner indices in the
serialized report are 1-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .matching import match_columns


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class EstimationReport:
    method: str
    W_hat: np.ndarray
    truth: Optional[np.ndarray] = None
    naive: Optional[np.ndarray] = None
    diagnostics: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0

    def errors(self) -> Optional[np.ndarray]:
        if self.truth is None:
            return None
        return match_columns(self.W_hat, self.truth).errors

    def naive_errors(self) -> Optional[np.ndarray]:
        if self.truth is None or self.naive is None:
            return None
        return match_columns(self.naive, self.truth).errors

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "d": int(self.W_hat.shape[0]),
            "k": int(self.W_hat.shape[1]),
            "estimate": self.W_hat.T,
        }
        if self.truth is not None:
            m = match_columns(self.W_hat, self.truth)
            out["truth"] = self.truth.T
            out["matching"] = [int(p) + 1 if p >= 0 else None for p in m.perm]
            out["errors"] = m.errors
        if self.naive is not None:
            out["naive_estimate"] = self.naive.T
            if self.truth is not None:
                out["naive_errors"] = match_columns(self.naive, self.truth).errors
        out["diagnostics"] = self.diagnostics
        out["wall_time"] = self.wall_time
        return _plain(out)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def summary(self) -> str:
        lines = [f"method: {self.method}  (d={self.W_hat.shape[0]}, k={self.W_hat.shape[1]})"]
        for j, col in enumerate(self.W_hat.T):
            lines.append(f"  w{j + 1} = [" + ", ".join(f"{v:+.4f}" for v in col) + "]")
        errs = self.errors()
        if errs is not None:
            lines.append("  matched errors: " + ", ".join(f"{e:.4f}" for e in errs))
        nerrs = self.naive_errors()
        if nerrs is not None:
            lines.append("  naive OLS errors: " + ", ".join(f"{e:.4f}" for e in nerrs))
        lines.append(f"  wall time: {self.wall_time:.2f}s")
        return "\n".join(lines)
