"""INI experiment configuration.

Sections and keys (all optional unless a mode needs them)::

    [experiment]  seed, out
    [model]       d, k, sigma, rule, B, delta, weights (random | path),
                  weight_norms (comma list), orthogonal
    [data]        setting (known | unknown), n, covariates (gaussian | path), path
    [langevin]    m, gamma, R
    [psgd]        T, lambda, B
    [grid]        l, rho, gamma_net, q, delta, B, neighborhood, dedup_radius, sign_rule
    [k2]          eps, delta, B, exclusion, fail_prob
    [benchmark]   seeds, n, T, covariate_mean

Relative paths resolve against the directory holding the config file.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError, InvalidInputError
from .grid import GridConfig
from .known_index import PSGDConfig
from .rules import SelectionRule
from .sampler import LangevinConfig

MODES = ("generate", "estimate-known", "estimate-unknown-grid", "estimate-unknown-k2", "benchmark")

_KNOWN_KEYS = {
    "experiment": {"mode", "seed", "out"},
    "model": {"d", "k", "sigma", "rule", "b", "delta", "weights", "weight_norms", "orthogonal"},
    "data": {"setting", "n", "covariates", "path"},
    "langevin": {"m", "gamma", "r"},
    "psgd": {"t", "lambda", "b"},
    "grid": {"l", "rho", "gamma_net", "q", "delta", "b", "neighborhood", "dedup_radius", "sign_rule"},
    "k2": {"eps", "delta", "b", "exclusion", "fail_prob"},
    "benchmark": {"seeds", "n", "t", "covariate_mean"},
}


@dataclass
class ModelSpec:
    d: int = 2
    k: int = 2
    sigma: float = 1.0
    rule: str = "argmax"
    B: Optional[float] = None
    delta: Optional[float] = None
    weights: str = "random"
    weight_norms: tuple = (1.0,)
    orthogonal: bool = False

    def selection_rule(self) -> SelectionRule:
        return SelectionRule.parse(self.rule, self.k)


@dataclass
class DataSpec:
    setting: str = "known"
    n: int = 1000
    covariates: str = "gaussian"
    path: Optional[str] = None


@dataclass
class BenchmarkSpec:
    seeds: int = 10
    n: int = 100_000
    T: int = 50_000
    covariate_mean: float = 0.0


@dataclass
class K2Spec:
    eps: float = 0.2
    delta: float = 1.0
    B: float = 2.0
    exclusion: float = 0.75
    fail_prob: float = 0.1


@dataclass
class ExperimentConfig:
    mode: Optional[str] = None
    seed: int = 0
    out: str = "."
    model: ModelSpec = field(default_factory=ModelSpec)
    data: DataSpec = field(default_factory=DataSpec)
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    psgd_T: Optional[int] = None
    psgd_lambda: Optional[float] = None
    psgd_B: Optional[float] = None
    grid: GridConfig = field(default_factory=GridConfig)
    k2: K2Spec = field(default_factory=K2Spec)
    benchmark: BenchmarkSpec = field(default_factory=BenchmarkSpec)
    base_dir: str = "."

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def psgd(self, n: int) -> PSGDConfig:
        T = self.psgd_T if self.psgd_T is not None else n // 2
        return PSGDConfig(T=T, lam=self.psgd_lambda, B=self.psgd_B if self.psgd_B is not None else self.model.B,
                          langevin=self.langevin, seed=self.seed)


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "" or raw.lower() == "none":
        return None
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(raw: str) -> int:
    value = float(raw)
    if value != int(value):
        raise ValueError("expected an integer")
    return int(value)


def _floats(raw: str) -> tuple:
    return tuple(float(v) for v in raw.split(","))


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(cp.options(section)) - _KNOWN_KEYS[section]
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")

    try:
        mode = _get(cp, "experiment", "mode", str, None)
        if mode is not None and mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        model = ModelSpec(
            d=_get(cp, "model", "d", _int, 2), k=_get(cp, "model", "k", _int, 2),
            sigma=_get(cp, "model", "sigma", float, 1.0), rule=_get(cp, "model", "rule", str, "argmax"),
            B=_get(cp, "model", "b", float, None), delta=_get(cp, "model", "delta", float, None),
            weights=_get(cp, "model", "weights", str, "random"),
            weight_norms=_get(cp, "model", "weight_norms", _floats, (1.0,)),
            orthogonal=_get(cp, "model", "orthogonal", _bool, False),
        )
        if model.d < 1 or model.k < 1:
            raise ConfigError("d and k must be positive")
        if not model.sigma > 0:
            raise ConfigError("sigma must be positive")
        if len(model.weight_norms) not in (1, model.k):
            raise ConfigError("weight_norms needs one value or k values")
        model.selection_rule()
        data = DataSpec(
            setting=_get(cp, "data", "setting", str, "known"), n=_get(cp, "data", "n", _int, 1000),
            covariates=_get(cp, "data", "covariates", str, "gaussian"), path=_get(cp, "data", "path", str, None),
        )
        if data.setting not in ("known", "unknown"):
            raise ConfigError("[data] setting must be known or unknown")
        if data.n < 1:
            raise ConfigError("[data] n must be positive")
        langevin = LangevinConfig(m=_get(cp, "langevin", "m", _int, 10_000),
                                  gamma=_get(cp, "langevin", "gamma", float, None),
                                  R=_get(cp, "langevin", "r", float, None))
        grid_delta = _get(cp, "grid", "delta", float, None) or model.delta or 0.5
        grid = GridConfig(
            l=_get(cp, "grid", "l", _int, 6), rho=_get(cp, "grid", "rho", float, 0.3),
            gamma_net=_get(cp, "grid", "gamma_net", float, 0.05), q=_get(cp, "grid", "q", _int, 32),
            delta=grid_delta, B=_get(cp, "grid", "b", float, None) or model.B,
            neighborhood=_get(cp, "grid", "neighborhood", float, None),
            dedup_radius=_get(cp, "grid", "dedup_radius", float, None),
            sign_rule=_get(cp, "grid", "sign_rule", str, "paired"),
        )
        k2 = K2Spec(
            eps=_get(cp, "k2", "eps", float, 0.2),
            delta=_get(cp, "k2", "delta", float, None) or model.delta or 1.0,
            B=_get(cp, "k2", "b", float, None) or model.B or 2.0,
            exclusion=_get(cp, "k2", "exclusion", float, 0.75),
            fail_prob=_get(cp, "k2", "fail_prob", float, 0.1),
        )
        bench = BenchmarkSpec(
            seeds=_get(cp, "benchmark", "seeds", _int, 10), n=_get(cp, "benchmark", "n", _int, 100_000),
            T=_get(cp, "benchmark", "t", _int, 50_000),
            covariate_mean=_get(cp, "benchmark", "covariate_mean", float, 0.0),
        )
        return ExperimentConfig(
            mode=mode, seed=_get(cp, "experiment", "seed", _int, 0), out=_get(cp, "experiment", "out", str, "."),
            model=model, data=data, langevin=langevin,
            psgd_T=_get(cp, "psgd", "t", _int, None), psgd_lambda=_get(cp, "psgd", "lambda", float, None),
            psgd_B=_get(cp, "psgd", "b", float, None),
            grid=grid, k2=k2, benchmark=bench, base_dir=base_dir,
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
