"""Run configuration: a JSON file describing experiments.

Schema (see README for the full reference):

    {
      "seed": 1,                      optional, default 0; overridden by --seed
      "workers": 2,                   optional
      "output_dir": "runs/demo",      optional; overridden by --out
      "experiments": [
        {
          "name": "thm-n5",
          "ensemble": {
            "n": 5,
            "diagonal": {"kind": "uniform", "a": 0, "c": 1},   or a list of n records
            "offdiag": {"policy": "constant", "value": 1.0},
            "shift": [[...], ...] | {"path": "shift.csv"} | null
          },
          "functional": "det_root_n",
          "t_grid": {"min": 1e-3, "max": 1e-1, "points": 16, "log": true},
          "samples": 100000,
          "confidence": 0.99,
          "curves": ["det"],          empty list = estimate only
          "expected_norm": 3.2,       optional plug-in for sn curves
          "beta": 10.0,               required by the sn_raw curve
          "expected_norm_samples": 10000,
          "seed": 7                   optional per-experiment override
        }
      ]
    }

Validation failures raise :class:`ConfigError` whose message starts with the
offending field path, e.g. ``experiments[0].ensemble.diagonal.kind``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import VERIFIABLE_CURVES
from .distributions import from_record
from .ensembles import EnsembleSpec, policy_from_record
from .mc_engine import FUNCTIONALS, Experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunConfig", "load_config", "make_t_grid"]

DEFAULT_SEED = 0


class ConfigError(ValueError):
    """Invalid configuration; message starts with the offending field path."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    experiment: Experiment
    curves: tuple[str, ...]
    expected_norm: float | None
    beta: float | None
    expected_norm_samples: int


@dataclass(frozen=True)
class RunConfig:
    experiments: tuple[ExperimentConfig, ...]
    output_dir: str | None
    seed: int
    workers: int | None


def _get(mapping, key, path, kinds, required=True, default=None):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected a mapping")
    if key not in mapping:
        if required:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    value = mapping[key]
    if kinds is not None and not isinstance(value, kinds):
        names = kinds.__name__ if isinstance(kinds, type) else "/".join(k.__name__ for k in kinds)
        raise ConfigError(f"{path}.{key}: expected {names}, got {type(value).__name__}")
    return value


def _law(record, path):
    try:
        return from_record(record)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _shift(record, path, base_dir, n):
    if record is None:
        return None
    if isinstance(record, dict):
        rel = _get(record, "path", path, str)
        file_path = Path(base_dir) / rel
        if not file_path.exists():
            raise ConfigError(f"{path}.path: file not found: {file_path}")
        try:
            matrix = np.loadtxt(file_path, delimiter=",", ndmin=2)
        except Exception as exc:  # malformed CSV
            raise ConfigError(f"{path}.path: cannot read matrix CSV: {exc}") from exc
    elif isinstance(record, list):
        try:
            matrix = np.asarray(record, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: not a numeric matrix: {exc}") from exc
    else:
        raise ConfigError(f"{path}: expected a matrix, a {{'path': ...}} record, or null")
    if matrix.shape != (n, n):
        raise ConfigError(f"{path}: shift must be {n}x{n}, got {matrix.shape}")
    return matrix


def make_t_grid(record, path="t_grid") -> tuple[float, ...]:
    lo = float(_get(record, "min", path, (int, float)))
    hi = float(_get(record, "max", path, (int, float)))
    points = _get(record, "points", path, int)
    log = _get(record, "log", path, bool, required=False, default=True)
    if not 0.0 < lo <= 1.0 or not 0.0 < hi <= 1.0:
        raise ConfigError(f"{path}: thresholds must lie in (0, 1], got [{lo}, {hi}]")
    if hi <= lo:
        raise ConfigError(f"{path}: need min < max, got [{lo}, {hi}]")
    if points < 2:
        raise ConfigError(f"{path}.points: need at least 2, got {points}")
    if log:
        grid = np.logspace(math.log10(lo), math.log10(hi), points)
    else:
        grid = np.linspace(lo, hi, points)
    # endpoints exactly as configured regardless of rounding in the spacing
    grid[0], grid[-1] = lo, hi
    return tuple(float(t) for t in grid)


def _ensemble(record, path, base_dir) -> EnsembleSpec:
    n = _get(record, "n", path, int)
    if n < 1:
        raise ConfigError(f"{path}.n: must be a positive integer, got {n}")
    diagonal = _get(record, "diagonal", path, (dict, list))
    if isinstance(diagonal, dict):
        laws = (_law(diagonal, f"{path}.diagonal"),) * n
    else:
        if len(diagonal) != n:
            raise ConfigError(f"{path}.diagonal: need {n} laws, got {len(diagonal)}")
        laws = tuple(_law(rec, f"{path}.diagonal[{i}]") for i, rec in enumerate(diagonal))
    offdiag_record = _get(record, "offdiag", path, dict, required=False, default={"policy": "zero"})
    try:
        offdiag = policy_from_record(
            offdiag_record, lambda rec: _law(rec, f"{path}.offdiag.law")
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}.offdiag: {exc}") from exc
    shift = _shift(record.get("shift"), f"{path}.shift", base_dir, n)
    try:
        return EnsembleSpec(n=n, diagonal_laws=laws, offdiag=offdiag, shift=shift)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _experiment(record, index, base_dir, default_seed) -> ExperimentConfig:
    path = f"experiments[{index}]"
    name = _get(record, "name", path, str, required=False, default=f"experiment_{index}")
    ensemble = _ensemble(_get(record, "ensemble", path, dict), f"{path}.ensemble", base_dir)
    functional = _get(record, "functional", path, str, required=False, default="det_root_n")
    if functional not in FUNCTIONALS:
        raise ConfigError(
            f"{path}.functional: unknown functional {functional!r} "
            f"(choose from {', '.join(FUNCTIONALS)})"
        )
    t_grid = make_t_grid(_get(record, "t_grid", path, dict), f"{path}.t_grid")
    samples = _get(record, "samples", path, int)
    if samples < 1:
        raise ConfigError(f"{path}.samples: must be positive, got {samples}")
    confidence = float(_get(record, "confidence", path, (int, float), required=False, default=0.99))
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"{path}.confidence: must lie in (0, 1), got {confidence}")
    seed = _get(record, "seed", path, int, required=False, default=default_seed)
    curves = _get(record, "curves", path, list, required=False, default=[])
    for j, curve in enumerate(curves):
        if curve not in VERIFIABLE_CURVES:
            raise ConfigError(
                f"{path}.curves[{j}]: unknown curve {curve!r} "
                f"(choose from {', '.join(VERIFIABLE_CURVES)})"
            )
    expected_norm = _get(record, "expected_norm", path, (int, float), required=False)
    beta = _get(record, "beta", path, (int, float), required=False)
    if "sn_raw" in curves and beta is None:
        raise ConfigError(f"{path}.beta: required by curve 'sn_raw'")
    expected_norm_samples = _get(
        record, "expected_norm_samples", path, int, required=False, default=10000
    )
    try:
        experiment = Experiment(
            ensemble=ensemble,
            functional=functional,
            t_grid=t_grid,
            samples=samples,
            master_seed=seed,
            confidence=confidence,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig(
        name=name,
        experiment=experiment,
        curves=tuple(curves),
        expected_norm=None if expected_norm is None else float(expected_norm),
        beta=None if beta is None else float(beta),
        expected_norm_samples=expected_norm_samples,
    )


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    seed = _get(raw, "seed", "config", int, required=False, default=DEFAULT_SEED)
    workers = _get(raw, "workers", "config", int, required=False)
    output_dir = _get(raw, "output_dir", "config", str, required=False)
    experiments_raw = _get(raw, "experiments", "config", list)
    if not experiments_raw:
        raise ConfigError("config.experiments: must contain at least one experiment")
    base_dir = path.parent
    experiments = tuple(
        _experiment(record, index, base_dir, seed) for index, record in enumerate(experiments_raw)
    )
    names = [e.name for e in experiments]
    if len(set(names)) != len(names):
        raise ConfigError("config.experiments: experiment names must be unique")
    return RunConfig(experiments=experiments, output_dir=output_dir, seed=seed, workers=workers)
