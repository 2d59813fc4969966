"""Monte-Carlo estimation of small-ball probabilities over ensembles, and
domination checks against bound curves with exact binomial intervals.

One shared sample set serves every threshold of an experiment: each matrix is
factorised once and counted against the whole grid, which makes the hit
counts nested (monotone in t) and keeps cross-threshold comparisons tight.
Hit accumulation is an order-independent integer reduction, so worker count
never changes a result.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as _beta_dist

from . import matrix_probes
from .bounds import BoundCurve, make_curve
from .ensembles import EnsembleSpec, derive_seed, sample_matrix_batch

__all__ = [
    "FUNCTIONALS",
    "Experiment",
    "EstimationResult",
    "VerificationRow",
    "VerificationReport",
    "clopper_pearson",
    "run_experiment",
    "estimate_expected_norm",
    "verify_bound",
    "estimates_to_csv",
    "report_to_csv",
]

FUNCTIONALS = ("det_root_n", "s_min", "operator_norm", "permanent_root_n")

DEFAULT_CHUNK = 4096

# below this many hits a point estimate is resolution-limited: resolving it
# properly would need importance sampling, which is out of scope
RESOLUTION_FLOOR_HITS = 10

_NORM_PREPASS_TAG = 0x5E11AB0F


@dataclass(frozen=True)
class Experiment:
    """One estimation run: ensemble x functional x threshold grid."""

    ensemble: EnsembleSpec
    functional: str
    t_grid: tuple[float, ...]
    samples: int
    master_seed: int
    confidence: float = 0.99

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise ValueError(
                f"unknown functional {self.functional!r} (choose from {', '.join(FUNCTIONALS)})"
            )
        grid = tuple(float(t) for t in self.t_grid)
        if not grid:
            raise ValueError("threshold grid must be nonempty")
        if any(not 0.0 <= t <= 1.0 for t in grid):
            raise ValueError("thresholds must lie in [0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("threshold grid must be strictly increasing")
        object.__setattr__(self, "t_grid", grid)
        if self.samples < 1:
            raise ValueError(f"need at least one sample, got {self.samples}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must lie in (0, 1), got {self.confidence}")


@dataclass(frozen=True)
class EstimationResult:
    """Point estimate with exact two-sided binomial interval at one threshold."""

    t: float
    hits: int
    n_samples: int
    p_hat: float
    ci_low: float
    ci_high: float

    @property
    def resolution_limited(self) -> bool:
        return self.hits < RESOLUTION_FLOOR_HITS


def clopper_pearson(hits: int, n: int, confidence: float) -> tuple[float, float]:
    """Exact (conservative) two-sided binomial confidence interval."""
    if not 0 <= hits <= n:
        raise ValueError(f"need 0 <= hits <= n, got hits={hits}, n={n}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    alpha = 1.0 - confidence
    low = 0.0 if hits == 0 else float(_beta_dist.ppf(alpha / 2.0, hits, n - hits + 1))
    high = 1.0 if hits == n else float(_beta_dist.ppf(1.0 - alpha / 2.0, hits + 1, n - hits))
    return low, high


def _chunk_hits(experiment: Experiment, start: int, stop: int) -> np.ndarray:
    """Hit counts per threshold over sample indices [start, stop)."""
    matrices = sample_matrix_batch(experiment.ensemble, experiment.master_seed, start, stop)
    n = experiment.ensemble.n
    grid = np.asarray(experiment.t_grid)
    functional = experiment.functional
    if functional in ("det_root_n", "permanent_root_n"):
        if functional == "det_root_n":
            logs, _ = matrix_probes.log_abs_det_batch(matrices)
        else:
            values = matrix_probes.permanent_batch(matrices)
            with np.errstate(divide="ignore"):
                logs = np.log(np.abs(values))
        # event |det|^(1/n) <= t in log space: avoids underflow for large n,
        # and the -inf sentinel (exact singularity) hits every t > 0
        with np.errstate(divide="ignore"):
            thresholds = n * np.log(grid)
        return np.count_nonzero(logs[:, None] <= thresholds[None, :], axis=0).astype(np.int64)
    spectra = matrix_probes.singular_values_batch(matrices)
    values = spectra[:, -1] if functional == "s_min" else spectra[:, 0]
    return np.count_nonzero(values[:, None] <= grid[None, :], axis=0).astype(np.int64)


def _chunk_hits_task(args) -> np.ndarray:
    return _chunk_hits(*args)


def _spans(total: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk_size, total)) for s in range(0, total, chunk_size)]


def run_experiment(
    experiment: Experiment, *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK
) -> list[EstimationResult]:
    """Estimate P[functional <= t] at every grid threshold over one sample set."""
    if (
        experiment.functional == "permanent_root_n"
        and experiment.ensemble.n > matrix_probes.PERMANENT_CAP
    ):
        raise ValueError(
            f"permanent functional limited to n <= {matrix_probes.PERMANENT_CAP}, "
            f"got n = {experiment.ensemble.n}"
        )
    spans = _spans(experiment.samples, chunk_size)
    if workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = sum(pool.map(_chunk_hits_task, [(experiment, a, b) for a, b in spans]))
    else:
        counts = sum(_chunk_hits(experiment, a, b) for a, b in spans)
    results = []
    for t, hits in zip(experiment.t_grid, counts):
        hits = int(hits)
        low, high = clopper_pearson(hits, experiment.samples, experiment.confidence)
        results.append(
            EstimationResult(
                t=t,
                hits=hits,
                n_samples=experiment.samples,
                p_hat=hits / experiment.samples,
                ci_low=low,
                ci_high=high,
            )
        )
    return results


def _chunk_norm_moments(ensemble: EnsembleSpec, seed: int, start: int, stop: int):
    spectra = matrix_probes.singular_values_batch(sample_matrix_batch(ensemble, seed, start, stop))
    norms = spectra[:, 0]
    return float(np.sum(norms)), float(np.sum(norms * norms))


def _chunk_norm_moments_task(args):
    return _chunk_norm_moments(*args)


def estimate_expected_norm(
    ensemble: EnsembleSpec,
    master_seed: int,
    samples: int = 10000,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[float, float]:
    """Sample mean and standard error of ||T|| over an independent seed stream.

    The stream is derived from the master seed with a fixed tag, so the
    plug-in constant never couples to the samples of the tested event.
    """
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    seed = derive_seed(master_seed, _NORM_PREPASS_TAG)
    spans = _spans(samples, chunk_size)
    if workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            moments = list(pool.map(_chunk_norm_moments_task, [(ensemble, seed, a, b) for a, b in spans]))
    else:
        moments = [_chunk_norm_moments(ensemble, seed, a, b) for a, b in spans]
    total = sum(m[0] for m in moments)
    total_sq = sum(m[1] for m in moments)
    mean = total / samples
    variance = max(0.0, (total_sq - samples * mean * mean) / (samples - 1))
    return mean, math.sqrt(variance / samples)


@dataclass(frozen=True)
class VerificationRow:
    """One threshold's estimate next to the bound value and the verdict."""

    t: float
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    bound: float
    bound_clamped: float
    verdict: str
    resolution_limited: bool


@dataclass(frozen=True)
class VerificationReport:
    """Per-threshold comparison of an experiment against one bound curve.

    A row is a VIOLATION exactly when its lower confidence limit exceeds the
    clamped bound value; ``max_ratio`` is the worst p_hat / clamped bound.
    """

    experiment: Experiment
    curve: BoundCurve
    rows: tuple[VerificationRow, ...]
    violations: int
    max_ratio: float
    expected_norm: float | None = None
    expected_norm_stderr: float | None = None


def verify_bound(
    experiment: Experiment,
    curve: BoundCurve,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    expected_norm_samples: int = 10000,
) -> VerificationReport:
    """Compare empirical estimates against a bound curve, threshold by threshold.

    The curve's b must equal the ensemble's largest diagonal density supremum
    (the bound is meaningless for any other value).  Curves that need an
    expected operator norm get it from an independent pre-pass unless the
    caller supplied one.
    """
    ensemble = experiment.ensemble
    curve_b = curve.params.get("b")
    if curve_b is not None and not math.isclose(curve_b, ensemble.b_max, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(
            f"curve b={curve_b!r} does not match the ensemble's density supremum {ensemble.b_max!r}"
        )
    expected_norm = expected_norm_stderr = None
    if curve.params.get("expected_norm", "absent") is None:
        expected_norm, expected_norm_stderr = estimate_expected_norm(
            ensemble,
            experiment.master_seed,
            expected_norm_samples,
            workers=workers,
            chunk_size=chunk_size,
        )
        curve = make_curve(curve.name, **{**curve.params, "expected_norm": expected_norm})
    estimates = run_experiment(experiment, workers=workers, chunk_size=chunk_size)
    rows = []
    violations = 0
    max_ratio = 0.0
    for est in estimates:
        raw = curve.evaluator(est.t)
        clamped = min(1.0, raw) if curve.clamp else raw
        violated = est.ci_low > clamped
        violations += int(violated)
        if clamped > 0.0:
            ratio = est.p_hat / clamped
        else:
            ratio = 0.0 if est.p_hat == 0.0 else math.inf
        max_ratio = max(max_ratio, ratio)
        rows.append(
            VerificationRow(
                t=est.t,
                hits=est.hits,
                p_hat=est.p_hat,
                ci_low=est.ci_low,
                ci_high=est.ci_high,
                bound=raw,
                bound_clamped=clamped,
                verdict="VIOLATION" if violated else "PASS",
                resolution_limited=est.resolution_limited,
            )
        )
    return VerificationReport(
        experiment=experiment,
        curve=curve,
        rows=tuple(rows),
        violations=violations,
        max_ratio=max_ratio,
        expected_norm=expected_norm,
        expected_norm_stderr=expected_norm_stderr,
    )


def _fmt(x) -> str:
    """17 significant digits: round-trip exact for 64-bit floats."""
    return f"{x:.17g}"


def _metadata_lines(experiment: Experiment) -> list[str]:
    return [
        f"# seed={experiment.master_seed}",
        f"# samples={experiment.samples}",
        f"# ensemble={experiment.ensemble.digest()}",
        f"# n={experiment.ensemble.n}",
        f"# b_max={_fmt(experiment.ensemble.b_max)}",
        f"# functional={experiment.functional}",
        f"# confidence={_fmt(experiment.confidence)}",
    ]


def estimates_to_csv(experiment: Experiment, estimates) -> str:
    """Byte-stable CSV of raw estimates (no bound comparison)."""
    lines = _metadata_lines(experiment)
    lines.append("t,hits,n_samples,p_hat,ci_low,ci_high")
    for est in estimates:
        lines.append(
            ",".join(
                [
                    _fmt(est.t),
                    str(est.hits),
                    str(est.n_samples),
                    _fmt(est.p_hat),
                    _fmt(est.ci_low),
                    _fmt(est.ci_high),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_to_csv(report: VerificationReport) -> str:
    """Byte-stable CSV of a verification report with run-metadata header."""
    lines = _metadata_lines(report.experiment)
    lines.append(f"# curve={report.curve.name}")
    for key in sorted(report.curve.params):
        value = report.curve.params[key]
        if value is not None:
            lines.append(f"# curve_{key}={_fmt(value)}")
    if report.expected_norm is not None:
        lines.append(f"# expected_norm={_fmt(report.expected_norm)}")
        lines.append(f"# expected_norm_stderr={_fmt(report.expected_norm_stderr)}")
    lines.append("t,p_hat,ci_low,ci_high,bound,bound_clamped,verdict")
    for row in report.rows:
        lines.append(
            ",".join(
                [
                    _fmt(row.t),
                    _fmt(row.p_hat),
                    _fmt(row.ci_low),
                    _fmt(row.ci_high),
                    _fmt(row.bound),
                    _fmt(row.bound_clamped),
                    row.verdict,
                ]
            )
        )
    return "\n".join(lines) + "\n"
