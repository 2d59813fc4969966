import math

import numpy as np
import pytest
from scipy.stats import binom

from smallball.bounds import make_curve
from smallball.distributions import Gaussian, Uniform
from smallball.ensembles import Constant, EnsembleSpec, IID, SymmetricIID, Zero
from smallball.matrix_probes import PERMANENT_CAP
from smallball.mc_engine import (
    EstimationResult,
    Experiment,
    clopper_pearson,
    estimate_expected_norm,
    estimates_to_csv,
    report_to_csv,
    run_experiment,
    verify_bound,
)

U01 = Uniform(0.0, 1.0)
STD_GAUSS = Gaussian(0.0, 1.0)


def _experiment(**overrides) -> Experiment:
    params = dict(
        ensemble=EnsembleSpec(n=1, diagonal_laws=U01, offdiag=Zero()),
        functional="det_root_n",
        t_grid=(0.05, 0.1, 0.2, 0.4),
        samples=20000,
        master_seed=314159,
        confidence=0.99,
    )
    params.update(overrides)
    return Experiment(**params)


# ---------------------------------------------------------------------------
# experiment validation


def test_experiment_validation():
    with pytest.raises(ValueError, match="unknown functional"):
        _experiment(functional="trace")
    with pytest.raises(ValueError, match="strictly increasing"):
        _experiment(t_grid=(0.2, 0.1))
    with pytest.raises(ValueError, match="lie in"):
        _experiment(t_grid=(0.5, 1.5))
    with pytest.raises(ValueError):
        _experiment(samples=0)
    with pytest.raises(ValueError):
        _experiment(confidence=1.0)


def test_degenerate_zero_threshold_allowed_and_never_hit():
    results = run_experiment(_experiment(t_grid=(0.0, 0.1), samples=2000))
    assert results[0].t == 0.0
    assert results[0].hits == 0 and results[0].p_hat == 0.0


# ---------------------------------------------------------------------------
# Clopper-Pearson intervals


def test_clopper_pearson_edge_cases():
    low, high = clopper_pearson(0, 100, 0.95)
    assert low == 0.0 and 0.0 < high < 0.06
    low, high = clopper_pearson(100, 100, 0.95)
    assert 0.94 < low < 1.0 and high == 1.0


def test_clopper_pearson_defining_property():
    # at the lower limit, P[X >= k | p = low] = alpha/2; at the upper,
    # P[X <= k | p = high] = alpha/2 (checked with an independent binomial CDF)
    k, n, confidence = 7, 50, 0.99
    alpha = 1.0 - confidence
    low, high = clopper_pearson(k, n, confidence)
    assert low < k / n < high
    assert binom.sf(k - 1, n, low) == pytest.approx(alpha / 2.0, rel=1e-9)
    assert binom.cdf(k, n, high) == pytest.approx(alpha / 2.0, rel=1e-9)


def test_clopper_pearson_coverage_at_least_nominal():
    rng = np.random.default_rng(42)
    p_true, n, reps = 0.3, 400, 1000
    covered = 0
    for hits in rng.binomial(n, p_true, size=reps):
        low, high = clopper_pearson(int(hits), n, 0.99)
        covered += low <= p_true <= high
    assert covered / reps >= 0.99


def test_clopper_pearson_input_validation():
    with pytest.raises(ValueError):
        clopper_pearson(-1, 10, 0.95)
    with pytest.raises(ValueError):
        clopper_pearson(11, 10, 0.95)
    with pytest.raises(ValueError):
        clopper_pearson(3, 10, 1.0)


# ---------------------------------------------------------------------------
# estimation oracles


def test_one_by_one_uniform_matches_analytic_probability():
    # |det| = X ~ U(0,1), so P[|det| <= t] = t exactly
    results = run_experiment(_experiment())
    for result in results:
        assert result.ci_low <= result.t <= result.ci_high
        assert result.p_hat == pytest.approx(result.t, abs=0.02)


def test_two_by_two_diagonal_matches_product_antiderivative():
    # zero off-diagonals: |det| = X*Y with P[|det|^(1/2) <= t] = t^2 (1 - 2 log t)
    experiment = _experiment(
        ensemble=EnsembleSpec(n=2, diagonal_laws=U01, offdiag=Zero()),
        t_grid=(0.1,),
        samples=50000,
    )
    (result,) = run_experiment(experiment)
    analytic = 0.1 ** 2 * (1.0 - 2.0 * math.log(0.1))
    assert result.ci_low <= analytic <= result.ci_high


def test_unreachable_threshold_has_zero_hits():
    # diagonal entries in (2, 3): the norm can never be <= 1
    experiment = _experiment(
        ensemble=EnsembleSpec(n=2, diagonal_laws=Uniform(2.0, 3.0), offdiag=Zero()),
        functional="operator_norm",
        t_grid=(0.5, 1.0),
        samples=2000,
    )
    for result in run_experiment(experiment):
        assert result.hits == 0
        assert result.resolution_limited


def test_hits_monotone_across_grid():
    experiment = _experiment(
        ensemble=EnsembleSpec(n=3, diagonal_laws=U01, offdiag=IID(STD_GAUSS)),
        functional="s_min",
        t_grid=tuple(np.logspace(-3, -0.5, 12)),
        samples=5000,
    )
    results = run_experiment(experiment)
    hits = [r.hits for r in results]
    assert hits == sorted(hits)
    for r in results:
        assert r.ci_low <= r.p_hat <= r.ci_high


def test_permanent_functional_small_dimension():
    experiment = _experiment(
        ensemble=EnsembleSpec(n=2, diagonal_laws=U01, offdiag=Zero()),
        functional="permanent_root_n",
        t_grid=(0.1,),
        samples=20000,
    )
    # with zero off-diagonals the permanent equals the determinant X*Y
    (result,) = run_experiment(experiment)
    analytic = 0.1 ** 2 * (1.0 - 2.0 * math.log(0.1))
    assert result.ci_low <= analytic <= result.ci_high


def test_permanent_functional_rejects_large_dimension():
    experiment = _experiment(
        ensemble=EnsembleSpec(n=PERMANENT_CAP + 1, diagonal_laws=U01, offdiag=Zero()),
        functional="permanent_root_n",
        t_grid=(0.1,),
        samples=10,
    )
    with pytest.raises(ValueError, match="permanent"):
        run_experiment(experiment)


# ---------------------------------------------------------------------------
# reproducibility


def test_identical_runs_identical_hits():
    experiment = _experiment(
        ensemble=EnsembleSpec(n=3, diagonal_laws=U01, offdiag=SymmetricIID(STD_GAUSS)),
        functional="s_min",
        samples=4000,
    )
    first = run_experiment(experiment)
    second = run_experiment(experiment)
    assert [r.hits for r in first] == [r.hits for r in second]


def test_worker_count_does_not_change_hits():
    experiment = _experiment(
        ensemble=EnsembleSpec(n=3, diagonal_laws=U01, offdiag=IID(STD_GAUSS)),
        samples=6000,
    )
    serial = run_experiment(experiment, workers=1, chunk_size=512)
    parallel = run_experiment(experiment, workers=4, chunk_size=512)
    assert [r.hits for r in serial] == [r.hits for r in parallel]


def test_expected_norm_prepass_deterministic_and_independent():
    ensemble = EnsembleSpec(n=4, diagonal_laws=STD_GAUSS, offdiag=SymmetricIID(STD_GAUSS))
    mean1, stderr1 = estimate_expected_norm(ensemble, 123, samples=2000)
    mean2, stderr2 = estimate_expected_norm(ensemble, 123, samples=2000)
    assert (mean1, stderr1) == (mean2, stderr2)
    assert stderr1 > 0.0
    mean_parallel, stderr_parallel = estimate_expected_norm(
        ensemble, 123, samples=2000, workers=3, chunk_size=256
    )
    serial = estimate_expected_norm(ensemble, 123, samples=2000, workers=1, chunk_size=256)
    assert (mean_parallel, stderr_parallel) == serial
    # a different master seed gives a different pre-pass stream
    mean3, _ = estimate_expected_norm(ensemble, 124, samples=2000)
    assert mean3 != mean1


# ---------------------------------------------------------------------------
# verification


def test_verify_bound_dominates_for_in_hypothesis_ensemble():
    ensemble = EnsembleSpec(n=5, diagonal_laws=U01, offdiag=IID(STD_GAUSS))
    experiment = _experiment(
        ensemble=ensemble, t_grid=tuple(np.logspace(-3, -1, 8)), samples=20000
    )
    report = verify_bound(experiment, make_curve("det", n=5, b=1.0))
    assert report.violations == 0
    assert all(row.verdict == "PASS" for row in report.rows)
    assert 0.0 <= report.max_ratio <= 1.0


def test_verify_bound_rejects_mismatched_b():
    experiment = _experiment()
    with pytest.raises(ValueError, match="does not match"):
        verify_bound(experiment, make_curve("det", n=1, b=0.5))


def test_verify_bound_estimates_expected_norm_when_deferred():
    ensemble = EnsembleSpec(n=2, diagonal_laws=STD_GAUSS, offdiag=SymmetricIID(STD_GAUSS))
    experiment = _experiment(
        ensemble=ensemble, functional="s_min", t_grid=(1e-3, 1e-2), samples=2000
    )
    curve = make_curve("sn_closed", n=2, b=ensemble.b_max)
    report = verify_bound(experiment, curve, expected_norm_samples=500)
    assert report.expected_norm is not None and report.expected_norm > 0.0
    assert report.expected_norm_stderr > 0.0
    assert report.curve.params["expected_norm"] == report.expected_norm


def test_verify_bound_flags_genuine_violation():
    # deliberate category error: the smallest singular value satisfies
    # s_min <= |det|^(1/2) at n=2, so testing it against the 2x2 determinant
    # curve must produce violations at small t
    ensemble = EnsembleSpec(n=2, diagonal_laws=U01, offdiag=Zero())
    experiment = _experiment(
        ensemble=ensemble, functional="s_min", t_grid=(0.01, 0.02), samples=4000
    )
    report = verify_bound(experiment, make_curve("det2x2", b=1.0))
    assert report.violations > 0
    assert any(row.verdict == "VIOLATION" for row in report.rows)
    assert report.max_ratio > 1.0


def test_verify_zero_threshold_row_is_degenerate_pass():
    experiment = _experiment(t_grid=(0.0, 0.1), samples=1000)
    report = verify_bound(experiment, make_curve("det", n=1, b=1.0))
    first = report.rows[0]
    assert first.t == 0.0 and first.p_hat == 0.0 and first.bound == 0.0
    assert first.verdict == "PASS"


def test_det_curve_also_dominates_the_permanent_functional():
    # the cofactor-conditioning argument is sign-blind, so the same 2bnt
    # curve bounds P[|perm(A+T)|^(1/n) <= t]
    ensemble = EnsembleSpec(n=3, diagonal_laws=U01, offdiag=Constant(1.0))
    experiment = _experiment(
        ensemble=ensemble,
        functional="permanent_root_n",
        t_grid=tuple(np.logspace(-3, -1, 8)),
        samples=20000,
    )
    report = verify_bound(experiment, make_curve("det", n=3, b=1.0))
    assert report.violations == 0


def test_verification_rows_track_resolution_limit():
    ensemble = EnsembleSpec(n=2, diagonal_laws=Uniform(2.0, 3.0), offdiag=Zero())
    experiment = _experiment(
        ensemble=ensemble, functional="operator_norm", t_grid=(0.5,), samples=500
    )
    report = verify_bound(experiment, make_curve("norm", n=2, b=1.0))
    assert report.rows[0].resolution_limited
    assert report.rows[0].verdict == "PASS"  # 0 <= bound


# ---------------------------------------------------------------------------
# CSV rendering


def test_estimates_csv_round_trip_formatting():
    experiment = _experiment(samples=1000)
    text = estimates_to_csv(experiment, run_experiment(experiment))
    lines = text.strip().split("\n")
    assert lines[0] == f"# seed={experiment.master_seed}"
    header_index = next(i for i, line in enumerate(lines) if not line.startswith("#"))
    assert lines[header_index] == "t,hits,n_samples,p_hat,ci_low,ci_high"
    first = lines[header_index + 1].split(",")
    assert float(first[0]) == experiment.t_grid[0]  # 17g is round-trip exact


def test_report_csv_byte_stable_across_workers():
    ensemble = EnsembleSpec(n=2, diagonal_laws=U01, offdiag=IID(STD_GAUSS))
    experiment = _experiment(ensemble=ensemble, samples=3000)
    curve = make_curve("det", n=2, b=1.0)
    text1 = report_to_csv(verify_bound(experiment, curve, workers=1, chunk_size=256))
    text2 = report_to_csv(verify_bound(experiment, curve, workers=4, chunk_size=256))
    assert text1 == text2
    assert "t,p_hat,ci_low,ci_high,bound,bound_clamped,verdict" in text1
    assert f"# ensemble={ensemble.digest()}" in text1


def test_estimation_result_resolution_flag():
    scarce = EstimationResult(t=0.1, hits=3, n_samples=1000, p_hat=0.003, ci_low=0.0, ci_high=0.01)
    ample = EstimationResult(t=0.1, hits=500, n_samples=1000, p_hat=0.5, ci_low=0.45, ci_high=0.55)
    assert scarce.resolution_limited and not ample.resolution_limited
