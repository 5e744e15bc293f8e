"""Disorder studies: quenched means, second moments, concentration, tails."""

import math

import numpy as np
import pytest

from qsk import disorder
from qsk.constants import ModelParams
from qsk.disorder import (
    DisorderStudyConfig,
    concentration_bound,
    concentration_check,
    concentration_summability,
    generalized_second_moment,
    order_parameter_trend,
    paley_zygmund_witness,
    run_study,
    second_moment_theory_bound,
)
from qsk.numerics import LN2, logcosh


def test_run_study_no_disorder_limit():
    # v = 0: Z is deterministic, so every disorder statistic collapses
    params = ModelParams(n_spins=4, beta=1.0, v=0.0, b=1.0)
    cfg = DisorderStudyConfig(params=params, n_disorder=50, seed=9, delta=0.1)
    res = run_study(cfg)
    expected = -(float(logcosh(1.0)) + LN2)
    assert res.quenched_mean.value == pytest.approx(expected, abs=1e-12)
    assert res.quenched_mean.std_err <= 1e-13
    assert res.second_moment_ratio.value == pytest.approx(1.0, abs=1e-12)
    assert res.order_parameter.value <= 1e-12
    assert res.tail_frequency.value == 0.0


def test_run_study_weak_disorder_sanity():
    params = ModelParams.from_dimensionless(4, 0.1, 1.0)
    cfg = DisorderStudyConfig(params=params, n_disorder=400, seed=2, delta=0.4)
    res = run_study(cfg)
    ratio = res.second_moment_ratio
    c = second_moment_theory_bound(0.1)
    assert 1.0 - 3.5 * ratio.std_err <= ratio.value <= c + 3.5 * ratio.std_err
    assert res.order_parameter.value > 0.0
    bound = concentration_bound(4, 0.4, params.beta_v)
    assert res.tail_frequency.value <= bound + 3.5 * res.tail_frequency.std_err
    assert res.n_disorder == 400


def test_run_study_worker_invariance():
    params = ModelParams.from_dimensionless(3, 0.1, 1.0)
    cfg = DisorderStudyConfig(params=params, n_disorder=120, seed=5, delta=0.3)
    a = run_study(cfg, workers=1)
    b = run_study(cfg, workers=3)
    assert a.quenched_mean.value == b.quenched_mean.value
    assert a.second_moment_ratio.value == b.second_moment_ratio.value


def test_study_validation():
    params = ModelParams.from_dimensionless(11, 0.1, 1.0)
    cfg = DisorderStudyConfig(params=params, n_disorder=50, seed=1, delta=0.1)
    with pytest.raises(ValueError, match="cap"):
        run_study(cfg)
    strong = ModelParams.from_dimensionless(4, 0.2, 1.0)
    cfg2 = DisorderStudyConfig(params=strong, n_disorder=50, seed=1, delta=0.1)
    with pytest.raises(ValueError, match="allow_strong"):
        run_study(cfg2)
    run_study(cfg2, allow_strong=True)  # override accepted
    with pytest.raises(ValueError):
        DisorderStudyConfig(params=strong, n_disorder=5, seed=1, delta=0.1)
    with pytest.raises(ValueError):
        DisorderStudyConfig(params=strong, n_disorder=50, seed=1, delta=0.0)


def test_order_parameter_trend_decreasing():
    base = ModelParams.from_dimensionless(3, 0.125, 1.0)
    ests = order_parameter_trend(base, [3, 4], 300, seed=21)
    assert len(ests) == 2
    err = 3.5 * math.hypot(ests[0].std_err, ests[1].std_err)
    assert ests[0].value > ests[1].value - err


# -- concentration ---------------------------------------------------------


def test_concentration_bound_hand_value():
    # 2 exp(-36 * 0.09 / (2 * 5 * 0.49)) at N=6, delta=0.3, beta_v=0.7
    expect = 2.0 * math.exp(-3.24 / 4.9)
    assert concentration_bound(6, 0.3, 0.7) == pytest.approx(expect, rel=1e-15)
    with pytest.raises(ValueError):
        concentration_bound(6, 0.3, 0.0)


def test_concentration_check_agrees_with_bound():
    params = ModelParams.from_dimensionless(5, 0.1, 1.0)
    cfg = DisorderStudyConfig(params=params, n_disorder=300, seed=13, delta=0.35)
    empirical, bound = concentration_check(cfg)
    assert 0.0 <= empirical.value <= 1.0
    assert empirical.value <= bound + 3.5 * empirical.std_err


def test_concentration_summability():
    bounds, total, cap = concentration_summability(0.8, 0.125)
    assert bounds.shape == (63,)
    assert np.all(np.diff(bounds) < 0)
    assert total <= cap
    q = math.exp(-0.64 / 1.0)
    assert cap == pytest.approx(2.0 * q * q / (1.0 - q), rel=1e-14)
    with pytest.raises(ValueError):
        concentration_summability(0.0, 0.125)
    with pytest.raises(ValueError):
        concentration_summability(0.5, 0.0)


# -- second moments --------------------------------------------------------


def test_second_moment_theory_bound_values():
    assert second_moment_theory_bound(0.125) == pytest.approx(
        1.1013906298063674, rel=1e-13)
    assert second_moment_theory_bound(0.0) == 1.0
    assert second_moment_theory_bound(0.2499) > 30.0
    with pytest.raises(ValueError):
        second_moment_theory_bound(0.25)
    with pytest.raises(ValueError):
        second_moment_theory_bound(-0.1)


def test_generalized_second_moment_gamma_cancellation():
    # gamma = -lam removes the replica coupling exactly, not just on average
    params = ModelParams.from_dimensionless(3, 0.1, 1.0)
    est, diag = generalized_second_moment(
        params, -0.1, 500, seed=3, return_diagnostics=True)
    assert diag["coupling_max_dev"] == 0.0
    assert diag["coupling_mean"] == 1.0
    assert est.value <= 1.0 + 3.5 * est.std_err


def test_generalized_second_moment_bound():
    params = ModelParams.from_dimensionless(3, 0.1, 1.0)
    for gamma in (0.0, 0.1):
        est = generalized_second_moment(params, gamma, 2000, seed=7)
        assert est.value <= 1.0 + 3.5 * est.std_err
        assert est.value > 0.5


def test_generalized_second_moment_validation():
    params5 = ModelParams.from_dimensionless(5, 0.1, 1.0)
    with pytest.raises(ValueError, match="N <= 4"):
        generalized_second_moment(params5, 0.0, 100, seed=1)
    params = ModelParams.from_dimensionless(3, 0.1, 1.0)
    with pytest.raises(ValueError, match="4"):
        generalized_second_moment(params, 0.15, 100, seed=1)
    with pytest.raises(ValueError):
        generalized_second_moment(params, 0.0, 1, seed=1)


def test_paley_zygmund_witness():
    params = ModelParams.from_dimensionless(4, 0.1, 1.0)
    freq, threshold = paley_zygmund_witness(params, 300, seed=17)
    assert threshold == pytest.approx(
        0.25 / second_moment_theory_bound(0.1), rel=1e-15)
    assert 0.0 <= freq.value <= 1.0
    assert freq.value >= threshold - 3.5 * freq.std_err


def test_ratio_of_means_constant_input():
    est = disorder._ratio_of_means(np.full(40, 2.5))
    assert est.value == pytest.approx(1.0, rel=1e-15)
    assert est.std_err == pytest.approx(0.0, abs=1e-15)
