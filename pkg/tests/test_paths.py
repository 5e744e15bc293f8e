"""Even-conditioned Poisson jump paths, overlaps, and single-spin kernels."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from qsk import paths
from qsk.constants import mu
from qsk.paths import (
    JumpPath,
    PathEnsemble,
    cell_signed_lengths,
    even_jump_count_cdf,
    laplace_conditional,
    overlap_integral,
    p_n_functional,
    sample_ensemble,
    sample_even_path,
    sample_unconditioned,
    sigma_at,
    signed_totals,
    two_set_correlation,
)
from qsk.stats import frequency_with_err, mean_with_err


def _path(*times, rate=1.0):
    return JumpPath(times=np.array(times, dtype=float), rate=rate)


@st.composite
def jump_paths(draw):
    k = draw(st.integers(min_value=0, max_value=6))
    ts = draw(
        st.lists(
            st.floats(min_value=1e-6, max_value=1.0 - 1e-6,
                      exclude_max=True),
            min_size=2 * k, max_size=2 * k, unique=True,
        )
    )
    return _path(*sorted(ts))


# -- JumpPath / sigma_at ---------------------------------------------------


def test_jump_path_validation():
    _path()  # empty path is fine
    _path(0.2, 0.7)
    with pytest.raises(ValueError):
        _path(0.5)  # odd count
    with pytest.raises(ValueError):
        _path(0.7, 0.2)  # unsorted
    with pytest.raises(ValueError):
        _path(0.2, 0.2)  # duplicate
    with pytest.raises(ValueError):
        _path(0.0, 0.5)  # boundary time


def test_sigma_at_piecewise():
    p = _path(0.25, 0.75)
    assert sigma_at(p, 0.0) == 1
    assert sigma_at(p, 0.2) == 1
    assert sigma_at(p, 0.3) == -1
    assert sigma_at(p, 0.75) == 1  # right-continuous at the jump
    assert sigma_at(p, 1.0) == 1
    with pytest.raises(ValueError):
        sigma_at(p, 1.2)


# -- even-conditioned jump-count distribution ------------------------------


@pytest.mark.parametrize("rate", [0.3, 1.0, 4.0, 50.0])
def test_even_count_pmf_matches_cosh(rate):
    cdf = even_jump_count_cdf(rate)
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    # P(K=0) = 1/cosh(rate)
    assert pmf[0] == pytest.approx(1.0 / np.cosh(min(rate, 700)), rel=1e-12)
    # E[K] = rate*tanh(rate)
    k = 2.0 * np.arange(pmf.size)
    assert k @ pmf == pytest.approx(rate * np.tanh(rate), rel=1e-10)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-15)


def test_even_count_cdf_edge_cases():
    assert even_jump_count_cdf(0.0) == (1.0,)
    with pytest.raises(ValueError):
        even_jump_count_cdf(400.0)


def test_empirical_even_count_distribution():
    rate, n = 1.3, 40_000
    ens = sample_ensemble(rate, n, seed=5)
    counts = ens.counts
    assert np.all(counts % 2 == 0)
    est = frequency_with_err(int((counts == 0).sum()), n)
    assert est.agrees_with(1.0 / np.cosh(rate), n_sigma=3.5)
    est_mean = mean_with_err(counts.astype(float))
    assert est_mean.agrees_with(rate * np.tanh(rate), n_sigma=3.5)


def test_sample_even_path_structure():
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = sample_even_path(2.0, rng)
        assert p.n_jumps % 2 == 0
        if p.n_jumps:
            assert 0.0 < p.times[0]
            assert p.times[-1] < 1.0
            assert np.all(np.diff(p.times) > 0)


# -- overlap integral ------------------------------------------------------


def _overlap_reference(a, b):
    """O(k) merge evaluation of int_0^1 sigma_a sigma_b dt."""
    knots = np.concatenate([[0.0], np.sort(np.concatenate([a.times, b.times])), [1.0]])
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (lo + hi)
        total += (hi - lo) * sigma_at(a, mid) * sigma_at(b, mid)
    return total


def test_overlap_hand_value():
    a = _path(0.25, 0.75)
    b = _path()
    # sigma_a = +1 on [0,.25)+[.75,1], -1 between: integral = 0.5 - 0.5 = 0
    assert overlap_integral(a, b) == pytest.approx(0.0, abs=1e-15)
    assert overlap_integral(a, a) == 1.0
    c = _path(0.5, 0.9)
    # product flips at .25,.5,.75,.9: +.25 -.25 +.25 -.15 +.1 = 0.2
    assert overlap_integral(a, c) == pytest.approx(0.2, rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(jump_paths(), jump_paths())
def test_overlap_properties(a, b):
    val = overlap_integral(a, b)
    assert val == pytest.approx(_overlap_reference(a, b), abs=1e-12)
    assert abs(val) <= 1.0 + 1e-12
    assert overlap_integral(b, a) == pytest.approx(val, abs=1e-13)
    assert overlap_integral(a, a) == 1.0


def test_overlap_riemann_cross_check():
    rng = np.random.default_rng(7)
    t = (np.arange(2048) + 0.5) / 2048
    for _ in range(10):
        a = sample_even_path(2.0, rng)
        b = sample_even_path(2.0, rng)
        riemann = np.mean([sigma_at(a, u) * sigma_at(b, u) for u in t])
        assert overlap_integral(a, b) == pytest.approx(riemann, abs=4e-3)


# -- ensembles -------------------------------------------------------------


def test_ensemble_deterministic_across_workers():
    e1 = sample_ensemble(1.0, 3000, seed=11, workers=1)
    e4 = sample_ensemble(1.0, 3000, seed=11, workers=4)
    np.testing.assert_array_equal(e1.jumps, e4.jumps)
    np.testing.assert_array_equal(e1.counts, e4.counts)
    e_other = sample_ensemble(1.0, 3000, seed=12)
    assert not np.array_equal(e1.counts, e_other.counts)


def test_ensemble_roundtrip_serialization(tmp_path):
    ens = sample_ensemble(1.7, 500, seed=2)
    f = tmp_path / "ens.bin"
    ens.save(f)
    back = PathEnsemble.load(f)
    assert back.rate == ens.rate
    np.testing.assert_array_equal(back.counts, ens.counts)
    np.testing.assert_array_equal(back.jumps, ens.jumps)


def test_ensemble_rejects_corrupt_stream():
    ens = sample_ensemble(1.0, 10, seed=2)
    raw = bytearray(ens.to_bytes())
    raw[0:4] = b"XXXX"
    with pytest.raises(ValueError):
        PathEnsemble.load(io.BytesIO(bytes(raw)))
    raw = bytearray(ens.to_bytes())
    raw[4] = 99  # unsupported version
    with pytest.raises(ValueError):
        PathEnsemble.load(io.BytesIO(bytes(raw)))


def test_sigma_matrix_and_total_times():
    ens = sample_ensemble(2.0, 400, seed=9)
    assert np.all(ens.sigma_matrix(0.0) == 1)
    t = 0.37
    direct = np.array([sigma_at(p, t) for p in ens])
    np.testing.assert_array_equal(ens.sigma_matrix(t), direct)
    totals = ens.total_signed_times()
    ref = np.array([_overlap_reference(p, _path()) for p in ens])
    np.testing.assert_allclose(totals, ref, atol=1e-12)


def _cell_reference(p, m, k):
    """Exact signed time of sigma over cell k, split at the jump knots."""
    lo, hi = k / m, (k + 1) / m
    knots = [lo] + [t for t in p.times if lo < t < hi] + [hi]
    return sum((b - a) * sigma_at(p, 0.5 * (a + b))
               for a, b in zip(knots, knots[1:]))


def test_cell_signed_lengths_consistency():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = sample_even_path(2.5, rng)
        for m in (1, 3, 8):
            cells = cell_signed_lengths(p, m)
            assert cells.shape == (m,)
            # row sums recover the full signed time
            assert cells.sum() == pytest.approx(
                _overlap_reference(p, _path()), abs=1e-12)
            # each cell's magnitude is bounded by the cell width
            assert np.all(np.abs(cells) <= 1.0 / m + 1e-15)
            for k in range(m):
                assert cells[k] == pytest.approx(_cell_reference(p, m, k),
                                                 abs=1e-12)


def test_p_n_functional_identity_n2():
    rng = np.random.default_rng(4)
    group = [sample_even_path(1.0, rng) for _ in range(2)]
    a = overlap_integral(group[0], group[1])
    assert p_n_functional(group) == pytest.approx((2 + 2 * a * a) / 4.0,
                                                  rel=1e-13)


def test_p_n_batch_matches_loop():
    n, groups = 3, 40
    ens = sample_ensemble(1.0, n * groups, seed=6)
    batch = paths.p_n_batch(ens, n)
    loop = np.array([
        p_n_functional([ens.path(g * n + i) for i in range(n)])
        for g in range(groups)
    ])
    np.testing.assert_allclose(batch, loop, atol=1e-13)
    mats = paths.overlap_matrix_batch(ens, n)
    assert mats.shape == (groups, n, n)
    np.testing.assert_allclose(mats[:, range(n), range(n)], 1.0, atol=0)
    np.testing.assert_allclose((mats**2).sum(axis=(1, 2)) / n**2, batch,
                               atol=1e-13)


# -- closed-form kernels ---------------------------------------------------


def test_two_set_correlation_values():
    bb = 1.3
    # disjoint sets of lengths la, lb: exponent uses 1-2la-2lb
    assert two_set_correlation(0.2, 0.3, 0.0, bb) == pytest.approx(
        np.cosh(bb * (1 - 0.4 - 0.6)) / np.cosh(bb), rel=1e-12)
    # identical sets: correlation 1
    assert two_set_correlation(0.25, 0.25, 0.25, bb) == pytest.approx(1.0,
                                                                      rel=1e-12)
    with pytest.raises(ValueError):
        two_set_correlation(0.2, 0.3, 0.25, bb)  # intersection too large
    with pytest.raises(ValueError):
        two_set_correlation(0.7, 0.5, 0.1, bb)  # union exceeds the circle


def test_two_set_correlation_reduces_to_mu():
    # intervals [0,t] and [0,t'] with t < t': lengths t, t', intersection t
    # gives exponent 1-2(t'-t), i.e. mu(t, t')
    for t, tp, bb in ((0.1, 0.6, 0.8), (0.3, 0.35, 2.0)):
        assert two_set_correlation(t, tp, t, bb) == pytest.approx(
            mu(t, tp, bb), rel=1e-12)


def test_laplace_conditional_matrix_oracle():
    # 2x2 oracle: L_{s}(g) = <s| e^{beta(g Sz + b Sx)} |+>
    rng = np.random.default_rng(8)
    for _ in range(25):
        g = float(rng.standard_normal())
        beta = float(rng.uniform(0.3, 2.0))
        b = float(rng.uniform(0.1, 2.0))
        h = beta * np.array([[g, b], [b, -g]])
        e = expm(h)
        assert laplace_conditional(g, beta, b, 1) == pytest.approx(
            e[0, 0], rel=1e-10)
        assert laplace_conditional(g, beta, b, -1) == pytest.approx(
            e[1, 0], rel=1e-10)


def test_laplace_conditional_limits():
    # b -> 0: no flips possible; even sector is e^{beta g}, odd sector dies
    assert laplace_conditional(0.7, 1.0, 0.0, 1) == pytest.approx(
        np.exp(0.7), rel=1e-12)
    assert laplace_conditional(0.7, 1.0, 0.0, -1) == 0.0
    # g = 0: pure transverse field
    assert laplace_conditional(0.0, 2.0, 0.5, 1) == pytest.approx(
        np.cosh(1.0), rel=1e-12)
    assert laplace_conditional(0.0, 2.0, 0.5, -1) == pytest.approx(
        np.sinh(1.0), rel=1e-12)
    with pytest.raises(ValueError):
        laplace_conditional(0.5, 1.0, 1.0, 2)


def test_laplace_conditional_monte_carlo():
    jumps, counts = sample_unconditioned(0.9, 60_000, seed=13)
    tot = signed_totals(jumps, counts)
    for g, s in ((0.7, 1), (-0.4, -1)):
        keep = (1 - 2 * (counts % 2)) == s
        est = mean_with_err(np.exp(0.9 + g * tot) * keep)
        assert est.agrees_with(laplace_conditional(g, 1.0, 0.9, s),
                               n_sigma=3.5)


def test_sigma_autocorrelation_matches_mu():
    ens = sample_ensemble(1.1, 50_000, seed=17)
    for t, tp in ((0.2, 0.6), (0.45, 0.5), (0.05, 0.95)):
        est = mean_with_err(ens.sigma_matrix(t) * ens.sigma_matrix(tp))
        assert est.agrees_with(mu(t, tp, 1.1), n_sigma=3.5)
