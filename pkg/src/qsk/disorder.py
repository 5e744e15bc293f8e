"""Disorder-ensemble statistics: quenched averages, moments, concentration.

Small-N exact diagonalization is repeated over many coupling draws to
estimate E[beta f_N], the second-moment ratio E[Z^2]/E[Z]^2 (bounded by
e^{-2 lam}/sqrt(1-4 lam) in the weak-disorder regime), the spin-glass order
parameter E<Sz_1 Sz_2>^2, lower-tail witnesses, and the Gaussian
concentration bound

    P(|beta f_N - E beta f_N| > delta) <= 2 exp(-N^2 delta^2 / (2(N-1)(beta v)^2)).

Disorder draws and path draws live in disjoint stream domains, so mixed
estimators (e.g. quenched-vs-annealed gaps) never share randomness.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import paths
from .constants import ModelParams
from .hilbert import (
    DisorderSample,
    build_hamiltonian,
    gibbs_zz_matrix,
    spectrum,
)
from .stats import (
    EstimateWithError,
    frequency_with_err,
    jackknife_se,
    mean_with_err,
)
from .streams import DOMAIN_DISORDER, batch_generator, batch_ranges, map_batches

__all__ = [
    "DisorderStudyConfig",
    "DisorderStudyResult",
    "run_study",
    "order_parameter_trend",
    "concentration_check",
    "concentration_bound",
    "concentration_summability",
    "second_moment_theory_bound",
    "generalized_second_moment",
    "paley_zygmund_witness",
]

#: plain-mean disorder averages concentrate poorly outside this range
MAX_SPINS_DISORDER = 10
MAX_FOUR_LAM = 0.6


@dataclass(frozen=True)
class DisorderStudyConfig:
    """Inputs of a disorder study: model, sample count, seed, tail width."""

    params: ModelParams
    n_disorder: int
    seed: int
    delta: float

    def __post_init__(self):
        if self.n_disorder < 10:
            raise ValueError("n_disorder must be >= 10")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class DisorderStudyResult:
    """Summary statistics of one disorder study (all beta-scaled)."""

    quenched_mean: EstimateWithError
    second_moment_ratio: EstimateWithError
    order_parameter: EstimateWithError
    tail_frequency: EstimateWithError
    n_disorder: int
    seed: int


def _validate_disorder_params(params, allow_strong=False):
    if params.n_spins > MAX_SPINS_DISORDER:
        raise ValueError(
            f"N={params.n_spins} exceeds the disorder-study cap ({MAX_SPINS_DISORDER})"
        )
    if not allow_strong and 4.0 * params.lam > MAX_FOUR_LAM:
        raise ValueError(
            "4*lam = %.3f exceeds the default plain-mean range (%.2f); "
            "pass allow_strong=True to override" % (4.0 * params.lam, MAX_FOUR_LAM)
        )


def _study_arrays(params, n_disorder, seed, workers=None, want_pairs=True,
                  spot_check=True):
    """Per-sample ln Z, beta*f, and mean squared pair correlation.

    Spot checks structural invariants (symmetry, bounded correlations,
    rounding-level trace) on every tenth sample.  Failures identify the
    offending (seed, batch, index) triple.
    """
    n = params.n_spins
    n_pairs = n * (n - 1) // 2
    pieces = list(batch_ranges(n_disorder))

    def one(batch_index):
        b, start, stop = pieces[batch_index]
        rng = batch_generator(seed, DOMAIN_DISORDER, b)
        g = rng.standard_normal((stop - start, n_pairs))
        ln_z = np.empty(stop - start)
        op = np.zeros(stop - start)
        iu = np.triu_indices(n, k=1)
        for r in range(stop - start):
            try:
                sample = DisorderSample(n_spins=n, couplings=g[r], seed=seed)
                h = build_hamiltonian(params, sample)
                if spot_check and r % 10 == 0:
                    assert np.array_equal(h.matrix, h.matrix.T)
                    assert abs(np.trace(h.matrix)) < 1e-10 * (
                        1.0 + np.abs(np.diag(h.matrix)).max()
                    )
                ln_z[r] = spectrum(h).ln_z
                if want_pairs:
                    c = gibbs_zz_matrix(h, params.beta)
                    if spot_check and r % 10 == 0:
                        assert np.abs(c).max() <= 1.0 + 1e-12
                    op[r] = np.square(c[iu]).mean()
            except Exception as exc:
                raise RuntimeError(
                    "disorder sample failed (seed=%d, batch=%d, index=%d): %s"
                    % (seed, b, start + r, exc)
                ) from exc
        return ln_z, op

    parts = map_batches(one, len(pieces), workers=workers)
    ln_z = np.concatenate([p[0] for p in parts])
    op = np.concatenate([p[1] for p in parts])
    beta_f = -ln_z / n
    return ln_z, beta_f, op


def _ratio_of_means(ln_z, seed=None):
    """E[Z^2]/E[Z]^2 plug-in estimate with a leave-one-out jackknife error."""
    n = ln_z.size
    c = ln_z.max()
    u = np.exp(ln_z - c)          # Z_i / e^c
    u2 = np.square(u)
    s1, s2 = u.sum(), u2.sum()
    value = (s2 / n) / (s1 / n) ** 2
    loo = ((s2 - u2) / (n - 1)) / np.square((s1 - u) / (n - 1))
    return EstimateWithError(float(value), jackknife_se(loo), n, seed)


def run_study(config: DisorderStudyConfig, workers=None, allow_strong=False):
    """Full disorder study at one parameter point.

    Returns plain-mean estimates of E[beta f_N], the second-moment ratio
    (jackknife error), the order parameter (2/(N(N-1))) sum_{i<j} <Sz_i Sz_j>^2
    averaged over disorder, and the frequency of |beta f - mean| > delta.
    """
    params = config.params
    _validate_disorder_params(params, allow_strong=allow_strong)
    ln_z, beta_f, op = _study_arrays(
        params, config.n_disorder, config.seed, workers=workers
    )
    quenched = mean_with_err(beta_f, seed=config.seed)
    tail_hits = int((np.abs(beta_f - beta_f.mean()) > config.delta).sum())
    return DisorderStudyResult(
        quenched_mean=quenched,
        second_moment_ratio=_ratio_of_means(ln_z, seed=config.seed),
        order_parameter=mean_with_err(op, seed=config.seed),
        tail_frequency=frequency_with_err(tail_hits, beta_f.size, seed=config.seed),
        n_disorder=config.n_disorder,
        seed=config.seed,
    )


def order_parameter_trend(params_base: ModelParams, n_list, n_disorder, seed,
                          workers=None):
    """Order parameter at fixed (beta, v, b) for each N in n_list.

    The disorder average of the mean squared pair correlation decreases
    with N in the weak-disorder regime; each entry is an independent study.
    """
    out = []
    for n in n_list:
        params = ModelParams(n_spins=int(n), beta=params_base.beta,
                             v=params_base.v, b=params_base.b)
        _validate_disorder_params(params)
        _, _, op = _study_arrays(params, n_disorder, seed, workers=workers)
        out.append(mean_with_err(op, seed=seed))
    return out


# -- concentration ---------------------------------------------------------


def concentration_bound(n_spins, delta, beta_v):
    """Gaussian concentration tail bound 2 exp(-N^2 d^2/(2(N-1)(beta v)^2))."""
    if beta_v <= 0:
        raise ValueError("beta_v must be positive")
    n = int(n_spins)
    return 2.0 * float(np.exp(-(n * n * delta * delta) / (2.0 * (n - 1) * beta_v**2)))


def concentration_check(config: DisorderStudyConfig, workers=None):
    """Empirical tail frequency vs the Gaussian bound at the config's delta."""
    params = config.params
    _validate_disorder_params(params)
    _, beta_f, _ = _study_arrays(
        params, config.n_disorder, config.seed, workers=workers, want_pairs=False
    )
    hits = int((np.abs(beta_f - beta_f.mean()) > config.delta).sum())
    empirical = frequency_with_err(hits, beta_f.size, seed=config.seed)
    bound = concentration_bound(params.n_spins, config.delta, params.beta_v)
    return empirical, bound


def concentration_summability(delta, lam, n_lo=2, n_hi=64):
    """Per-N bounds with N-independent delta, their sum, and the geometric cap.

    With q = exp(-delta^2/(8 lam)) each bound is <= 2 q^N, so the sum over
    N >= 2 is at most 2 q^2/(1-q).  Returns (bounds, total, cap).
    """
    if delta <= 0 or lam <= 0:
        raise ValueError("delta and lam must be positive")
    beta_v = 2.0 * np.sqrt(lam)
    ns = np.arange(int(n_lo), int(n_hi) + 1)
    bounds = np.array([concentration_bound(n, delta, beta_v) for n in ns])
    q = float(np.exp(-delta * delta / (8.0 * lam)))
    cap = 2.0 * q * q / (1.0 - q) if q < 1.0 else np.inf
    return bounds, float(bounds.sum()), cap


# -- second moments --------------------------------------------------------


def second_moment_theory_bound(lam):
    """Weak-disorder bound e^{-2 lam}/sqrt(1-4 lam) on E[Z^2]/E[Z]^2."""
    if not 0.0 <= 4.0 * lam < 1.0:
        raise ValueError("requires 0 <= 4*lam < 1")
    return float(np.exp(-2.0 * lam) / np.sqrt(1.0 - 4.0 * lam))


def _sign_patterns(n):
    states = np.arange(2**n)
    bits = (states[:, None] >> np.arange(n)[None, :]) & 1
    return 1.0 - 2.0 * bits


def generalized_second_moment(params: ModelParams, gamma, n_path_ensembles,
                              seed, workers=None, return_diagnostics=False):
    """Path-average form of E[Z^2]-type moments at shifted coupling gamma.

    For two independent N-path systems with overlap matrices A, B the
    statistic

        e^{N lam (P_A + P_B)} 2^{-N} sum_eps exp((2(lam+gamma)/N)
            sum_{ij} eps_i eps_j A_ij B_ij)

    has disorder-free mean E[Z^2-like]/(2 cosh)^{2N}-normalized; multiplied
    by sqrt(1 - 4(lam+gamma)) and divided by the squared mean of
    e^{N lam P}, the result is <= 1 for 0 <= 4(lam+gamma) < 1.  The eps sum
    is enumerated exactly (N <= 4).  Jackknife standard error over the
    paired systems.
    """
    n = params.n_spins
    if n > 4:
        raise ValueError("the exact replica-sign enumeration is limited to N <= 4")
    total_shift = params.lam + float(gamma)
    if not 0.0 <= 4.0 * total_shift < 1.0:
        raise ValueError("requires 0 <= 4*(lam+gamma) < 1")
    if n_path_ensembles < 2:
        raise ValueError("need at least two paired systems")
    ens = paths.sample_ensemble(
        params.beta_b, 2 * n * int(n_path_ensembles), seed, workers=workers
    )
    a = paths.overlap_matrix_batch(ens, n).reshape(-1, 2, n, n)
    lam = params.lam
    p_vals = np.square(a).sum(axis=(2, 3)) / n**2          # (n_items, 2)
    eps = _sign_patterns(n)                                 # (2^N, N)
    c = a[:, 0] * a[:, 1]                                   # (n_items, N, N)
    quad = np.einsum("kn,xnm,km->xk", eps, c, eps)
    coupling = np.exp((2.0 * total_shift / n) * quad).mean(axis=1)
    num = np.exp(lam * n * p_vals.sum(axis=1)) * coupling
    den = np.exp(lam * n * p_vals)                          # (n_items, 2)

    n_items = num.size
    s_num, s_den = num.sum(), den.sum()
    scale = float(np.sqrt(1.0 - 4.0 * total_shift))
    value = scale * (s_num / n_items) / (s_den / (2 * n_items)) ** 2
    loo_num = (s_num - num) / (n_items - 1)
    loo_den = (s_den - den.sum(axis=1)) / (2 * n_items - 2)
    loo = scale * loo_num / np.square(loo_den)
    est = EstimateWithError(float(value), jackknife_se(loo), n_items, seed)
    if not return_diagnostics:
        return est
    diag = {
        "coupling_mean": float(coupling.mean()),
        "coupling_max_dev": float(np.abs(coupling - 1.0).max()),
        "mean_p": float(p_vals.mean()),
    }
    return est, diag


def paley_zygmund_witness(params: ModelParams, n_disorder, seed, workers=None):
    """Frequency of Z >= (sample mean of Z)/2 vs the threshold 1/(4c).

    c = e^{-2 lam}/sqrt(1 - 4 lam) bounds the second-moment ratio, so the
    Paley-Zygmund inequality guarantees P(Z >= E[Z]/2) >= 1/(4c).
    """
    _validate_disorder_params(params)
    c = second_moment_theory_bound(params.lam)
    ln_z, _, _ = _study_arrays(
        params, n_disorder, seed, workers=workers, want_pairs=False
    )
    ln_mean = float(logsumexp(ln_z) - np.log(ln_z.size))
    hits = int((ln_z >= ln_mean - np.log(2.0)).sum())
    return frequency_with_err(hits, ln_z.size, seed=seed), 1.0 / (4.0 * c)
