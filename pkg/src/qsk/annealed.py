"""Annealed averages, the replica-scale function k, and the phase diagram.

The annealed partition function of the N-spin model factorizes over
disorder into a path average:

    E[Z_N] = (2 cosh(beta*b))^N e^{-lam} < e^{N lam P_N} >

over N independent even-parity paths, with P_N the mean squared overlap.
This module estimates F_N = ln < e^{N lam P_N} > by Monte Carlo, evaluates
the replica-symmetric scale function

    k(lam) = max_{q in [0,1]} [ lam (1 - (1-q)^2) - E ln cosh(g sqrt(4 lam q)) ]

(zero exactly when 4*lam <= 1), and classifies the (1/(beta v), b/v) plane
by rigorous bounds on the annealed-to-quenched gap.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import paths
from .constants import ModelParams, g_n_of, inf_g_n_over_n, p_n_of
from .numerics import gauss_legendre_01, logcosh, normal_nodes, refine_once
from .stats import EstimateWithError, log_mean_exp, mean_with_err

__all__ = [
    "estimate_f_n",
    "mean_p_n",
    "annealed_free_energy",
    "k_of_lambda",
    "sk_equation_solve",
    "delta_infinity_bounds",
    "RegionPoint",
    "region_scan",
    "advisory_curve",
]

#: estimating ln < e^{N lam P} > by a plain mean gets exponentially hard;
#: keep N small enough that the weights stay tame
MAX_SPINS_PATH_MC = 32


def _path_count(n_spins, ensemble_count):
    if ensemble_count < 2:
        raise ValueError("need at least two path configurations")
    return int(n_spins) * int(ensemble_count)


def estimate_f_n(params: ModelParams, ensemble_count, seed, workers=None):
    """Monte-Carlo estimate of F_N = ln < e^{N lam P_N} >.

    Draws ``ensemble_count`` independent N-tuples of even-parity paths at
    rate beta*b and averages e^{N lam P_N} in log space.  Warns when the
    effective sample size of the exponential weights drops below 100.
    """
    n = params.n_spins
    if n > MAX_SPINS_PATH_MC:
        raise ValueError(f"N={n} too large for the plain-mean path estimator")
    ens = paths.sample_ensemble(
        params.beta_b, _path_count(n, ensemble_count), seed, workers=workers
    )
    p_vals = paths.p_n_batch(ens, n)
    est, _ = log_mean_exp(n * params.lam * p_vals, seed=seed, warn_label="estimate_f_n")
    return est


def mean_p_n(params: ModelParams, ensemble_count, seed, workers=None):
    """Plain mean of P_N over path configurations; E[P_N] = p_N exactly."""
    n = params.n_spins
    ens = paths.sample_ensemble(
        params.beta_b, _path_count(n, ensemble_count), seed, workers=workers
    )
    return mean_with_err(paths.p_n_batch(ens, n), seed=seed)


def annealed_free_energy(params: ModelParams, ensemble_count, seed, workers=None):
    """beta f_N^ann = (lam - F_N)/N - ln(2 cosh(beta*b)), estimated by MC."""
    f_hat = estimate_f_n(params, ensemble_count, seed, workers=workers)
    n = params.n_spins
    value = (params.lam - f_hat.value) / n - (logcosh(params.beta_b) + np.log(2.0))
    return EstimateWithError(
        float(value), f_hat.std_err / n, f_hat.n_samples, seed
    )


# -- the scale function k and the SK consistency equation ------------------


def _k_objective(lam, q_grid, nodes):
    """lam(1-(1-q)^2) - E ln cosh(g sqrt(4 lam q)) on a grid of q values."""
    y, lw = normal_nodes(nodes)
    arg = np.sqrt(4.0 * lam * np.asarray(q_grid))[:, None] * y[None, :]
    expect = logcosh(arg) @ np.exp(lw)
    return lam * (1.0 - np.square(1.0 - np.asarray(q_grid))) - expect


def k_of_lambda(lam, quad_nodes=64):
    """k(lam) >= 0; equals 0 iff 4*lam <= 1, and k(lam) <= lam always.

    The objective can be bimodal near the threshold, so a 512-point dense
    scan brackets the maximizer before golden-section refinement.  The
    Gaussian expectation uses Gauss-Hermite nodes; doubling is checked once.
    """
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if 4.0 * lam <= 1.0:
        # proven: the maximizer is q = 0 and the maximum is exactly 0; the
        # numerical search would return O(1e-17) dust here, which must not
        # leak into positivity certificates downstream
        return 0.0

    def evaluate(nodes):
        q = np.linspace(0.0, 1.0, 512)
        vals = _k_objective(lam, q, nodes)
        i = int(np.argmax(vals))
        lo, hi = q[max(i - 1, 0)], q[min(i + 1, len(q) - 1)]
        res = minimize_scalar(
            lambda t: -float(_k_objective(lam, [t], nodes)[0]),
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        return max(float(vals[i]), -float(res.fun))

    value, _ = refine_once(evaluate, quad_nodes, label="k_of_lambda")
    return max(0.0, value)


#: half-line panels for integrands that decay like e^{-2*s*y}; the edges
#: refine toward the origin, where the large-s mass concentrates
_HALF_LINE_EDGES = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0)


def _tanh_sq_expect(s, panel_nodes=32):
    """E tanh^2(s Z) for Z ~ N(0,1), as 1 - E sech^2(s Z).

    Gauss-Hermite converges slowly here (tanh^2 saturates at infinity and
    has double poles at i*pi/(2s)), so the sech^2 remainder is integrated on
    the half line with composite Gauss-Legendre panels instead; the result
    is accurate to machine precision uniformly in s.
    """
    x01, w01 = gauss_legendre_01(int(panel_nodes))
    edges = np.asarray(_HALF_LINE_EDGES)
    y = (edges[:-1, None] + np.diff(edges)[:, None] * x01[None, :]).ravel()
    w = (np.diff(edges)[:, None] * w01[None, :]).ravel()
    a = float(s) * y
    sech_sq = np.square(2.0 * np.exp(-a) / (1.0 + np.exp(-2.0 * a)))
    phi = np.exp(-0.5 * y * y) / np.sqrt(2.0 * np.pi)
    return 1.0 - 2.0 * float(w @ (phi * sech_sq))


def sk_equation_solve(lam, quad_nodes=32):
    """Largest root q of q = E tanh^2(g sqrt(4 lam q)); 0 when 4*lam <= 1.

    For 4*lam > 1 the nonzero root is unique and coincides with the
    maximizer of the k objective (k'(lam) = q^2).  ``quad_nodes`` counts
    Gauss-Legendre nodes per half-line panel.
    """
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if 4.0 * lam <= 1.0:
        return 0.0

    def h(q):
        return _tanh_sq_expect(np.sqrt(4.0 * lam * q), panel_nodes=quad_nodes) - q

    # near q=0+, E tanh^2 ~ 4 lam q > q, so h > 0; h(1) < 0
    lo = 1e-12
    if h(lo) <= 0.0:  # pragma: no cover - only at threshold rounding
        return 0.0
    return float(brentq(h, lo, 1.0, xtol=1e-14))


# -- phase-diagram bounds --------------------------------------------------


def delta_infinity_bounds(lam, beta_b, n_max=64, quad_nodes=64):
    """Rigorous bracket for the limiting quenched-annealed gap beta*Delta.

    Lower bound max(0, k(lam) - ln cosh(beta_b)); upper bound
    inf_{2<=N<=n_max} G_N/N.  Both are exact statements for every lam >= 0.
    """
    lower = max(0.0, k_of_lambda(lam, quad_nodes=quad_nodes) - float(logcosh(beta_b)))
    upper, _ = inf_g_n_over_n(lam, beta_b, n_max=n_max)
    return lower, upper


@dataclass(frozen=True)
class RegionPoint:
    """Classification of one point of the (1/(beta v), b/v) plane.

    ``weak_disorder`` is the exact criterion inv_beta_v > 1 (i.e. beta*v < 1,
    equivalently 4*lam < 1), where the gap vanishes.  ``lower_bound_positive``
    certifies a strictly positive gap via k(lam) > ln cosh(beta_b).
    """

    inv_beta_v: float
    b_over_v: float
    delta_lower: float
    delta_upper: float
    lower_bound_positive: bool
    weak_disorder: bool

    @property
    def classification(self):
        if self.weak_disorder:
            return "zero"
        if self.lower_bound_positive:
            return "positive"
        return "unresolved"


def region_scan(inv_beta_v_values, b_over_v_values, n_max=64, quad_nodes=64,
                workers=None):
    """Evaluate the gap bracket on a grid; returns a row-major list of points.

    The x axis is 1/(beta v) (so lam = 1/(4 x^2)) and the y axis is b/v
    (so beta_b = y/x).  k(lam) is computed once per column.  Grid order:
    x outer, y inner.
    """
    xs = np.asarray(inv_beta_v_values, dtype=float)
    ys = np.asarray(b_over_v_values, dtype=float)
    if xs.size < 2 or ys.size < 2:
        raise ValueError("need at least a 2x2 grid")
    if np.any(xs <= 0.0) or np.any(ys < 0.0):
        raise ValueError("inv_beta_v must be > 0 and b_over_v >= 0")
    points = []
    for x in xs:
        lam = 1.0 / (4.0 * x * x)
        k_val = k_of_lambda(lam, quad_nodes=quad_nodes)
        weak = bool(x > 1.0)
        for y in ys:
            beta_b = y / x
            lower = max(0.0, k_val - float(logcosh(beta_b)))
            upper, _ = inf_g_n_over_n(lam, beta_b, n_max=n_max)
            points.append(
                RegionPoint(
                    inv_beta_v=float(x),
                    b_over_v=float(y),
                    delta_lower=lower,
                    delta_upper=upper,
                    lower_bound_positive=bool(lower > 0.0),
                    weak_disorder=weak,
                )
            )
    return points


def advisory_curve(inv_beta_v):
    """Non-rigorous reference curve 1.51*sqrt(1 - x^2) for x in [0, 1].

    Marks the rough location where the positivity certificate
    k(lam) = ln cosh(beta_b) saturates; purely indicative, not a bound.
    """
    x = np.asarray(inv_beta_v, dtype=float)
    out = 1.51 * np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    if out.ndim == 0:
        return float(out)
    return out
