"""Monte-Carlo estimate containers and error propagation helpers.

All estimators in this package report a value together with a standard error
derived either from the delta method (smooth functions of sample means), a
binomial count, or a leave-one-out jackknife for ratio statistics.
"""

import warnings
from dataclasses import dataclass, asdict

import numpy as np

#: below this effective sample size, reweighted estimates are flagged
ESS_FLOOR = 100.0


class EffectiveSampleSizeWarning(UserWarning):
    """The importance weights have collapsed onto too few paths."""


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte-Carlo estimate: value +- std_err from n_samples draws."""

    value: float
    std_err: float
    n_samples: int
    seed: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("estimate value must be finite")
        if not (self.std_err >= 0.0):
            raise ValueError("std_err must be >= 0")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")

    def to_dict(self):
        return asdict(self)

    def agrees_with(self, other_value, n_sigma=3.0, extra_err=0.0):
        """|value - other_value| within n_sigma combined errors."""
        tol = n_sigma * float(np.hypot(self.std_err, extra_err))
        return abs(self.value - float(other_value)) <= tol


def mean_with_err(samples, seed=None):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    se = samples.std(ddof=1) / np.sqrt(n)
    return EstimateWithError(float(samples.mean()), float(se), n, seed)


def frequency_with_err(hits, n, seed=None):
    """Binomial frequency estimate with the usual sqrt(p(1-p)/n) error."""
    p = hits / n
    se = np.sqrt(max(p * (1.0 - p), 1.0 / n) / n)  # floor keeps se > 0 at p in {0,1}
    return EstimateWithError(float(p), float(se), int(n), seed)


def effective_sample_size(log_weights):
    """(sum w)^2 / sum w^2 for w = exp(log_weights), shift-invariant."""
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - lw.max())
    return float(w.sum() ** 2 / np.square(w).sum())


def log_mean_exp(log_terms, seed=None, warn_label=None):
    """ln((1/n) sum e^{x_i}) with a delta-method standard error.

    Returns ``(estimate, ess)``.  If ``warn_label`` is given an
    EffectiveSampleSizeWarning fires when the ESS drops below ESS_FLOOR.
    """
    lw = np.asarray(log_terms, dtype=float)
    n = lw.size
    shift = lw.max()
    u = np.exp(lw - shift)
    ubar = u.mean()
    value = shift + np.log(ubar)
    se = u.std(ddof=1) / (ubar * np.sqrt(n))
    ess = float(u.sum() ** 2 / np.square(u).sum())
    if warn_label is not None and ess < ESS_FLOOR:
        warnings.warn(
            "%s: effective sample size %.1f < %.0f; estimate is unreliable"
            % (warn_label, ess, ESS_FLOOR),
            EffectiveSampleSizeWarning,
            stacklevel=2,
        )
    return EstimateWithError(float(value), float(se), n, seed), ess


def log_mean_exp_diff(log_a, log_b, seed=None):
    """ln mean e^{a} - ln mean e^{b} for paired samples, correlation-aware.

    Both arrays must come from the same draws (same length, index-aligned);
    the delta method then uses the variance of u_i/ubar - v_i/vbar, which is
    what makes small differences of strongly correlated averages resolvable.
    """
    la = np.asarray(log_a, dtype=float)
    lb = np.asarray(log_b, dtype=float)
    if la.shape != lb.shape:
        raise ValueError("paired difference needs index-aligned samples")
    n = la.size
    u = np.exp(la - la.max())
    v = np.exp(lb - lb.max())
    d = u / u.mean() - v / v.mean()
    value = (la.max() + np.log(u.mean())) - (lb.max() + np.log(v.mean()))
    se = d.std(ddof=1) / np.sqrt(n)
    return EstimateWithError(float(value), float(se), n, seed)


def self_normalized_mean(values, log_weights):
    """Importance-sampling mean sum(w f)/sum(w) with its delta-method error.

    ``values`` may have trailing axes; weights run over axis 0.  Returns
    (mean, std_err) arrays of the trailing shape.
    """
    lw = np.asarray(log_weights, dtype=float)
    f = np.asarray(values, dtype=float)
    w = np.exp(lw - lw.max())
    wt = w / w.sum()
    expand = (slice(None),) + (None,) * (f.ndim - 1)
    mean = (wt[expand] * f).sum(axis=0)
    dev = f - mean
    var = (np.square(wt)[expand] * np.square(dev)).sum(axis=0)
    return mean, np.sqrt(var)


def jackknife_se(loo_values):
    """Standard error from an array of leave-one-out estimates."""
    theta = np.asarray(loo_values, dtype=float)
    n = theta.size
    return float(np.sqrt((n - 1) / n * np.square(theta - theta.mean()).sum()))
