"""Shared numerical kernels: overflow-safe elementary functions and quadrature.

Everything here is deterministic and free of package state; the quadrature
node tables are cached per node count.
"""

import warnings
from functools import lru_cache

import numpy as np

LN2 = float(np.log(2.0))


class QuadratureConvergenceWarning(UserWarning):
    """Doubling the quadrature nodes moved the result more than the tolerance."""


def logcosh(x):
    """ln cosh(x), overflow-safe for any real x (array friendly)."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LN2


def sinhc(x):
    """sinh(x)/x with the removable singularity filled in at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 + x * x / 6.0, np.sinh(safe) / safe)
    if out.ndim == 0:
        return float(out)
    return out


def log_mean_from_logs(log_terms):
    """ln of the arithmetic mean of e^{x_i}, via a max shift."""
    log_terms = np.asarray(log_terms, dtype=float)
    shift = np.max(log_terms)
    return shift + np.log(np.exp(log_terms - shift).mean())


@lru_cache(maxsize=64)
def gauss_legendre_01(n):
    """Gauss-Legendre nodes/weights mapped to [0, 1]."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=64)
def gauss_hermite(n):
    """Physicists' Gauss-Hermite nodes/weights (weight e^{-x^2}).

    numpy's recurrence overflows above ~400 nodes, so large rules come from
    scipy's asymptotic solver instead (identical digits where both work).
    """
    if n < 1:
        raise ValueError("need at least one node")
    if n <= 256:
        x, w = np.polynomial.hermite.hermgauss(int(n))
    else:
        from scipy.special import roots_hermite

        x, w = roots_hermite(int(n))
    return x, w


def normal_nodes(n):
    """Nodes y_i and log-weights so that E_{g~N(0,1)} f(g) ~ sum_i e^{lw_i} f(y_i)."""
    x, w = gauss_hermite(n)
    with np.errstate(divide="ignore"):  # far-tail weights underflow to 0
        lw = np.log(w)
    return x * np.sqrt(2.0), lw - 0.5 * np.log(np.pi)


def refine_once(evaluate, nodes, rtol=1e-6, label="quadrature"):
    """Run ``evaluate`` at ``nodes`` and ``2*nodes``; warn if they disagree.

    Returns the fine-node value together with a convergence flag.  The
    comparison is relative on the scale max(1, |fine|), which suits the
    log-valued integrals used throughout this package.
    """
    coarse = evaluate(int(nodes))
    fine = evaluate(2 * int(nodes))
    scale = max(1.0, abs(fine))
    converged = abs(fine - coarse) <= rtol * scale
    if not converged:
        warnings.warn(
            "%s did not settle after doubling nodes (%d -> %d): %.3e vs %.3e"
            % (label, nodes, 2 * nodes, coarse, fine),
            QuadratureConvergenceWarning,
            stacklevel=2,
        )
    return fine, converged
