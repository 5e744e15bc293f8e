"""Discretized variational principle for the annealed free energy.

On the space of symmetric kernels psi(t, t') on [0,1]^2 define

    Omega(psi) = ||psi||^2/(4 lam) - Lambda(psi),
    Lambda(psi) = ln < exp(<psi, sigma x sigma>) >

with the path average over one even-parity process and the L2([0,1]^2)
pairing.  Then beta f^ann + ln(2 cosh beta_b) = -lam - 2c0 lam^2 + O(lam^3)
and the minimizer solves psi = 2 lam Lambda'(psi), a contraction for
2 lam < 1.  Everything here works on an M x M cell discretization:
a kernel is a GridFunction, the path functional <psi, sigma x sigma>
reduces exactly to a quadratic form in the signed cell occupations, and the
path average is replaced by a fixed Monte-Carlo ensemble (sample-average
approximation), so the solved problem is deterministic given the ensemble.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .constants import c0_of, p_of
from .numerics import gauss_hermite, logcosh, refine_once
from .stats import EstimateWithError, log_mean_exp

__all__ = [
    "GridFunction",
    "FixedPointReport",
    "discretize_mu",
    "lambda_functional",
    "lambda_prime",
    "omega",
    "omega_prime",
    "fixed_point_solve",
    "lambda_constant",
    "static_approximation",
    "taylor_prediction",
    "save_grid_function",
    "load_grid_function",
]


class GridFunction:
    """A kernel on [0,1]^2, piecewise constant on an M x M uniform grid.

    The grid inner product is <f, g> = (1/M^2) sum f_kl g_kl, matching the
    L2 pairing of the piecewise-constant representatives.  ``symmetric``
    asserts exact (bitwise) equality values[k,l] == values[l,k].
    """

    __slots__ = ("values", "m_cells", "symmetric")

    def __init__(self, values, symmetric=False):
        values = np.ascontiguousarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("a grid function must be a square matrix")
        if values.shape[0] < 1:
            raise ValueError("need at least one cell per axis")
        if symmetric and not np.array_equal(values, values.T):
            raise ValueError("symmetric=True requires exact symmetry")
        self.values = values
        self.m_cells = values.shape[0]
        self.symmetric = bool(symmetric)

    @classmethod
    def constant(cls, value, m_cells):
        return cls(np.full((m_cells, m_cells), float(value)), symmetric=True)

    def norm2(self):
        """Squared grid norm ||f||^2 = (1/M^2) sum f^2."""
        return float(np.square(self.values).sum()) / self.m_cells**2

    def norm(self):
        return float(np.sqrt(self.norm2()))

    def sup_abs(self):
        return float(np.abs(self.values).max())

    def scaled(self, factor):
        return GridFunction(factor * self.values, symmetric=self.symmetric)

    def __repr__(self):
        return f"GridFunction(m_cells={self.m_cells}, symmetric={self.symmetric})"


def grid_inner(a: GridFunction, b: GridFunction):
    if a.m_cells != b.m_cells:
        raise ValueError("grid sizes differ")
    return float((a.values * b.values).sum()) / a.m_cells**2


def save_grid_function(gf: GridFunction, file, meta=None):
    """Serialize a GridFunction (plus optional metadata) as one JSON document."""
    doc = {
        "format": "qsk-grid",
        "version": 1,
        "m_cells": gf.m_cells,
        "symmetric": gf.symmetric,
        "meta": dict(meta or {}),
        "values": gf.values.tolist(),
    }
    close = False
    if not hasattr(file, "write"):
        file = open(file, "w")
        close = True
    try:
        json.dump(doc, file)
    finally:
        if close:
            file.close()


def load_grid_function(file):
    close = False
    if not hasattr(file, "read"):
        file = open(file)
        close = True
    try:
        doc = json.load(file)
    finally:
        if close:
            file.close()
    if doc.get("format") != "qsk-grid" or doc.get("version") != 1:
        raise ValueError("not a version-1 grid-function document")
    gf = GridFunction(np.array(doc["values"]), symmetric=doc["symmetric"])
    if gf.m_cells != doc["m_cells"]:
        raise ValueError("grid size disagrees with header")
    return gf, doc.get("meta", {})


# -- exact discretization of the two-point kernel --------------------------


def _g2_over_cosh(u, beta_b):
    """Double antiderivative of cosh(bb(1-2|t|))/cosh(bb), normalized; even.

    G(u) = int_0^u int_0^s cosh(bb(1-2r))/cosh(bb) dr ds
         = u tanh(bb)/(2bb) - sinh(bb(1-u)) sinh(bb u)/(2bb^2 cosh(bb))

    evaluated in overflow-safe form for any bb >= 0.
    """
    u = np.abs(np.asarray(u, dtype=float))
    bb = float(beta_b)
    if bb < 1e-8:
        return 0.5 * u * u  # relative error O(bb^2)
    a = bb * (1.0 - u)
    c = bb * u
    term1 = u * np.tanh(bb) / (2.0 * bb)
    # sinh(a) sinh(c) / cosh(a+c) = (1-e^{-2a})(1-e^{-2c}) / (2(1+e^{-2(a+c)}))
    term2 = (
        -np.expm1(-2.0 * a) * -np.expm1(-2.0 * c)
        / (2.0 * (1.0 + np.exp(-2.0 * bb)))
        / (2.0 * bb * bb)
    )
    return term1 - term2


def discretize_mu(m_cells, beta_b):
    """Exact cell averages of mu(t, t') on the M x M grid (symmetric Toeplitz).

    Each entry is M^2 times the integral of mu over the cell, computed from
    the closed-form double antiderivative, so the only error is rounding.
    For M = 1 the single entry is exactly m; the average of all entries
    equals m for every M.
    """
    m = int(m_cells)
    if m < 1:
        raise ValueError("m_cells must be >= 1")
    if beta_b < 0:
        raise ValueError("beta_b must be >= 0")
    # cell (k, l) value = M^2 * [G((d+1)/M) - 2G(d/M) + G((d-1)/M)], d = k - l
    g = _g2_over_cosh(np.arange(m + 1) / m, beta_b)
    ext = np.concatenate([g[1:2], g])  # index d -> G(|d-1|/M) via ext[d]
    second = g[1:] - 2.0 * g[:-1] + ext[:m]
    col = m * m * second
    vals = col[np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])]
    return GridFunction(vals, symmetric=True)


# -- path functionals ------------------------------------------------------


def _quadratic_forms(psi: GridFunction, s):
    """<psi, sigma x sigma> per path: rows of s are signed cell occupations."""
    if s.shape[1] != psi.m_cells:
        raise ValueError("ensemble cell resolution does not match the kernel")
    return ((s @ psi.values) * s).sum(axis=1)


def lambda_functional(psi: GridFunction, ensemble):
    """Estimate Lambda(psi) = ln < e^{<psi, sigma x sigma>} > on the ensemble."""
    s = ensemble.signed_lengths(psi.m_cells)
    x = _quadratic_forms(psi, s)
    est, _ = log_mean_exp(x, seed=ensemble.seed, warn_label="lambda_functional")
    return est


def lambda_prime(psi: GridFunction, ensemble, with_err=False):
    """Gradient kernel Lambda'(psi) as a GridFunction (exactly symmetric).

    Cell (k, l) holds the self-normalized weighted average of
    M^2 s_k s_l under weights e^{<psi, sigma x sigma>}; entries lie in
    [-1, 1] up to rounding.  With ``with_err`` a second GridFunction of
    delta-method cellwise standard errors is returned.
    """
    s = ensemble.signed_lengths(psi.m_cells)
    m2 = float(psi.m_cells) ** 2
    x = _quadratic_forms(psi, s)
    w = np.exp(x - x.max())
    wt = w / w.sum()
    k = m2 * ((s * wt[:, None]).T @ s)
    k = 0.5 * (k + k.T)
    grad = GridFunction(k, symmetric=True)
    if not with_err:
        return grad
    wt2 = np.square(wt)
    c1 = m2 * ((s * wt2[:, None]).T @ s)
    s2 = np.square(s)
    c2 = m2 * m2 * ((s2 * wt2[:, None]).T @ s2)
    var = c2 - 2.0 * k * c1 + np.square(k) * wt2.sum()
    var = 0.5 * (var + var.T)
    err = GridFunction(np.sqrt(np.clip(var, 0.0, None)), symmetric=True)
    return grad, err


def omega(psi: GridFunction, lam, ensemble):
    """Objective Omega(psi) = ||psi||^2/(4 lam) - Lambda(psi) on the ensemble.

    The norm term is exact; the standard error comes from Lambda alone.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    est = lambda_functional(psi, ensemble)
    return EstimateWithError(
        psi.norm2() / (4.0 * lam) - est.value, est.std_err, est.n_samples, est.seed
    )


def omega_prime(psi: GridFunction, lam, ensemble):
    """Gradient Omega'(psi) = psi/(2 lam) - Lambda'(psi) on the ensemble."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    grad = lambda_prime(psi, ensemble)
    return GridFunction(
        psi.values / (2.0 * lam) - grad.values,
        symmetric=psi.symmetric and grad.symmetric,
    )


@dataclass(frozen=True)
class FixedPointReport:
    """Outcome of the sample-average fixed-point iteration.

    ``contraction_ratios`` are successive L2 update-norm ratios (bounded by
    2*lam for the exact map; the empirical map obeys the same bound because
    the discretized kernel sigma x sigma has grid norm <= 1).  The stopping
    rule uses the sup norm of the update.  ``psi_std_err`` holds cellwise
    Monte-Carlo errors of the final iterate.
    """

    psi: GridFunction
    omega_value: EstimateWithError
    iterations: int
    residual_norm: float
    contraction_ratios: tuple
    converged: bool
    non_contractive: bool
    ess: float
    psi_std_err: GridFunction

    def to_dict(self):
        return {
            "m_cells": self.psi.m_cells,
            "psi": self.psi.values.tolist(),
            "psi_std_err": self.psi_std_err.values.tolist(),
            "omega": self.omega_value.to_dict(),
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "contraction_ratios": list(self.contraction_ratios),
            "converged": self.converged,
            "non_contractive": self.non_contractive,
            "ess": self.ess,
        }


def fixed_point_solve(lam, beta_b, m_cells, ensemble, tol=1e-8, max_iter=200):
    """Iterate psi -> 2 lam Lambda'(psi) from psi = 2 lam mu_M to convergence.

    One fixed ensemble is reused throughout (sample-average approximation),
    so the iteration is deterministic and, for 2 lam < 1, a contraction with
    rate <= 2 lam; ``non_contractive`` flags observed ratios above 1.
    Stops when the sup-norm update falls below ``tol``.
    """
    lam = float(lam)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if abs(ensemble.rate - beta_b) > 1e-12:
        raise ValueError(
            f"ensemble was sampled at rate {ensemble.rate}, expected beta_b={beta_b}"
        )
    m = int(m_cells)
    psi = discretize_mu(m, beta_b).scaled(2.0 * lam)
    ratios = []
    prev_l2 = None
    converged = False
    iterations = 0
    for iterations in range(1, int(max_iter) + 1):
        nxt = lambda_prime(psi, ensemble).scaled(2.0 * lam)
        delta = nxt.values - psi.values
        sup = float(np.abs(delta).max())
        l2 = float(np.sqrt(np.square(delta).sum()) / m)
        if prev_l2 is not None and prev_l2 > 0.0:
            ratios.append(l2 / prev_l2)
        prev_l2 = l2
        psi = nxt
        if sup < tol:
            converged = True
            break
    grad, err = lambda_prime(psi, ensemble, with_err=True)
    residual = float(
        np.sqrt(np.square(2.0 * lam * grad.values - psi.values).sum()) / m
    )
    om = omega(psi, lam, ensemble)
    x = _quadratic_forms(psi, ensemble.signed_lengths(m))
    w = np.exp(x - x.max())
    ess = float(w.sum() ** 2 / np.square(w).sum())
    return FixedPointReport(
        psi=psi,
        omega_value=om,
        iterations=iterations,
        residual_norm=residual,
        contraction_ratios=tuple(ratios),
        converged=converged,
        non_contractive=bool(any(r > 1.0 for r in ratios)),
        ess=ess,
        psi_std_err=err.scaled(2.0 * lam),
    )


# -- constant-kernel specialization and the static approximation -----------


def _lambda_constant_vec(ys, beta_b, nodes):
    """Lambda(y * 1) for an array of y >= 0, by Gauss-Hermite quadrature.

    For a constant kernel the quadratic form is y (integral sigma)^2 and the
    path average has the closed Gaussian-mixture form

        Lambda(y 1) = ln int dz e^{-pi z^2} cosh(sqrt(4 pi y z^2 + bb^2))
                      - ln cosh(bb).
    """
    u, w = gauss_hermite(nodes)
    log_w = np.log(w) - 0.5 * np.log(np.pi)
    arg = np.sqrt(
        4.0 * np.asarray(ys, dtype=float)[:, None] * u[None, :] ** 2 + beta_b**2
    )
    return logsumexp(log_w[None, :] + logcosh(arg), axis=1) - logcosh(beta_b)


def lambda_constant(y, beta_b, quad_nodes=64):
    """Lambda evaluated at the constant kernel y * 1 (closed 1-D quadrature).

    Requires y >= 0 (the Gaussian-mixture form needs a non-negative
    kernel); at y = 0 the value is exactly 0.
    """
    y = float(y)
    if y < 0:
        raise ValueError("y must be >= 0")
    if beta_b < 0:
        raise ValueError("beta_b must be >= 0")
    value, _ = refine_once(
        lambda k: float(_lambda_constant_vec([y], beta_b, k)[0]),
        quad_nodes,
        label="lambda_constant",
    )
    return value


def static_approximation(lam, beta_b, quad_nodes=64):
    """J(lam) = inf_{x >= 0} [lam x^2 - Lambda(2 lam x 1)].

    The restriction of the variational problem to constant kernels; satisfies
    -lam <= J <= -m^2 lam, with J/lam -> -m^2 as lam -> 0 and -> -1 as
    lam -> infinity.  Dense scan plus bounded golden-section refinement.
    """
    lam = float(lam)
    if lam <= 0:
        raise ValueError("lam must be positive")
    xs = np.linspace(0.0, 1.5, 601)
    vals = lam * xs**2 - _lambda_constant_vec(2.0 * lam * xs, beta_b, quad_nodes)
    i = int(np.argmin(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]

    def objective(x):
        return lam * x * x - float(_lambda_constant_vec([2.0 * lam * x], beta_b, quad_nodes)[0])

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(min(vals[i], res.fun))


def taylor_prediction(lam, beta_b):
    """Second-order prediction -p lam - 2 c0 lam^2 for inf Omega."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return -p_of(beta_b) * lam - 2.0 * c0_of(beta_b) * lam**2
