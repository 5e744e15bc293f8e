"""Command-line front end: ``qsk <subcommand>``.

Subcommands
-----------
constants    sweep the closed-form constants, with inequality verdicts (CSV)
exactdiag    diagonalize one disorder sample at small N (JSON)
annealed     path-MC estimate of F_N and beta f_N^ann with bound checks (JSON)
variational  fixed-point solve of the discretized variational problem (JSON)
static       sweep the static (constant-kernel) approximation J (CSV)
quenched     disorder study: quenched mean, moments, tails (JSON)
region       phase-diagram scan of the quenched-annealed gap bounds (CSV)
verify       run the desk-scale verification suite; nonzero exit on failure

Conventions: all outputs are deterministic functions of (options, seed) —
identical runs give byte-identical files regardless of worker count; wall
clock timings go to stderr only.  Exit codes: 0 success, 1 verification
failure, 2 usage/config error, 3 numerical-diagnostic abort (e.g. collapsed
effective sample size).
"""

import argparse
import configparser
import json
import sys
import time
import warnings

import numpy as np

from . import __version__, annealed, constants, disorder, hilbert, paths, variational
from .constants import ModelParams
from .stats import EffectiveSampleSizeWarning
from .streams import WORKERS_ENV_VAR, resolve_workers

DEFAULT_SEED = 123456789


class _UsageError(Exception):
    pass


class _GateError(Exception):
    pass


# -- option resolution -----------------------------------------------------


def _load_config(path):
    cp = configparser.ConfigParser()
    try:
        with open(path) as f:
            cp.read_file(f)
    except (OSError, configparser.Error, UnicodeDecodeError) as exc:
        raise _UsageError(f"cannot read config file {path}: {exc}") from exc
    return cp


def _resolve(args, spec, sections):
    """Merge CLI flags, config sections, and defaults (flags win).

    ``spec`` maps option name -> (type, default).  Config values are looked
    up in the given sections in order.
    """
    cp = _load_config(args.config) if getattr(args, "config", None) else None
    out = {}
    for name, (conv, default) in spec.items():
        val = getattr(args, name, None)
        if val is None and cp is not None:
            for section in sections:
                if cp.has_option(section, name):
                    raw = cp.get(section, name)
                    try:
                        val = conv(raw)
                    except ValueError as exc:
                        raise _UsageError(
                            f"config [{section}] {name} = {raw!r}: {exc}"
                        ) from exc
                    break
        if val is None:
            val = default
        out[name] = val
    return out


def _bool_opt(raw):
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _model_from(opts):
    try:
        return ModelParams.from_dimensionless(opts["n_spins"], opts["lam"],
                                              opts["beta_b"])
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "PASS" if x else "FAIL"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _meta_lines(command, seed, opts):
    echo = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(opts.items()))
    return [
        f"# qsk {__version__}",
        f"# command: {command}",
        f"# seed: {seed}",
        f"# options: {echo}",
    ]


def _write_out(args, text):
    if getattr(args, "out", None):
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(args, command, seed, opts, header, rows):
    lines = _meta_lines(command, seed, opts)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_out(args, "\n".join(lines) + "\n")


def _write_json(args, command, seed, opts, payload):
    doc = {
        "meta": {
            "tool": "qsk",
            "version": __version__,
            "command": command,
            "seed": seed,
            "options": {k: opts[k] for k in sorted(opts)},
        },
        "result": payload,
    }
    _write_out(args, json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")


def _gate_on_ess(caught):
    for w in caught:
        if issubclass(w.category, EffectiveSampleSizeWarning):
            raise _GateError(str(w.message))


# -- subcommands -----------------------------------------------------------


def cmd_constants(args):
    spec = {
        "bb_min": (float, 1e-3),
        "bb_max": (float, 1e3),
        "bb_count": (int, 200),
        "bb_scale": (str, "log"),
        "n_spins": (int, 2),
        "lam": (float, 0.1),
        "n_max": (int, 64),
        "quad_nodes": (int, 64),
    }
    opts = _resolve(args, spec, ("constants", "model"))
    if opts["bb_scale"] not in ("log", "linear"):
        raise _UsageError("bb_scale must be 'log' or 'linear'")
    if opts["bb_count"] < 0:
        raise _UsageError("bb_count must be >= 0")
    if opts["bb_count"] == 0:
        sweep = np.empty(0)
    elif opts["bb_scale"] == "log":
        if opts["bb_min"] <= 0:
            raise _UsageError("log sweep needs bb_min > 0")
        sweep = np.geomspace(opts["bb_min"], opts["bb_max"], opts["bb_count"])
    else:
        sweep = np.linspace(opts["bb_min"], opts["bb_max"], opts["bb_count"])
    chain_names = ["m_sq_positive", "m_sq_lt_p", "p_lt_m", "m_lt_one",
                   "m_lt_two_p", "two_p_lt_one_plus_p_m"]
    header = ["beta_b", "m", "p", "c0", "p_n", "g_n_over_n", "inf_g_n_over_n",
              "inf_argmin", "w_n"] + chain_names
    rows = []
    n, lam = opts["n_spins"], opts["lam"]
    for bb in sweep:
        checks = constants.moment_inequalities(bb)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inf_val, inf_arg = constants.inf_g_n_over_n(lam, bb, opts["n_max"])
            w_val = constants.w_n_of(n, lam, bb, quad_nodes=opts["quad_nodes"])
        rows.append(
            [bb, constants.m_of(bb), constants.p_of(bb), constants.c0_of(bb),
             constants.p_n_of(n, bb), constants.g_n_of(n, lam, bb) / n,
             inf_val, inf_arg, w_val] + [checks[k] for k in chain_names]
        )
    _write_csv(args, "constants", args.seed, opts, header, rows)
    return 0


def cmd_exactdiag(args):
    spec = {
        "n_spins": (int, 4),
        "lam": (float, 0.1),
        "beta_b": (float, 1.0),
        "dump_spectrum": (str, None),
    }
    opts = _resolve(args, spec, ("exactdiag", "model"))
    params = _model_from(opts)
    sample = hilbert.draw_sample(params.n_spins, args.seed)
    h = hilbert.build_hamiltonian(params, sample)
    res = hilbert.spectrum(h)
    zz = hilbert.gibbs_zz(h, params.beta, 1, 2)
    payload = {
        "params": params.to_dict(),
        "ln_z": res.ln_z,
        "beta_f_n": params.beta * res.f_n,
        "gibbs_zz_12": zz,
        "trace_abs": abs(float(np.trace(h.matrix))),
        "ground_energy": float(res.eigenvalues[0]),
        "max_energy": float(res.eigenvalues[-1]),
    }
    if opts["dump_spectrum"]:
        with open(opts["dump_spectrum"], "w") as f:
            f.write("\n".join(_fmt(float(e)) for e in res.eigenvalues) + "\n")
    _write_json(args, "exactdiag", args.seed, opts, payload)
    return 0


def cmd_annealed(args):
    spec = {
        "n_spins": (int, 4),
        "lam": (float, 0.1),
        "beta_b": (float, 1.0),
        "ensembles": (int, 200_000),
        "quad_nodes": (int, 64),
    }
    opts = _resolve(args, spec, ("annealed", "model"))
    params = _model_from(opts)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        f_hat = annealed.estimate_f_n(params, opts["ensembles"], args.seed,
                                      workers=args.workers)
    _gate_on_ess(caught)
    from .numerics import LN2, logcosh

    n, lam, bb = params.n_spins, params.lam, params.beta_b
    beta_f_ann = (lam - f_hat.value) / n - (float(logcosh(bb)) + LN2)
    lower = n * constants.p_n_of(n, bb) * lam
    g_val = constants.g_n_of(n, lam, bb)
    w_val = constants.w_n_of(n, lam, bb, quad_nodes=opts["quad_nodes"])
    payload = {
        "params": params.to_dict(),
        "f_n_hat": f_hat.to_dict(),
        "beta_f_ann": {**f_hat.to_dict(), "value": beta_f_ann,
                       "std_err": f_hat.std_err / n},
        "bounds": {"lower_n_p_n_lam": lower, "g_n": g_val, "w_n": w_val},
        "verdicts": {
            "lower_ok": bool(f_hat.value >= lower - 3 * f_hat.std_err),
            "upper_ok": bool(f_hat.value <= min(g_val, w_val) + 3 * f_hat.std_err),
        },
    }
    _write_json(args, "annealed", args.seed, opts, payload)
    return 0


def cmd_variational(args):
    spec = {
        "lam": (float, 0.1),
        "beta_b": (float, 1.0),
        "m_cells": (int, 64),
        "ensembles": (int, 200_000),
        "tol": (float, 1e-8),
        "max_iter": (int, 200),
        "quad_nodes": (int, 64),
        "with_static": (_bool_opt, True),
        "psi_out": (str, None),
    }
    opts = _resolve(args, spec, ("variational", "model"))
    lam, bb = opts["lam"], opts["beta_b"]
    if 2.0 * lam >= 1.0 and not args.allow_noncontractive:
        raise _UsageError(
            "2*lam >= 1: the iteration is not a contraction "
            "(pass --allow-noncontractive to proceed anyway)"
        )
    ens = paths.sample_ensemble(bb, opts["ensembles"], args.seed,
                                workers=args.workers)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = variational.fixed_point_solve(
            lam, bb, opts["m_cells"], ens, tol=opts["tol"],
            max_iter=opts["max_iter"],
        )
    _gate_on_ess(caught)
    p = constants.p_of(bb)
    m = constants.m_of(bb)
    inf_g = constants.inf_g_n_over_n(lam, bb)[0]
    om = report.omega_value
    mu_grid = variational.discretize_mu(opts["m_cells"], bb)
    gap = variational.omega(mu_grid.scaled(2 * lam), lam, ens).value - om.value
    taylor = variational.taylor_prediction(lam, bb)
    payload = {
        "report": report.to_dict(),
        "verdicts": {
            "converged": report.converged,
            "non_contractive": report.non_contractive,
            "ratio_bound_ok": bool(
                all(r <= 2 * lam + 0.02 for r in report.contraction_ratios)
            ),
            "omega_bracket_ok": bool(
                -inf_g - 3 * om.std_err <= om.value <= -p * lam + 3 * om.std_err
            ),
            "start_gap": gap,
            "start_gap_ok": bool(-3 * om.std_err <= gap <= 4 * lam**3 + 3 * om.std_err),
            "taylor_abs_dev": abs(om.value - taylor),
            "taylor_ok": bool(
                abs(om.value - taylor)
                <= (4 + 4 * m**3 / 3) * lam**3 + 3 * om.std_err
            ),
        },
    }
    if opts["with_static"]:
        j = variational.static_approximation(lam, bb, quad_nodes=opts["quad_nodes"])
        thresh = (p - m * m) / (2 * p * (1 - m))
        payload["static"] = {
            "j_value": j,
            "minus_p_lam": -p * lam,
            "exceeds_minus_p_lam": bool(j > -p * lam),
            "strict_regime": bool(lam < thresh),
        }
    if opts["psi_out"]:
        variational.save_grid_function(
            report.psi, opts["psi_out"],
            meta={"m_cells": opts["m_cells"], "beta_b": bb, "lam": lam,
                  "seed": args.seed},
        )
    _write_json(args, "variational", args.seed, opts, payload)
    return 0


def cmd_static(args):
    spec = {
        "beta_b": (float, 1.0),
        "lam_min": (float, 0.01),
        "lam_max": (float, 1.0),
        "lam_count": (int, 25),
        "lam_scale": (str, "log"),
        "quad_nodes": (int, 64),
    }
    opts = _resolve(args, spec, ("static", "model"))
    if opts["lam_count"] < 1:
        raise _UsageError("lam_count must be >= 1")
    if opts["lam_scale"] == "log":
        lams = np.geomspace(opts["lam_min"], opts["lam_max"], opts["lam_count"])
    elif opts["lam_scale"] == "linear":
        lams = np.linspace(opts["lam_min"], opts["lam_max"], opts["lam_count"])
    else:
        raise _UsageError("lam_scale must be 'log' or 'linear'")
    bb = opts["beta_b"]
    p = constants.p_of(bb)
    m = constants.m_of(bb)
    thresh = (p - m * m) / (2.0 * p * (1.0 - m))
    rows = []
    for lam in lams:
        j = variational.static_approximation(float(lam), bb,
                                             quad_nodes=opts["quad_nodes"])
        rows.append([float(lam), j, j / lam, -p * lam,
                     "yes" if j > -p * lam else "no",
                     "yes" if lam < thresh else "no"])
    header = ["lam", "j_value", "j_over_lam", "minus_p_lam",
              "exceeds_minus_p_lam", "below_threshold"]
    _write_csv(args, "static", args.seed, opts, header, rows)
    return 0


def cmd_quenched(args):
    spec = {
        "n_spins": (int, 5),
        "lam": (float, 0.125),
        "beta_b": (float, 1.0),
        "n_disorder": (int, 2000),
        "delta": (float, 0.25),
        "per_sample_out": (str, None),
    }
    opts = _resolve(args, spec, ("quenched", "model"))
    params = _model_from(opts)
    config = disorder.DisorderStudyConfig(
        params=params, n_disorder=opts["n_disorder"], seed=args.seed,
        delta=opts["delta"],
    )
    try:
        result = disorder.run_study(config, workers=args.workers)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    bound = disorder.concentration_bound(params.n_spins, opts["delta"],
                                         params.beta_v)
    ratio = result.second_moment_ratio
    payload = {
        "params": params.to_dict(),
        "quenched_mean": result.quenched_mean.to_dict(),
        "second_moment_ratio": ratio.to_dict(),
        "order_parameter": result.order_parameter.to_dict(),
        "tail_frequency": result.tail_frequency.to_dict(),
        "concentration_bound": bound,
        "verdicts": {
            "ratio_ge_one": bool(ratio.value >= 1.0 - 3 * ratio.std_err),
            "tail_le_bound": bool(
                result.tail_frequency.value
                <= bound + 3 * result.tail_frequency.std_err
            ),
        },
    }
    if 4 * params.lam < 1:
        payload["second_moment_theory_bound"] = disorder.second_moment_theory_bound(
            params.lam
        )
        payload["verdicts"]["ratio_le_theory"] = bool(
            ratio.value <= payload["second_moment_theory_bound"] + 3 * ratio.std_err
        )
    if opts["per_sample_out"]:
        ln_z, beta_f, op = disorder._study_arrays(
            params, opts["n_disorder"], args.seed, workers=args.workers
        )
        lines = _meta_lines("quenched.per_sample", args.seed, opts)
        lines.append("index,ln_z,beta_f,order_parameter")
        for i in range(ln_z.size):
            lines.append(f"{i},{_fmt(float(ln_z[i]))},{_fmt(float(beta_f[i]))},"
                         f"{_fmt(float(op[i]))}")
        with open(opts["per_sample_out"], "w") as f:
            f.write("\n".join(lines) + "\n")
    _write_json(args, "quenched", args.seed, opts, payload)
    return 0


def cmd_region(args):
    spec = {
        "x_min": (float, 0.05),
        "x_max": (float, 2.0),
        "x_count": (int, 100),
        "y_min": (float, 0.0),
        "y_max": (float, 2.65),
        "y_count": (int, 100),
        "n_max": (int, 64),
        "quad_nodes": (int, 64),
        "advisory_out": (str, None),
    }
    opts = _resolve(args, spec, ("region", "model"))
    xs = np.linspace(opts["x_min"], opts["x_max"], opts["x_count"])
    ys = np.linspace(opts["y_min"], opts["y_max"], opts["y_count"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        points = annealed.region_scan(xs, ys, n_max=opts["n_max"],
                                      quad_nodes=opts["quad_nodes"],
                                      workers=args.workers)
    header = ["inv_beta_v", "b_over_v", "delta_lower", "delta_upper",
              "classification"]
    rows = [[p.inv_beta_v, p.b_over_v, p.delta_lower, p.delta_upper,
             p.classification] for p in points]
    _write_csv(args, "region", args.seed, opts, header, rows)
    adv_lines = _meta_lines("region.advisory", args.seed, opts)
    adv_lines.append("# non-rigorous reference curve, not a bound")
    adv_lines.append("inv_beta_v,b_over_v_curve")
    for x in np.linspace(0.0, 1.0, 201):
        adv_lines.append(f"{_fmt(float(x))},{_fmt(annealed.advisory_curve(float(x)))}")
    adv_text = "\n".join(adv_lines) + "\n"
    if opts["advisory_out"]:
        with open(opts["advisory_out"], "w") as f:
            f.write(adv_text)
    elif getattr(args, "out", None):
        with open(args.out + ".advisory.csv", "w") as f:
            f.write(adv_text)
    else:
        sys.stdout.write(adv_text)
    return 0


# -- verify ----------------------------------------------------------------


def _check_closed_forms(seed):
    from .numerics import logcosh

    bb = np.geomspace(1e-3, 1e3, 200)
    # sqrt(2p-m)*cosh = exp(0.5*ln(2p-m) + ln cosh); cancellation-free form
    product = np.exp(0.5 * constants.log_two_p_minus_m(bb) + logcosh(bb))
    dev = float(np.abs(product - 1.0).max())
    # tie the stable form to the plain p/m floats where they are conditioned
    # (relative rounding noise of the subtraction stays below ~1e-12 there)
    cond = bb[bb <= 6.0]
    direct = 2.0 * constants.p_of(cond) - constants.m_of(cond)
    tie = float(np.abs(direct / constants.two_p_minus_m(cond) - 1.0).max())
    from scipy.optimize import minimize_scalar
    root = 1.1996786402577338
    p_at_root = constants.p_of(root)
    res = minimize_scalar(lambda x: -constants.c0_of(x), bounds=(0.5, 1.5),
                          method="bounded", options={"xatol": 1e-10})
    ok = (
        dev < 1e-10
        and tie < 1e-10
        and abs(p_at_root - 0.5) < 1e-4
        and abs(-res.fun - 0.069571391294736921) < 5e-4
        and abs(res.x - 0.9089795156301270) < 1e-3
    )
    detail = ("identity_dev=%.3e float_tie_dev=%.3e p_at_root_dev=%.3e "
              "c0_max=%.12g at %.12g"
              % (dev, tie, abs(p_at_root - 0.5), -res.fun, res.x))
    return ok, detail


def _check_moment_chain(seed):
    bad = 0
    for bb in np.geomspace(1e-3, 1e3, 200):
        bad += not all(constants.moment_inequalities(bb).values())
    corridor_bad = 0
    for lam in (0.01, 0.1, 1.0, 4.0):
        for bb in (0.3, 1.0, 3.0):
            for n in range(2, 65):
                g = constants.g_n_of(n, lam, bb)
                lo = max(0.0, lam + np.log(constants.p_n_of(n, bb)) / n)
                if not (lo - 1e-12 <= g / n <= lam + 1e-12):
                    corridor_bad += 1
    ok = bad == 0 and corridor_bad == 0
    return ok, f"chain_violations={bad} corridor_violations={corridor_bad}"


def _check_two_spin(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for _ in range(200):
        lam = float(10 ** rng.uniform(-2, 0.5))
        bb = float(10 ** rng.uniform(-1, 0.7))
        g = float(rng.standard_normal())
        params = ModelParams.from_dimensionless(2, lam, bb)
        sample = hilbert.DisorderSample(n_spins=2, couplings=np.array([g]))
        h = hilbert.build_hamiltonian(params, sample)
        evals = np.linalg.eigvalsh(params.beta * h.matrix)
        ref = hilbert.two_spin_scaled_spectrum(lam, bb, g)
        worst = max(worst, float(np.abs(evals - ref).max()))
    mc_ok = True
    mc_detail = []
    for lam, bb in ((0.15, 0.8), (0.3, 1.5)):
        params = ModelParams.from_dimensionless(2, lam, bb)
        est = annealed.annealed_free_energy(params, 20_000, seed)
        exact = hilbert.f2_annealed_exact(lam, bb)
        mc_ok = mc_ok and est.agrees_with(exact, n_sigma=3.5)
        mc_detail.append("%.3e" % abs(est.value - exact))
    ok = worst < 1e-10 and mc_ok
    return ok, "spectrum_dev=%.3e mc_devs=%s" % (worst, ",".join(mc_detail))


def _check_path_kernels(seed):
    from .stats import mean_with_err

    rng = np.random.Generator(np.random.Philox(seed + 1))
    fails = 0
    for i in range(6):
        bb = float(10 ** rng.uniform(-0.5, 0.6))
        t, tp = sorted(float(u) for u in rng.uniform(0, 1, 2))
        ens = paths.sample_ensemble(bb, 20_000, seed + i)
        est = mean_with_err(ens.sigma_matrix(t) * ens.sigma_matrix(tp))
        if not est.agrees_with(constants.mu(t, tp, bb), n_sigma=3.5):
            fails += 1
    for g, bb, s in ((0.7, 0.9, 1), (-0.4, 1.2, -1)):
        jumps, counts = paths.sample_unconditioned(bb, 40_000, seed + 17)
        tot = paths.signed_totals(jumps, counts)
        keep = 1 - 2 * (counts % 2) == s
        est = mean_with_err(np.exp(bb + g * tot) * keep)  # beta = 1
        if not est.agrees_with(paths.laplace_conditional(g, 1.0, bb, s),
                               n_sigma=3.5):
            fails += 1
    for n in (2, 4):
        params = ModelParams.from_dimensionless(n, 0.1, 1.0)
        est = annealed.mean_p_n(params, 20_000, seed + n)
        if not est.agrees_with(constants.p_n_of(n, 1.0), n_sigma=3.5):
            fails += 1
    return fails == 0, f"failed_comparisons={fails}"


def _check_f_bounds(seed):
    fails = 0
    lam, bb = 0.125, 1.0
    for n in (2, 4):
        params = ModelParams.from_dimensionless(n, lam, bb)
        f_hat = annealed.estimate_f_n(params, 20_000, seed + n)
        lower = n * constants.p_n_of(n, bb) * lam
        upper = min(constants.g_n_of(n, lam, bb),
                    constants.w_n_of(n, lam, bb))
        if not (lower - 3.5 * f_hat.std_err <= f_hat.value
                <= upper + 3.5 * f_hat.std_err):
            fails += 1
    return fails == 0, f"violations={fails}"


def _check_fixed_point(seed):
    lam, bb, m_cells = 0.1, 1.0, 32
    ens = paths.sample_ensemble(bb, 20_000, seed)
    report = variational.fixed_point_solve(lam, bb, m_cells, ens)
    om = report.omega_value
    p = constants.p_of(bb)
    m = constants.m_of(bb)
    upper_inf = annealed.delta_infinity_bounds(lam, bb)[1]
    mu_grid = variational.discretize_mu(m_cells, bb)
    om_start = variational.omega(mu_grid.scaled(2 * lam), lam, ens)
    gap = om_start.value - om.value
    taylor = variational.taylor_prediction(lam, bb)
    checks = {
        "converged": report.converged,
        "ratios": all(r <= 0.22 for r in report.contraction_ratios),
        "bracket": (-upper_inf - 3.5 * om.std_err <= om.value
                    <= -p * lam + 3.5 * om.std_err),
        "gap": -3.5 * om.std_err <= gap <= 4 * lam**3 + 3.5 * om.std_err,
        "taylor": abs(om.value - taylor)
        <= (4 + 4 * m**3 / 3) * lam**3 + 3.5 * om.std_err,
        "psi_bounds": bool(
            np.all(report.psi.values
                   <= 2 * lam + 3.5 * report.psi_std_err.values + 1e-12)
            and np.all(report.psi.values
                       >= 2 * lam * mu_grid.values
                       - 3.5 * report.psi_std_err.values - 1e-12)
        ),
    }
    ok = all(checks.values())
    return ok, " ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items())


def _check_static(seed):
    fails = 0
    for bb in (0.5, 1.0, 3.0):
        p = constants.p_of(bb)
        m = constants.m_of(bb)
        lam_star = 0.5 * (p - m * m) / (2 * p * (1 - m))
        j = variational.static_approximation(lam_star, bb)
        if not j > -p * lam_star:
            fails += 1
    bb = 0.5
    m = constants.m_of(bb)
    j_small = variational.static_approximation(1e-3, bb)
    if abs(j_small / 1e-3 + m * m) > 0.02 * m * m:
        fails += 1
    j_large = variational.static_approximation(20.0, bb)
    if abs(j_large / 20.0 + 1.0) > 0.02:
        fails += 1
    return fails == 0, f"violations={fails}"


def _check_disorder(seed):
    lam, bb, n = 0.125, 1.0, 5
    params = ModelParams.from_dimensionless(n, lam, bb)
    delta = 0.3 * params.beta_v / np.sqrt(n)
    config = disorder.DisorderStudyConfig(params=params, n_disorder=400,
                                          seed=seed, delta=delta)
    result = disorder.run_study(config)
    c = disorder.second_moment_theory_bound(lam)
    ratio = result.second_moment_ratio
    pz, pz_floor = disorder.paley_zygmund_witness(params, 400, seed)
    bound = disorder.concentration_bound(n, delta, params.beta_v)
    trend = disorder.order_parameter_trend(params, (3, 4, 5), 300, seed)
    trend_ok = all(
        trend[k + 1].value < trend[k].value
        + 3.5 * np.hypot(trend[k].std_err, trend[k + 1].std_err)
        for k in range(len(trend) - 1)
    )
    checks = {
        "ratio_ge_1": ratio.value >= 1.0 - 3.5 * ratio.std_err,
        "ratio_le_c": ratio.value <= c + 3.5 * ratio.std_err,
        "pz": pz.value >= pz_floor - 3.5 * pz.std_err,
        "tail": result.tail_frequency.value
        <= bound + 3.5 * result.tail_frequency.std_err,
        "trend": trend_ok,
    }
    return all(checks.values()), " ".join(
        f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items()
    )


def _check_second_moment(seed):
    params = ModelParams.from_dimensionless(3, 0.1, 1.0)
    est = disorder.generalized_second_moment(params, 0.1, 4000, seed)
    est0, diag = disorder.generalized_second_moment(
        params, -params.lam, 500, seed, return_diagnostics=True
    )
    checks = {
        "ratio_le_1": est.value <= 1.0 + 3.5 * est.std_err,
        "trivial_coupling": diag["coupling_max_dev"] == 0.0,
    }
    return all(checks.values()), " ".join(
        f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items()
    ) + " ratio=%.6g" % est.value


def _check_region(seed):
    from .numerics import logcosh

    xs = np.linspace(0.2, 2.0, 30)
    ys = np.linspace(0.0, 2.6, 30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        points = annealed.region_scan(xs, ys, n_max=64)
    k_by_x = {float(x): annealed.k_of_lambda(1.0 / (4.0 * x * x)) for x in xs}
    bad = 0
    edge_bad = 0
    for pt in points:
        x, y = pt.inv_beta_v, pt.b_over_v
        if x > 1.0:
            expect = "zero"
        elif k_by_x[x] - float(logcosh(y / x)) > 0.0:
            expect = "positive"
        else:
            expect = "unresolved"
        if pt.classification != expect:
            bad += 1
        if y == 0.0 and x < 1.0 and pt.classification != "positive":
            edge_bad += 1
    return bad == 0 and edge_bad == 0, f"mislabels={bad} edge_mislabels={edge_bad}"


VERIFY_CHECKS = (
    ("closed_forms", _check_closed_forms),
    ("moment_chain", _check_moment_chain),
    ("two_spin", _check_two_spin),
    ("path_kernels", _check_path_kernels),
    ("f_bounds", _check_f_bounds),
    ("fixed_point", _check_fixed_point),
    ("static", _check_static),
    ("disorder", _check_disorder),
    ("second_moment", _check_second_moment),
    ("region", _check_region),
)


def cmd_verify(args):
    only = set(args.only or [])
    unknown = only - {name for name, _ in VERIFY_CHECKS}
    if unknown:
        raise _UsageError(f"unknown check(s): {', '.join(sorted(unknown))}")
    lines = _meta_lines("verify", args.seed, {"only": ",".join(sorted(only)) or "all"})
    failures = 0
    for name, fn in VERIFY_CHECKS:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ok, detail = fn(args.seed)
        dt = time.perf_counter() - t0
        print(f"[{name}] {dt:.2f}s", file=sys.stderr)
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
        failures += not ok
    lines.append(f"{'PASS' if failures == 0 else 'FAIL'} overall failures={failures}")
    _write_out(args, "\n".join(lines) + "\n")
    return 1 if failures else 0


# -- parser ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qsk",
        description="Weak-disorder laboratory for the transverse-field SK model",
    )
    parser.add_argument("--version", action="version", version=f"qsk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default: ${WORKERS_ENV_VAR} or 1)")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--config", default=None, help="INI-style config file")
        for flag, kwargs in flags:
            p.add_argument(flag, **kwargs)
        p.set_defaults(fn=fn)
        return p

    f = float
    add("constants", cmd_constants, [
        ("--bb-min", dict(type=f)), ("--bb-max", dict(type=f)),
        ("--bb-count", dict(type=int)), ("--bb-scale", dict()),
        ("--n-spins", dict(type=int)), ("--lam", dict(type=f)),
        ("--n-max", dict(type=int)), ("--quad-nodes", dict(type=int)),
    ])
    add("exactdiag", cmd_exactdiag, [
        ("--n-spins", dict(type=int)), ("--lam", dict(type=f)),
        ("--beta-b", dict(type=f)), ("--dump-spectrum", dict()),
    ])
    add("annealed", cmd_annealed, [
        ("--n-spins", dict(type=int)), ("--lam", dict(type=f)),
        ("--beta-b", dict(type=f)), ("--ensembles", dict(type=int)),
        ("--quad-nodes", dict(type=int)),
    ])
    add("variational", cmd_variational, [
        ("--lam", dict(type=f)), ("--beta-b", dict(type=f)),
        ("--m-cells", dict(type=int)), ("--ensembles", dict(type=int)),
        ("--tol", dict(type=f)), ("--max-iter", dict(type=int)),
        ("--quad-nodes", dict(type=int)),
        ("--with-static", dict(type=_bool_opt)),
        ("--allow-noncontractive", dict(action="store_true")),
        ("--psi-out", dict()),
    ])
    add("static", cmd_static, [
        ("--beta-b", dict(type=f)), ("--lam-min", dict(type=f)),
        ("--lam-max", dict(type=f)), ("--lam-count", dict(type=int)),
        ("--lam-scale", dict()), ("--quad-nodes", dict(type=int)),
    ])
    add("quenched", cmd_quenched, [
        ("--n-spins", dict(type=int)), ("--lam", dict(type=f)),
        ("--beta-b", dict(type=f)), ("--n-disorder", dict(type=int)),
        ("--delta", dict(type=f)), ("--per-sample-out", dict()),
    ])
    add("region", cmd_region, [
        ("--x-min", dict(type=f)), ("--x-max", dict(type=f)),
        ("--x-count", dict(type=int)), ("--y-min", dict(type=f)),
        ("--y-max", dict(type=f)), ("--y-count", dict(type=int)),
        ("--n-max", dict(type=int)), ("--quad-nodes", dict(type=int)),
        ("--advisory-out", dict()),
    ])
    add("verify", cmd_verify, [
        ("--only", dict(action="append",
                        help="run only the named check (repeatable)")),
    ])
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = resolve_workers(None)
    try:
        return args.fn(args)
    except _UsageError as exc:
        print(f"qsk: error: {exc}", file=sys.stderr)
        return 2
    except _GateError as exc:
        print(f"qsk: numerical gate tripped: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
