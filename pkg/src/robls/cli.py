"""Command-line front end.

Subcommands: construct, fit, sample, sweep, mse, tailcheck, theorem1.
Tabular output is CSV (header row first) or JSON; every CSV ends with a
``# seed=... config_sha256=... version=...`` footer line. A JSON file passed
with ``--config`` supplies defaults for any flag; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time

import numpy as np

from . import __version__
from .dist import (
    NormalCore,
    StudentTCore,
    TailedDistribution,
    UniformCore,
    construct_direct,
    construct_from_core_mass,
    dist_from_json,
)
from .exceptions import RoblsError
from .experiments import (
    MODEL_NAMES,
    SCENARIOS,
    ThresholdSweepSpec,
    check_against_reference,
    mse_study,
    scenario,
    standard_config,
    theorem1_convergence,
    threshold_sweep,
    violation_config,
)
from .infer import mle_fit, posterior_grid, posterior_summaries
from .lrv import estimate_tail_index, tail_of

logger = logging.getLogger("robls")


class CliError(Exception):
    pass


def _parse_model(text):
    text = text.strip()
    if text.startswith("{"):
        return dist_from_json(json.loads(text))
    return dist_from_json(text)


def _parse_floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _parse_range(text):
    """``start:stop:step`` (inclusive stop) or a comma list."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    return _parse_floats(text)


def read_data_csv(path):
    """Single-column CSV; optional header; ``#`` starts a comment line."""
    values = []
    seen_row = False
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if seen_row:
                    raise CliError(f"{path}:{lineno + 1}: not a number: {row[0]!r}") from None
            seen_row = True
    return values


def _data(args):
    sources = [s for s in (args.data, args.data_file) if s is not None]
    if len(sources) != 1:
        raise CliError("give exactly one data source: --data or --data-file")
    return _parse_floats(args.data) if args.data is not None else read_data_csv(args.data_file)


def _footer(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]
    seed = getattr(args, "seed", None)
    return f"# seed={seed} config_sha256={digest} version={__version__}"


def _emit(args, header, rows, payload=None):
    """Write rows as CSV (with footer) or as JSON to ``--output`` or stdout."""
    if args.format == "json":
        text = json.dumps(payload if payload is not None else [dict(zip(header, r)) for r in rows],
                          indent=2, default=_json_default) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        buf.write(_footer(args) + "\n")
        text = buf.getvalue()
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _core_from_args(args):
    if args.core == "normal":
        return NormalCore(args.scale if args.scale is not None else 1.0)
    if args.core == "student-t":
        return StudentTCore(args.df, args.scale if args.scale is not None else 1.0)
    return UniformCore(args.half_width)


def cmd_construct(args):
    core = _core_from_args(args)
    if args.q is not None and (args.alpha is not None or args.beta is not None):
        raise CliError("give either --q or --alpha/--beta, not both")
    if args.q is not None:
        d = construct_from_core_mass(core, args.q)
    elif args.alpha is not None and args.beta is not None:
        d = construct_direct(core, args.alpha, args.beta)
    else:
        raise CliError("give --q, or both --alpha and --beta")
    out = {"core": core.label, "alpha": d.alpha, "beta": d.beta, "K": d.kappa, "q": d.q,
           "tail_mass": d.tail_mass}
    if args.format == "json":
        sys.stdout.write(json.dumps(out, indent=2) + "\n")
    else:
        for k, v in out.items():
            sys.stdout.write(f"{k}={v:.10g}\n" if isinstance(v, float) else f"{k}={v}\n")
    return 0


def cmd_fit(args):
    family = _parse_model(args.model)
    x = _data(args)
    if args.estimator == "mle":
        r = mle_fit(family, x, tolerance=args.tol)
        out = {"estimator": "mle", "mu": r.mu_hat, "sigma": r.sigma_hat,
               "log_likelihood": r.log_likelihood_at_max, "iterations": r.iterations,
               "converged": r.converged}
    else:
        g = posterior_grid(family, x)
        s = posterior_summaries(g, args.level)
        out = {"estimator": "posterior-median", "mu": s["mu_median"], "sigma": s["sigma_median"],
               "level": s["level"], "mu_interval": s["mu_interval"], "sigma_interval": s["sigma_interval"],
               "log_marginal": g.log_marginal, "warnings": list(g.warnings)}
        if args.grid_csv:
            g.to_csv(args.grid_csv)
    sys.stdout.write(json.dumps(out, indent=2, default=_json_default) + "\n")
    return 0


def cmd_sample(args):
    if args.seed is None:
        raise CliError("sample needs --seed")
    family = _parse_model(args.model)
    draws = family.locscale(args.mu, args.sigma).sample(args.seed, args.n)
    _emit(args, ["x"], [[repr(float(v))] for v in draws], payload={"x": draws.tolist()})
    return 0


def cmd_sweep(args):
    spec = ThresholdSweepSpec(
        x_k=tuple(_parse_floats(args.x_k)) if args.x_k else ThresholdSweepSpec.x_k,
        omega_values=tuple(_parse_range(args.omega)),
        models=tuple(m.strip() for m in args.models.split(",")),
        estimator=args.estimator.replace("-", "_"),
    )
    rows = threshold_sweep(spec)
    header = ["omega", "model", "mu", "sigma", "loglik", "converged", "error"]
    _emit(args, header, [[r.omega, r.model, r.mu, r.sigma, r.loglik, r.converged, r.error] for r in rows])
    return 0


def cmd_mse(args):
    if args.full:
        reps, names = 25_000, list(SCENARIOS)
    else:
        reps = args.reps
        names = [s.strip() for s in args.scenario.split(",")] if args.scenario else list(SCENARIOS)
    models = tuple(m.strip() for m in args.models.split(","))
    t0 = time.perf_counter()
    report = mse_study([scenario(s, reps, args.seed, args.n) for s in names], models)
    logger.info("mse study: %.1f s", time.perf_counter() - t0)
    checks = {(m, s, q): (ref, tol, ok) for m, s, q, _, ref, tol, ok in check_against_reference(report)}
    rows = []
    for c in report.cells:
        for qty, val, se in (("mu", c.mse_mu, c.se_mu), ("sigma", c.mse_sigma, c.se_sigma)):
            ref, tol, ok = checks.get((c.model, c.scenario, qty), (math.nan, math.nan, ""))
            rows.append([c.model, c.scenario, qty, val, se, ref, tol, ok, c.replications, c.failed])
    header = ["model", "scenario", "parameter", "mse", "mc_se", "reference", "tolerance", "within_tolerance",
              "replications", "failed"]
    _emit(args, header, rows, payload={"cells": report.rows(), "ok": report.ok})
    if args.full or args.tables:
        _print_tables(report, models, names, args.n)
    return 0 if report.ok else 1


def _print_tables(report, models, names, n):
    for qty in ("mu", "sigma"):
        sys.stderr.write(f"\nMSE of the MLE of {qty} (n={n}, {report.cells[0].replications} replications)\n")
        sys.stderr.write("model".ljust(14) + "".join(s.rjust(24) for s in names) + "\n")
        for m in models:
            vals = [getattr(report.cell(m, s), f"mse_{qty}") for s in names]
            sys.stderr.write(m.ljust(14) + "".join(f"{v:24.4f}" for v in vals) + "\n")


def cmd_tailcheck(args):
    family = _parse_model(args.model)
    if not isinstance(family, TailedDistribution):
        raise CliError("tailcheck needs a log-Pareto-tailed model")
    start = max(args.z_start, family.alpha * 1.0001)
    grid = np.geomspace(start, args.z_stop, args.num)
    diag = estimate_tail_index(tail_of(family), grid, rho_probe=family.beta)
    rows = [[z, nu, r, abs(r - 1.0)] for z, nu, r in diag.probe_points]
    logger.info("rho_estimate=%.12g beta=%.12g max_ratio_deviation=%.3g",
                diag.rho_estimate, family.beta, diag.max_ratio_deviation)
    _emit(args, ["z", "nu", "ratio", "deviation"], rows,
          payload={"rho_estimate": diag.rho_estimate, "beta": family.beta,
                   "max_ratio_deviation": diag.max_ratio_deviation,
                   "probe_points": [list(p) for p in diag.probe_points]})
    return 0


def cmd_theorem1(args):
    family = _parse_model(args.model)
    cfg = standard_config() if args.config_name == "standard" else violation_config()
    report = theorem1_convergence(cfg, _parse_range(args.omega), family)
    header = ["omega", "marginal_ratio", "ratio_gap", "sup_density_gap", "l1_distance",
              "sup_likelihood_gap", "mu_gap", "sigma_gap", "sigma_ratio"]
    rows = [[d[h] for h in header] for d in report.as_dicts()]
    _emit(args, header, rows, payload={"rows": report.as_dicts(), "decreasing": report.decreasing()})
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_output(p, default_format="csv"):
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=default_format)


def build_parser():
    parser = argparse.ArgumentParser(prog="robls", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults (flags win on conflict)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="build a log-Pareto-tailed distribution")
    p.add_argument("--core", choices=("normal", "student-t", "uniform"), default="normal")
    p.add_argument("--df", type=float, default=10.0)
    p.add_argument("--scale", type=float)
    p.add_argument("--half-width", type=float, default=1.0)
    p.add_argument("--q", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_construct)

    model_help = "model name (" + ", ".join(MODEL_NAMES) + ") or distribution JSON"

    p = sub.add_parser("fit", help="estimate (mu, sigma)")
    p.add_argument("--model", default="log-pareto", help=model_help)
    p.add_argument("--data", help="comma-separated observations")
    p.add_argument("--data-file", help="single-column CSV of observations")
    p.add_argument("--estimator", choices=("mle", "posterior-median"), default="mle")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--grid-csv", help="also write the posterior grid (mu, sigma, density)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw by inverse transform")
    p.add_argument("--model", default="log-pareto", help=model_help)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int)
    _add_output(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="move one observation through omega")
    p.add_argument("--models", default=",".join(MODEL_NAMES))
    p.add_argument("--omega", default="0:100:1", help="start:stop:step or comma list")
    p.add_argument("--x-k", help="nonoutlying observations (default -10..10)")
    p.add_argument("--estimator", choices=("mle", "posterior-median"), default="mle")
    _add_output(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mse", help="Monte-Carlo MSE study")
    p.add_argument("--scenario", help="comma list of " + ", ".join(SCENARIOS) + " (default: all)")
    p.add_argument("--models", default=",".join(MODEL_NAMES))
    p.add_argument("--reps", type=int, default=5000)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--full", action="store_true", help="25,000 replications of all three scenarios")
    p.add_argument("--tables", action="store_true", help="print the model x scenario tables to stderr")
    _add_output(p)
    p.set_defaults(func=cmd_mse)

    p = sub.add_parser("tailcheck", help="log-regular-variation diagnostics of z*f(z)")
    p.add_argument("--model", default="log-pareto", help=model_help)
    p.add_argument("--z-start", type=float, default=1e3)
    p.add_argument("--z-stop", type=float, default=1e30)
    p.add_argument("--num", type=int, default=10)
    _add_output(p)
    p.set_defaults(func=cmd_tailcheck)

    p = sub.add_parser("theorem1", help="convergence of x_n inference to x_k inference")
    p.add_argument("--model", default="log-pareto", help=model_help)
    p.add_argument("--config-name", choices=("standard", "violation"), default="standard")
    p.add_argument("--omega", default="100,1000,10000,100000")
    _add_output(p)
    p.set_defaults(func=cmd_theorem1)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config) as fh:
        cfg = json.load(fh)
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            valid = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in valid})


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"robls: cannot read config: {exc}\n")
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RoblsError, CliError) as exc:
        sys.stderr.write(f"robls {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
