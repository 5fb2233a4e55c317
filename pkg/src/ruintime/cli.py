"""Command-line interface.

Subcommands: density, prob, table1, simulate, verify, moments.  Output is
CSV (default) or a single JSON object; every record echoes its parameters.

Exit codes: 0 success, 1 check failure, 2 usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from ._accel import resolve_backend, set_threads
from .convolve import SingularityError, TruncationError
from .density import DensityQuery
from .model import (DensityGrid, Explicit, Gamma, MixedExponential, ModelError, ModelParams, NetProfitWarning,
                    Ordinary, SeriesConfig, Stationary, Tabulated, moments, stationary_mixture, validate)
from .montecarlo import SimConfig, simulate
from .quadrature import NoRootError, QuadratureError, adjustment_coefficient, lundberg_ultimate, ruin_prob, ruin_prob_curve, tabulate_density
from .specfun import ConvergenceError
from .verify import CHECKS, INJECT_CHOICES, run_checks

SCHEMA_VERSION = "1.0"
MAX_GRID_POINTS = 10_000_000

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# four-decimal reference values: rows t = 20..100, columns u = 0, 10, 20 (ordinary, stationary)
TABLE1_TIMES = (20.0, 40.0, 60.0, 80.0, 100.0)
TABLE1_U = (0.0, 10.0, 20.0)
TABLE1_REFERENCE = {
    20.0: (0.7973, 0.8463, 0.0457, 0.0509, 0.0009, 0.0010),
    40.0: (0.8332, 0.8735, 0.1008, 0.1082, 0.0060, 0.0066),
    60.0: (0.8481, 0.8848, 0.1387, 0.1469, 0.0138, 0.0148),
    80.0: (0.8564, 0.8912, 0.1651, 0.1737, 0.0218, 0.0232),
    100.0: (0.8618, 0.8952, 0.1842, 0.1930, 0.0292, 0.0309),
}
TABLE1_COLUMNS = ("t", "psi_0", "psi_e_0", "psi_10", "psi_e_10", "psi_20", "psi_e_20")
TABLE1_TOLERANCE = 5e-5

NUMERIC_ERRORS = (ConvergenceError, TruncationError, QuadratureError, NoRootError, SingularityError,
                  FloatingPointError, OverflowError)


class UsageError(Exception):
    """Bad flag values detected after parsing (exit code 2)."""


# -- argument parsing --------------------------------------------------------------


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model")
    g.add_argument("--u", type=float, default=0.0, help="initial surplus (default 0)")
    g.add_argument("--c", type=float, default=1.1, help="premium rate (default 1.1)")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="exponential claim-size rate (default 1)")
    g.add_argument("--family", choices=("gamma", "mixedexp", "tabulated"), default="gamma")
    g.add_argument("--shape", type=float, default=2.0, help="gamma shape (default 2)")
    g.add_argument("--rate", type=float, default=2.0, help="gamma rate (default 2)")
    g.add_argument("--p", type=float, help="mixed exponential weight on the alpha component")
    g.add_argument("--alpha", type=float, help="mixed exponential slow rate")
    g.add_argument("--beta", type=float, help="mixed exponential fast rate")
    g.add_argument("--density-file", help="CSV of t,value for --family tabulated")
    g.add_argument("--delay", choices=("ordinary", "stationary", "file"), default="ordinary")
    g.add_argument("--delay-file", help="CSV of t,value for --delay file")
    n = p.add_argument_group("numerics")
    n.add_argument("--tol", type=float, default=1e-12, help="series truncation tolerance")
    n.add_argument("--quad-tol", type=float, default=1e-8, help="quadrature tolerance")
    n.add_argument("--threads", type=int, help="worker threads (1 gives bitwise reproducibility)")
    n.add_argument("--backend", choices=("numba", "numpy"), help="kernel backend (default: numba if available)")
    o = p.add_argument_group("output")
    o.add_argument("--out", choices=("csv", "json"), default="csv")
    o.add_argument("--output", help="output path (default standard output)")
    return p


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="ruintime", description="Ruin-time densities and finite-time ruin probabilities.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("density", parents=[common], help="ruin-time density on a grid")
    d.add_argument("--t-max", type=float, required=True)
    d.add_argument("--dt", type=float, default=0.1)

    p = sub.add_parser("prob", parents=[common], help="finite-time ruin probability psi(u, t)")
    p.add_argument("--t", type=float, required=True)

    t = sub.add_parser("table1", parents=[common], help="ruin probabilities for u in {0,10,20}, t in {20,..,100}")
    t.add_argument("--check", action="store_true", help="compare with the reference values; exit 1 on mismatch")

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo ruin-time histogram")
    s.add_argument("--paths", type=int, default=100_000)
    s.add_argument("--horizon", type=float, default=20.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--bin-width", type=float, default=1.0)

    v = sub.add_parser("verify", parents=[common], help="identity and cross-path checks")
    v.add_argument("--list", action="store_true", help="list check names and exit")
    v.add_argument("--only", action="append", choices=sorted(CHECKS), help="run only this check (repeatable)")
    v.add_argument("--inject-error", action="append", choices=INJECT_CHOICES, default=[],
                   help="perturb an ingredient to exercise the failure path")

    sub.add_parser("moments", parents=[common], help="moments, net profit and Lundberg quantities")
    return parser


# -- model construction -----------------------------------------------------------


def read_density_csv(path):
    """Two-column CSV ``t,value`` with optional header and uniform ``t`` spacing."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError):
        raise UsageError(f"{path}: expected two numeric columns t,value") from None
    if data.shape[0] < 2:
        raise UsageError(f"{path}: need at least two rows")
    t, v = data[:, 0], data[:, 1]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise UsageError(f"{path}: t spacing must be uniform and increasing")
    try:
        return DensityGrid(float(t[0]), float(dt), v)
    except ModelError as exc:
        raise UsageError(f"{path}: {exc}") from None


def build_family(args):
    if args.family == "gamma":
        return Gamma(args.shape, args.rate)
    if args.family == "mixedexp":
        missing = [f"--{k}" for k in ("p", "alpha", "beta") if getattr(args, k) is None]
        if missing:
            raise UsageError(f"--family mixedexp needs {', '.join(missing)}")
        return MixedExponential(args.p, args.alpha, args.beta)
    if not args.density_file:
        raise UsageError("--family tabulated needs --density-file")
    return Tabulated(read_density_csv(args.density_file))


def build_delay(args):
    if args.delay == "ordinary":
        return Ordinary()
    if args.delay == "stationary":
        return Stationary()
    if not args.delay_file:
        raise UsageError("--delay file needs --delay-file")
    return Explicit(read_density_csv(args.delay_file))


def build_query(args, u=None):
    params = ModelParams(args.u if u is None else u, args.c, args.lam)
    family = build_family(args)
    delay = build_delay(args)
    model = validate(params, family, delay)
    if not (args.tol > 0 and math.isfinite(args.tol)):
        raise UsageError("--tol must be positive")
    cfg = SeriesConfig(tol=args.tol)
    return DensityQuery(params, family, delay, cfg), list(model.warnings)


def _check_quad_tol(args):
    if not (args.quad_tol > 0 and math.isfinite(args.quad_tol)):
        raise UsageError("quad-tol must be positive")


# -- output ---------------------------------------------------------------------------


def echo_parameters(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def render_csv(params, header, rows, warn=(), meta=None):
    buf = io.StringIO()
    for k, v in params.items():
        buf.write(f"# {k}={_fmt(v) if v is not None else ''}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={_fmt(v)}\n")
    for w in warn:
        buf.write(f"# warning: {w}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def render_json(command, params, results, warn=()):
    record = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "parameters": params,
        "results": results,
        "warnings": list(warn),
    }
    return json.dumps(_jsonable(record), indent=2, allow_nan=False) + "\n"


def emit(args, text):
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands ------------------------------------------------------------------------


def cmd_density(args):
    if not (math.isfinite(args.t_max) and args.t_max > 0):
        raise UsageError("t-max must be positive")
    if not (math.isfinite(args.dt) and args.dt > 0):
        raise UsageError("dt must be positive")
    if args.dt > args.t_max:
        raise UsageError("dt must not exceed t-max")
    if args.t_max / args.dt > MAX_GRID_POINTS:
        raise UsageError(f"grid of {args.t_max / args.dt:.3g} points exceeds the {MAX_GRID_POINTS:g} limit")
    q, warn = build_query(args)
    grid = tabulate_density(q, args.t_max, args.dt, args.backend)
    t = grid.times
    params = echo_parameters(args)
    if args.out == "json":
        return EXIT_OK, render_json("density", params, {"t": t, "density": grid.values}, warn)
    return EXIT_OK, render_csv(params, ("t", "density"), zip(t, grid.values), warn)


def cmd_prob(args):
    if not (math.isfinite(args.t) and args.t >= 0):
        raise UsageError("t must be finite and >= 0")
    _check_quad_tol(args)
    q, warn = build_query(args)
    r = ruin_prob(q, args.t, args.quad_tol, args.backend)
    params = echo_parameters(args)
    res = {"t": args.t, "psi": r.value, "abs_error_estimate": r.abs_error_estimate, "evaluations": r.evaluations}
    if args.out == "json":
        return EXIT_OK, render_json("prob", params, res, warn)
    return EXIT_OK, render_csv(params, tuple(res), [tuple(res.values())], warn)


def table1_values(args):
    """``{t: [psi_0, psi_e_0, ...]}`` and matching error estimates, from the gamma model in ``args``."""
    family = Gamma(args.shape, args.rate)
    values = {t: [] for t in TABLE1_TIMES}
    errors = {t: [] for t in TABLE1_TIMES}
    warn = []
    for u in TABLE1_U:
        for delay in (Ordinary(), Stationary()):
            params = ModelParams(u, args.c, args.lam)
            model = validate(params, family, delay)
            warn.extend(w for w in model.warnings if w not in warn)
            q = DensityQuery(params, family, delay, SeriesConfig(tol=args.tol))
            for t, r in zip(TABLE1_TIMES, ruin_prob_curve(q, TABLE1_TIMES, args.quad_tol, args.backend)):
                values[t].append(r.value)
                errors[t].append(r.abs_error_estimate)
    return values, errors, warn


def check_table1(values, errors, quad_tol, tolerance=TABLE1_TOLERANCE):
    """Cells that fail: deviation above ``tolerance`` or accuracy not certified to it."""
    failures = []
    for t in TABLE1_TIMES:
        for col, (v, e, ref) in enumerate(zip(values[t], errors[t], TABLE1_REFERENCE[t])):
            name = f"{TABLE1_COLUMNS[col + 1]}(t={t:g})"
            dev = abs(v - ref)
            if dev > tolerance:
                failures.append(f"{name}: {v:.7f} deviates from {ref} by {dev:.2e}")
            elif max(quad_tol, e) > tolerance:
                failures.append(f"{name}: tolerance too loose (quad-tol {quad_tol:g}, error estimate {e:.2e} "
                                f"cannot certify {tolerance:g})")
    return failures


def cmd_table1(args):
    _check_quad_tol(args)
    values, errors, warn = table1_values(args)
    params = echo_parameters(args)
    failures = check_table1(values, errors, args.quad_tol) if args.check else []
    for f in failures:
        print(f"table1 check: {f}", file=sys.stderr)
    code = EXIT_CHECK if failures else EXIT_OK
    rows = [(t, *values[t]) for t in TABLE1_TIMES]
    if args.out == "json":
        res = {"columns": list(TABLE1_COLUMNS), "rows": rows,
               "abs_error_estimates": [errors[t] for t in TABLE1_TIMES]}
        if args.check:
            res["check"] = {"passed": not failures, "failures": failures, "tolerance": TABLE1_TOLERANCE,
                            "reference": [[t, *TABLE1_REFERENCE[t]] for t in TABLE1_TIMES]}
        return code, render_json("table1", params, res, warn)
    return code, render_csv(params, TABLE1_COLUMNS, rows, warn)


def cmd_simulate(args):
    if args.paths < 1:
        raise UsageError("paths must be >= 1")
    if args.threads is not None and args.threads < 1:
        raise UsageError("threads must be >= 1")
    params = ModelParams(args.u, args.c, args.lam)
    family = build_family(args)
    delay = build_delay(args)
    model = validate(params, family, delay)
    sim = SimConfig(args.paths, args.horizon, args.seed, args.bin_width)
    res = simulate(params, family, delay, sim, args.backend, args.threads)
    echo = echo_parameters(args)
    if args.out == "json":
        return EXIT_OK, render_json("simulate", echo, res.to_dict(), model.warnings)
    edges = res.bin_edges
    cum = np.cumsum(res.counts) / res.n_paths
    cum_se = np.sqrt(cum * (1 - cum) / res.n_paths)
    rows = zip(edges[:-1], edges[1:], res.counts, res.counts / res.n_paths, res.std_errors, cum, cum_se)
    meta = {"rng": res.rng, "backend": res.backend, "ruined_count": res.ruined_count,
            "survived_count": res.survived_count}
    header = ("bin_lo", "bin_hi", "count", "frequency", "std_error", "ruin_frequency", "ruin_frequency_se")
    return EXIT_OK, render_csv(echo, header, rows, model.warnings, meta)


def cmd_verify(args):
    params = echo_parameters(args)
    if args.list:
        names = list(CHECKS)
        if args.out == "json":
            return EXIT_OK, render_json("verify", params, {"checks": names})
        return EXIT_OK, render_csv(params, ("check",), [(n,) for n in names])
    results = run_checks(args.only, inject=tuple(args.inject_error))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}", file=sys.stderr)
    code = EXIT_OK if all(r.passed for r in results) else EXIT_CHECK
    if args.out == "json":
        res = {"checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]}
        return code, render_json("verify", params, res)
    return code, render_csv(params, ("check", "passed", "detail"), [(r.name, r.passed, r.detail) for r in results])


def cmd_moments(args):
    params = ModelParams(args.u, args.c, args.lam)
    family = build_family(args)
    delay = build_delay(args)
    model = validate(params, family, delay)
    mean, var = moments(family)
    res = {"mean_T": mean, "var_T": var, "mean_claim": 1.0 / args.lam,
           "loading": args.c * args.lam * mean - 1.0, "net_profit": model.net_profit}
    if isinstance(delay, Stationary):
        # E[T0] = E[T^2] / (2 E[T]) and E[T0^2] = E[T^3] / (3 E[T]) for the equilibrium law
        m2 = var + mean**2
        res["mean_T0"] = m2 / (2 * mean)
        if isinstance(family, Gamma):
            a, b = family.shape, family.rate
            m3 = a * (a + 1) * (a + 2) / b**3
            res["var_T0"] = m3 / (3 * mean) - res["mean_T0"] ** 2
        elif isinstance(family, MixedExponential):
            p_eq, a, b = stationary_mixture(family)
            res["var_T0"] = moments(MixedExponential(p_eq, a, b))[1]
    if model.net_profit and not isinstance(family, Tabulated):
        r = adjustment_coefficient(params, family)
        res["adjustment_coefficient"] = r
        res["ultimate_ruin_ordinary"] = float(lundberg_ultimate(params, family))
    echo = echo_parameters(args)
    if args.out == "json":
        return EXIT_OK, render_json("moments", echo, res, model.warnings)
    return EXIT_OK, render_csv(echo, ("quantity", "value"), res.items(), model.warnings)


COMMANDS = {
    "density": cmd_density,
    "prob": cmd_prob,
    "table1": cmd_table1,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "moments": cmd_moments,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolve_backend(args.backend)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("threads must be >= 1")
            set_threads(args.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NetProfitWarning)
            code, text = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ruintime {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"ruintime {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelError, ValueError, RuntimeError) as exc:
        print(f"ruintime {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    emit(args, text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
