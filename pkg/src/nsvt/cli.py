"""Command-line interface: ``nsvt <subcommand> [options]``.

Exit status: 0 success, 1 usage error, 2 bad input data, 3 numerical
failure.  Numbers are written with 17 significant digits so that every
value read back parses to the same double.
"""
import argparse
import csv
import io
import json
import sys

import numpy as np

from . import __version__
from .bootstrap import parametric_bootstrap
from .cl_estimate import ClOptions, fit_cl
from .clem import fit_clem
from .diagnostics import pit, simstudy
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DensityUnderflowError,
    DomainError,
    InfeasibleError,
    NonConvergenceError,
)
from .model import NsvtParams, SeriesData, conditional_variance, simulate_nsvt
from .serialize import dumps, fmt

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _read_series(path):
    """Read ``y`` and the ``x*`` covariate columns from a CSV file (``-`` for stdin)."""
    fh = sys.stdin if path == "-" else open(path, newline="")
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DomainError("empty input") from None
        if "y" not in header:
            raise DomainError("input needs a 'y' column")
        iy = header.index("y")
        ix = [k for k, h in enumerate(header) if h.startswith("x")]
        if not ix:
            raise DomainError("input needs at least one covariate column named x*")
        ys, xs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ys.append(float(row[iy]))
                xs.append([float(row[k]) for k in ix])
            except (ValueError, IndexError):
                raise DomainError(f"line {lineno}: malformed row") from None
    finally:
        if fh is not sys.stdin:
            fh.close()
    return SeriesData(np.array(ys), np.array(xs))


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _parse_beta(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"--beta must be a comma-separated list of numbers, got {text!r}") from None


def _load_params(path):
    with open(path) as fh:
        raw = json.load(fh)
    raw = raw.get("params", raw)
    return NsvtParams(raw["beta"], raw["sigma2"], raw["nu"], raw["rho"])


def _fit(data, args):
    if args.method == "cl":
        return fit_cl(data, ClOptions(m=args.m))
    return fit_clem(data, m=args.m, nu=args.nu, nu_source=args.nu_source)


def _params_for(data, args):
    if args.params:
        return _load_params(args.params)
    return _fit(data, args).params


def cmd_simulate(args):
    beta = _parse_beta(args.beta)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,)))
    X = np.ones((args.n, beta.size))
    if beta.size > 1:
        X[:, 1:] = rng.standard_normal((args.n, beta.size - 1))
    params = NsvtParams(beta, args.sigma2, args.nu, args.rho)
    y, z = simulate_nsvt(params, X, seed=args.seed, return_latent=True)
    header = ["t", "y", "z"] + [f"x{k + 1}" for k in range(beta.size)]
    rows = [[t + 1, fmt(y[t]), fmt(z[t]), *(fmt(v) for v in X[t])] for t in range(args.n)]
    _write(_csv_text(header, rows), args.output)


def cmd_fit(args):
    data = _read_series(args.input)
    result = _fit(data, args)
    out = result.as_dict()
    if not args.trace:
        out.pop("trace")
    _write(dumps(out) + "\n", args.output)


def cmd_bootstrap(args):
    data = _read_series(args.input)
    fitted = _params_for(data, args)
    result = parametric_bootstrap(
        fitted, data.X, args.B, args.level, args.method.upper(), args.seed, args.m, args.threads
    )
    if args.replicates:
        result.to_csv(args.replicates)
    _write(dumps(result.summary()) + "\n", args.output)


def cmd_forecast(args):
    data = _read_series(args.input)
    params = _params_for(data, args)
    mu = data.X @ params.beta
    var = np.atleast_1d(conditional_variance(data.y, mu, params, args.horizon))
    rows = [[t + 1, t + 1 + args.horizon, fmt(v)] for t, v in enumerate(var)]
    _write(_csv_text(["t", "target", "conditional_variance"], rows), args.output)


def cmd_pit(args):
    data = _read_series(args.input)
    params = _params_for(data, args)
    u = pit(data, params)
    _write(_csv_text(["t", "u"], [[t + 1, fmt(v)] for t, v in enumerate(u)]), args.output)


def _load_mapping(path):
    if path.endswith(".toml"):
        from .portfolio import tomllib

        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def cmd_simstudy(args):
    cfg = _load_mapping(args.config)
    for key in ("replicates", "seed"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    if "design" not in cfg:
        raise DomainError("simstudy config needs a 'design' entry")
    table = simstudy(
        cfg["design"],
        cfg.get("replicates", 50),
        tuple(cfg.get("estimators", ("CL", "CLEM"))),
        cfg.get("seed", 0),
        cfg.get("m", 1),
        cfg.get("clem_nu", "known"),
        args.threads,
    )
    text = table.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    _write(text, args.output)


def cmd_portfolio(args):
    from .portfolio import load_config, run_pipeline

    cfg = load_config(args.config, output_dir=args.output_dir, seed=args.seed)
    summary = run_pipeline(cfg, workers=args.threads)
    sys.stdout.write(dumps({"windows": len(summary["windows"]), "output_dir": cfg.output_dir}) + "\n")


def build_parser():
    parser = _Parser(prog="nsvt", description="Student-t stochastic volatility regression tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, fit=True):
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: NSVT_THREADS or all CPUs)")
        p.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
        if fit:
            p.add_argument("--input", "-i", default="-", help="CSV with y and x* columns")
            p.add_argument("--method", choices=("cl", "clem"), default="clem")
            p.add_argument("--m", type=int, default=1, help="pairwise order")
            p.add_argument("--nu", type=float, default=None, help="fixed nu for CLEM")
            p.add_argument("--nu-source", choices=("pseudo", "cl"), default="pseudo")

    p = sub.add_parser("simulate", help="simulate an NSVt path with its latent GAR(1) precision")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=4.0)
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--beta", default="0", help="comma list; x1 is an intercept column")
    p.add_argument("--seed", type=int, default=0)
    common(p, fit=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit by pairwise likelihood (cl) or CLEM")
    common(p)
    p.add_argument("--trace", action="store_true", help="include the iteration trace")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="parametric bootstrap SEs and intervals")
    common(p)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", default=None, help="JSON with fitted params (skips the fit)")
    p.add_argument("--replicates", default=None, help="also write per-replicate CSV here")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("forecast", help="conditional variance of y[t+h] given y[t]")
    common(p)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--params", default=None)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("pit", help="probability integral transform of the fitted marginal")
    common(p)
    p.add_argument("--params", default=None)
    p.set_defaults(func=cmd_pit)

    p = sub.add_parser("simstudy", help="Monte Carlo study from a JSON/TOML design")
    common(p, fit=False)
    p.add_argument("--config", required=True)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simstudy)

    p = sub.add_parser("portfolio", help="run the market-neutral portfolio pipeline")
    common(p, fit=False)
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_portfolio)
    return parser


def _validate(args):
    if getattr(args, "threads", None) is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.command == "simulate" and args.n < 1:
        raise UsageError("--n must be >= 1")
    if getattr(args, "m", 1) < 1:
        raise UsageError("--m must be >= 1")
    if args.command == "bootstrap" and (args.B < 1 or not 0 < args.level < 1):
        raise UsageError("--B must be >= 1 and --level in (0, 1)")
    if args.command == "forecast" and args.horizon < 1:
        raise UsageError("--horizon must be >= 1")


def run(argv=None):
    """Parse ``argv`` and run the subcommand; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except (ConvergenceError, NonConvergenceError, DensityUnderflowError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (DomainError, DegenerateDataError, InfeasibleError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
