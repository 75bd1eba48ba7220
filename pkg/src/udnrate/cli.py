"""Command-line front end: ``udnrate analyze|simulate|optimize|figure``.

Exit codes: 0 success, 2 invalid input, 3 infeasible design, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    DomainError,
    NetworkConfig,
    Scheme,
    activity_probability,
    cell_load_pmf,
    db_to_linear,
    delay_pmf,
    rate_cdf,
    sir_cdf,
    tagged_cell_load_pmf,
)
from .figures import FIGURES, run_figure
from .optimizer import (
    DesignQuery,
    NonMonotoneObjective,
    Regime,
    optimal_n,
    tau_min_asymptotic,
    tau_min_search,
    tau_min_upper_bound,
)
from .simulator import SimConfig, ks_distance, simulate
from .tables import FORMATS, ResultTable, write_table

log = logging.getLogger("udnrate")

OUTPUT_DIR_ENV = "UDNRATE_OUTPUT_DIR"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4

QUANTITIES = ("rate_cdf", "sir_cdf", "delay_pmf", "cell_load_pmf", "tagged_load_pmf", "activity")


class InvariantViolation(RuntimeError):
    pass


def parse_theta0(text: str) -> float:
    """Linear SIR threshold; a trailing ``dB`` converts from decibels."""
    s = str(text).strip()
    if s.lower().endswith("db"):
        return db_to_linear(float(s[:-2]))
    return float(s)


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _scheme_list(text: str) -> list[Scheme]:
    if text == "both":
        return [Scheme.FDMA_TDMA, Scheme.TDMA]
    return [Scheme.parse(v.strip()) for v in text.split(",") if v.strip()]


# parameter name -> parser for one value; these are the names --sweep accepts
_ANALYZE_PARAMS = {
    "tau": float,
    "alpha": float,
    "theta0": parse_theta0,
    "n": int,
    "scheme": Scheme.parse,
}
_OPTIMIZE_PARAMS = {
    "r0": float,
    "epsilon": float,
    "theta0": parse_theta0,
    "alpha": float,
    "scheme": Scheme.parse,
    "n_max": int,
    "tau": float,
}


def parse_sweep(text: str | None, known: dict) -> tuple[str | None, list]:
    if not text:
        return None, []
    name, sep, values = text.partition("=")
    name = name.strip().replace("-", "_")
    if not sep:
        raise DomainError(f"sweep: expected name=v1,v2,..., got {text!r}")
    if name not in known:
        raise DomainError(f"sweep: unknown parameter {name!r}; choose from {', '.join(known)}")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise DomainError(f"sweep: no values given for {name}")
    try:
        return name, [known[name](v) for v in items]
    except ValueError as exc:
        raise DomainError(f"sweep: bad value for {name}: {exc}") from None


def _echo(args: argparse.Namespace) -> dict:
    skip = {"func", "out", "format", "verbose"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = v.value if isinstance(v, Scheme) else v
    return out


def _metadata(command: str, args: argparse.Namespace, **extra) -> dict:
    meta = {"command": command, "version": __version__, "parameters": _echo(args), "units": {"theta0": "linear"}}
    meta.update(extra)
    return meta


# -- analyze -----------------------------------------------------------------

def _analyze_point(config: NetworkConfig, quantity: str, at: list[float] | None, size_biased: bool) -> dict[str, list]:
    if quantity == "activity":
        return {"x": [None], "value": [activity_probability(config)]}
    if quantity in ("rate_cdf", "sir_cdf"):
        if not at:
            raise DomainError(f"at: {quantity} needs evaluation points (--at)")
        x = np.asarray(at, dtype=float)
        if quantity == "sir_cdf":
            return {"x": x.tolist(), "value": np.atleast_1d(sir_cdf(config)(x)).tolist()}
        F = rate_cdf(config, size_biased=size_biased)
        lower, upper = F.bounds(x)
        return {"x": x.tolist(), "value": np.atleast_1d(upper).tolist(), "lower": np.atleast_1d(lower).tolist()}
    if quantity == "delay_pmf":
        pmf = delay_pmf(config, size_biased=size_biased)
    elif quantity == "cell_load_pmf":
        pmf = cell_load_pmf(config.tau)
    else:
        pmf = tagged_cell_load_pmf(config.tau)
    support = list(range(len(pmf))) if not at else [int(v) for v in at]
    return {"x": support, "value": [pmf[k] if 0 <= k < len(pmf) else 0.0 for k in support]}


def run_analyze(args: argparse.Namespace) -> tuple[ResultTable, int]:
    name, values = parse_sweep(args.sweep, _ANALYZE_PARAMS)
    base = dict(tau=args.tau, alpha=args.alpha, theta0=args.theta0, n=args.n, scheme=args.scheme)
    cols: dict[str, list] = {}
    for value in values or [None]:
        params = dict(base)
        if name is not None:
            params[name] = value
        config = NetworkConfig(params["tau"], params["alpha"], params["theta0"], params["n"], params["scheme"])
        point = _analyze_point(config, args.quantity, args.at, args.size_biased)
        rows = len(point["x"])
        if name is not None:
            cols.setdefault(name, []).extend([value.value if isinstance(value, Scheme) else value] * rows)
        for k, v in point.items():
            cols.setdefault(k, []).extend(v)
    meta = _metadata("analyze", args, quantity=args.quantity)
    return ResultTable(cols, meta), EXIT_OK


# -- simulate ----------------------------------------------------------------

def run_simulate(args: argparse.Namespace) -> tuple[ResultTable, int]:
    config = SimConfig(
        lambda_a=args.lambda_a, lambda_u=args.lambda_a / args.tau, window_radius=args.window_radius,
        alpha=args.alpha, theta0=args.theta0, n_drops=args.drops, seed=args.seed,
        max_truncation_bias=args.max_bias,
    )
    variants = [(n, s) for s in args.scheme for n in args.n]
    results = simulate(config, variants, workers=args.workers)
    at = args.at if args.at else None
    cols: dict[str, list] = {}
    summary = {}
    for (n, scheme), res in results.items():
        emp = res.rate_cdf()
        F = rate_cdf(NetworkConfig(config.tau, config.alpha, config.theta0, n, scheme))
        x = np.asarray(at if at is not None else np.unique(res.rate[np.isfinite(res.rate)]), dtype=float)
        lo, hi = emp.band(x)
        tag = f"{scheme.value}:n={n}"
        block = {
            "r": x.tolist(),
            f"F_R_sim:{tag}": np.atleast_1d(emp(x)).tolist(),
            f"F_R_sim_lo:{tag}": np.atleast_1d(lo).tolist(),
            f"F_R_sim_hi:{tag}": np.atleast_1d(hi).tolist(),
            f"F_R:{tag}": np.atleast_1d(F(x)).tolist(),
        }
        if at is None:
            # per-variant grids differ, so emit long format
            for k, v in (("variant", [tag] * len(x)), ("r", block["r"])):
                cols.setdefault(k, []).extend(v)
            for k in ("F_R_sim", "F_R_sim_lo", "F_R_sim_hi", "F_R"):
                cols.setdefault(k, []).extend(block[f"{k}:{tag}"])
        else:
            cols.update(block)
        mean, se = res.activity()
        summary[tag] = {
            "ks_distance": ks_distance(res.rate, F),
            "activity": mean,
            "activity_se": se,
            "activity_analytical": activity_probability(NetworkConfig(config.tau, config.alpha, config.theta0, n, scheme)),
        }
    meta = _metadata(
        "simulate", args, window_radius=config.window_radius, truncation_bias=config.bias, summary=summary,
    )
    return ResultTable(cols, meta), EXIT_OK


# -- optimize ----------------------------------------------------------------

def run_optimize(args: argparse.Namespace) -> tuple[ResultTable, int]:
    name, values = parse_sweep(args.sweep, _OPTIMIZE_PARAMS)
    base = dict(
        r0=args.r0, epsilon=args.epsilon, theta0=args.theta0, alpha=args.alpha, scheme=args.scheme,
        n_max=args.n_max, tau=args.tau,
    )
    cols: dict[str, list] = {}
    notes: list[str] = []
    traces: list[list] = []
    infeasible = False
    for value in values or [None]:
        params = dict(base)
        if name is not None:
            params[name] = value
        tau = params.pop("tau")
        query = DesignQuery(**params, tau_range=(args.tau_low, args.tau_high))
        fdma = query.scheme is Scheme.FDMA_TDMA
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if tau is not None:
                res = optimal_n(query, tau)
            else:
                res = tau_min_search(query, rel_tol=args.rel_tol)
            ub = tau_min_upper_bound(query) if fdma else None
            small = tau_min_asymptotic(query, Regime.SMALL_R0) if fdma and query.theta0 > 0 else None
            large = tau_min_asymptotic(query, Regime.LARGE_R0) if fdma else None
        for w in caught:
            msg = str(w.message)
            if msg not in notes:
                notes.append(msg)
                print(f"udnrate: warning: {msg}", file=sys.stderr)
        infeasible |= not res.feasible
        row = {
            "r0": query.r0,
            "epsilon": query.epsilon,
            "theta0": query.theta0,
            "alpha": query.alpha,
            "scheme": query.scheme.value,
            "n_max": query.n_max,
            "tau": res.tau,
            "n_star": res.n_star,
            "n_star_lb": res.n_star_lb,
            "outage": res.outage,
            "tau_min": res.tau_min,
            "feasible": res.feasible,
            "tau_min_ub": ub,
            "tau_min_asym_small": small,
            "tau_min_asym_large": large,
        }
        if name is not None:
            # the sweep axis leads; scheme values are stored as their names
            row = {name: row.pop(name, value.value if isinstance(value, Scheme) else value), **row}
        for k, v in row.items():
            cols.setdefault(k, []).append(v)
        traces.append([list(point) for point in res.objective_trace])
    meta = _metadata("optimize", args, warnings=notes, traces=traces)
    return ResultTable(cols, meta), EXIT_INFEASIBLE if infeasible else EXIT_OK


# -- figure ------------------------------------------------------------------

def _override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if "," in text:
            return [_override_value(v) for v in text.split(",")]
        return text


def run_figure_cmd(args: argparse.Namespace) -> tuple[ResultTable, int]:
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise DomainError(f"set: expected key=value, got {item!r}")
        key = key.strip()
        overrides[key] = parse_theta0(value) if key == "theta0" else _override_value(value)
    if args.figure == "fig4":
        if args.drops is not None:
            overrides["n_drops"] = args.drops
        overrides["seed"] = args.seed
    try:
        table = run_figure(args.figure, overrides)
    except KeyError as exc:
        raise DomainError(str(exc.args[0])) from None
    return table, EXIT_OK


# -- plumbing ----------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None, help=f"output file (default: ${OUTPUT_DIR_ENV}/<name> or stdout)")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def _network_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=1.0, help="AP-to-UE density ratio")
    p.add_argument("--alpha", type=float, default=3.0, help="path loss exponent")
    p.add_argument("--theta0", type=parse_theta0, default=db_to_linear(-6.0),
                   help="SIR threshold, linear or with a dB suffix (default -6dB)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="udnrate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="evaluate an analytical CDF or PMF")
    _network_flags(p)
    p.add_argument("--n", type=_positive_int, default=1, help="number of subchannels")
    p.add_argument("--scheme", type=Scheme.parse, default=Scheme.FDMA_TDMA)
    p.add_argument("--quantity", choices=QUANTITIES, default="rate_cdf")
    p.add_argument("--at", type=_float_list, default=None, help="comma-separated evaluation points")
    p.add_argument("--size-biased", action="store_true", help="UE-centric delay law instead of the subchannel one")
    p.add_argument("--sweep", default=None, help="param=v1,v2,... over tau, alpha, theta0, n, scheme")
    _common(p)
    p.set_defaults(func=run_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo rate CDF with the analytical overlay")
    _network_flags(p)
    p.add_argument("--n", type=_int_list, default=[1], help="comma-separated subchannel counts")
    p.add_argument("--scheme", type=_scheme_list, default=[Scheme.FDMA_TDMA], help="scheme list or 'both'")
    p.add_argument("--drops", type=_positive_int, default=1000)
    p.add_argument("--lambda-a", type=float, default=1.0, help="AP density")
    p.add_argument("--window-radius", type=float, default=None)
    p.add_argument("--max-bias", type=float, default=0.01, help="largest allowed truncation bias")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--at", type=_float_list, default=None, help="rate grid (default: the sample values)")
    _common(p)
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("optimize", help="optimal N at a given tau, or the minimum tau")
    p.add_argument("--r0", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--theta0", type=parse_theta0, default=db_to_linear(-6.0))
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--scheme", type=Scheme.parse, default=Scheme.FDMA_TDMA)
    p.add_argument("--n-max", type=_positive_int, default=512)
    p.add_argument("--tau", type=float, default=None, help="fix tau and search N only")
    p.add_argument("--tau-low", type=float, default=1e-3)
    p.add_argument("--tau-high", type=float, default=1e3)
    p.add_argument("--rel-tol", type=float, default=1e-3)
    p.add_argument("--sweep", default=None, help="param=v1,v2,... over r0, epsilon, theta0, alpha, scheme, n_max, tau")
    _common(p)
    p.set_defaults(func=run_optimize)

    p = sub.add_parser("figure", help="data behind one of the standard figures")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a figure parameter")
    p.add_argument("--drops", type=int, default=None, help="simulation drops for fig4 (0 disables)")
    _common(p)
    p.set_defaults(func=run_figure_cmd)
    return parser


def _destination(args: argparse.Namespace) -> Path | None:
    if args.out is not None:
        return args.out
    directory = os.environ.get(OUTPUT_DIR_ENV)
    if directory:
        name = args.figure if args.command == "figure" else args.command
        return Path(directory) / f"{name}.{args.format}"
    return None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    start = time.perf_counter()
    try:
        table, code = args.func(args)
    except (DomainError, ValueError) as exc:
        print(f"udnrate: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NonMonotoneObjective, InvariantViolation, AssertionError) as exc:
        print(f"udnrate: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    table.run_info.setdefault("wall_time_s", time.perf_counter() - start)
    dest = _destination(args)
    if dest is None:
        sys.stdout.write(table.render(args.format))
    else:
        for path in write_table(table, dest, args.format):
            log.info("wrote %s", path)
    if code == EXIT_INFEASIBLE:
        print("udnrate: design infeasible within the searched range", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
