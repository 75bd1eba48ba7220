"""Data series behind each of the published figures.

Every value comes from the analytics, optimizer or simulator modules; the
functions here only choose parameter grids and lay out columns. Column
names follow ``quantity:scheme:param=value`` after the leading axis column.
"""

from __future__ import annotations

import math
import time
import warnings
from typing import Callable

import numpy as np

from . import __version__
from .analytics import (
    NetworkConfig,
    Scheme,
    activity_probability,
    db_to_linear,
    delay_pmf,
    min_rate,
    rate_cdf,
)
from .optimizer import (
    DesignQuery,
    Regime,
    optimal_n,
    tau_min_asymptotic,
    tau_min_search,
    tau_min_upper_bound,
)
from .simulator import SimConfig, ks_distance, simulate
from .tables import ResultTable

__all__ = ["FIGURES", "DEFAULTS", "run_figure"]

SCHEMES = (Scheme.FDMA_TDMA, Scheme.TDMA)
TAUS = (0.1, 1.0, 10.0)
CONVENTIONAL = "conventional_tdma"

DEFAULTS: dict[str, dict] = {
    "fig2": dict(alpha=3.0, taus=TAUS, n_values=list(range(1, 31))),
    "fig3": dict(alpha=3.0, taus=TAUS, n_values=list(range(1, 31))),
    "fig4": dict(
        alpha=3.0, theta0=1.0, taus=TAUS, n_values=[1, 5, 10], r_values=list(np.round(np.linspace(0.0, 1.0, 101), 10)),
        sim_tau=1.0, n_drops=2000, seed=0,
    ),
    "fig5": dict(alpha=3.0, theta0=db_to_linear(-6.0), taus=TAUS, n_values=list(range(1, 31)), r0=None),
    "fig6": dict(
        alpha=3.0, theta0=db_to_linear(-6.0), tau=1.0, n_max=128,
        r0_values=list(np.round(np.linspace(0.02, 0.6, 30), 10)),
    ),
    "fig7": dict(alpha=3.0, r0=0.1, tau=1.0, n_max=128, theta0_db=list(np.arange(-10.0, 10.5, 1.0))),
    "fig8": dict(
        alpha=3.0, theta0=db_to_linear(-6.0), epsilon=0.1, n_max=128,
        r0_values=[0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6],
    ),
}


def _key(quantity: str, scheme, **params) -> str:
    name = scheme.value if isinstance(scheme, Scheme) else str(scheme)
    tail = ",".join(f"{k}={v:g}" for k, v in params.items())
    return f"{quantity}:{name}:{tail}" if tail else f"{quantity}:{name}"


def _fig2(p: dict) -> dict[str, list]:
    cols: dict[str, list] = {"n": list(p["n_values"])}
    for tau in p["taus"]:
        for scheme in SCHEMES:
            cols[_key("p", scheme, tau=tau)] = [
                activity_probability(NetworkConfig(tau, p["alpha"], 1.0, n, scheme)) for n in p["n_values"]
            ]
    return cols


def _fig3(p: dict) -> dict[str, list]:
    cols: dict[str, list] = {"n": list(p["n_values"])}
    for tau in p["taus"]:
        for scheme in SCHEMES:
            cols[_key("mean_delay", scheme, tau=tau)] = [
                delay_pmf(NetworkConfig(tau, p["alpha"], 1.0, n, scheme)).mean() for n in p["n_values"]
            ]
    return cols


def _fig4(p: dict) -> dict[str, list]:
    r = np.asarray(p["r_values"], dtype=float)
    cols: dict[str, list] = {"r": r.tolist()}
    for tau in p["taus"]:
        for scheme in SCHEMES:
            for n in p["n_values"]:
                F = rate_cdf(NetworkConfig(tau, p["alpha"], p["theta0"], n, scheme))
                cols[_key("F_R", scheme, tau=tau, n=n)] = np.atleast_1d(F(r)).tolist()
    if p["n_drops"]:
        sim = SimConfig(
            alpha=p["alpha"], theta0=p["theta0"], lambda_a=1.0, lambda_u=1.0 / p["sim_tau"],
            n_drops=int(p["n_drops"]), seed=int(p["seed"]),
        )
        variants = [(n, s) for s in SCHEMES for n in p["n_values"]]
        results = simulate(sim, variants)
        for (n, scheme), res in results.items():
            emp = res.rate_cdf()
            F = rate_cdf(NetworkConfig(p["sim_tau"], p["alpha"], p["theta0"], n, scheme))
            lo, hi = emp.band(r)
            cols[_key("F_R_sim", scheme, tau=p["sim_tau"], n=n)] = emp(r).tolist()
            cols[_key("F_R_sim_lo", scheme, tau=p["sim_tau"], n=n)] = lo.tolist()
            cols[_key("F_R_sim_hi", scheme, tau=p["sim_tau"], n=n)] = hi.tolist()
            cols[_key("ks", scheme, tau=p["sim_tau"], n=n)] = [ks_distance(res.rate, F)] * len(r)
    return cols


def _fig5(p: dict) -> dict[str, list]:
    r0 = p["r0"] if p["r0"] is not None else min_rate(p["theta0"]) / 5
    p["r0"] = r0
    cols: dict[str, list] = {"n": list(p["n_values"])}
    for tau in p["taus"]:
        for scheme in SCHEMES:
            cols[_key("F_R", scheme, tau=tau)] = [
                rate_cdf(NetworkConfig(tau, p["alpha"], p["theta0"], n, scheme))(r0) for n in p["n_values"]
            ]
    return cols


def _optimised(r0, theta0, tau, alpha, scheme, n_max) -> tuple[int, float]:
    query = DesignQuery(r0, theta0=theta0, alpha=alpha, scheme=scheme, n_max=n_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimal_n(query, tau)
    return res.n_star, res.outage


def _fig6(p: dict) -> dict[str, list]:
    r0s = list(p["r0_values"])
    cols: dict[str, list] = {"r0": r0s}
    for scheme in SCHEMES:
        best = [_optimised(r0, p["theta0"], p["tau"], p["alpha"], scheme, p["n_max"]) for r0 in r0s]
        cols[_key("F_R", scheme)] = [b[1] for b in best]
        cols[_key("n_star", scheme)] = [b[0] for b in best]
    cols[_key("F_R", CONVENTIONAL)] = [
        rate_cdf(NetworkConfig(p["tau"], p["alpha"], p["theta0"], 1, Scheme.TDMA))(r0) for r0 in r0s
    ]
    return cols


def _fig7(p: dict) -> dict[str, list]:
    dbs = list(p["theta0_db"])
    cols: dict[str, list] = {"theta0_db": dbs, "theta0": [db_to_linear(d) for d in dbs]}
    r0, tau, alpha = p["r0"], p["tau"], p["alpha"]
    for scheme in SCHEMES:
        best = [_optimised(r0, db_to_linear(d), tau, alpha, scheme, p["n_max"]) for d in dbs]
        cols[_key("F_R", scheme)] = [b[1] for b in best]
        cols[_key("n_star", scheme)] = [b[0] for b in best]
    cols[_key("F_R", CONVENTIONAL)] = [
        rate_cdf(NetworkConfig(tau, alpha, db_to_linear(d), 1, Scheme.TDMA))(r0) for d in dbs
    ]
    # N chosen while ignoring SIR outage (linear threshold 0), then used at the true threshold
    n_blind, _ = _optimised(r0, 0.0, tau, alpha, Scheme.FDMA_TDMA, p["n_max"])
    p["n_blind"] = n_blind
    cols[_key("F_R_blind", Scheme.FDMA_TDMA)] = [
        rate_cdf(NetworkConfig(tau, alpha, db_to_linear(d), n_blind, Scheme.FDMA_TDMA))(r0) for d in dbs
    ]
    return cols


def _fig8(p: dict) -> dict[str, list]:
    r0s = list(p["r0_values"])
    cols: dict[str, list] = {"r0": r0s}
    base = dict(epsilon=p["epsilon"], theta0=p["theta0"], alpha=p["alpha"])
    runs = [
        (Scheme.FDMA_TDMA.value, dict(scheme=Scheme.FDMA_TDMA, n_max=p["n_max"])),
        (Scheme.TDMA.value, dict(scheme=Scheme.TDMA, n_max=p["n_max"])),
        (CONVENTIONAL, dict(scheme=Scheme.TDMA, n_max=1)),
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name, extra in runs:
            found = [tau_min_search(DesignQuery(r0, **base, **extra)) for r0 in r0s]
            cols[f"tau_min:{name}"] = [f.tau_min if f.feasible else math.inf for f in found]
            cols[f"n_star:{name}"] = [f.n_star for f in found]
        fdma = [DesignQuery(r0, **base) for r0 in r0s]
        cols["tau_min_ub:fdma_tdma"] = [tau_min_upper_bound(q) for q in fdma]
        cols["tau_min_asym_small:fdma_tdma"] = [tau_min_asymptotic(q, Regime.SMALL_R0) for q in fdma]
        cols["tau_min_asym_large:fdma_tdma"] = [tau_min_asymptotic(q, Regime.LARGE_R0) for q in fdma]
    return cols


FIGURES: dict[str, Callable[[dict], dict[str, list]]] = {
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "fig6": _fig6,
    "fig7": _fig7,
    "fig8": _fig8,
}


def run_figure(figure_id: str, overrides: dict | None = None) -> ResultTable:
    if figure_id not in FIGURES:
        raise KeyError(f"figure: unknown id {figure_id!r}; choose from {', '.join(FIGURES)}")
    params = dict(DEFAULTS[figure_id])
    for name, value in (overrides or {}).items():
        if name not in params:
            raise ValueError(f"{name}: not a parameter of {figure_id}; known: {', '.join(params)}")
        params[name] = value
    start = time.perf_counter()
    columns = FIGURES[figure_id](params)
    metadata = {"command": "figure", "figure": figure_id, "parameters": params, "version": __version__}
    if "theta0" in params:
        metadata["units"] = {"theta0": "linear"}
    return ResultTable(columns, metadata, {"wall_time_s": time.perf_counter() - start})
