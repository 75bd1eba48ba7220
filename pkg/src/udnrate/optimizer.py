"""Design searches: optimal subchannel count and minimum AP density.

The exhaustive N scan and the tau bisection both evaluate the analytical
rate CDF; closed-form bounds are provided alongside for comparison.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .analytics import (
    DomainError,
    NetworkConfig,
    Scheme,
    min_rate,
    rate_cdf,
    rho,
    sir_cdf,
)

__all__ = [
    "DesignQuery",
    "DesignResult",
    "DivergenceReport",
    "NonMonotoneObjective",
    "UnsupportedScheme",
    "Regime",
    "n_star_lower_bound",
    "outage_probability",
    "outage_vs_n",
    "optimal_n",
    "divergence_check",
    "tau_min_upper_bound",
    "tau_min_asymptotic",
    "tau_min_search",
]

SMALL_EPSILON = 0.1


class UnsupportedScheme(DomainError):
    pass


class NonMonotoneObjective(RuntimeError):
    """min_N F_R(r0) increased with tau on the evaluated points."""


class Regime(str, enum.Enum):
    SMALL_R0 = "small_r0"
    LARGE_R0 = "large_r0"


@dataclass(frozen=True)
class DesignQuery:
    r0: float
    epsilon: float = 0.1
    theta0: float = 10 ** -0.6
    alpha: float = 3.0
    scheme: Scheme = Scheme.FDMA_TDMA
    n_max: int = 512
    tau_range: tuple[float, float] = (1e-3, 1e3)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "tau_range", tuple(float(t) for t in self.tau_range))
        if not self.r0 > 0:
            raise DomainError(f"r0: target rate must be > 0, got {self.r0!r}")
        if not 0 < self.epsilon < 1:
            raise DomainError(f"epsilon: outage constraint must lie in (0, 1), got {self.epsilon!r}")
        if not self.theta0 >= 0:
            raise DomainError(f"theta0: SIR threshold must be >= 0, got {self.theta0!r}")
        if not self.alpha > 2:
            raise DomainError(f"alpha: path loss exponent must exceed 2, got {self.alpha!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise DomainError(f"n_max: must be a positive integer, got {self.n_max!r}")
        object.__setattr__(self, "n_max", int(self.n_max))
        lo, hi = self.tau_range
        if not 0 < lo < hi:
            raise DomainError(f"tau_range: need 0 < low < high, got {self.tau_range!r}")

    def network(self, tau: float, n: int) -> NetworkConfig:
        return NetworkConfig(tau, self.alpha, self.theta0, n, self.scheme)

    def replace(self, **changes) -> "DesignQuery":
        return replace(self, **changes)


@dataclass
class DesignResult:
    n_star: int | None = None
    n_star_lb: int | None = None
    tau_min: float | None = None
    tau_min_ub: float | None = None
    objective_trace: list[tuple[float, float]] = field(default_factory=list)
    outage: float | None = None
    tau: float | None = None
    feasible: bool = True
    warnings: list[str] = field(default_factory=list)


@dataclass
class DivergenceReport:
    r0: float
    n_reach: int | None
    threshold: float
    trace: list[tuple[int, float]]
    nondecreasing: bool
    sir_outage: float


def n_star_lower_bound(theta0: float, r0: float) -> int:
    """max{1, floor(log2(1+theta0) / r0)}."""
    if not r0 > 0:
        raise DomainError(f"r0: target rate must be > 0, got {r0!r}")
    ratio = min_rate(theta0) / r0
    # absorb rounding when r0 was itself computed as log2(1+theta0)/k
    return max(1, math.floor(ratio * (1 + 1e-12)))


def outage_probability(query: DesignQuery, tau: float, n: int) -> float:
    return float(rate_cdf(query.network(tau, n))(query.r0))


def outage_vs_n(query: DesignQuery, tau: float, n_values=None) -> np.ndarray:
    if n_values is None:
        n_values = range(1, query.n_max + 1)
    return np.array([outage_probability(query, tau, n) for n in n_values])


def optimal_n(query: DesignQuery, tau: float) -> DesignResult:
    """Exhaustive scan of F_R(r0) over N = 1..n_max; ties go to the smaller N."""
    n_values = np.arange(1, query.n_max + 1)
    values = outage_vs_n(query, tau, n_values)
    best = int(np.argmin(values))
    result = DesignResult(
        n_star=int(n_values[best]),
        n_star_lb=n_star_lower_bound(query.theta0, query.r0),
        objective_trace=[(int(n), float(v)) for n, v in zip(n_values, values)],
        outage=float(values[best]),
        tau=float(tau),
    )
    if query.n_max > 1 and values[-1] <= values[-2]:
        msg = f"F_R(r0) is not increasing at n_max={query.n_max}; the optimum may lie beyond it"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        result.warnings.append(msg)
    return result


def divergence_check(
    config: NetworkConfig,
    r0: float,
    n_probe: int | None = None,
    threshold: float = 0.99,
    n_cap: int = 1 << 22,
) -> DivergenceReport:
    """Locate the smallest N >= n_probe with F_R(r0) >= threshold.

    N is doubled from ``n_probe`` until the threshold is crossed, then the
    last interval is bisected assuming F_R(r0) is nondecreasing there. The
    galloping points are checked for that monotonicity and the outcome is
    reported rather than asserted.
    """
    sir_outage = sir_cdf(config)(config.theta0)
    if r0 == 0:
        return DivergenceReport(0.0, None, threshold, [], True, sir_outage)
    if r0 < 0:
        raise DomainError(f"r0: target rate must be >= 0, got {r0!r}")

    def value(n: int) -> float:
        return float(rate_cdf(config.replace(n_subchannels=n))(r0))

    n = max(1, n_probe or 1)
    trace = [(n, value(n))]
    while trace[-1][1] < threshold and n < n_cap:
        n = min(2 * n, n_cap)
        trace.append((n, value(n)))
    nondecreasing = all(b[1] >= a[1] - 1e-12 for a, b in zip(trace, trace[1:]))
    if trace[-1][1] < threshold:
        return DivergenceReport(r0, None, threshold, trace, nondecreasing, sir_outage)
    hi = trace[-1][0]
    lo = trace[-2][0] if len(trace) > 1 else hi - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if value(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return DivergenceReport(r0, hi, threshold, trace, nondecreasing, sir_outage)


def _small_epsilon_warning(query: DesignQuery) -> list[str]:
    if query.epsilon <= SMALL_EPSILON:
        return []
    msg = (
        f"epsilon={query.epsilon} exceeds {SMALL_EPSILON}; the closed-form tau_min bound "
        "assumes a small outage constraint and may be loose or invalid"
    )
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return [msg]


def _require_fdma(query: DesignQuery) -> None:
    if query.scheme is not Scheme.FDMA_TDMA:
        raise UnsupportedScheme(
            f"scheme: the closed-form tau_min bound is derived for FDMA/TDMA, got {query.scheme.value}"
        )


def tau_min_upper_bound(query: DesignQuery) -> float:
    """Closed-form upper bound on tau_min for FDMA/TDMA."""
    _require_fdma(query)
    _small_epsilon_warning(query)
    odds = (1 - query.epsilon) / query.epsilon
    r_theta0 = min_rate(query.theta0)
    if query.r0 <= r_theta0:
        return odds * rho(query.theta0, query.alpha) / n_star_lower_bound(query.theta0, query.r0)
    return odds * rho(2.0**query.r0 - 1.0, query.alpha)


def tau_min_asymptotic(query: DesignQuery, regime: Regime | str) -> float:
    """Linear (small r0) or exponential (large r0) approximation of the tau_min bound."""
    _require_fdma(query)
    regime = Regime(regime)
    _small_epsilon_warning(query)
    odds = (1 - query.epsilon) / query.epsilon
    if regime is Regime.SMALL_R0:
        r_theta0 = min_rate(query.theta0)
        if r_theta0 == 0:
            raise DomainError("theta0: the small-r0 approximation needs theta0 > 0")
        return odds * rho(query.theta0, query.alpha) * query.r0 / r_theta0
    a = query.alpha
    return odds * 2 * math.pi / (a * math.sin(2 * math.pi / a)) * 2.0 ** (2 * query.r0 / a)


def tau_min_search(query: DesignQuery, rel_tol: float = 1e-3) -> DesignResult:
    """Smallest tau in ``query.tau_range`` with min over N of F_R(r0) <= epsilon.

    Bisection on log tau. It relies on the optimised outage being
    nonincreasing in tau; every evaluated point is checked against that and
    a violation raises :class:`NonMonotoneObjective`. If the top of the range
    is infeasible the result carries the achieved outage and
    ``feasible=False``.
    """
    cache: dict[float, tuple[float, int]] = {}

    def objective(tau: float) -> float:
        if tau not in cache:
            values = outage_vs_n(query, tau)
            best = int(np.argmin(values))
            cache[tau] = (float(values[best]), best + 1)
        return cache[tau][0]

    lo, hi = query.tau_range
    notes = []
    if query.scheme is Scheme.FDMA_TDMA:
        notes += _small_epsilon_warning(query)
    bound = tau_min_upper_bound(query) if query.scheme is Scheme.FDMA_TDMA else None

    if objective(hi) > query.epsilon:
        return DesignResult(
            n_star=cache[hi][1],
            n_star_lb=n_star_lower_bound(query.theta0, query.r0),
            tau_min=None,
            tau_min_ub=bound,
            objective_trace=sorted((t, v) for t, (v, _) in cache.items()),
            outage=cache[hi][0],
            tau=hi,
            feasible=False,
            warnings=notes + [f"infeasible: outage {cache[hi][0]:.6g} > {query.epsilon} at tau={hi:g}"],
        )
    if objective(lo) <= query.epsilon:
        notes.append(f"constraint already met at the bottom of tau_range ({lo:g})")
        hi = lo
    while hi / lo - 1 > rel_tol:
        mid = math.sqrt(lo * hi)
        if objective(mid) <= query.epsilon:
            hi = mid
        else:
            lo = mid

    trace = sorted((t, v) for t, (v, _) in cache.items())
    for (t1, v1), (t2, v2) in zip(trace, trace[1:]):
        if v2 > v1 + 1e-12:
            raise NonMonotoneObjective(
                f"min_N F_R(r0) rose from {v1:.12g} at tau={t1:.6g} to {v2:.12g} at tau={t2:.6g}"
            )
    return DesignResult(
        n_star=cache[hi][1],
        n_star_lb=n_star_lower_bound(query.theta0, query.r0),
        tau_min=hi,
        tau_min_ub=bound,
        objective_trace=trace,
        outage=cache[hi][0],
        tau=hi,
        feasible=True,
        warnings=notes,
    )
