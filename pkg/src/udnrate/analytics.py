"""Closed-form user rate analysis of an interference-limited PPP downlink.

Everything here is a pure function of its arguments. Distributions are
returned as small immutable objects that can be evaluated repeatedly and
shared between threads.

Conventions: all SIR values are linear (use :func:`db_to_linear` for dB),
rates are in b/s/Hz, and ``tau`` is the AP-to-UE density ratio.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy import integrate, special

__all__ = [
    "DomainError",
    "Scheme",
    "NetworkConfig",
    "DiscretePmf",
    "SirCdf",
    "RateCdf",
    "db_to_linear",
    "min_rate",
    "cell_load_pmf",
    "tagged_cell_load_pmf",
    "activity_probability",
    "rho",
    "rho_vec",
    "sir_cdf",
    "delay_conditional_pmf",
    "delay_pmf",
    "appendix_a_assignment_prob",
    "subchannel_occupancy_prob",
    "enumerate_occupancy_prob",
    "rate_cdf_conditional",
    "rate_cdf",
]

DEFAULT_TOL = 1e-12

# Shape of the gamma fit to the Voronoi cell area; the tagged cell is
# area-biased, which adds one to the shape.
_CELL_SHAPE = 3.5
_TAGGED_SHAPE = 4.5


class DomainError(ValueError):
    """Argument outside the domain where a formula is defined."""


class Scheme(str, enum.Enum):
    TDMA = "tdma"
    FDMA_TDMA = "fdma_tdma"

    @classmethod
    def parse(cls, value: "Scheme | str") -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("/", "_").replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"scheme: unknown multiple access scheme {value!r}") from None


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def min_rate(theta0: float) -> float:
    """log2(1 + theta0): the single-subchannel, contention-free rate floor."""
    return math.log2(1.0 + theta0)


@dataclass(frozen=True)
class NetworkConfig:
    tau: float
    alpha: float = 3.0
    theta0: float = 1.0
    n_subchannels: int = 1
    scheme: Scheme = Scheme.FDMA_TDMA

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise DomainError(f"tau: must be a positive finite ratio, got {self.tau!r}")
        if not self.alpha > 2:
            raise DomainError(f"alpha: path loss exponent must exceed 2, got {self.alpha!r}")
        if not self.theta0 >= 0:
            raise DomainError(f"theta0: SIR threshold must be >= 0, got {self.theta0!r}")
        n = self.n_subchannels
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise DomainError(f"n_subchannels: must be a positive integer, got {n!r}")
        object.__setattr__(self, "n_subchannels", int(n))

    def replace(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class DiscretePmf:
    """PMF on {0, 1, ...} truncated where the remaining mass drops below ``tol``.

    The residual mass is kept in ``tail_mass`` instead of renormalising, so
    ``probs.sum() + tail_mass`` is 1 up to rounding.
    """

    probs: np.ndarray
    tail_mass: float
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, k: int) -> float:
        if k < 0:
            raise IndexError(k)
        return float(self.probs[k]) if k < len(self.probs) else 0.0

    @property
    def support_max(self) -> int:
        return len(self.probs) - 1

    def total(self) -> float:
        return float(self.probs.sum()) + self.tail_mass

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def cdf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self.probs[: k + 1].sum())


def _check_tol(tol: float) -> None:
    if not 0 < tol <= 1e-6:
        raise DomainError(f"tol: tail tolerance must lie in (0, 1e-6], got {tol!r}")


def _check_tau(tau: float) -> None:
    if not (tau > 0 and math.isfinite(tau)):
        raise DomainError(f"tau: must be a positive finite ratio, got {tau!r}")


def _gamma_poisson_tail(k: int, shape: float, tau: float) -> float:
    # Pr{X > k} for the gamma-Poisson mixture, via the regularised beta function.
    return float(special.betainc(k + 1, shape, 1.0 / (1.0 + 3.5 * tau)))


@lru_cache(maxsize=256)
def _gamma_poisson_pmf(shape: float, tau: float, tol: float) -> DiscretePmf:
    _check_tau(tau)
    _check_tol(tol)
    # smallest k with Pr{X > k} < tol: gallop, then bisect
    hi = max(8, int(2 * shape / (3.5 * tau)))
    while _gamma_poisson_tail(hi, shape, tau) >= tol:
        hi *= 2
    lo = -1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _gamma_poisson_tail(mid, shape, tau) < tol:
            hi = mid
        else:
            lo = mid
    k = np.arange(hi + 1)
    log_p = (
        shape * math.log(3.5 * tau)
        + special.gammaln(k + shape)
        - special.gammaln(shape)
        - special.gammaln(k + 1)
        - (k + shape) * math.log1p(3.5 * tau)
    )
    return DiscretePmf(np.exp(log_p), _gamma_poisson_tail(hi, shape, tau), tol)


def cell_load_pmf(tau: float, tol: float = DEFAULT_TOL) -> DiscretePmf:
    """Number of UEs associated with a randomly chosen AP."""
    return _gamma_poisson_pmf(_CELL_SHAPE, float(tau), float(tol))


def tagged_cell_load_pmf(tau: float, tol: float = DEFAULT_TOL) -> DiscretePmf:
    """Number of UEs sharing the typical UE's serving AP, excluding the typical UE."""
    return _gamma_poisson_pmf(_TAGGED_SHAPE, float(tau), float(tol))


def activity_probability(config: NetworkConfig, tol: float = DEFAULT_TOL) -> float:
    """Probability that an interfering AP transmits on a given subchannel."""
    pk = cell_load_pmf(config.tau, tol)
    n = config.n_subchannels
    busy = 1.0 - pk[0]
    if config.scheme is Scheme.TDMA or n == 1:
        return busy / n
    k = np.arange(1, len(pk.probs))
    # the truncated tail only holds loads above the support, counted as min(K, N) <= N
    served = float(np.dot(pk.probs[1:], np.minimum(k, n))) + pk.tail_mass * n
    return served / n


def _check_alpha(alpha: float) -> None:
    if not alpha > 2:
        raise DomainError(f"alpha: path loss exponent must exceed 2, got {alpha!r}")


def rho(theta: float, alpha: float) -> float:
    """theta^(2/alpha) * integral over (theta^(-2/alpha), inf) of du / (1 + u^(alpha/2)).

    Evaluated by adaptive quadrature. With a = alpha/2 and w = theta / u^a the
    integral becomes theta^(1/a)/a * int_0^theta w^(-1/a) / (1 + w) dw; the
    piece on [0, 1] uses an algebraic weight for the endpoint singularity and
    the piece above 1 is integrated in log w. alpha = 4 has the closed form
    sqrt(theta) * arctan(sqrt(theta)).
    """
    _check_alpha(alpha)
    if theta < 0:
        raise DomainError(f"theta: SIR must be >= 0, got {theta!r}")
    if theta == 0:
        return 0.0
    if math.isinf(theta):
        return math.inf
    if alpha == 4:
        root = math.sqrt(theta)
        return root * math.atan(root)
    return _rho_quad(theta, alpha)


def _rho_quad(theta: float, alpha: float) -> float:
    c = 2.0 / alpha
    head, _ = integrate.quad(
        lambda w: 1.0 / (1.0 + w),
        0.0,
        min(theta, 1.0),
        weight="alg",
        wvar=(-c, 0.0),
        epsabs=1e-13,
        epsrel=1e-13,
    )
    tail = 0.0
    if theta > 1.0:
        tail, _ = integrate.quad(
            lambda v: math.exp((1.0 - c) * v) / (1.0 + math.exp(v)),
            0.0,
            math.log(theta),
            epsabs=1e-13,
            epsrel=1e-13,
            limit=200,
        )
    return theta**c * c * (head + tail)


def rho_vec(theta, alpha: float) -> np.ndarray:
    """Vectorised ``rho`` through its Gauss hypergeometric closed form.

    For theta <= 1 the defining series is a 2F1 in -theta; above 1 the
    complement of the full integral pi/(a sin(pi/a)) is a 2F1 in -1/theta.
    Both arguments stay inside [-1, 0].
    """
    _check_alpha(alpha)
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError("theta: SIR must be >= 0")
    if alpha == 4:
        root = np.sqrt(theta)
        return root * np.arctan(root)
    a = alpha / 2.0
    out = np.empty_like(theta)
    low = theta <= 1.0
    t = theta[low]
    out[low] = t / (a - 1.0) * special.hyp2f1(1.0, 1.0 - 1.0 / a, 2.0 - 1.0 / a, -t)
    t = theta[~low]
    full = math.pi / (a * math.sin(math.pi / a))
    with np.errstate(over="ignore", invalid="ignore"):
        high = t ** (1.0 / a) * full - special.hyp2f1(1.0, 1.0 / a, 1.0 + 1.0 / a, -1.0 / t)
    out[~low] = np.where(np.isinf(t), np.inf, high)
    return out


@dataclass(frozen=True)
class SirCdf:
    """F(theta) = 1 - 1/(1 + p rho(theta)) at activity probability p."""

    activity_probability: float
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not 0 < self.activity_probability <= 1:
            raise DomainError(
                f"activity_probability: must lie in (0, 1], got {self.activity_probability!r}"
            )

    def __call__(self, theta):
        x = self.activity_probability * rho_vec(theta, self.alpha)
        with np.errstate(invalid="ignore"):
            value = np.where(np.isinf(x), 1.0, x / (1.0 + x))
        return float(value) if value.ndim == 0 else value


def sir_cdf(config: NetworkConfig, tol: float = DEFAULT_TOL) -> SirCdf:
    return SirCdf(activity_probability(config, tol), config.alpha)


def delay_conditional_pmf(k0: int, n: int, size_biased: bool = False) -> dict[int, float]:
    """Pr{L = l | K0 = k0} under FDMA/TDMA, as a sparse {l: probability} map.

    The default follows the per-subchannel occupancy law: the typical UE's
    subchannel is treated as a uniformly chosen occupied subchannel. With
    ``size_biased=True`` the typical UE is instead a uniformly chosen UE, so
    crowded subchannels are sampled proportionally to their occupancy;
    that is what a UE-level simulation of the scheduler observes.
    """
    if k0 < 0 or n < 1:
        raise DomainError(f"need k0 >= 0 and n >= 1, got k0={k0}, n={n}")
    if size_biased:
        users = k0 + 1
        full, rem = divmod(users, n)
        out = {}
        if rem:
            out[full] = rem * (full + 1) / users
        if full:
            out[full - 1] = out.get(full - 1, 0.0) + (n - rem) * full / users
        return out
    out = {}
    # l = 0
    if k0 <= n - 1:
        out[0] = 1.0
    elif k0 <= 2 * n - 2:
        out[0] = (2 * n - k0 - 1) / n
    # l >= 1 needs l*n <= k0 <= (l+2)n - 2
    for l in range(max(1, (k0 + 2) // n - 2), k0 // n + 1):
        if l * n <= k0 <= (l + 1) * n - 1:
            out[l] = (k0 - l * n + 1) / n
        elif (l + 1) * n <= k0 <= (l + 2) * n - 2:
            out[l] = ((l + 2) * n - k0 - 1) / n
    return {l: p for l, p in out.items() if p > 0}


def _fdma_delay_probs(k0_probs: np.ndarray, n: int, size_biased: bool) -> np.ndarray:
    k0 = np.arange(len(k0_probs))
    users = k0 + 1
    full, rem = np.divmod(users, n)
    if size_biased:
        w_full = rem * (full + 1) / users
    else:
        w_full = np.where(full == 0, 1.0, rem / n)
    w_less = 1.0 - w_full
    out = np.zeros(int(full.max()) + 1)
    np.add.at(out, full, k0_probs * w_full)
    has_less = full > 0
    np.add.at(out, full[has_less] - 1, (k0_probs * w_less)[has_less])
    return out


def delay_pmf(
    config: NetworkConfig, tol: float = DEFAULT_TOL, size_biased: bool = False
) -> DiscretePmf:
    """PMF of the number of slots L between two services of the typical UE."""
    k0 = tagged_cell_load_pmf(config.tau, tol)
    if config.scheme is Scheme.TDMA:
        return k0
    probs = _fdma_delay_probs(k0.probs, config.n_subchannels, size_biased)
    return DiscretePmf(probs, k0.tail_mass, tol)


def appendix_a_assignment_prob(k: int, n: int, m: int) -> Fraction:
    """Probability that the m-th of k UEs draws subchannel 1 (exact)."""
    if not 1 <= m <= k:
        raise DomainError(f"m: UE index must satisfy 1 <= m <= K, got m={m}, K={k}")
    if k > n:
        raise DomainError(f"K: sequential draws without replacement need K <= N, got K={k}, N={n}")
    prob = Fraction(1, n - (m - 1))
    for r in range(1, m):
        prob *= 1 - Fraction(1, n - (r - 1))
    return prob


def subchannel_occupancy_prob(k: int, n: int) -> Fraction:
    """Probability that subchannel 1 carries at least one of k UEs."""
    if k <= 0:
        return Fraction(0)
    if k >= n:
        return Fraction(1)
    return sum((appendix_a_assignment_prob(k, n, m) for m in range(1, k + 1)), Fraction(0))


def enumerate_occupancy_prob(k: int, n: int) -> Fraction:
    """Brute-force count over all equally likely ordered draws of k distinct subchannels."""
    if k <= 0:
        return Fraction(0)
    draws = list(permutations(range(n), min(k, n)))
    return Fraction(sum(0 in d for d in draws), len(draws))


def _subchannel_theta(r, n: int, delay, theta0: float):
    # SIR needed for rate r with delay L; max() merges the flat branch, so
    # the breakpoint r = log2(1+theta0)/(N(L+1)) evaluates both branches alike
    with np.errstate(over="ignore"):
        needed = np.expm1(np.asarray(r, dtype=float) * n * (np.asarray(delay) + 1) * math.log(2.0))
    return np.maximum(needed, theta0)


def rate_cdf_conditional(config: NetworkConfig, delay: int, r: float, tol: float = DEFAULT_TOL) -> float:
    if r < 0:
        raise DomainError(f"r: rate must be >= 0, got {r!r}")
    if delay < 0:
        raise DomainError(f"L: delay must be >= 0, got {delay!r}")
    sir = sir_cdf(config, tol)
    return float(sir(_subchannel_theta(r, config.n_subchannels, delay, config.theta0)))


@dataclass(frozen=True, eq=False)
class RateCdf:
    """F_R(r) = sum_L Pr{L} F_R(r | L).

    Calling the object gives the conservative value, with the truncated
    delay tail counted as certain outage; :meth:`bounds` returns both ends.
    """

    config: NetworkConfig
    delay_pmf: DiscretePmf
    sir_cdf: SirCdf
    r_theta0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "r_theta0", min_rate(self.config.theta0))

    @property
    def sir_outage(self) -> float:
        return self.sir_cdf(self.config.theta0)

    def breakpoints(self) -> np.ndarray:
        delays = np.arange(len(self.delay_pmf))
        return self.r_theta0 / (self.config.n_subchannels * (delays + 1))

    def bounds(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("r: rate must be >= 0")
        delays = np.arange(len(self.delay_pmf))
        theta = _subchannel_theta(r[..., None], self.config.n_subchannels, delays, self.config.theta0)
        lower = self.sir_cdf(theta) @ self.delay_pmf.probs
        upper = lower + self.delay_pmf.tail_mass
        return lower, np.minimum(upper, 1.0)

    def __call__(self, r):
        value = self.bounds(r)[1]
        return float(value) if np.ndim(value) == 0 else value


def rate_cdf(config: NetworkConfig, tol: float = DEFAULT_TOL, size_biased: bool = False) -> RateCdf:
    return RateCdf(config, delay_pmf(config, tol, size_biased), sir_cdf(config, tol))
