"""Monte Carlo simulation of the PPP downlink with both schedulers.

Each drop samples AP and UE point processes in a disk around a typical UE
at the origin, associates every UE with its nearest AP, runs the scheduler
on the actual per-cell loads and evaluates the typical UE's SIR, delay and
rate in the slot in which it is served. Interferer activity comes from the
scheduler state, so comparing against the analytical formulas measures how
much the independence assumption behind them costs.

Randomness is drawn from one Philox stream per (seed, drop, purpose) key,
so a drop's outcome does not depend on which other drops or scheduler
variants are run alongside it.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gamma

from .analytics import DomainError, NetworkConfig, Scheme

__all__ = [
    "SimConfig",
    "Deployment",
    "Scheduling",
    "Snapshot",
    "DropRecord",
    "SimulationResult",
    "EmpiricalCdf",
    "WindowTooSmall",
    "truncation_bias",
    "default_window_radius",
    "drop_rng",
    "sample_deployment",
    "fdma_tdma_assignment",
    "fdma_tdma_assignment_batch",
    "schedule_tdma",
    "schedule_fdma_tdma",
    "snapshot_sir",
    "run_drop",
    "simulate",
    "empirical_rate_cdf",
    "ks_distance",
    "dkw_halfwidth",
]

log = logging.getLogger(__name__)

MIN_APS_IN_WINDOW = 500
MAX_TRUNCATION_BIAS = 0.01
_COLOCATED = 1e-9

_SCHEME_KEY = {Scheme.TDMA: 0, Scheme.FDMA_TDMA: 1}


class WindowTooSmall(DomainError):
    pass


def truncation_bias(window_radius: float, lambda_a: float, alpha: float) -> float:
    """Share of the typical UE's mean interference produced beyond ``window_radius``.

    Given the serving distance r0, mean interference from a PPP outside r0
    scales as r0^(2-alpha); the part beyond the window scales as
    R^(2-alpha). Averaging over the Rayleigh serving distance,
    E[r0^(2-alpha)] = (pi lambda)^((alpha-2)/2) Gamma(2 - alpha/2) for
    alpha < 4. For alpha >= 4 that mean diverges, and the ratio is taken at
    the median serving distance instead, which is conservative.
    """
    if alpha < 4:
        near = (math.pi * lambda_a) ** ((alpha - 2) / 2) * gamma(2 - alpha / 2)
    else:
        r_med = math.sqrt(math.log(2) / (math.pi * lambda_a))
        near = r_med ** (2 - alpha)
    return window_radius ** (2 - alpha) / near


def default_window_radius(lambda_a: float, alpha: float, max_bias: float = MAX_TRUNCATION_BIAS) -> float:
    by_count = math.sqrt(MIN_APS_IN_WINDOW / (math.pi * lambda_a))
    if alpha < 4:
        near = (math.pi * lambda_a) ** ((alpha - 2) / 2) * gamma(2 - alpha / 2)
    else:
        near = math.sqrt(math.log(2) / (math.pi * lambda_a)) ** (2 - alpha)
    by_bias = (max_bias * near) ** (1 / (2 - alpha))
    return max(by_count, by_bias) * (1 + 1e-9)


@dataclass(frozen=True)
class SimConfig:
    lambda_a: float = 1.0
    lambda_u: float = 1.0
    window_radius: float | None = None
    alpha: float = 3.0
    theta0: float = 1.0
    n_subchannels: int = 1
    scheme: Scheme = Scheme.FDMA_TDMA
    n_drops: int = 1000
    seed: int = 0
    max_truncation_bias: float = MAX_TRUNCATION_BIAS

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        for name in ("lambda_a", "lambda_u"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name}: density must be positive, got {value!r}")
        # reuse NetworkConfig's checks for the shared fields
        NetworkConfig(self.tau, self.alpha, self.theta0, self.n_subchannels, self.scheme)
        if int(self.n_drops) != self.n_drops or self.n_drops < 1:
            raise DomainError(f"n_drops: must be a positive integer, got {self.n_drops!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed: must fit in 64 bits, got {self.seed!r}")
        object.__setattr__(self, "n_subchannels", int(self.n_subchannels))
        object.__setattr__(self, "n_drops", int(self.n_drops))
        object.__setattr__(self, "seed", int(self.seed))
        if self.window_radius is None:
            radius = default_window_radius(self.lambda_a, self.alpha, self.max_truncation_bias)
            object.__setattr__(self, "window_radius", radius)
        bias = truncation_bias(self.window_radius, self.lambda_a, self.alpha)
        if not self.window_radius > 0 or bias > self.max_truncation_bias:
            raise WindowTooSmall(
                f"window_radius: {self.window_radius!r} leaves an interference truncation bias "
                f"of {bias:.3%} (bound {self.max_truncation_bias:.3%})"
            )

    @property
    def tau(self) -> float:
        return self.lambda_a / self.lambda_u

    @property
    def bias(self) -> float:
        return truncation_bias(self.window_radius, self.lambda_a, self.alpha)

    def network(self) -> NetworkConfig:
        return NetworkConfig(self.tau, self.alpha, self.theta0, self.n_subchannels, self.scheme)

    @classmethod
    def from_network(cls, config: NetworkConfig, lambda_a: float = 1.0, **kwargs) -> "SimConfig":
        return cls(
            lambda_a=lambda_a,
            lambda_u=lambda_a / config.tau,
            alpha=config.alpha,
            theta0=config.theta0,
            n_subchannels=config.n_subchannels,
            scheme=config.scheme,
            **kwargs,
        )

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def drop_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for ``key`` under ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True, eq=False)
class Deployment:
    ap_points: np.ndarray
    ue_points: np.ndarray  # row 0 is the typical UE at the origin
    association: np.ndarray
    loads: np.ndarray
    ap_distances: np.ndarray
    serving: int
    typical_ue: int = 0
    _gains: dict = field(default_factory=dict, repr=False)

    def path_gain(self, alpha: float) -> np.ndarray:
        """d**-alpha for every AP, computed once per exponent."""
        if alpha not in self._gains:
            self._gains[alpha] = self.ap_distances**-alpha
        return self._gains[alpha]

    @property
    def k0(self) -> int:
        """UEs sharing the typical UE's AP, not counting the typical UE."""
        return int(self.loads[self.serving]) - 1

    @property
    def serving_distance(self) -> float:
        return float(self.ap_distances[self.serving])


def _uniform_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    phi = 2 * np.pi * rng.random(n)
    return np.column_stack((r * np.cos(phi), r * np.sin(phi)))


def sample_deployment(config: SimConfig, rng: np.random.Generator) -> Deployment:
    area = math.pi * config.window_radius**2
    while True:
        n_ap = rng.poisson(config.lambda_a * area)
        n_ue = rng.poisson(config.lambda_u * area)
        aps = _uniform_disk(rng, n_ap, config.window_radius)
        ues = _uniform_disk(rng, n_ue, config.window_radius)
        if n_ap == 0:
            log.warning("drop sampled no APs in the window; resampling")
            continue
        dist = np.hypot(aps[:, 0], aps[:, 1])
        serving = int(np.argmin(dist))
        if dist[serving] < _COLOCATED:
            log.warning("typical UE colocated with its AP; resampling")
            continue
        break
    ues = np.vstack((np.zeros((1, 2)), ues))
    if n_ap == 1:
        association = np.zeros(len(ues), dtype=np.intp)
    else:
        _, association = cKDTree(aps, balanced_tree=False, compact_nodes=False).query(ues)
    # the tree's nearest AP for the origin may differ from argmin only on exact ties
    association[0] = serving
    loads = np.bincount(association, minlength=n_ap)
    return Deployment(aps, ues, association, loads, dist, serving)


@dataclass(frozen=True, eq=False)
class Scheduling:
    """Subchannel occupancy in the slot serving the typical UE.

    ``active`` marks the APs transmitting on the typical UE's subchannel,
    which is all the SIR needs. The full (n_ap, N) matrix is only built on
    request because it dominates the cost of a drop for large N.
    """

    active: np.ndarray  # (n_ap,) bool, delta_{i, typical_sc}
    typical_sc: int
    delay: int
    serving_sc_counts: np.ndarray  # UEs per subchannel at the serving AP
    sc_assignment: np.ndarray | None = None  # (n_ap, N) bool when requested


def schedule_tdma(
    deployment: Deployment, n_subchannels: int, rng: np.random.Generator, full: bool = False
) -> Scheduling:
    """Each loaded AP serves one UE per slot on one uniformly drawn subchannel.

    Which of its UEs a cell serves in the slot does not affect occupancy, so
    only the subchannel draw is sampled. The serving AP is observed in the
    slot that belongs to the typical UE.
    """
    loads = deployment.loads
    n_ap = len(loads)
    sc = rng.integers(0, n_subchannels, size=n_ap)
    typical_sc = int(sc[deployment.serving])
    busy = loads > 0
    active = busy & (sc == typical_sc)
    delta = None
    if full:
        delta = np.zeros((n_ap, n_subchannels), dtype=bool)
        rows = np.flatnonzero(busy)
        delta[rows, sc[rows]] = True
    counts = np.zeros(n_subchannels, dtype=np.int64)
    counts[typical_sc] = loads[deployment.serving]
    return Scheduling(active, typical_sc, deployment.k0, counts, delta)


def fdma_tdma_assignment(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Subchannel index of each of k UEs under the FDMA/TDMA allocation.

    UEs are put in random order and taken in blocks of n; within a block
    each UE draws a subchannel uniformly from those not yet used by the
    block. UEs sharing a subchannel are then time multiplexed.
    """
    order = rng.permutation(k)
    sc = np.empty(k, dtype=np.int64)
    for start in range(0, k, n):
        members = order[start : start + n]
        available = list(range(n))
        for ue in members:
            sc[ue] = available.pop(int(rng.integers(len(available))))
    return sc


def fdma_tdma_assignment_batch(trials: int, k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``trials`` independent FDMA/TDMA assignments of k UEs, shape (trials, k)."""
    position = np.argsort(rng.random((trials, k)), axis=1)  # position[t, j]: UE at slot j of the order
    sc = np.empty((trials, k), dtype=np.int64)
    rows = np.arange(trials)[:, None]
    for start in range(0, k, n):
        size = min(n, k - start)
        draws = np.argsort(rng.random((trials, n)), axis=1)[:, :size]
        sc[rows, position[:, start : start + size]] = draws
    return sc


def schedule_fdma_tdma(
    deployment: Deployment, n_subchannels: int, rng: np.random.Generator, full: bool = False
) -> Scheduling:
    """FDMA/TDMA occupancy; every subchannel holding a UE is active in every slot.

    An interfering AP with load K occupies min(K, N) distinct subchannels,
    which for K < N form a uniformly random subset, so it is active on any
    given subchannel with probability min(K, N)/N independently of the other
    APs. The serving cell runs the full per-UE allocation so the typical UE's
    delay is its number of subchannel cohabitants.
    """
    loads = deployment.loads
    n_ap = len(loads)
    n = n_subchannels
    s = deployment.serving
    cell = fdma_tdma_assignment(int(loads[s]), n, rng)
    typical = 0  # labels inside the cell are exchangeable; the order is randomised
    counts = np.bincount(cell, minlength=n)
    typical_sc = int(cell[typical])
    occupied = np.minimum(loads, n)
    delta = None
    if full:
        delta = np.zeros((n_ap, n), dtype=bool)
        delta[loads >= n] = True
        partial = np.flatnonzero((loads > 0) & (loads < n))
        if partial.size:
            rank = np.argsort(np.argsort(rng.random((partial.size, n)), axis=1), axis=1)
            delta[partial] = rank < loads[partial, None]
        delta[s] = counts > 0
        active = delta[:, typical_sc].copy()
    else:
        active = rng.random(n_ap) * n < occupied
        active[s] = True
    return Scheduling(active, typical_sc, int(counts[typical_sc] - 1), counts, delta)


_SCHEDULERS: dict[Scheme, Callable[..., Scheduling]] = {
    Scheme.TDMA: schedule_tdma,
    Scheme.FDMA_TDMA: schedule_fdma_tdma,
}


@dataclass(frozen=True, eq=False)
class Snapshot:
    scheduling: Scheduling
    fading: np.ndarray  # serving AP first, then the active interferers in index order
    sir: float
    rate: float

    @property
    def delay(self) -> int:
        return self.scheduling.delay


def snapshot_sir(
    deployment: Deployment, scheduling: Scheduling, rng: np.random.Generator, alpha: float
) -> tuple[float, np.ndarray]:
    """SIR of the typical UE on its subchannel; +inf when nobody interferes.

    Fading is drawn for the serving AP (first) and the active interferers
    only; the other APs do not contribute to the SIR.
    """
    active = scheduling.active.copy()
    active[deployment.serving] = False
    gain = deployment.path_gain(alpha)
    fading = rng.exponential(size=1 + int(np.count_nonzero(active)))
    interference = float(np.dot(fading[1:], gain[active]))
    signal = fading[0] * gain[deployment.serving]
    sir = signal / interference if interference > 0 else math.inf
    return sir, fading


def _rate(sir: float, theta0: float, n: int, delay: int) -> float:
    if sir < theta0:
        return 0.0
    return math.log2(1.0 + sir) / (n * (delay + 1))


def take_snapshot(
    deployment: Deployment, n_subchannels: int, scheme: Scheme, theta0: float, alpha: float,
    rng: np.random.Generator, full: bool = False,
) -> Snapshot:
    scheduling = _SCHEDULERS[scheme](deployment, n_subchannels, rng, full)
    sir, fading = snapshot_sir(deployment, scheduling, rng, alpha)
    rate = _rate(sir, theta0, n_subchannels, scheduling.delay)
    return Snapshot(scheduling, fading, sir, rate)


@dataclass(frozen=True)
class DropRecord:
    drop: int
    k0: int
    serving_distance: float
    sir: float
    delay: int
    rate: float
    active: int  # interior interferers active on the typical UE's subchannel
    interior: int  # interior APs other than the serving one


def run_drop(config: SimConfig, drop: int, variants: Sequence[tuple[int, Scheme]]) -> list[DropRecord]:
    """Simulate one deployment under each (n_subchannels, scheme) variant."""
    deployment = sample_deployment(config, drop_rng(config.seed, drop, 0))
    # activity is counted away from the rim, where loads are cut short by the window
    interior = deployment.ap_distances < config.window_radius / 2
    interior[deployment.serving] = False
    records = []
    for n, scheme in variants:
        rng = drop_rng(config.seed, drop, 1, n, _SCHEME_KEY[scheme])
        snap = take_snapshot(deployment, n, scheme, config.theta0, config.alpha, rng)
        col = snap.scheduling.active
        records.append(
            DropRecord(
                drop, deployment.k0, deployment.serving_distance, snap.sir, snap.delay, snap.rate,
                int(np.count_nonzero(col & interior)), int(np.count_nonzero(interior)),
            )
        )
    return records


@dataclass
class SimulationResult:
    config: SimConfig
    n_subchannels: int
    scheme: Scheme
    k0: np.ndarray
    serving_distance: np.ndarray
    sir: np.ndarray
    delay: np.ndarray
    rate: np.ndarray
    active: np.ndarray
    interior: np.ndarray

    @classmethod
    def from_records(cls, config, n, scheme, records: Sequence[DropRecord]) -> "SimulationResult":
        records = sorted(records, key=lambda r: r.drop)
        col = lambda name, dtype: np.array([getattr(r, name) for r in records], dtype=dtype)
        return cls(
            config, n, scheme,
            col("k0", np.int64), col("serving_distance", float), col("sir", float),
            col("delay", np.int64), col("rate", float), col("active", np.int64), col("interior", np.int64),
        )

    @property
    def n_drops(self) -> int:
        return len(self.rate)

    def rate_cdf(self) -> "EmpiricalCdf":
        return EmpiricalCdf(self.rate)

    def sir_cdf(self) -> "EmpiricalCdf":
        return EmpiricalCdf(self.sir)

    def activity(self) -> tuple[float, float]:
        """Pooled activity estimate over interior APs and its batch-means standard error."""
        total = self.interior.sum()
        p = self.active.sum() / total
        if self.n_drops < 2:
            return float(p), math.nan
        # ratio estimator variance with drops as independent batches
        resid = self.active - p * self.interior
        se = math.sqrt(np.sum(resid**2) / (self.n_drops * (self.n_drops - 1))) / (total / self.n_drops)
        return float(p), float(se)

    def independence_audit(self) -> dict:
        """Joint law of (SIR outage, delay) against the product of its marginals."""
        outage = self.sir < self.config.theta0
        delays = np.unique(self.delay)
        rows = []
        for l in delays:
            at = self.delay == l
            joint = float(np.mean(outage & at))
            product = float(np.mean(outage) * np.mean(at))
            rows.append((int(l), joint, product))
        gap = max((abs(j - p) for _, j, p in rows), default=0.0)
        return {"outage": float(np.mean(outage)), "rows": rows, "max_gap": gap}


def _run_chunk(config: SimConfig, drops: range, variants) -> list[list[DropRecord]]:
    return [run_drop(config, drop, variants) for drop in drops]


def simulate(
    config: SimConfig,
    variants: Iterable[tuple[int, Scheme | str]] | None = None,
    progress: Callable[[int], None] | None = None,
    workers: int = 1,
    chunk_size: int = 2000,
) -> dict[tuple[int, Scheme], SimulationResult]:
    """Run ``config.n_drops`` drops; every variant sees the same deployments.

    Without ``variants`` only ``(config.n_subchannels, config.scheme)`` is
    run. With ``workers > 1`` chunks of drops run in separate processes; the
    records are merged by drop index, so the result does not depend on the
    number of workers. ``progress`` receives the number of finished drops.
    """
    if variants is None:
        variants = [(config.n_subchannels, config.scheme)]
    variants = [(int(n), Scheme.parse(s)) for n, s in variants]
    for n, _ in variants:
        if n < 1:
            raise DomainError(f"n_subchannels: must be a positive integer, got {n!r}")
    if workers < 1:
        raise DomainError(f"workers: must be a positive integer, got {workers!r}")
    per_variant: dict[tuple[int, Scheme], list[DropRecord]] = {v: [] for v in variants}
    chunks = [range(i, min(i + chunk_size, config.n_drops)) for i in range(0, config.n_drops, chunk_size)]
    done = 0

    def collect(rows: list[list[DropRecord]]) -> None:
        nonlocal done
        for drop_records in rows:
            for v, rec in zip(variants, drop_records):
                per_variant[v].append(rec)
        done += len(rows)
        if progress is not None:
            progress(done)

    if workers == 1:
        for chunk in chunks:
            collect(_run_chunk(config, chunk, variants))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, config, chunk, variants) for chunk in chunks]
            for fut in as_completed(futures):
                collect(fut.result())
    # from_records sorts by drop index, which makes the merge order irrelevant
    return {
        (n, s): SimulationResult.from_records(config, n, s, recs) for (n, s), recs in per_variant.items()
    }


def dkw_halfwidth(n: int, confidence: float = 0.95) -> float:
    """Dvoretzky-Kiefer-Wolfowitz uniform band half-width for n samples."""
    return math.sqrt(math.log(2 / (1 - confidence)) / (2 * n))


class EmpiricalCdf:
    def __init__(self, samples, confidence: float = 0.95):
        self.samples = np.sort(np.asarray(samples, dtype=float))
        if self.samples.size == 0:
            raise ValueError("empirical CDF needs at least one sample")
        self.confidence = confidence
        self.halfwidth = dkw_halfwidth(self.samples.size, confidence)

    def __len__(self) -> int:
        return self.samples.size

    def __call__(self, x):
        value = np.searchsorted(self.samples, x, side="right") / self.samples.size
        return float(value) if np.ndim(value) == 0 else value

    def band(self, x):
        f = np.asarray(self(x), dtype=float)
        return np.clip(f - self.halfwidth, 0, 1), np.clip(f + self.halfwidth, 0, 1)


def ks_distance(samples, cdf: Callable, atoms: Sequence[float] = (0.0,)) -> float:
    """sup_x |F_n(x) - F(x)| for a CDF continuous except at ``atoms``.

    The supremum is attained at a sample point, approached either from the
    right or from the left. Left limits of F are taken as F itself except at
    the listed atoms, where F(a-) is obtained just below a.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    uniq, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    finite = np.isfinite(uniq)
    f = np.ones_like(uniq)
    f[finite] = np.asarray(cdf(uniq[finite]), dtype=float)
    f_left = f.copy()
    for a in atoms:
        hit = uniq == a
        if np.any(hit):
            f_left[hit] = float(cdf(np.nextafter(a, -np.inf))) if a > 0 else 0.0
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f_left))))


def empirical_rate_cdf(config: SimConfig) -> EmpiricalCdf:
    result = simulate(config)[(config.n_subchannels, config.scheme)]
    return result.rate_cdf()
