"""Monte Carlo layer: scheduler laws, deployment statistics, reproducibility."""

import math

import numpy as np
import pytest
from scipy import stats

from udnrate.analytics import (
    NetworkConfig,
    Scheme,
    activity_probability,
    delay_conditional_pmf,
    rate_cdf,
    tagged_cell_load_pmf,
)
from udnrate.simulator import (
    Deployment,
    EmpiricalCdf,
    SimConfig,
    WindowTooSmall,
    default_window_radius,
    dkw_halfwidth,
    drop_rng,
    fdma_tdma_assignment,
    fdma_tdma_assignment_batch,
    ks_distance,
    run_drop,
    sample_deployment,
    schedule_fdma_tdma,
    schedule_tdma,
    simulate,
    snapshot_sir,
    truncation_bias,
)

FIG4_VARIANTS = [(n, s) for s in Scheme for n in (1, 5, 10)]


def within_3_sigma(counts: np.ndarray, trials: int, probs: np.ndarray) -> np.ndarray:
    se = np.sqrt(probs * (1 - probs) / trials)
    return np.abs(counts / trials - probs) <= 3 * se + 1e-12


# -- scheduler -------------------------------------------------------------------

def test_assignment_blocks_use_distinct_subchannels():
    rng = np.random.default_rng(1)
    for k, n in [(1, 4), (7, 3), (12, 5), (20, 20)]:
        sc = fdma_tdma_assignment(k, n, rng)
        counts = np.bincount(sc, minlength=n)
        # blocks of n distinct subchannels plus one partial block
        assert counts.max() - counts.min() <= 1
        assert sorted(counts, reverse=True)[: k % n or n] == [counts.max()] * (k % n or n)


def test_batch_assignment_matches_scalar_law():
    k, n, trials = 7, 3, 40_000
    batch = fdma_tdma_assignment_batch(trials, k, n, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    scalar = np.array([fdma_tdma_assignment(k, n, rng) for _ in range(trials)])
    # occupancy of subchannel 0 as seen by UE 0, compared between the two samplers
    def law(sc):
        same = (sc == sc[:, :1]).sum(axis=1) - 1
        return np.bincount(same, minlength=k)

    table = np.vstack([law(batch), law(scalar)])
    table = table[:, table.sum(axis=0) > 0]
    assert stats.chi2_contingency(table).pvalue > 1e-3


@pytest.mark.parametrize("n", range(1, 7))
def test_subchannel_delay_law_matches_monte_carlo(n):
    """Occupancy of subchannel 0, given it is used, against the closed form."""
    trials = 100_000
    rng = np.random.default_rng(100 + n)
    for k0 in range(0, 13):
        sc = fdma_tdma_assignment_batch(trials, k0 + 1, n, rng)
        on_zero = (sc == 0).sum(axis=1)
        used = on_zero > 0
        observed = np.bincount(on_zero[used] - 1, minlength=k0 + 1)
        law = delay_conditional_pmf(k0, n)
        probs = np.array([law.get(l, 0.0) for l in range(k0 + 1)])
        ok = within_3_sigma(observed, int(used.sum()), probs)
        assert ok.all(), (k0, n, observed / used.sum(), probs)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_typical_ue_delay_is_size_biased(n):
    trials = 100_000
    rng = np.random.default_rng(200 + n)
    for k0 in range(0, 13):
        sc = fdma_tdma_assignment_batch(trials, k0 + 1, n, rng)
        cohabitants = (sc == sc[:, :1]).sum(axis=1) - 1
        observed = np.bincount(cohabitants, minlength=k0 + 1)
        law = delay_conditional_pmf(k0, n, size_biased=True)
        probs = np.array([law.get(l, 0.0) for l in range(k0 + 1)])
        assert within_3_sigma(observed, trials, probs).all(), (k0, n)


def _toy_deployment(loads, distances):
    loads = np.asarray(loads)
    d = np.asarray(distances, dtype=float)
    aps = np.column_stack((d, np.zeros_like(d)))
    return Deployment(aps, np.zeros((int(loads.sum()), 2)), np.zeros(int(loads.sum()), dtype=int), loads, d, 0)


def test_full_occupancy_matrix_is_consistent():
    rng = np.random.default_rng(4)
    dep = _toy_deployment([3, 0, 1, 4, 7, 2], [0.5, 1, 2, 3, 4, 5])
    for _ in range(50):
        s = schedule_fdma_tdma(dep, 4, rng, full=True)
        assert np.array_equal(s.sc_assignment.sum(axis=1)[1:], np.minimum(dep.loads, 4)[1:])
        np.testing.assert_array_equal(s.sc_assignment[:, s.typical_sc], s.active)
        t = schedule_tdma(dep, 4, rng, full=True)
        assert np.array_equal(t.sc_assignment.sum(axis=1), (dep.loads > 0).astype(int))
        np.testing.assert_array_equal(t.sc_assignment[:, t.typical_sc], t.active)


def test_sir_is_infinite_without_interferers():
    dep = _toy_deployment([2, 0, 0], [0.3, 1.0, 2.0])
    sched = schedule_tdma(dep, 1, np.random.default_rng(0))
    sir, _ = snapshot_sir(dep, sched, np.random.default_rng(0), 3.0)
    assert sir == math.inf


# -- deployment ------------------------------------------------------------------

def test_default_window_meets_bias_bound():
    for lam, alpha in [(1.0, 3.0), (0.1, 3.0), (1.0, 4.0), (1.0, 2.5)]:
        R = default_window_radius(lam, alpha)
        assert truncation_bias(R, lam, alpha) <= 0.01
        assert math.pi * lam * R**2 >= 500
        # doubling the window moves mean interference by less than 1%
        assert truncation_bias(R, lam, alpha) - truncation_bias(2 * R, lam, alpha) < 0.01


def test_window_too_small_names_bound():
    with pytest.raises(WindowTooSmall, match="truncation bias"):
        SimConfig(window_radius=5.0)


def test_typical_ue_and_loads():
    cfg = SimConfig(window_radius=12.0, max_truncation_bias=0.2)
    dep = sample_deployment(cfg, drop_rng(0, 0, 0))
    assert np.array_equal(dep.ue_points[0], [0.0, 0.0])
    assert dep.association[0] == dep.serving
    assert dep.serving == int(np.argmin(np.hypot(*dep.ap_points.T)))
    assert dep.loads.sum() == len(dep.ue_points)
    d = np.hypot(*(dep.ue_points[:, None, :] - dep.ap_points[None, :, :]).transpose(2, 0, 1))
    np.testing.assert_array_equal(dep.association, d.argmin(axis=1))


def test_tagged_load_histogram():
    # small window: the load of the cell holding the origin is unaffected by the rim
    cfg = SimConfig(window_radius=10.0, max_truncation_bias=0.5, n_drops=4000, seed=7)
    k0 = np.array([sample_deployment(cfg, drop_rng(cfg.seed, d, 0)).k0 for d in range(cfg.n_drops)])
    pmf = tagged_cell_load_pmf(1.0)
    counts = np.bincount(k0, minlength=8)[:8]
    assert within_3_sigma(counts, cfg.n_drops, pmf.probs[:8]).all()
    assert k0.mean() == pytest.approx(9 / 7, abs=3 * k0.std() / math.sqrt(cfg.n_drops))


@pytest.fixture(scope="module")
def fig4_run():
    return simulate(SimConfig(n_drops=1500, seed=11), FIG4_VARIANTS)


def test_activity_matches_analysis(fig4_run):
    for (n, scheme), res in fig4_run.items():
        p, se = res.activity()
        ref = activity_probability(NetworkConfig(1.0, n_subchannels=n, scheme=scheme))
        assert abs(p - ref) <= 3 * se, (n, scheme, p, ref, se)


def test_rate_cdf_close_to_analysis(fig4_run):
    # loose screen at this sample size; the 10^5-drop check is in the acceptance suite
    for (n, scheme), res in fig4_run.items():
        F = rate_cdf(NetworkConfig(1.0, theta0=1.0, n_subchannels=n, scheme=scheme))
        assert ks_distance(res.rate, F) < 0.02 + 1.63 / math.sqrt(res.n_drops)


def test_single_subchannel_schemes_share_sir_law(fig4_run):
    a = fig4_run[(1, Scheme.TDMA)]
    b = fig4_run[(1, Scheme.FDMA_TDMA)]
    np.testing.assert_array_equal(a.k0, b.k0)
    np.testing.assert_array_equal(a.delay, b.delay)
    assert stats.ks_2samp(a.sir, b.sir).pvalue > 1e-3


def test_independence_audit(fig4_run):
    audit = fig4_run[(5, Scheme.FDMA_TDMA)].independence_audit()
    assert 0 < audit["outage"] < 1
    assert audit["max_gap"] >= 0


# -- reproducibility -------------------------------------------------------------

def test_same_seed_same_records():
    cfg = SimConfig(n_drops=40, seed=5)
    a = simulate(cfg, [(5, "fdma_tdma"), (3, "tdma")])
    b = simulate(cfg, [(5, "fdma_tdma"), (3, "tdma")])
    for key in a:
        np.testing.assert_array_equal(a[key].rate, b[key].rate)
        np.testing.assert_array_equal(a[key].sir, b[key].sir)


def test_drop_does_not_depend_on_neighbours():
    cfg = SimConfig(n_drops=30, seed=9)
    alone = run_drop(cfg, 17, [(5, Scheme.FDMA_TDMA)])[0]
    together = simulate(cfg, [(1, "tdma"), (5, "fdma_tdma")])[(5, Scheme.FDMA_TDMA)]
    assert together.rate[17] == alone.rate
    assert together.sir[17] == alone.sir


def test_workers_and_chunks_do_not_change_results():
    cfg = SimConfig(n_drops=60, seed=2)
    a = simulate(cfg, [(5, "fdma_tdma")], chunk_size=7)
    b = simulate(cfg, [(5, "fdma_tdma")], workers=2, chunk_size=13)
    key = (5, Scheme.FDMA_TDMA)
    np.testing.assert_array_equal(a[key].rate, b[key].rate)


def test_seeds_differ():
    key = (1, Scheme.FDMA_TDMA)
    a = simulate(SimConfig(n_drops=20, seed=1))[key]
    b = simulate(SimConfig(n_drops=20, seed=2))[key]
    assert not np.array_equal(a.sir, b.sir)


# -- empirical CDF tools ---------------------------------------------------------

def test_ks_distance_matches_scipy_for_continuous_law():
    x = np.random.default_rng(3).exponential(size=2000)
    ours = ks_distance(x, stats.expon.cdf, atoms=())
    assert ours == pytest.approx(stats.kstest(x, "expon").statistic, abs=1e-12)


def test_ks_distance_with_atom():
    # half the mass at zero, the rest uniform on (0, 1]
    cdf = lambda r: np.where(np.asarray(r) >= 0, 0.5 + 0.5 * np.clip(r, 0, 1), 0.0)
    rng = np.random.default_rng(5)
    x = np.where(rng.random(4000) < 0.5, 0.0, rng.random(4000))
    assert ks_distance(x, cdf) < 1.36 / math.sqrt(4000)
    # all samples at the atom against the mixture: the jump is off by one half
    assert ks_distance(np.zeros(10), cdf) == pytest.approx(0.5)


def test_empirical_cdf_band():
    e = EmpiricalCdf(np.arange(1000.0))
    assert e(499.5) == 0.5
    lo, hi = e.band([499.5])
    assert hi[0] - lo[0] == pytest.approx(2 * dkw_halfwidth(1000))
    assert e.band([-1.0])[0][0] == 0.0
    with pytest.raises(ValueError):
        EmpiricalCdf([])
