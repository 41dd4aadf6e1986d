"""Continuous-time Markov chain simulator for open queueing networks.

Serves as an independent check on the deterministic solver: long-run
time-averaged queue lengths and per-queue throughputs from the event loop
should land on the analytic fixed-point values, and per-queue occupancy
marginals should match the geometric law when the model is product-form.

Replications are seeded from one SeedSequence spawn, so a (seed,
replications) pair fully determines every sample path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DimensionMismatch, ModelFormatError

__all__ = [
    "SimConfig",
    "SimReport",
    "GofResult",
    "simulate_network",
    "geometric_pmf",
    "geometric_fit_test",
]

_CHUNK = 1 << 15
_LEVELS = 64  # occupancy histogram cap; the top level absorbs the tail


@dataclass(frozen=True)
class SimConfig:
    """horizon and warmup are in simulated time units; statistics only
    accumulate on (warmup, horizon]."""

    horizon: float = 2e5
    warmup: float = 2e4
    replications: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0 or not (0 <= self.warmup < self.horizon):
            raise ValueError("need 0 <= warmup < horizon")
        if self.replications < 1:
            raise ValueError("need at least one replication")


@dataclass(frozen=True, eq=False)
class SimReport:
    """Replication-averaged estimates with across-replication standard
    errors. occupancy[r, i, k] is the fraction of measured time replication
    r spent with exactly k jobs at queue i (top bin truncated)."""

    mean_queue_lengths: np.ndarray
    se_queue_lengths: np.ndarray
    throughput: np.ndarray
    se_throughput: np.ndarray
    occupancy: np.ndarray
    rep_queue_lengths: np.ndarray
    rep_throughput: np.ndarray
    total_events: int
    config: SimConfig


@dataclass(frozen=True, eq=False)
class GofResult:
    """Geometric-marginal goodness of fit. One t-test per (queue, level)
    bin across replications, Bonferroni-corrected at level alpha."""

    passed: bool
    alpha: float
    n_tests: int
    min_pvalue: float
    pvalues: np.ndarray


def _simulate_one(lam, mu, cum_rows, horizon, warmup, seed) -> tuple:
    """One replication. Returns (area, completions, occupancy, events)."""
    d = len(lam)
    rng = np.random.default_rng(seed)
    lam_total = float(sum(lam))
    n = [0] * d
    busy_rate = 0.0
    area = [0.0] * d
    completions = [0] * d
    occ = np.zeros((d, _LEVELS))
    top = _LEVELS - 1
    t = 0.0
    events = 0

    exp_buf = rng.standard_exponential(_CHUNK).tolist()
    uni_buf = rng.random(_CHUNK).tolist()
    ei = ui = 0

    while True:
        total_rate = lam_total + busy_rate
        if total_rate <= 0.0:
            # No arrivals and nothing in service: the state is frozen, so
            # account the remaining horizon in one span and stop.
            if horizon > warmup:
                span = horizon - (t if t > warmup else warmup)
                for i in range(d):
                    ni = n[i]
                    area[i] += ni * span
                    occ[i, ni if ni < top else top] += span
            break
        if ei == _CHUNK:
            exp_buf = rng.standard_exponential(_CHUNK).tolist()
            ei = 0
        dt = exp_buf[ei] / total_rate
        ei += 1
        t_next = t + dt
        hold_end = t_next if t_next < horizon else horizon
        if hold_end > warmup:
            span = hold_end - (t if t > warmup else warmup)
            for i in range(d):
                ni = n[i]
                area[i] += ni * span
                occ[i, ni if ni < top else top] += span
        if t_next >= horizon:
            break
        t = t_next
        events += 1
        if ui == _CHUNK:
            uni_buf = rng.random(_CHUNK).tolist()
            ui = 0
        x = uni_buf[ui] * total_rate
        ui += 1
        if x < lam_total:
            # External arrival; scan the rate slots for the target queue.
            acc = 0.0
            i = d - 1
            for j in range(d):
                acc += lam[j]
                if x < acc:
                    i = j
                    break
            if n[i] == 0:
                busy_rate += mu[i]
            n[i] += 1
        else:
            # Service completion at a busy queue. The scan falls back to
            # the last busy queue so tiny float drift in the incremental
            # busy_rate can never select an idle one.
            x -= lam_total
            acc = 0.0
            i = -1
            for j in range(d):
                if n[j] > 0:
                    acc += mu[j]
                    i = j
                    if x < acc:
                        break
            if i < 0:
                # Drift left a positive busy_rate with every queue idle.
                busy_rate = 0.0
                continue
            n[i] -= 1
            if n[i] == 0:
                busy_rate -= mu[i]
            if t > warmup:
                completions[i] += 1
            if ui == _CHUNK:
                uni_buf = rng.random(_CHUNK).tolist()
                ui = 0
            v = uni_buf[ui]
            ui += 1
            row = cum_rows[i]
            for j in range(d):
                if v < row[j]:
                    if n[j] == 0:
                        busy_rate += mu[j]
                    n[j] += 1
                    break
            # Falling through the row means the job departs.
    return area, completions, occ, events


def simulate_network(
    lam_ext, mu, routing, config: SimConfig = SimConfig()
) -> SimReport:
    """Simulate the open network with external Poisson arrivals lam_ext,
    exponential service rates mu, and routing matrix `routing` (row
    deficits depart). Returns replication-averaged statistics."""
    lam = np.asarray(lam_ext, dtype=float)
    mu_arr = np.asarray(mu, dtype=float)
    P = np.asarray(routing, dtype=float)
    d = lam.size
    if mu_arr.shape != (d,):
        raise DimensionMismatch("mu", d, mu_arr.size)
    if P.shape != (d, d):
        raise DimensionMismatch("routing", d * d, P.size)
    if np.any(P < 0) or np.any(P.sum(axis=1) > 1.0 + 1e-9):
        raise ModelFormatError("routing rows must be substochastic")
    if np.any(mu_arr <= 0) or np.any(lam < 0):
        raise ModelFormatError("rates must be nonnegative (mu positive)")

    cum_rows = [np.cumsum(P[i]).tolist() for i in range(d)]
    lam_list = lam.tolist()
    mu_list = mu_arr.tolist()

    R = config.replications
    seeds = np.random.SeedSequence(config.seed).spawn(R)
    span = config.horizon - config.warmup
    rep_len = np.zeros((R, d))
    rep_thru = np.zeros((R, d))
    rep_occ = np.zeros((R, d, _LEVELS))
    total_events = 0
    for r in range(R):
        area, completions, occ, events = _simulate_one(
            lam_list, mu_list, cum_rows, config.horizon, config.warmup, seeds[r]
        )
        rep_len[r] = np.asarray(area) / span
        rep_thru[r] = np.asarray(completions, dtype=float) / span
        rep_occ[r] = occ / span
        total_events += events

    mean_len = rep_len.mean(axis=0)
    mean_thru = rep_thru.mean(axis=0)
    if R > 1:
        se_len = rep_len.std(axis=0, ddof=1) / np.sqrt(R)
        se_thru = rep_thru.std(axis=0, ddof=1) / np.sqrt(R)
    else:
        se_len = np.zeros(d)
        se_thru = np.zeros(d)
    return SimReport(
        mean_queue_lengths=mean_len,
        se_queue_lengths=se_len,
        throughput=mean_thru,
        se_throughput=se_thru,
        occupancy=rep_occ,
        rep_queue_lengths=rep_len,
        rep_throughput=rep_thru,
        total_events=total_events,
        config=config,
    )


def geometric_pmf(rho: float, levels: int) -> np.ndarray:
    """First `levels` probabilities of the geometric occupancy law
    P(N = k) = (1 - rho) rho^k for a stable single queue with utilization
    rho in [0, 1)."""
    if not (0.0 <= rho < 1.0):
        raise ValueError("utilization must lie in [0, 1)")
    k = np.arange(levels)
    return (1.0 - rho) * rho**k


def geometric_fit_test(
    report: SimReport,
    utilization,
    alpha: float = 0.01,
    levels: int = 12,
    min_prob: float = 1e-3,
) -> GofResult:
    """Test each queue's simulated occupancy marginal against the geometric
    law at the given utilizations.

    Per (queue, level) bin the replication-level time fractions are t-tested
    against the geometric probability; the family-wise level alpha is split
    evenly over all tested bins (Bonferroni). Bins whose expected
    probability falls below min_prob are skipped, as ten replications carry
    no power there.
    """
    rho = np.asarray(utilization, dtype=float)
    R, d, K = report.occupancy.shape
    if rho.shape != (d,):
        raise DimensionMismatch("utilization", d, rho.size)
    levels = min(levels, K)
    pvalues = np.full((d, levels), np.nan)
    for i in range(d):
        expected = geometric_pmf(float(rho[i]), levels)
        for k in range(levels):
            if expected[k] < min_prob:
                continue
            sample = report.occupancy[:, i, k]
            if np.ptp(sample) == 0.0:
                # Degenerate sample: every replication agrees exactly;
                # pass iff it agrees with the expected value too.
                pvalues[i, k] = 1.0 if sample[0] == expected[k] else 0.0
                continue
            pvalues[i, k] = stats.ttest_1samp(sample, expected[k]).pvalue
    tested = ~np.isnan(pvalues)
    n_tests = int(tested.sum())
    if n_tests == 0:
        return GofResult(True, alpha, 0, 1.0, pvalues)
    min_p = float(np.nanmin(pvalues))
    return GofResult(min_p >= alpha / n_tests, alpha, n_tests, min_p, pvalues)
