"""Monte-Carlo link-level campaigns, back-off calibration and rate bounds.

Every random quantity of a trial comes from its own SeedSequence substream
keyed by the campaign seed, the component and the trial index (plus the SNR
point for noise and payloads).  Channel estimates and SAA samples therefore
coincide across schemes and SNR points, which pairs the comparisons.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.stats import beta as beta_dist

from ._validation import check_count, check_positive
from .amc import BackoffTable, apply_backoff, select_all
from .channel import CsitModel, combine, complex_normal, substream
from .precoder import SCHEMES, SolverOptions, optimize_noma, optimize_rsma, optimize_sdma
from .transceiver import effective_precoder, merge_messages, receive_sic, split_payload, stream_chains, transmit

logger = logging.getLogger(__name__)

STREAM_NAMES = ("common", "private1", "private2")
DEFAULT_BACKOFF_GRID = tuple(float(v) for v in np.round(np.arange(0.0, 20.01, 0.5), 2))


@dataclass(frozen=True)
class CampaignConfig:
    """Settings of one campaign.

    Parameters
    ----------
    scheme : {"rsma", "sdma", "noma"}
    snr_db : tuple of float
        SNR grid; the transmit power is ``10 ** (snr / 10)`` with unit noise.
    alpha : float
        CSIT quality exponent; ``inf`` gives perfect CSIT.
    qos_rate : float
        Minimum rate per user (bps/Hz) imposed on the precoder design.
    S : int
        QAM symbols per stream and block.
    trials : int
        Channel estimates per SNR point.
    saa_samples : int
        Realizations per estimate in the average-rate approximation.
    beta : float
        Largest code rate.
    seed : int
    backoff : BackoffTable or None
        ``None`` uses the table shipped with the package.
    noise : bool
        ``False`` removes receiver noise (diagnostics).
    """

    scheme: str = "rsma"
    snr_db: tuple = (10.0, 15.0, 20.0, 25.0, 30.0)
    alpha: float = 0.6
    qos_rate: float = 0.0
    S: int = 256
    trials: int = 200
    saa_samples: int = 200
    beta: float = 0.9
    seed: int = 0
    backoff: BackoffTable = field(default=None, compare=False, hash=False)
    list_size: int = 8
    crc_length: int = 11
    max_iterations: int = 200
    tolerance: float = 1e-4
    noise: bool = True
    n_t: int = 2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; valid schemes are {', '.join(SCHEMES)}")
        snr = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        if not snr:
            raise ValueError("SNR grid must not be empty")
        object.__setattr__(self, "snr_db", snr)
        check_count(self.trials, "trials")
        check_count(self.S, "S")
        check_count(self.saa_samples, "saa_samples")
        check_count(self.list_size, "list_size")
        check_positive(self.qos_rate, "qos_rate", strict=False)
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not (self.alpha >= 0):
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    def table(self):
        return BackoffTable.default() if self.backoff is None else self.backoff


def _snr_key(snr_db):
    return int(round((snr_db + 1000.0) * 1000))


# --------------------------------------------------------------------------
# per-trial channel state and precoder design (codec independent)


@dataclass(frozen=True)
class TrialSetup:
    estimate: np.ndarray
    realization: np.ndarray
    samples: np.ndarray
    solution: object


def _draws(seed, trial, n_t, saa_samples):
    H_hat = complex_normal((n_t, 2), substream(seed, "estimate", trial))
    err = complex_normal((n_t, 2), substream(seed, "error", trial))
    saa = complex_normal((saa_samples, n_t, 2), substream(seed, "saa", trial))
    return H_hat, err, saa


@lru_cache(maxsize=50000)
def _solutions(seed, trial, n_t, saa_samples, alpha, snr_db, qos_rate, max_iterations, tolerance, scheme):
    """Cached optimizer output; RSMA reuses the cached SDMA/NOMA solutions."""
    H_hat, _, saa = _draws(seed, trial, n_t, saa_samples)
    model = CsitModel.from_snr_db(snr_db, alpha)
    samples = combine(H_hat[None], saa, model.sigma_e2)
    opts = SolverOptions(saa_samples=saa_samples, max_iterations=max_iterations,
                         tolerance=tolerance, qos_rate=qos_rate)
    if scheme == "sdma":
        return optimize_sdma(H_hat, model, opts, samples)
    if scheme == "noma":
        return optimize_noma(H_hat, model, opts, samples)
    key = (seed, trial, n_t, saa_samples, alpha, snr_db, qos_rate, max_iterations, tolerance)
    baselines = [_solutions(*key, "sdma"), _solutions(*key, "noma")]
    return optimize_rsma(H_hat, model, opts, samples, baselines=baselines)


def trial_setup(config, snr_db, trial, scheme=None):
    scheme = config.scheme if scheme is None else scheme
    H_hat, err, saa = _draws(config.seed, trial, config.n_t, config.saa_samples)
    model = CsitModel.from_snr_db(snr_db, config.alpha)
    sol = _solutions(config.seed, int(trial), config.n_t, config.saa_samples, float(config.alpha),
                     float(snr_db), float(config.qos_rate), config.max_iterations, config.tolerance, scheme)
    return TrialSetup(
        estimate=H_hat,
        realization=combine(H_hat, err, model.sigma_e2),
        samples=combine(H_hat[None], saa, model.sigma_e2),
        solution=sol,
    )


# --------------------------------------------------------------------------
# trials


@dataclass
class TrialRecord:
    """Outcome of one block.

    ``bits`` are the recovered information bits per user and
    ``stream_bits`` the same bits attributed to the common and private
    streams.  ``errors`` holds one flag per stream, ``None`` when the stream
    was not transmitted.
    """

    snr_db: float
    trial: int
    bits: tuple
    channel_uses: int
    stream_bits: tuple
    errors: tuple
    spectral_efficiency: tuple
    average_sum_rate: float
    feasible: bool
    stream_powers: tuple

    @property
    def total_bits(self):
        return sum(self.bits)


def _link(config, snr_db, trial, setup, backoff_common_db, backoff_private_db):
    sol = setup.solution
    S = config.S
    if not sol.feasible:
        return TrialRecord(snr_db, trial, (0, 0), S, (0, 0, 0), (None, None, None), (0.0, 0.0, 0.0),
                           0.0, False, tuple(sol.precoder.stream_powers))
    P = sol.precoder.P
    rates = apply_backoff(setup.samples, P, sol.rates, backoff_common_db, backoff_private_db)
    mcs = select_all(rates, config.beta, S, config.crc_length)
    seeds = [substream(config.seed, "interleaver", trial, i) for i in range(3)]
    chains = stream_chains(mcs, seeds, config.crc_length)
    key = _snr_key(snr_db)
    msg = split_payload(rates.shares, chains, substream(config.seed, "bits", key, trial))
    block = transmit(msg, P, chains)
    H = setup.realization
    y = np.conj(H).T @ block.x
    if config.noise:
        y = y + complex_normal(y.shape, substream(config.seed, "noise", key, trial))
    results = [receive_sic(y[k], H[:, k], P, chains, k, config.list_size) for k in range(2)]
    bits = tuple(merge_messages(results[k], msg, k) for k in range(2))
    k_c = (len(msg.w_c1), len(msg.w_c2))
    common_bits = sum(k_c[k] for k in range(2) if results[k].common_ok)
    p_bits = tuple(len((msg.w_p1, msg.w_p2)[k]) if results[k].private_ok else 0 for k in range(2))
    errors = [None, None, None]
    if chains[0].enabled:
        errors[0] = not all(r.common_ok for r in results)
    for k in range(2):
        if chains[1 + k].enabled:
            errors[1 + k] = not results[k].private_ok
    se = tuple(m.spectral_efficiency for m in mcs)
    return TrialRecord(snr_db, trial, bits, S, (common_bits,) + p_bits, tuple(errors), se,
                       sol.objective, True, tuple(effective_precoder(P, chains).__abs__().__pow__(2).sum(axis=0)))


def run_trial(config, snr_db, trial, backoff=None):
    """Simulate block ``trial`` at ``snr_db``; deterministic in (config, snr, trial)."""
    table = config.table() if backoff is None else backoff
    setup = trial_setup(config, snr_db, trial)
    return _link(config, snr_db, trial, setup,
                 table.lookup(config.scheme, snr_db, "common"),
                 table.lookup(config.scheme, snr_db, "private"))


# --------------------------------------------------------------------------
# aggregation


@dataclass
class PointResult:
    """Aggregates of one SNR point.

    Throughput is total recovered bits over total channel uses, computed as
    an exact ratio of integers.
    """

    snr_db: float
    throughput: float
    throughput_se: float
    stream_throughput: tuple
    bler: tuple
    esr_bound: float
    esr_se: float
    infeasible_count: int
    n_trials: int
    records: list = field(default_factory=list, repr=False)

    def per_trial_throughput(self):
        return np.array([r.total_bits / r.channel_uses for r in self.records])

    def per_trial_asr(self):
        return np.array([r.average_sum_rate for r in self.records])


def aggregate(snr_db, records):
    uses = sum(r.channel_uses for r in records)
    tp = Fraction(sum(r.total_bits for r in records), uses)
    stream_tp = tuple(float(Fraction(sum(r.stream_bits[i] for r in records), uses)) for i in range(3))
    per = np.array([r.total_bits / r.channel_uses for r in records])
    n = len(records)
    bler = []
    for i in range(3):
        flags = [r.errors[i] for r in records if r.errors[i] is not None]
        bler.append(float(np.mean(flags)) if flags else float("nan"))
    asr = np.array([r.average_sum_rate for r in records])
    se = lambda v: float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return PointResult(
        snr_db=float(snr_db),
        throughput=float(tp),
        throughput_se=se(per),
        stream_throughput=stream_tp,
        bler=tuple(bler),
        esr_bound=float(asr.mean()),
        esr_se=se(asr),
        infeasible_count=sum(not r.feasible for r in records),
        n_trials=n,
        records=list(records),
    )


@dataclass
class CampaignResult:
    config: CampaignConfig
    points: list

    def column(self, name):
        return np.array([getattr(p, name) for p in self.points])

    def rows(self):
        """Flat per-point rows in the emitted schema."""
        out = []
        for p in self.points:
            out.append({
                "scheme": self.config.scheme,
                "snr_db": p.snr_db,
                "throughput_bps_hz": p.throughput,
                "esr_bound": p.esr_bound,
                "tp_common": p.stream_throughput[0],
                "tp_private1": p.stream_throughput[1],
                "tp_private2": p.stream_throughput[2],
                "bler_common": p.bler[0],
                "bler_p1": p.bler[1],
                "bler_p2": p.bler[2],
                "infeasible_count": p.infeasible_count,
            })
        return out


def _run_point(args):
    config, snr, trials, table = args
    return [run_trial(config, snr, t, table) for t in trials]


def run_campaign(config, n_jobs=1, progress=None):
    """Run every SNR point of ``config``.

    ``n_jobs > 1`` spreads trials over processes; per-trial substreams make
    the result independent of the split.
    """
    table = config.table()
    points = []
    for snr in config.snr_db:
        trials = list(range(config.trials))
        if n_jobs > 1:
            chunks = [trials[i::n_jobs] for i in range(n_jobs)]
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                parts = list(pool.map(_run_point, [(config, snr, c, table) for c in chunks]))
            records = sorted((r for part in parts for r in part), key=lambda r: r.trial)
        else:
            records = _run_point((config, snr, trials, table))
        point = aggregate(snr, records)
        if progress is not None:
            progress(point)
        logger.info("%s %.1f dB: T=%.3f bps/Hz ESR=%.3f", config.scheme, snr, point.throughput, point.esr_bound)
        points.append(point)
    return CampaignResult(config, points)


def shannon_bounds(config):
    """ESR per SNR point over the campaign's estimate draws (no codec involved).

    Returns ``(esr, standard_error)`` arrays; infeasible instances count zero.
    """
    esr, se = [], []
    for snr in config.snr_db:
        v = np.array([trial_setup(config, snr, t).solution.objective for t in range(config.trials)])
        esr.append(float(v.mean()))
        se.append(float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0)
    return np.array(esr), np.array(se)


# --------------------------------------------------------------------------
# back-off calibration


def bler_upper_bound(errors, n, confidence=0.99):
    """One-sided Clopper-Pearson upper confidence bound on a block error rate."""
    if n == 0:
        return 0.0
    if errors >= n:
        return 1.0
    return float(beta_dist.ppf(confidence, errors + 1, n - errors))


def bler_passes(errors, n, target=0.1, confidence=0.99):
    """Whether ``errors`` out of ``n`` blocks certify a BLER within ``target``.

    A stream that never transmitted passes.  Otherwise the upper confidence
    bound must be within the target, so a rarely used stream cannot pass on
    a handful of lucky blocks.
    """
    return n == 0 or bler_upper_bound(errors, n, confidence) <= target


@dataclass
class CalibrationPoint:
    scheme: str
    snr_db: float
    backoff_common_db: float
    backoff_private_db: float
    bler: tuple
    throughput: float
    flagged: bool


def _stream_stats(records, streams):
    errs = n = 0
    for r in records:
        for i in streams:
            if r.errors[i] is not None:
                n += 1
                errs += r.errors[i]
    return errs, n


def _sweep(config, snr, setups, grid, fixed, streams, target, confidence, which):
    """Choose the back-off of one stream class.

    A candidate passes when, for every stream of the class, the upper
    confidence bound of its BLER is within ``target`` or the stream is never
    transmitted.  Passing is not monotone at large back-offs (a stream can
    become rare before it switches off), so the grid is scanned upwards in
    coarse steps, the first pass is refined by bisection, and larger
    candidates are then tried while the throughput keeps improving.
    """
    cache = {}

    def evaluate(j):
        if j not in cache:
            bc, bp = (grid[j], fixed) if which == "common" else (fixed, grid[j])
            recs = [_link(config, snr, t, setups[t], bc, bp) for t in range(len(setups))]
            ok = True
            for i in streams:
                e, n = _stream_stats(recs, (i,))
                if not bler_passes(e, n, target, confidence):
                    ok = False
            num = sum(r.stream_bits[0] if which == "common" else r.total_bits for r in recs)
            tp = num / sum(r.channel_uses for r in recs)
            logger.debug("%s %.1f dB %s bo=%.1f tp=%.3f ok=%s", config.scheme, snr, which, grid[j], tp, ok)
            cache[j] = (ok, tp, recs)
        return cache[j]

    last = len(grid) - 1
    stride = max(1, len(grid) // 8)
    coarse = list(range(0, last + 1, stride))
    if coarse[-1] != last:
        coarse.append(last)
    hi = next((j for j in coarse if evaluate(j)[0]), None)
    if hi is None:
        return grid[last], True, evaluate(last)[2]
    lo = max((j for j in coarse if j < hi), default=-1) + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if evaluate(mid)[0]:
            hi = mid
        else:
            lo = mid + 1
    best = hi
    j = best + 1
    while j <= last:
        ok, tp, _ = evaluate(j)
        if not ok or tp <= evaluate(best)[1]:
            break
        best = j
        j += 1
    return grid[best], False, evaluate(best)[2]


def calibrate_backoff(config, grid=DEFAULT_BACKOFF_GRID, target=0.1, confidence=0.99, table=None, progress=None):
    """Back-off per SNR point and stream class for ``config.scheme``.

    The common class is chosen first (private decoding depends on whether
    the common stream is cancelled), then the private class.  Returns the
    updated table and the per-point calibration summary.
    """
    grid = tuple(sorted(float(g) for g in grid))
    if not grid:
        raise ValueError("back-off grid must not be empty")
    table = BackoffTable() if table is None else table
    summary = []
    for snr in config.snr_db:
        setups = [trial_setup(config, snr, t) for t in range(config.trials)]
        has_common = any(s.solution.feasible and s.solution.rates.Rbar_c > 0 for s in setups)
        flagged = False
        bc = 0.0
        if has_common and config.scheme != "sdma":
            bc, flag_c, _ = _sweep(config, snr, setups, grid, grid[0], (0,), target, confidence, "common")
            flagged |= flag_c
        bp, flag_p, recs = _sweep(config, snr, setups, grid, bc, (1, 2), target, confidence, "private")
        flagged |= flag_p
        point = aggregate(snr, recs)
        table.set(config.scheme, snr, "common", bc)
        table.set(config.scheme, snr, "private", bp)
        cp = CalibrationPoint(config.scheme, snr, bc, bp, point.bler, point.throughput, flagged)
        if flagged:
            logger.warning("%s %.1f dB: no back-off met the BLER target", config.scheme, snr)
        if progress is not None:
            progress(cp)
        summary.append(cp)
    return table, summary
