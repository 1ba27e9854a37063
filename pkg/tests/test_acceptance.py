"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Campaigns run at alpha = 0.6 with 200 paired trials per SNR point and the
shipped back-off table.  The table was calibrated on seed 1000, so these
seed-0 campaigns double as a fresh-seed validation run.
"""

import itertools
import math
from functools import lru_cache

import numpy as np
import pytest

from oracles import genie_bit_channel_errors, sc_decode
from rsmalink.amc import BackoffTable
from rsmalink.channel import CsitModel, sample_estimate, sample_realizations
from rsmalink.cli import main, selftest
from rsmalink.modem import ORDERS, alphabet, llr_compute
from rsmalink.polar import NO_CRC, PolarCode, construct_ga, decode_paths, decode_scl, encode, encode_batch
from rsmalink.precoder import SolverOptions, optimize
from rsmalink.sim import CampaignConfig, run_campaign, trial_setup
from rsmalink.transceiver import mmse_equalizers

pytestmark = pytest.mark.slow

TRIALS = 200
SNR_ALL = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)
SNR_MAIN = (10.0, 15.0, 20.0, 25.0, 30.0)
SCHEMES = ("rsma", "sdma", "noma")


@lru_cache(maxsize=None)
def campaign(scheme, qos, snrs):
    cfg = CampaignConfig(scheme=scheme, snr_db=snrs, alpha=0.6, qos_rate=qos, trials=TRIALS, seed=0)
    res = run_campaign(cfg)
    return {p.snr_db: p for p in res.points}


def base(scheme):
    return campaign(scheme, 0.0, SNR_ALL)


def qos(scheme):
    return campaign(scheme, 0.1, SNR_MAIN)


def se(v):
    v = np.asarray(v, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(v.size))


def power_share(scheme, snr, trial, qos_rate=0.0):
    """Largest private-stream share of the optimized transmit power."""
    cfg = CampaignConfig(scheme=scheme, snr_db=(snr,), alpha=0.6, qos_rate=qos_rate, trials=TRIALS, seed=0)
    p = np.asarray(trial_setup(cfg, snr, trial).solution.precoder.stream_powers)
    return float(p[1:].max() / p.sum()) if p.sum() > 0 else 0.0


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail
    return emit


def test_criterion_1_rsma_dominates_throughput(report):
    lines, ok = [], True
    for snr in SNR_MAIN:
        r = base("rsma")[snr].per_trial_throughput()
        for other in ("sdma", "noma"):
            d = r - base(other)[snr].per_trial_throughput()
            margin = d.mean() / se(d) if se(d) > 0 else math.inf
            ok &= d.mean() >= -2 * se(d)
            lines.append(f"{snr:g}dB vs {other}: {d.mean():+.3f} ({margin:+.1f} SE)")
    report(1, ok, "; ".join(lines))


def test_criterion_2_sdma_saturates(report):
    tp = {snr: base("sdma")[snr].throughput for snr in (30.0, 35.0)}
    shares = [power_share("sdma", snr, t) for snr in (30.0, 35.0) for t in range(TRIALS)]
    frac = float(np.mean(np.array(shares) >= 0.9))
    ok_tp = all(v <= 7.2 + 0.3 for v in tp.values())
    ok = ok_tp and frac >= 0.5
    report(2, ok, f"SDMA T(30,35 dB) = {tp[30.0]:.3f}, {tp[35.0]:.3f} bps/Hz (limit 7.5); "
                  f"single-stream (>=90% power) fraction {frac:.2f} (need >= 0.50)")


def test_criterion_3_qos_robustness(report):
    lines, ok = [], True
    for scheme in ("rsma", "noma"):
        for snr in SNR_MAIN:
            d = qos(scheme)[snr].per_trial_throughput() - base(scheme)[snr].per_trial_throughput()
            s = se(d)
            ok &= abs(d.mean()) <= 2 * s
            lines.append(f"{scheme} {snr:g}dB dT={d.mean():+.3f} (2SE={2 * s:.3f})")
    e0 = [base("sdma")[snr].esr_bound for snr in SNR_MAIN]
    e1 = [qos("sdma")[snr].esr_bound for snr in SNR_MAIN]
    degraded = all(b <= a + 1e-9 for a, b in zip(e0, e1)) and any(b < a - 1e-9 for a, b in zip(e0, e1))
    infeasible = sum(qos("sdma")[snr].infeasible_count for snr in SNR_MAIN)
    near_single = sum(power_share("sdma", snr, t, 0.1) >= 0.9 for snr in SNR_MAIN for t in range(TRIALS))
    ok &= degraded and (infeasible >= 1 or near_single >= 1)
    lines.append(f"SDMA ESR degraded={degraded}, infeasible={infeasible}, near-single-user={near_single}")
    report(3, ok, "; ".join(lines))


def _bler_ok(points):
    bad = []
    for scheme, pts in points.items():
        for snr, p in pts.items():
            for name, b in zip(("c", "p1", "p2"), p.bler):
                if not math.isnan(b) and b > 0.1:
                    bad.append(f"{scheme} {snr:g}dB {name}={b:.3f}")
    return bad


def test_criterion_4_calibrated_bler(report, tmp_path):
    table = BackoffTable.default()
    calibrated = {(r["scheme"], r["snr_db"]) for r in table.rows()}
    missing = [(s, snr) for s in SCHEMES for snr in SNR_ALL if (s, snr) not in calibrated]
    bad = _bler_ok({s: base(s) for s in SCHEMES})
    # live calibrate -> run cycle on fresh seeds
    out = tmp_path / "table.csv"
    assert main(["calibrate", "--scheme", "rsma", "--snr", "20", "--trials", str(TRIALS),
                 "--seed", "2000", "-o", str(out)]) == 0
    cfg = CampaignConfig(scheme="rsma", snr_db=(20.0,), trials=TRIALS, seed=3000,
                         backoff=BackoffTable.from_csv(out))
    live = run_campaign(cfg).points[0]
    bad += _bler_ok({"rsma(live)": {20.0: live}})
    ok = not bad and not missing
    report(4, ok, f"{3 * len(SNR_ALL)} shipped points + live RSMA 20 dB "
                  f"BLER {', '.join(f'{b:.3f}' for b in live.bler)}; "
                  f"violations: {bad or 'none'}; uncalibrated: {missing or 'none'}")


def test_criterion_5_throughput_below_bound(report):
    lines, ok = [], True
    for scheme in SCHEMES:
        for snr in SNR_ALL:
            p = base(scheme)[snr]
            d = p.per_trial_throughput() - p.per_trial_asr()
            ok &= d.mean() <= 1.96 * se(d)
            lines.append(f"{scheme} {snr:g}: T={p.throughput:.2f}<=ESR={p.esr_bound:.2f}")
    report(5, ok, "; ".join(lines))


def test_criterion_6_bound_ordering(report):
    ok = True
    worst = math.inf
    for snr in SNR_ALL:
        r = base("rsma")[snr].per_trial_asr()
        for other in ("sdma", "noma"):
            o = base(other)[snr].per_trial_asr()
            worst = min(worst, float((r - o).min()))
            ok &= base("rsma")[snr].esr_bound >= base(other)[snr].esr_bound - 1e-9
    qgap = [qos("sdma")[snr].esr_bound - base("sdma")[snr].esr_bound for snr in SNR_MAIN]
    ok &= all(g <= 1e-9 for g in qgap)
    report(6, ok, f"min per-trial ESR(RSMA) - ESR(other) = {worst:.2e}; "
                  f"ESR(SDMA, R0=0.1) - ESR(SDMA, 0) per point: {', '.join(f'{g:+.3f}' for g in qgap)}")


def test_criterion_7_codec_oracles(report):
    rng = np.random.default_rng(7)
    # list size 1 against the recursive SC oracle
    code = PolarCode.build(64, 32, 1.0, crc=NO_CRC)
    same = 0
    for _ in range(100):
        info = rng.integers(0, 2, 32).astype(np.uint8)
        llr = 2 * ((1 - 2.0 * encode(code, info)) + rng.standard_normal(64) * 0.9) / 0.81
        same += np.array_equal(decode_paths(code, llr, 1)[0][0], sc_decode(llr, code.frozen_mask))
    # SCL-8 against exhaustive ML, (16, 8) at Eb/N0 = 3 dB
    esn0 = 10 ** (3.0 / 10) * 0.5
    code = PolarCode.build(16, 8, 10 * math.log10(esn0), crc=NO_CRC)
    words = np.array(list(itertools.product((0, 1), repeat=8)), dtype=np.uint8)
    book = 1 - 2.0 * encode_batch(code, words)
    sigma = math.sqrt(1 / (2 * esn0))
    n_blocks, err_ml, err_scl = 10_000, 0, 0
    idx = rng.integers(0, 256, n_blocks)
    for i in idx:
        llr = 2 * (book[i] + sigma * rng.standard_normal(16)) / sigma ** 2
        err_ml += int(np.argmax(book @ llr)) != i
        err_scl += not np.array_equal(decode_scl(code, llr, 8)[0], words[i])
    rel = abs(err_scl - err_ml) / err_ml
    # GA ranking against genie-aided Monte-Carlo density evolution, N = 8
    order = np.argsort(genie_bit_channel_errors(8, 0.0, 400_000, np.random.default_rng(0)))
    ga_ok = all(set(construct_ga(8, K, 0.0)) == set(order[:K]) for K in range(1, 9))
    ok = same == 100 and rel <= 0.10 and ga_ok
    report(7, ok, f"SCL-1 == SC on {same}/100; BLER ML={err_ml / n_blocks:.4f} "
                  f"SCL-8={err_scl / n_blocks:.4f} (rel diff {rel:.3f}); GA ranking match={ga_ok}")


def test_criterion_8_chain_invariants(report):
    rng = np.random.default_rng(8)
    failures = selftest()
    # MMSE closed forms against the least-squares minimizer of the MSE
    eq_err = 0.0
    for _ in range(50):
        h = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        P = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
        g_c, g_p, _, _ = mmse_equalizers(h, P)
        a = np.conj(h) @ P
        for target, streams, ref in ((0, (0, 1, 2), g_c), (1, (1, 2), g_p[0]), (2, (1, 2), g_p[1])):
            v = np.array([a[target]] + [a[i] for i in streams if i != target] + [1.0])
            g = np.linalg.lstsq(v[:, None], np.eye(len(v))[0].astype(complex), rcond=None)[0][0]
            eq_err = max(eq_err, abs(g - ref))
    # max-log LLRs against enumeration
    llr_err = 0.0
    for order in ORDERS:
        q = alphabet(order)
        y = rng.standard_normal(2000) + 1j * rng.standard_normal(2000)
        gamma = 5.0
        rho = gamma / (1 + gamma)
        d = np.abs(y[:, None] / rho - q.points[None, :]) ** 2
        brute = np.stack([gamma * (np.where(q.labels[:, j] == 1, d, np.inf).min(1)
                                   - np.where(q.labels[:, j] == 0, d, np.inf).min(1))
                          for j in range(q.bits_per_symbol)], axis=1).ravel()
        llr_err = max(llr_err, float(np.max(np.abs(llr_compute(y, gamma, rho, q) - brute))))
    # estimate/error reconstruction identity
    recon = max(cs.residual() for snr in (0.0, 20.0, 40.0)
                for cs in sample_realizations(sample_estimate(2, 2, rng), CsitModel.from_snr_db(snr, 0.6), 200, rng))
    # solver ascent and constraint residuals
    ascent, resid = True, 0.0
    for i in range(50):
        scheme = SCHEMES[i % 3]
        r0 = (0.0, 0.1)[(i // 3) % 2]
        H = sample_estimate(2, 2, rng)
        model = CsitModel.from_snr_db(float(rng.choice(SNR_ALL)), 0.6)
        opts = SolverOptions(saa_samples=200, qos_rate=r0, random_state=i)
        sol = optimize(scheme, H, model, opts)
        ascent &= bool(np.all(np.diff(sol.objective_history) >= -1e-12))
        resid = max(resid, (sol.precoder.total_power - model.power) / model.power)
        if sol.feasible:
            r = sol.rates
            c = r.shares
            resid = max(resid, -min(c))
            if scheme != "sdma":
                resid = max(resid, sum(c) - min(r.Rbar_c1, r.Rbar_c2))
            resid = max(resid, max(r0 - u for u in r.user_rates))
    ok = not failures and eq_err < 1e-9 and llr_err < 1e-9 and recon < 1e-12 and ascent and resid < 1e-6
    report(8, ok, f"round-trips failed={len(failures)}; MMSE err={eq_err:.1e}; LLR err={llr_err:.1e}; "
                  f"reconstruction={recon:.1e}; ascent={ascent}; max residual={resid:.1e}")
