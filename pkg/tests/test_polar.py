import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import crc_long_division, genie_bit_channel_errors, kron_generator, sc_decode
from rsmalink.polar import (
    NO_CRC, Crc, PolarCode, box_plus, construct_ga, decode_paths, decode_scl, encode,
    encode_batch, polar_transform, shortened_positions,
)
from rsmalink.polar.code import mother_llrs


def _code(N, K, snr=2.0, crc=NO_CRC, length=None):
    return PolarCode.build(N if length is None else length, K, snr, crc=crc)


# CRC

def test_crc_matches_long_division(rng):
    c = Crc()
    for k in (0, 1, 7, 64, 513):
        b = rng.integers(0, 2, k)
        assert list(c.compute(b)) == crc_long_division(b)


def test_crc_empty_payload_is_zero():
    assert not Crc().compute(np.zeros(0, dtype=np.uint8)).any()


def test_crc_round_trip_many(rng):
    c = Crc()
    for _ in range(1000):
        b = rng.integers(0, 2, rng.integers(1, 60))
        assert c.check(c.attach(b))


def test_crc_detects_every_single_error(rng):
    c = Crc()
    word = c.attach(rng.integers(0, 2, 200))
    for i in range(word.size):
        bad = word.copy()
        bad[i] ^= 1
        assert not c.check(bad)


def test_crc_rejects_bad_polynomial():
    with pytest.raises(ValueError):
        Crc(poly=0x21, length=11)


# encoding

def test_two_bit_examples():
    c = PolarCode(N=2, K=2, info_set=np.array([0, 1]), length=2, shortened=np.zeros(0, int), crc=NO_CRC)
    assert list(encode(c, np.array([0, 1]))) == [1, 1]
    assert list(encode(c, np.array([1, 0]))) == [1, 0]


@pytest.mark.parametrize("N", [2, 4, 8, 16, 64])
def test_encoder_matches_generator_matrix(N, rng):
    G = kron_generator(N)
    n = N.bit_length() - 1
    rev = [int(format(i, f"0{n}b")[::-1], 2) if n else 0 for i in range(N)]
    for _ in range(20):
        u = rng.integers(0, 2, N).astype(np.uint8)
        assert np.array_equal(polar_transform(u)[rev], (u @ G) % 2)


def test_encoding_is_linear(rng):
    code = _code(128, 60)
    for _ in range(100):
        a = rng.integers(0, 2, 60).astype(np.uint8)
        b = rng.integers(0, 2, 60).astype(np.uint8)
        assert np.array_equal(encode(code, a ^ b), encode(code, a) ^ encode(code, b))
    assert not encode(code, np.zeros(60, np.uint8)).any()


def test_batch_encoding_matches(rng):
    code = _code(96, 40, crc=Crc())
    info = rng.integers(0, 2, (5, code.n_payload)).astype(np.uint8)
    assert np.array_equal(encode_batch(code, info), np.stack([encode(code, r) for r in info]))


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        encode(_code(16, 8), np.zeros(7, np.uint8))


# construction

def test_ga_two_channels_prefers_index_one():
    for snr in (-3.0, 0.0, 5.0):
        assert list(construct_ga(2, 1, snr)) == [1]


def test_ga_rate_one_and_errors():
    assert list(construct_ga(8, 8, 0.0)) == list(range(8))
    with pytest.raises(ValueError):
        construct_ga(8, 9, 0.0)
    with pytest.raises(ValueError):
        construct_ga(12, 4, 0.0)


def test_ga_ranking_matches_genie_density_evolution():
    errs = genie_bit_channel_errors(8, 0.0, 400_000, np.random.default_rng(0))
    mc_order = np.argsort(errs)
    ga_sets = [set(construct_ga(8, K, 0.0)) for K in range(1, 9)]
    for K in range(1, 9):
        assert ga_sets[K - 1] == set(mc_order[:K]), (K, errs)


def test_ga_is_deterministic():
    assert np.array_equal(construct_ga(1024, 500, 1.3), construct_ga(1024, 500, 1.3))


# shortening

def test_shortening_pattern_sizes():
    assert shortened_positions(16, 16).size == 0
    assert shortened_positions(2048, 1536).size == 512
    code = _code(None, 700, length=1536)
    assert code.N == 2048 and code.length == 1536
    with pytest.raises(ValueError):
        shortened_positions(16, 8)


def test_shortened_positions_are_always_zero(rng):
    code = PolarCode.build(1536, 700, 2.0)
    for _ in range(20):
        u = np.zeros(code.N, dtype=np.uint8)
        u[code.info_set] = rng.integers(0, 2, code.K)
        n = code.N.bit_length() - 1
        rev = [int(format(i, f"0{n}b")[::-1], 2) for i in range(code.N)]
        nu = polar_transform(u)[rev]
        assert not nu[code.shortened].any()
    assert code.info_set.max() < code.length


def test_shortened_round_trip_high_snr(rng):
    code = PolarCode.build(1536, 900, 3.0)
    for _ in range(100):
        info = rng.integers(0, 2, code.n_payload).astype(np.uint8)
        cw = encode(code, info)
        llr = (1 - 2.0 * cw) * 30 + rng.standard_normal(cw.size)
        out, ok = decode_scl(code, llr, 8)
        assert ok and np.array_equal(out, info)


def test_shortened_llr_perturbation_has_no_effect(rng):
    code = PolarCode.build(48, 20, 1.0)
    for _ in range(30):
        info = rng.integers(0, 2, code.n_payload).astype(np.uint8)
        llr = (1 - 2.0 * encode(code, info)) * 2 + rng.standard_normal(code.length) * 1.5
        full = mother_llrs(code, llr)
        from rsmalink.polar import scl_decode
        base, _ = scl_decode(full, code.frozen_mask, 8)
        pert = full.copy()
        pert[code.shortened] *= rng.uniform(0.5, 2.0, code.shortened.size)
        other, _ = scl_decode(pert, code.frozen_mask, 8)
        assert np.array_equal(base[0][code.info_set], other[0][code.info_set])


# decoding

def test_box_plus_matches_tanh_rule(rng):
    for a, b in rng.normal(0, 4, (200, 2)):
        ref = 2 * np.arctanh(np.tanh(a / 2) * np.tanh(b / 2))
        assert box_plus(a, b) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("length,K", [(512, 256), (2048, 1844), (1536, 1280), (64, 20)])
def test_noiseless_recovery(length, K, rng):
    code = PolarCode.build(length, K, 2.0)
    info = rng.integers(0, 2, code.n_payload).astype(np.uint8)
    out, ok = decode_scl(code, (1 - 2.0 * encode(code, info)) * 10, 8)
    assert ok and np.array_equal(out, info)


def test_list_one_equals_sc(rng):
    code = _code(64, 32, snr=1.0)
    for _ in range(100):
        info = rng.integers(0, 2, 32).astype(np.uint8)
        llr = 2 * ((1 - 2.0 * encode(code, info)) + rng.standard_normal(64) * 0.9) / 0.81
        paths, _ = decode_paths(code, llr, 1)
        assert np.array_equal(paths[0], sc_decode(llr, code.frozen_mask))


def test_frozen_positions_decode_to_zero(rng):
    code = _code(128, 50, crc=Crc())
    llr = rng.normal(0, 2, 128)
    paths, metrics = decode_paths(code, llr, 8)
    assert not paths[:, code.frozen_mask].any()
    assert np.all(np.diff(metrics) >= 0)


def test_crc_failure_is_flagged(rng):
    code = _code(128, 60, crc=Crc())
    out, ok = decode_scl(code, rng.normal(0, 0.1, 128), 4)
    assert out.size == code.n_payload
    assert not ok


def test_bler_non_increasing_in_snr():
    rng = np.random.default_rng(3)
    code = PolarCode.build(128, 64, 1.0, crc=Crc())
    blers = []
    for snr_db in (-2.0, -1.0, 0.0, 1.0, 2.0):
        snr = 10 ** (snr_db / 10)
        err = 0
        for _ in range(1000):
            info = rng.integers(0, 2, code.n_payload).astype(np.uint8)
            y = (1 - 2.0 * encode(code, info)) + rng.standard_normal(128) / np.sqrt(2 * snr)
            out, ok = decode_scl(code, 4 * snr * y, 8)
            err += not (ok and np.array_equal(out, info))
        blers.append(err / 1000)
    assert all(b2 <= b1 + 0.02 for b1, b2 in zip(blers, blers[1:]))
    assert blers[-1] < blers[0]


@given(st.integers(0, 2**32 - 1), st.sampled_from([(32, 16), (48, 24), (64, 40)]))
def test_round_trip_property(seed, shape):
    rng = np.random.default_rng(seed)
    length, K = shape
    code = PolarCode.build(length, K, 1.0, crc=Crc())
    info = rng.integers(0, 2, code.n_payload).astype(np.uint8)
    out, ok = decode_scl(code, (1 - 2.0 * encode(code, info)) * 20, 4)
    assert ok and np.array_equal(out, info)
