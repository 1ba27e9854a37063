"""Gaussian-approximation construction of polar codes.

Bit-channel LLRs are modelled as consistent Gaussians N(m, 2m).  Check-node
combining uses Chung's ``phi`` approximation evaluated in the log domain so
very reliable channels (long codes, high SNR, shortened positions with
``m = inf``) stay well conditioned.
"""

from functools import lru_cache
import math

import numpy as np
from numba import njit

from .._validation import check_count, is_power_of_two

# Chung's fit, valid for 0 < x < 10
_A, _B, _C = -0.4527, 0.86, 0.0218
_SWITCH = 10.0

# ten Brink's fit of the BI-AWGN mutual information J(sigma)
_H1, _H2, _H3 = 0.3073, 0.8935, 1.1064


@njit(cache=True)
def _log_phi(x):
    if x <= 0.0:
        return 0.0
    if x < _SWITCH:
        return min(_A * x**_B + _C, 0.0)
    return 0.5 * math.log(math.pi / x) - x / 4.0 + math.log(1.0 - 10.0 / (7.0 * x))


@njit(cache=True)
def _inv_log_phi(y):
    """``x`` with ``log phi(x) = y`` for ``y <= 0`` (bisection on a bracket)."""
    if y >= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while _log_phi(hi) > y:
        lo = hi
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _log_phi(mid) > y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


@njit(cache=True)
def _check_node(a, b):
    """Mean of the check-node LLR from two input means."""
    if math.isinf(a):
        return b
    if math.isinf(b):
        return a
    la = _log_phi(a)
    lb = _log_phi(b)
    # 1 - (1 - phi(a)) (1 - phi(b)) = phi(a) + phi(b) - phi(a) phi(b)
    hi, lo = max(la, lb), min(la, lb)
    y = hi + math.log1p(math.exp(lo - hi) - math.exp(lo))
    return _inv_log_phi(y)


@njit(cache=True)
def _ga_means(initial):
    """Bit-channel LLR means in decoding order from code-bit means.

    Level by level: the first half of each block takes the check-node
    combination of even/odd neighbours, the second half their sum.
    """
    N = initial.size
    m = initial.copy()
    tmp = np.empty(N)
    size = N
    while size > 1:
        half = size // 2
        for start in range(0, N, size):
            for j in range(half):
                a = m[start + 2 * j]
                b = m[start + 2 * j + 1]
                tmp[start + j] = _check_node(a, b)
                tmp[start + half + j] = a + b
        m[:] = tmp
        size = half
    return m


def bit_reversal(n):
    """Bit-reversal permutation of ``range(2**n)``."""
    idx = np.arange(1 << n)
    rev = np.zeros_like(idx)
    for b in range(n):
        rev |= ((idx >> b) & 1) << (n - 1 - b)
    return rev


def shortened_positions(N, target):
    """Code-bit positions removed when shortening a length-``N`` code to ``target``.

    Bit-reversal shortening: the last ``N - target`` input bits are frozen,
    which forces the code bits at their bit-reversed positions to zero.
    """
    check_count(N, "N")
    if not is_power_of_two(N):
        raise ValueError(f"mother length must be a power of two, got {N}")
    check_count(target, "target")
    if not N // 2 < target <= N and not (N == 1 and target == 1):
        raise ValueError(f"target length must lie in ({N // 2}, {N}], got {target}")
    n = N.bit_length() - 1
    rev = bit_reversal(n)
    return np.sort(rev[target:])


def ga_bit_channel_means(N, design_snr_db, target=None):
    """LLR mean of every bit channel for BPSK at ``design_snr_db`` (Es/N0).

    Shortened code bits (when ``target < N``) are treated as perfectly known.
    """
    check_count(N, "N")
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    target = N if target is None else target
    init = np.full(N, 4.0 * 10.0 ** (design_snr_db / 10.0))
    if target < N:
        init[shortened_positions(N, target)] = np.inf
    return _ga_means(init)


@lru_cache(maxsize=4096)
def _ranking(N, target, snr_key):
    means = ga_bit_channel_means(N, snr_key / 1000.0, target)
    eligible = np.arange(target)
    # most reliable first; ties broken towards higher indices
    order = np.lexsort((-eligible, -means[:target]))
    ranked = eligible[order]
    ranked.setflags(write=False)
    return ranked


def construct_ga(N, K, design_snr_db, target=None):
    """Information set: the ``K`` most reliable bit channels, sorted ascending.

    ``target`` shortens the code; bit channels at or beyond ``target`` are
    frozen and never selected.
    """
    check_count(N, "N")
    check_count(K, "K", minimum=0)
    target = N if target is None else target
    if K > target:
        raise ValueError(f"K={K} exceeds the code length {target}")
    ranked = _ranking(int(N), int(target), int(round(float(design_snr_db) * 1000)))
    return np.sort(ranked[:K])


def j_function(sigma):
    """Mutual information of a consistent Gaussian LLR with std ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    return (1.0 - 2.0 ** (-_H1 * sigma ** (2 * _H2))) ** _H3


def inverse_j_function(info):
    info = np.clip(np.asarray(info, dtype=float), 1e-9, 1.0 - 1e-9)
    return (-np.log2(1.0 - info ** (1.0 / _H3)) / _H1) ** (1.0 / (2 * _H2))


def design_snr_for_capacity(capacity):
    """BPSK Es/N0 (dB) whose BI-AWGN capacity equals ``capacity`` bits/use.

    The LLR std of BPSK at SNR ``g`` is ``sqrt(8 g)``.
    """
    sigma = inverse_j_function(capacity)
    return float(10.0 * np.log10(sigma**2 / 8.0))
