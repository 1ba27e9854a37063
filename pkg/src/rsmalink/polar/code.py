"""CRC-aided polar codes with bit-reversal shortening.

Encoding is ``nu = u G`` with ``G = B_N F^{(x)n}`` and ``F = [[1, 0], [1, 1]]``;
both input and output are in natural order.
"""

from dataclasses import dataclass, field

import numpy as np

from .._validation import check_bits, check_count, is_power_of_two
from .construction import construct_ga, shortened_positions
from .crc import Crc
from .decoding import scl_decode

# LLR given to shortened (known-zero) code bits
SATURATION = 1e6


def polar_transform(u):
    """``u F^{(x)n}`` over GF(2) for the last axis (butterfly, no reordering)."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    half = 1
    while half < N:
        v = x.reshape(x.shape[:-1] + (N // (2 * half), 2, half))
        v[..., 0, :] ^= v[..., 1, :]
        half *= 2
    return x


def _bit_reverse(N):
    n = N.bit_length() - 1
    idx = np.arange(N)
    rev = np.zeros_like(idx)
    for b in range(n):
        rev |= ((idx >> b) & 1) << (n - 1 - b)
    return rev


def mother_length(length):
    """Smallest power of two that is at least ``length``."""
    check_count(length, "length")
    return 1 << (int(length) - 1).bit_length()


@dataclass(frozen=True, eq=False)
class PolarCode:
    """An ``(length, K)`` polar code obtained from a ``N = 2^n`` mother code.

    ``K`` counts information plus CRC bits.  The code is immutable; encoding
    and decoding are pure functions of it.

    Attributes
    ----------
    N : int
        Mother length.
    K : int
        Input bits carried on the information set (payload + CRC).
    info_set : ndarray
        Sorted input indices carrying information.
    length : int
        Transmitted length after shortening.
    shortened : ndarray
        Sorted code-bit positions that are removed (known to be zero).
    crc : Crc
    """

    N: int
    K: int
    info_set: np.ndarray
    length: int
    shortened: np.ndarray
    crc: Crc = field(default_factory=Crc)
    frozen_mask: np.ndarray = field(init=False, repr=False)
    kept: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not is_power_of_two(self.N):
            raise ValueError(f"mother length must be a power of two, got {self.N}")
        info = np.asarray(self.info_set, dtype=np.int64)
        if info.size != self.K or np.unique(info).size != self.K:
            raise ValueError("info_set must hold K distinct indices")
        if info.size and (info.min() < 0 or info.max() >= self.N):
            raise ValueError("info_set indices out of range")
        if self.K < self.crc.length:
            raise ValueError(f"K={self.K} cannot hold a {self.crc.length}-bit CRC")
        frozen = np.ones(self.N, dtype=bool)
        frozen[info] = False
        kept = np.ones(self.N, dtype=bool)
        kept[np.asarray(self.shortened, dtype=np.int64)] = False
        if kept.sum() != self.length:
            raise ValueError("shortening pattern does not match the target length")
        for name, arr in (("info_set", np.sort(info)), ("frozen_mask", frozen), ("kept", kept)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def build(cls, length, K, design_snr_db, crc=None):
        """GA-constructed code of transmitted length ``length``.

        Lengths that are not powers of two are reached by shortening the
        next larger mother code.
        """
        crc = Crc() if crc is None else crc
        N = mother_length(length)
        shortened = shortened_positions(N, length) if length < N else np.zeros(0, dtype=np.int64)
        info = construct_ga(N, K, design_snr_db, target=length)
        return cls(N=N, K=K, info_set=info, length=int(length), shortened=shortened, crc=crc)

    @property
    def n_payload(self):
        """Information bits excluding the CRC."""
        return self.K - self.crc.length

    @property
    def frozen_set(self):
        return np.flatnonzero(self.frozen_mask)

    @property
    def rate(self):
        return self.K / self.length


def encode(code, info):
    """Codeword of length ``code.length`` for ``code.n_payload`` payload bits."""
    info = check_bits(info, code.n_payload, "info")
    u = np.zeros(code.N, dtype=np.uint8)
    u[code.info_set] = code.crc.attach(info)
    nu = polar_transform(u)[_bit_reverse(code.N)]
    return nu[code.kept]


def encode_batch(code, info):
    """Vectorized :func:`encode` over the rows of ``info``."""
    info = np.asarray(info, dtype=np.uint8)
    if info.ndim != 2 or info.shape[1] != code.n_payload:
        raise ValueError(f"info must have shape (B, {code.n_payload})")
    u = np.zeros((info.shape[0], code.N), dtype=np.uint8)
    if code.crc.length:
        full = np.stack([code.crc.attach(row) for row in info]) if info.shape[0] else info
    else:
        full = info
    u[:, code.info_set] = full
    return polar_transform(u)[:, _bit_reverse(code.N)][:, code.kept]


def mother_llrs(code, llrs):
    """Expand transmitted-bit LLRs to the mother length, saturating shortened bits."""
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (code.length,):
        raise ValueError(f"expected {code.length} LLRs, got shape {llrs.shape}")
    full = np.full(code.N, SATURATION)
    full[code.kept] = np.clip(llrs, -SATURATION / 10, SATURATION / 10)
    return full


def decode_scl(code, llrs, list_size=8):
    """CRC-aided SCL decoding.

    Returns ``(info, crc_ok)``: the payload of the best path whose CRC
    checks, or of the best-metric path with ``crc_ok = False``.
    """
    check_count(list_size, "list_size")
    paths, _ = scl_decode(mother_llrs(code, llrs), code.frozen_mask, int(list_size))
    n_pay = code.n_payload
    for u in paths:
        word = u[code.info_set]
        if code.crc.check(word):
            return word[:n_pay].copy(), True
    return paths[0][code.info_set][:n_pay].copy(), False


def decode_paths(code, llrs, list_size=8):
    """All surviving input vectors, best metric first (diagnostics and tests)."""
    return scl_decode(mother_llrs(code, llrs), code.frozen_mask, int(list_size))
