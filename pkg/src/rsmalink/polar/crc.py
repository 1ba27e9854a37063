"""Cyclic redundancy check used as the outer code of the polar codec.

The CRC is computed with zero initial state and no output inversion, so it
is a linear map of the payload bits.  For speed the map is applied as a
binary matrix product; the matrix for each payload length is built once by
reducing ``x^(j + L)`` modulo the generator.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .._validation import check_bits, check_count

# x^11 + x^10 + x^9 + x^5 + 1
CRC11_POLY = 0xE21


@lru_cache(maxsize=256)
def _parity_matrix(poly, length, k):
    """``(k, length)`` matrix whose row ``i`` is the CRC of the unit vector e_i."""
    mask = (1 << length) - 1
    low = poly & mask
    rows = np.zeros((k, length), dtype=np.uint8)
    # remainder of x^(L + j), starting from j = 0 (the last payload bit)
    r = low
    for j in range(k):
        i = k - 1 - j
        rows[i] = [(r >> (length - 1 - b)) & 1 for b in range(length)]
        carry = (r >> (length - 1)) & 1
        r = (r << 1) & mask
        if carry:
            r ^= low
    rows.setflags(write=False)
    return rows


@dataclass(frozen=True)
class Crc:
    """Systematic CRC with generator ``poly`` (top bit ``x^length`` included).

    Parameters
    ----------
    poly : int
        Generator polynomial, MSB first, including the ``x^length`` term.
    length : int
        Number of parity bits.  ``length = 0`` disables the CRC.
    """

    poly: int = CRC11_POLY
    length: int = 11

    def __post_init__(self):
        check_count(self.length, "length", minimum=0)
        if self.length and (self.poly >> self.length) != 1:
            raise ValueError(f"poly {self.poly:#x} must have degree {self.length}")

    def compute(self, bits):
        """Parity bits of ``bits``, MSB first."""
        bits = check_bits(bits)
        if self.length == 0:
            return np.zeros(0, dtype=np.uint8)
        if bits.size == 0:
            return np.zeros(self.length, dtype=np.uint8)
        G = _parity_matrix(self.poly, self.length, bits.size)
        return ((bits.astype(np.int64) @ G) & 1).astype(np.uint8)

    def attach(self, bits):
        bits = check_bits(bits)
        return np.concatenate([bits, self.compute(bits)])

    def check(self, bits):
        """True when the trailing ``length`` bits match the CRC of the rest."""
        bits = check_bits(bits)
        if bits.size < self.length:
            return False
        if self.length == 0:
            return True
        payload, parity = bits[: -self.length], bits[-self.length :]
        return bool(np.array_equal(self.compute(payload), parity))


NO_CRC = Crc(poly=1, length=0)
