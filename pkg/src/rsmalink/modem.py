"""Bit-interleaved coded modulation: Gray QAM, interleaving, max-log LLRs.

Labeling: the first ``m/2`` bits of a symbol select the in-phase level and
the last ``m/2`` the quadrature level.  Each axis uses reflected Gray code
over its levels ordered from most positive to most negative, so the
leading bit of each axis is a sign bit with 0 mapped to a positive level.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_bits, check_count, check_random_state

ORDERS = (4, 16, 64, 256)


def _axis_table(bits_per_axis):
    """Levels (most positive first) and their Gray labels, MSB first."""
    n = 1 << bits_per_axis
    pos = np.arange(n)
    levels = (n - 1 - 2 * pos).astype(float)
    gray = pos ^ (pos >> 1)
    labels = (gray[:, None] >> np.arange(bits_per_axis - 1, -1, -1)[None, :]) & 1
    return levels, labels.astype(np.uint8)


@dataclass(frozen=True)
class QamAlphabet:
    """Unit-energy square QAM with per-axis Gray labeling.

    Attributes
    ----------
    order : int
        Number of points, one of 4, 16, 64, 256.
    points : ndarray
        ``points[v]`` is the symbol whose label, read MSB first, is ``v``.
    labels : ndarray
        ``(order, m)`` bit labels of ``points``.
    """

    order: int
    bits_per_symbol: int = field(init=False)
    scale: float = field(init=False)
    axis_levels: np.ndarray = field(init=False, repr=False)
    axis_labels: np.ndarray = field(init=False, repr=False)
    points: np.ndarray = field(init=False, repr=False)
    labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order}")
        m = int(np.log2(self.order))
        b = m // 2
        levels, axis_labels = _axis_table(b)
        scale = 1.0 / np.sqrt(2.0 * (self.order - 1) / 3.0)
        # label value -> axis position
        by_label = np.empty(1 << b, dtype=np.int64)
        by_label[(axis_labels * (1 << np.arange(b - 1, -1, -1))).sum(axis=1)] = np.arange(1 << b)
        v = np.arange(self.order)
        i_pos = by_label[v >> b]
        q_pos = by_label[v & ((1 << b) - 1)]
        points = scale * (levels[i_pos] + 1j * levels[q_pos])
        labels = ((v[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
        for name, val in (
            ("bits_per_symbol", m),
            ("scale", scale),
            ("axis_levels", levels * scale),
            ("axis_labels", axis_labels),
            ("points", points),
            ("labels", labels),
        ):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)


def alphabet(order):
    return _ALPHABETS[order] if order in _ALPHABETS else QamAlphabet(order)


_ALPHABETS = {q: QamAlphabet(q) for q in ORDERS}


def modulate(bits, qam):
    """Map consecutive groups of ``m`` bits to symbols."""
    qam = alphabet(qam) if isinstance(qam, int) else qam
    bits = check_bits(bits)
    m = qam.bits_per_symbol
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} is not a multiple of {m}")
    groups = bits.reshape(-1, m).astype(np.int64)
    index = groups @ (1 << np.arange(m - 1, -1, -1))
    return qam.points[index]


def demodulate_hard(symbols, qam):
    """Nearest-point decisions, returned as bits."""
    qam = alphabet(qam) if isinstance(qam, int) else qam
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    d = np.abs(symbols[:, None] - qam.points[None, :])
    return qam.labels[np.argmin(d, axis=1)].ravel()


def _axis_llr(x, qam):
    """Per-axis ``min_{bit=1} d^2 - min_{bit=0} d^2``, shape ``(len(x), m/2)``."""
    d = (x[:, None] - qam.axis_levels[None, :]) ** 2
    lab = qam.axis_labels.astype(bool)
    one = np.where(lab.T[None, :, :], d[:, None, :], np.inf).min(axis=2)
    zero = np.where(~lab.T[None, :, :], d[:, None, :], np.inf).min(axis=2)
    return one - zero


def llr_compute(equalized, gamma, rho, qam):
    """Max-log LLRs ``gamma * (min_{theta_1} psi - min_{theta_0} psi)``.

    ``psi(a) = |y' / rho - a|^2`` where ``y'`` is the equalized sample and
    ``rho = gamma / (1 + gamma)``.  Positive values favour bit 0.  The
    minimization is separable per axis, which makes it exact and cheap.
    """
    qam = alphabet(qam) if isinstance(qam, int) else qam
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    y = np.asarray(equalized, dtype=np.complex128).ravel()
    m = qam.bits_per_symbol
    if gamma == 0.0 or rho == 0.0:
        return np.zeros(y.size * m)
    z = y / rho
    out = np.empty((y.size, m))
    b = m // 2
    out[:, :b] = _axis_llr(z.real, qam)
    out[:, b:] = _axis_llr(z.imag, qam)
    return gamma * out.ravel()


@dataclass(frozen=True)
class Interleaver:
    """Seeded uniform random permutation of ``length`` positions."""

    length: int
    seed: object = None
    permutation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        check_count(self.length, "length", minimum=0)
        if isinstance(self.seed, np.ndarray):
            perm = np.asarray(self.seed, dtype=np.int64)
            if perm.shape != (self.length,) or not np.array_equal(np.sort(perm), np.arange(self.length)):
                raise ValueError("explicit permutation is not a bijection of the right length")
        else:
            perm = check_random_state(self.seed).permutation(self.length)
        perm.setflags(write=False)
        object.__setattr__(self, "permutation", perm)

    @classmethod
    def identity(cls, length):
        return cls(length, np.arange(length))

    def interleave(self, values):
        values = np.asarray(values)
        if values.shape[-1] != self.length:
            raise ValueError(f"expected length {self.length}, got {values.shape[-1]}")
        return values[..., self.permutation]

    def deinterleave(self, values):
        values = np.asarray(values)
        if values.shape[-1] != self.length:
            raise ValueError(f"expected length {self.length}, got {values.shape[-1]}")
        out = np.empty_like(values)
        out[..., self.permutation] = values
        return out


class QamModulator(BaseEstimator, TransformerMixin):
    """Gray QAM mapper with the estimator interface.

    ``transform`` maps a bit vector to symbols, ``inverse_transform`` makes
    hard decisions and ``llr`` gives soft bits for equalized samples.

    Parameters
    ----------
    order : int, default=4
        Constellation size.
    """

    def __init__(self, order=4):
        self.order = order

    def fit(self, X=None, y=None):
        self.alphabet_ = alphabet(self.order)
        self.bits_per_symbol_ = self.alphabet_.bits_per_symbol
        return self

    def transform(self, X):
        check_is_fitted(self, "alphabet_")
        return modulate(X, self.alphabet_)

    def inverse_transform(self, X):
        check_is_fitted(self, "alphabet_")
        return demodulate_hard(X, self.alphabet_)

    def llr(self, X, gamma):
        check_is_fitted(self, "alphabet_")
        return llr_compute(X, gamma, gamma / (1.0 + gamma), self.alphabet_)
