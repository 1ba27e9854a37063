"""Adaptive modulation and coding from average rates.

Each stream gets the smallest QAM order whose ``log2`` order reaches
``min(R / beta, 8)`` and a code rate ``ceil(N min(R / m, beta)) / N`` on
``N = S m`` coded bits.  Energy back-off lowers the rates fed to this rule by
scaling every stream's SINR inside the sample averages.
"""

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from ._validation import check_count, check_positive
from .modem import ORDERS
from .polar.construction import design_snr_for_capacity
from .precoder import RateAllocation, instantaneous_sinrs

MAX_BITS_PER_SYMBOL = 8
STREAMS = ("common", "private1", "private2")
STREAM_CLASSES = ("common", "private")
# design SNRs are snapped to this grid so code constructions can be reused
DESIGN_SNR_STEP_DB = 0.25


def feasible_set(rate, beta):
    """QAM orders with ``log2(order) >= min(rate / beta, 8)``."""
    rate = check_positive(rate, "rate", strict=False)
    beta = check_positive(beta, "beta")
    if beta > 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    need = min(rate / beta, MAX_BITS_PER_SYMBOL)
    return tuple(q for q in ORDERS if math.log2(q) >= need - 1e-12)


@dataclass(frozen=True)
class StreamMcs:
    """Modulation and coding of one stream for one block.

    ``K`` counts payload plus CRC bits; a disabled stream carries nothing.
    """

    order: int
    N: int
    K: int
    S: int
    design_snr_db: float = 0.0
    enabled: bool = True

    @property
    def bits_per_symbol(self):
        return int(math.log2(self.order))

    @property
    def code_rate(self):
        return Fraction(self.K, self.N) if self.enabled else Fraction(0)

    @property
    def spectral_efficiency(self):
        return float(self.code_rate) * self.bits_per_symbol

    @classmethod
    def disabled(cls, S):
        return cls(order=4, N=2 * S, K=0, S=S, enabled=False)


@dataclass(frozen=True)
class McsDecision:
    """Per-stream choices for the common and the two private streams."""

    common: StreamMcs
    private1: StreamMcs
    private2: StreamMcs

    def __iter__(self):
        return iter((self.common, self.private1, self.private2))

    def __getitem__(self, i):
        return (self.common, self.private1, self.private2)[i]


def select_mcs(rate, beta, S, crc_len=11):
    """Smallest feasible alphabet and its quantized code rate.

    Streams whose rate is not positive, or whose info length cannot carry
    at least one payload bit beyond the CRC, are disabled.
    """
    S = check_count(S, "S")
    rate = float(rate)
    if not rate > 0:
        return StreamMcs.disabled(S)
    order = min(feasible_set(rate, beta))
    m = int(math.log2(order))
    N = S * m
    K = math.ceil(N * min(rate / m, beta) - 1e-9)
    if K < crc_len + 1:
        return StreamMcs.disabled(S)
    capacity = min(rate / m, 0.9999)
    snr = design_snr_for_capacity(capacity)
    snr = round(snr / DESIGN_SNR_STEP_DB) * DESIGN_SNR_STEP_DB
    return StreamMcs(order=order, N=N, K=K, S=S, design_snr_db=float(snr))


def select_all(rates, beta, S, crc_len=11, active=(True, True, True)):
    """:class:`McsDecision` for a rate allocation.

    The common stream uses the rate both users can decode; ``active`` masks
    streams the scheme does not use.
    """
    values = (rates.Rbar_c, rates.Rbar_1, rates.Rbar_2)
    return McsDecision(*(
        select_mcs(v, beta, S, crc_len) if on else StreamMcs.disabled(S)
        for v, on in zip(values, active)
    ))


def backoff_factor(db):
    return 10.0 ** (-float(db) / 10.0)


def apply_backoff(samples, P, rates, backoff_common_db=0.0, backoff_private_db=0.0):
    """Average rates with every stream's SINR scaled down by its back-off.

    ``samples`` are the realizations behind ``rates`` (shape
    ``(M, n_t, 2)``).  The common-rate split of ``rates`` is rescaled in
    proportion to the new common rate.
    """
    check_positive(backoff_common_db, "backoff_common_db", strict=False)
    check_positive(backoff_private_db, "backoff_private_db", strict=False)
    if backoff_common_db == 0.0 and backoff_private_db == 0.0:
        return rates
    gc, gp = instantaneous_sinrs(samples, P)
    rc = np.log2(1.0 + backoff_factor(backoff_common_db) * gc).mean(axis=0)
    rp = np.log2(1.0 + backoff_factor(backoff_private_db) * gp).mean(axis=0)
    # streams switched off by the scheme stay off
    rc = np.where(np.asarray(rates.common) > 0, rc, 0.0)
    rp = np.where(np.asarray(rates.private) > 0, rp, 0.0)
    shares = np.asarray(rates.shares)
    total = shares.sum()
    if total > 0:
        shares = shares / total * min(rc)
    return RateAllocation(float(rc[0]), float(rc[1]), float(rp[0]), float(rp[1]),
                          float(shares[0]), float(shares[1]))


def stream_class(stream):
    return "common" if stream == "common" else "private"


@dataclass
class BackoffTable:
    """Back-off (dB) per scheme, SNR point and stream class.

    Lookups use the nearest tabulated SNR of the scheme; unknown schemes
    get 0 dB.
    """

    entries: dict = field(default_factory=dict)

    def set(self, scheme, snr_db, stream, backoff_db):
        backoff_db = check_positive(backoff_db, "backoff_db", strict=False)
        if stream not in STREAM_CLASSES:
            raise ValueError(f"stream must be one of {STREAM_CLASSES}, got {stream!r}")
        self.entries[(scheme, float(snr_db), stream)] = backoff_db

    def lookup(self, scheme, snr_db, stream):
        stream = stream_class(stream) if stream in STREAMS else stream
        snrs = sorted({s for (sch, s, st) in self.entries if sch == scheme and st == stream})
        if not snrs:
            return 0.0
        nearest = min(snrs, key=lambda s: (abs(s - snr_db), s))
        return self.entries[(scheme, nearest, stream)]

    def rows(self):
        return [
            {"scheme": sch, "snr_db": snr, "stream": st, "backoff_db": bo}
            for (sch, snr, st), bo in sorted(self.entries.items())
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["scheme", "snr_db", "stream", "backoff_db"])
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            return cls._from_reader(csv.DictReader(fh))

    @classmethod
    def _from_reader(cls, reader):
        table = cls()
        expected = {"scheme", "snr_db", "stream", "backoff_db"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValueError(f"back-off table columns must be {sorted(expected)}, got {reader.fieldnames}")
        for row in reader:
            table.set(row["scheme"], float(row["snr_db"]), row["stream"], float(row["backoff_db"]))
        return table

    @classmethod
    def default(cls):
        """Table shipped with the package (calibrated at the default settings)."""
        res = resources.files("rsmalink") / "data" / "backoff_default.csv"
        if not res.is_file():
            return cls()
        with res.open("r", newline="") as fh:
            return cls._from_reader(csv.DictReader(fh))
