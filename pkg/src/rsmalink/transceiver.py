"""Per-block transmit and receive chains.

Transmit: split payloads, CRC + polar encode each stream, interleave, map to
QAM and precode.  Receive: MMSE-equalize the common stream, decode it,
rebuild it from the hard decisions and cancel it, then equalize and decode
the private stream.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._validation import check_random_state
from .amc import StreamMcs
from .modem import Interleaver, alphabet, llr_compute, modulate
from .polar import Crc, PolarCode, decode_scl, encode
from .precoder import PrecoderMatrix


@lru_cache(maxsize=1024)
def build_code(N, K, design_snr_db, crc_length=11):
    """Polar code for one stream configuration (cached, codes are immutable)."""
    crc = Crc() if crc_length == 11 else Crc(_crc_poly(crc_length), crc_length)
    return PolarCode.build(N, K, design_snr_db, crc=crc)


def _crc_poly(length):
    # a few common generators by length
    table = {0: 1, 6: 0x61, 8: 0x19B, 16: 0x11021, 24: 0x1864CFB}
    if length not in table:
        raise ValueError(f"no default CRC generator of length {length}")
    return table[length]


@dataclass(frozen=True)
class StreamChain:
    """Everything both ends need to process one stream."""

    mcs: StreamMcs
    code: PolarCode = None
    interleaver: Interleaver = None

    @property
    def enabled(self):
        return self.mcs.enabled


def stream_chains(mcs, interleaver_seeds, crc_length=11):
    """Codes and interleavers for the three streams of ``mcs``."""
    chains = []
    for s, seed in zip(mcs, interleaver_seeds):
        if not s.enabled:
            chains.append(StreamChain(s))
            continue
        code = build_code(s.N, s.K, s.design_snr_db, crc_length)
        chains.append(StreamChain(s, code, Interleaver(s.N, seed)))
    return tuple(chains)


@dataclass(frozen=True)
class SplitMessage:
    """Payload bits: common parts of users 1 and 2, private parts of users 1 and 2."""

    w_c1: np.ndarray
    w_c2: np.ndarray
    w_p1: np.ndarray
    w_p2: np.ndarray

    @property
    def common(self):
        return np.concatenate([self.w_c1, self.w_c2])

    def lengths(self):
        return tuple(len(w) for w in (self.w_c1, self.w_c2, self.w_p1, self.w_p2))


def common_split(payload, shares):
    """Largest-remainder split of ``payload`` bits in proportion to ``shares``.

    Ties in the remainders go to user 1.  With no positive share the bits
    are split as evenly as possible.
    """
    shares = np.maximum(np.asarray(shares, dtype=float), 0.0)
    if shares.sum() <= 0:
        shares = np.ones(2)
    quota = payload * shares / shares.sum()
    base = np.floor(quota + 1e-12).astype(int)
    left = payload - base.sum()
    order = sorted(range(2), key=lambda k: (-(quota[k] - base[k]), k))
    for k in order[:left]:
        base[k] += 1
    return int(base[0]), int(base[1])


def split_payload(shares, chains, rng):
    """Random payloads sized for ``chains`` with the common part split by ``shares``."""
    rng = check_random_state(rng)
    sizes = [ch.code.n_payload if ch.enabled else 0 for ch in chains]
    k1, k2 = common_split(sizes[0], shares)
    draw = lambda n: rng.integers(0, 2, n, dtype=np.uint8)
    return SplitMessage(draw(k1), draw(k2), draw(sizes[1]), draw(sizes[2]))


def _stream_symbols(bits, chain):
    cw = encode(chain.code, bits)
    return modulate(chain.interleaver.interleave(cw), alphabet(chain.mcs.order))


@dataclass(frozen=True)
class TransmitBlock:
    """Stream symbols ``s`` (3, S) and antenna signal ``x = P s`` (n_t, S)."""

    s: np.ndarray
    x: np.ndarray


def effective_precoder(P, chains):
    """Precoder with the columns of disabled streams zeroed."""
    P = P.P if isinstance(P, PrecoderMatrix) else np.asarray(P, dtype=np.complex128)
    mask = np.array([ch.enabled for ch in chains])
    return P * mask[None, :]


def transmit(msg, P, chains):
    S = chains[0].mcs.S
    payloads = (msg.common, msg.w_p1, msg.w_p2)
    s = np.zeros((3, S), dtype=np.complex128)
    for i, (bits, ch) in enumerate(zip(payloads, chains)):
        if ch.enabled:
            s[i] = _stream_symbols(bits, ch)
    Pe = effective_precoder(P, chains)
    return TransmitBlock(s=s, x=Pe @ s)


def mmse_equalizers(h, P):
    """Scalar MMSE equalizers ``(g_c, g_p)`` of user ``k`` for every stream.

    ``g_c = p_c^H h / (|h^H p_c|^2 + sum_j |h^H p_j|^2 + 1)`` and
    ``g_p[k] = p_k^H h / (sum_j |h^H p_j|^2 + 1)``; the private form assumes
    the common stream has been removed.  Returned with the matching SINRs.
    """
    P = P.P if isinstance(P, PrecoderMatrix) else np.asarray(P, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    a = np.conj(h) @ P
    pw = np.abs(a) ** 2
    tot_c = pw.sum() + 1.0
    tot_p = pw[1] + pw[2] + 1.0
    g_c = np.conj(a[0]) / tot_c
    g_p = np.conj(a[1:]) / tot_p
    gamma_c = pw[0] / (tot_c - pw[0])
    gamma_p = pw[1:] / (tot_p - pw[1:])
    return g_c, g_p, gamma_c, gamma_p


def _detect(y, g, gamma, chain, list_size):
    rho = gamma / (1.0 + gamma)
    llr = llr_compute(g * y, gamma, rho, alphabet(chain.mcs.order))
    llr = chain.interleaver.deinterleave(llr)
    return decode_scl(chain.code, llr, list_size)


@dataclass
class ReceiveResult:
    """Decoded payload and CRC flags of one user.

    ``common_ok``/``private_ok`` are ``None`` for streams the user does not
    decode.
    """

    common_bits: np.ndarray = None
    common_ok: bool = None
    private_bits: np.ndarray = None
    private_ok: bool = None
    cancelled: bool = False
    y_tilde: np.ndarray = field(default=None, repr=False)
    equalizers: tuple = None


def receive_sic(y, h, P, chains, user, list_size=8):
    """Decode the common stream, cancel it when its CRC passes, decode the private stream.

    On a common CRC failure the private stream is decoded from the
    uncancelled signal with an MMSE equalizer that treats the common stream
    as interference.
    """
    Pe = effective_precoder(P, chains)
    h = np.asarray(h, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    g_c, g_p, gamma_c, gamma_p = mmse_equalizers(h, Pe)
    res = ReceiveResult(equalizers=(g_c, g_p[user]))
    y_t = y
    if chains[0].enabled:
        bits, ok = _detect(y, g_c, gamma_c, chains[0], list_size)
        res.common_bits, res.common_ok = bits, ok
        if ok:
            s_hat = _stream_symbols(bits, chains[0])
            y_t = y - (np.conj(h) @ Pe[:, 0]) * s_hat
            res.cancelled = True
    res.y_tilde = y_t
    ch = chains[1 + user]
    if ch.enabled:
        if res.cancelled or not chains[0].enabled:
            g, gamma = g_p[user], gamma_p[user]
        else:
            a = np.conj(h) @ Pe
            pw = np.abs(a) ** 2
            tot = pw.sum() + 1.0
            g = np.conj(a[1 + user]) / tot
            gamma = pw[1 + user] / (tot - pw[1 + user])
        res.equalizers = (g_c, g)
        res.private_bits, res.private_ok = _detect(y_t, g, gamma, ch, list_size)
    return res


def merge_messages(result, msg, user):
    """Recovered information bits of ``user``: its common part when the common
    CRC passes plus its private part when the private CRC passes."""
    w_c = msg.w_c1 if user == 0 else msg.w_c2
    w_p = msg.w_p1 if user == 0 else msg.w_p2
    d = 0
    if result.common_ok:
        d += len(w_c)
    if result.private_ok:
        d += len(w_p)
    return d


def recovered_common(result, msg, user):
    """User's own slice of the decoded common payload."""
    if result.common_bits is None:
        return None
    k1 = len(msg.w_c1)
    return result.common_bits[:k1] if user == 0 else result.common_bits[k1:]
