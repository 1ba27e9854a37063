"""Independent reference implementations used as test oracles."""

import numpy as np


def kron_generator(N):
    """``B_N F^{(x)n}`` built explicitly: Kronecker power then row bit-reversal."""
    F = np.array([[1, 0], [1, 1]], dtype=np.int64)
    G = np.array([[1]], dtype=np.int64)
    while G.shape[0] < N:
        G = np.kron(G, F)
    n = N.bit_length() - 1
    rev = [int(format(i, f"0{n}b")[::-1], 2) if n else 0 for i in range(N)]
    return G[rev] % 2


def crc_long_division(bits, poly=0xE21, length=11):
    """CRC by big-integer polynomial division."""
    v = int("".join(str(int(b)) for b in bits) or "0", 2) << length
    while v.bit_length() > length:
        v ^= poly << (v.bit_length() - length - 1)
    return [(v >> (length - 1 - i)) & 1 for i in range(length)]


def _f(a, b):
    t = np.tanh(a / 2.0) * np.tanh(b / 2.0)
    return 2.0 * np.arctanh(np.clip(t, -1 + 1e-16, 1 - 1e-16))


def sc_decode(llr_nu, frozen):
    """Recursive SC decoder on ``x = u F^{(x)n}`` (upper/lower halves).

    Code-bit LLRs arrive in ``nu = x[bitrev]`` order and are reordered first.
    Returns the decided input vector.  Ties decide 0.
    """
    N = llr_nu.size
    n = N.bit_length() - 1
    rev = np.array([int(format(i, f"0{n}b")[::-1], 2) if n else 0 for i in range(N)])
    llr_x = np.empty(N)
    llr_x[rev] = llr_nu

    def rec(L, fr):
        if L.size == 1:
            u = 0 if fr[0] or L[0] >= 0 else 1
            return np.array([u]), np.array([u])
        h = L.size // 2
        ua, xa = rec(_f(L[:h], L[h:]), fr[:h])
        ub, xb = rec(L[h:] + (1 - 2.0 * xa) * L[:h], fr[h:])
        return np.concatenate([ua, ub]), np.concatenate([xa ^ xb, xb])

    u, _ = rec(llr_x, np.asarray(frozen, dtype=bool))
    return u


def genie_bit_channel_errors(N, snr_db, n_blocks, rng):
    """Monte-Carlo error rates of each bit channel under genie-aided SC (all-zero word)."""
    snr = 10 ** (snr_db / 10)
    y = 1.0 + rng.standard_normal((n_blocks, N)) / np.sqrt(2 * snr)
    L = 4 * snr * y

    def rec(L):
        if L.shape[1] == 1:
            return [L[:, 0]]
        h = L.shape[1] // 2
        return rec(_f(L[:, :h], L[:, h:])) + rec(L[:, h:] + L[:, :h])

    out = rec(L)
    return np.array([np.mean(l < 0) + 0.5 * np.mean(l == 0) for l in out])
