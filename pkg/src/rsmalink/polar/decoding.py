"""Successive-cancellation list decoding (LLR domain, lazy copying).

Arrays are shared between paths per layer and copied only when a shared
layer is written, so a list of ``L`` paths costs ``O(L N log N)`` work.
Decisions are kept as a per-phase (bit, parent) trail and traced back at
the end, so cloning a path never copies its decided bits.

Channel LLRs are in code-bit order for ``G = B_N F^{(x)n}``; positive
values favour 0.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def box_plus(a, b):
    """Exact check-node LLR ``2 atanh(tanh(a/2) tanh(b/2))``."""
    s = 1.0 if (a >= 0.0) == (b >= 0.0) else -1.0
    return (
        s * min(abs(a), abs(b))
        + math.log1p(math.exp(-abs(a + b)))
        - math.log1p(math.exp(-abs(a - b)))
    )


@njit(cache=True)
def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(cache=True)
def _writable(layer, path, n, P, C, owner, refs, free, free_top):
    """Array slot of ``path`` at ``layer``, copied first if shared."""
    s = owner[layer, path]
    if refs[layer, s] == 1:
        return s
    free_top[layer] -= 1
    t = free[layer, free_top[layer]]
    size = 1 << (n - layer)
    P[layer, t, :size] = P[layer, s, :size]
    C[layer, t, :size, :] = C[layer, s, :size, :]
    refs[layer, s] -= 1
    refs[layer, t] = 1
    owner[layer, path] = t
    return t


@njit(cache=True)
def scl_decode(llr, frozen, list_size):
    """List decoding of one block.

    Returns ``(paths, metrics)``: decided input vectors of the surviving
    paths, ordered by increasing path metric (best first).
    """
    N = llr.size
    n = 0
    while (1 << n) < N:
        n += 1
    L = list_size
    P = np.zeros((n + 1, L, N))
    C = np.zeros((n + 1, L, N, 2), dtype=np.uint8)
    owner = np.zeros((n + 1, L), dtype=np.int64)
    refs = np.zeros((n + 1, L), dtype=np.int64)
    free = np.zeros((n + 1, L), dtype=np.int64)
    free_top = np.zeros(n + 1, dtype=np.int64)
    free_paths = np.zeros(L, dtype=np.int64)
    active = np.zeros(L, dtype=np.bool_)
    metric = np.zeros(L)
    bits = np.zeros((N, L), dtype=np.uint8)
    parent = np.zeros((N, L), dtype=np.int64)

    for lam in range(n + 1):
        for s in range(L):
            free[lam, s] = L - 1 - s
        free_top[lam] = L
    for p in range(L):
        free_paths[p] = L - 1 - p
    n_free_paths = L

    # first path
    n_free_paths -= 1
    first = free_paths[n_free_paths]
    active[first] = True
    for lam in range(n + 1):
        free_top[lam] -= 1
        s = free[lam, free_top[lam]]
        owner[lam, first] = s
        refs[lam, s] = 1
    P[0, owner[0, first], :] = llr

    cand = np.zeros(2 * L)
    keep = np.zeros((L, 2), dtype=np.bool_)

    for phi in range(N):
        # lowest layer that must be recomputed for this phase
        low = n
        while low > 1 and ((phi >> (n - low)) & 1) == 0:
            low -= 1
        for lam in range(low, n + 1):
            ph = phi >> (n - lam)
            size = 1 << (n - lam)
            for p in range(L):
                if not active[p]:
                    continue
                src = owner[lam - 1, p]
                dst = _writable(lam, p, n, P, C, owner, refs, free, free_top)
                if ph % 2 == 0:
                    for b in range(size):
                        P[lam, dst, b] = box_plus(P[lam - 1, src, 2 * b], P[lam - 1, src, 2 * b + 1])
                else:
                    for b in range(size):
                        u = C[lam, dst, b, 0]
                        a = P[lam - 1, src, 2 * b]
                        P[lam, dst, b] = P[lam - 1, src, 2 * b + 1] + (a if u == 0 else -a)

        slot = phi % 2
        if frozen[phi]:
            for p in range(L):
                if not active[p]:
                    continue
                s = _writable(n, p, n, P, C, owner, refs, free, free_top)
                metric[p] += _softplus(-P[n, s, 0])
                C[n, s, 0, slot] = 0
                bits[phi, p] = 0
                parent[phi, p] = p
        else:
            n_active = 0
            for p in range(L):
                if active[p]:
                    lv = P[n, owner[n, p], 0]
                    cand[p] = metric[p] + _softplus(-lv)
                    cand[L + p] = metric[p] + _softplus(lv)
                    n_active += 1
                else:
                    cand[p] = np.inf
                    cand[L + p] = np.inf
            order = np.argsort(cand, kind="mergesort")
            n_keep = min(2 * n_active, L)
            keep[:, :] = False
            for r in range(n_keep):
                c = order[r]
                keep[c % L, c // L] = True
            # kill paths without surviving forks
            for p in range(L):
                if active[p] and not keep[p, 0] and not keep[p, 1]:
                    active[p] = False
                    free_paths[n_free_paths] = p
                    n_free_paths += 1
                    for lam in range(n + 1):
                        s = owner[lam, p]
                        refs[lam, s] -= 1
                        if refs[lam, s] == 0:
                            free[lam, free_top[lam]] = s
                            free_top[lam] += 1
            lv_old = np.zeros(L)
            for p in range(L):
                if active[p]:
                    lv_old[p] = P[n, owner[n, p], 0]
            for p in range(L):
                if not active[p] or not (keep[p, 0] or keep[p, 1]):
                    continue
                lv = lv_old[p]
                base = metric[p]
                if keep[p, 0] and keep[p, 1]:
                    n_free_paths -= 1
                    q = free_paths[n_free_paths]
                    active[q] = True
                    for lam in range(n + 1):
                        s = owner[lam, p]
                        owner[lam, q] = s
                        refs[lam, s] += 1
                    sp = _writable(n, p, n, P, C, owner, refs, free, free_top)
                    C[n, sp, 0, slot] = 0
                    metric[p] = base + _softplus(-lv)
                    bits[phi, p] = 0
                    parent[phi, p] = p
                    sq = _writable(n, q, n, P, C, owner, refs, free, free_top)
                    C[n, sq, 0, slot] = 1
                    metric[q] = base + _softplus(lv)
                    bits[phi, q] = 1
                    parent[phi, q] = p
                else:
                    b = 0 if keep[p, 0] else 1
                    sp = _writable(n, p, n, P, C, owner, refs, free, free_top)
                    C[n, sp, 0, slot] = b
                    metric[p] = base + (_softplus(-lv) if b == 0 else _softplus(lv))
                    bits[phi, p] = b
                    parent[phi, p] = p
            # paths cloned in this phase must not be revisited as parents
            for p in range(L):
                keep[p, 0] = False
                keep[p, 1] = False

        # propagate partial sums downwards
        if slot == 1:
            lam = n
            ph = phi
            while ph % 2 == 1 and lam >= 1:
                psi = ph >> 1
                size = 1 << (n - lam)
                for p in range(L):
                    if not active[p]:
                        continue
                    src = owner[lam, p]
                    dst = _writable(lam - 1, p, n, P, C, owner, refs, free, free_top)
                    src = owner[lam, p]
                    for b in range(size):
                        C[lam - 1, dst, 2 * b, psi % 2] = C[lam, src, b, 0] ^ C[lam, src, b, 1]
                        C[lam - 1, dst, 2 * b + 1, psi % 2] = C[lam, src, b, 1]
                lam -= 1
                ph = psi

    # collect survivors best first
    count = 0
    for p in range(L):
        if active[p]:
            count += 1
    ids = np.zeros(count, dtype=np.int64)
    ms = np.zeros(count)
    j = 0
    for p in range(L):
        if active[p]:
            ids[j] = p
            ms[j] = metric[p]
            j += 1
    order = np.argsort(ms, kind="mergesort")
    paths = np.zeros((count, N), dtype=np.uint8)
    metrics = np.zeros(count)
    for r in range(count):
        p = ids[order[r]]
        metrics[r] = ms[order[r]]
        for phi in range(N - 1, -1, -1):
            paths[r, phi] = bits[phi, p]
            p = parent[phi, p]
    return paths, metrics
