"""SAA-based precoder optimization for RSMA, SDMA and NOMA.

The average sum rate of a 2-user MISO broadcast channel is maximized by
alternating optimization of the weighted-MMSE surrogate: for fixed precoders,
per-sample MMSE equalizers and MSE weights are computed in closed form; for
fixed equalizers and weights every stream's surrogate rate is a concave
quadratic in the precoders, so the precoder update is a small convex program.

Without a binding QoS constraint the precoder step is solved exactly through
its Lagrangian dual (a 1-D search on the common-rate multiplier wrapped around
a 1-D search on the power multiplier).  When the QoS constraint binds, the
step falls back to SLSQP on the same convex program with analytic gradients.

All internal rates are in nats; everything returned is in bits (bps/Hz).
"""

from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np
from numba import njit
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channel, check_count, check_positive, check_random_state
from .channel import CsitModel, sample_estimate, sample_realization_array

logger = logging.getLogger(__name__)

SCHEMES = ("rsma", "sdma", "noma")
LN2 = math.log(2.0)

# Order of the four surrogate rate functions: common at user 1/2, private 1/2.
_C1, _C2, _P1, _P2 = range(4)


@dataclass(frozen=True)
class PrecoderMatrix:
    """Columns ``[p_c, p_1, p_2]`` of the linear precoder, shape ``(n_t, 3)``."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.complex128)
        if P.ndim != 2 or P.shape[1] != 3:
            raise ValueError(f"precoder matrix must have shape (n_t, 3), got {P.shape}")
        object.__setattr__(self, "P", P)

    @property
    def p_c(self):
        return self.P[:, 0]

    @property
    def p_1(self):
        return self.P[:, 1]

    @property
    def p_2(self):
        return self.P[:, 2]

    @property
    def stream_powers(self):
        return np.sum(np.abs(self.P) ** 2, axis=0)

    @property
    def total_power(self):
        return float(np.sum(self.stream_powers))

    @classmethod
    def zeros(cls, n_t):
        return cls(np.zeros((n_t, 3), dtype=np.complex128))


@dataclass(frozen=True)
class RateAllocation:
    """Average rates (bps/Hz) of one precoder solution."""

    Rbar_c1: float
    Rbar_c2: float
    Rbar_1: float
    Rbar_2: float
    Cbar_1: float = 0.0
    Cbar_2: float = 0.0

    @property
    def Rbar_c(self):
        return min(self.Rbar_c1, self.Rbar_c2)

    @property
    def common(self):
        return (self.Rbar_c1, self.Rbar_c2)

    @property
    def private(self):
        return (self.Rbar_1, self.Rbar_2)

    @property
    def shares(self):
        return (self.Cbar_1, self.Cbar_2)

    @property
    def user_rates(self):
        return (self.Cbar_1 + self.Rbar_1, self.Cbar_2 + self.Rbar_2)

    @property
    def sum_rate(self):
        return self.Cbar_1 + self.Cbar_2 + self.Rbar_1 + self.Rbar_2


@dataclass(frozen=True)
class SolverOptions:
    saa_samples: int = 1000
    max_iterations: int = 200
    tolerance: float = 1e-4
    qos_rate: float = 0.0
    random_state: object = None

    def __post_init__(self):
        check_count(self.saa_samples, "saa_samples")
        check_count(self.max_iterations, "max_iterations")
        check_positive(self.tolerance, "tolerance")
        check_positive(self.qos_rate, "qos_rate", strict=False)


@dataclass
class PrecoderSolution:
    scheme: str
    precoder: PrecoderMatrix
    rates: RateAllocation
    status: str
    n_iter: int = 0
    objective_history: list = field(default_factory=list)
    weak_user: int = None

    @property
    def feasible(self):
        return self.status != "infeasible"

    @property
    def objective(self):
        """Average sum rate in bps/Hz; zero for an infeasible problem."""
        return self.rates.sum_rate if self.feasible else 0.0


@dataclass(frozen=True)
class _Structure:
    """Which streams exist and which users may own part of the common stream."""

    scheme: str
    active: tuple  # (common, private 1, private 2)
    shares: tuple  # common-share variables allowed for user 1/2
    weak_user: int = None

    @classmethod
    def of(cls, scheme, weak_user=None):
        if scheme == "rsma":
            return cls(scheme, (True, True, True), (True, True))
        if scheme == "sdma":
            return cls(scheme, (False, True, True), (False, False))
        if scheme == "noma":
            if weak_user not in (0, 1):
                raise ValueError("NOMA needs weak_user in {0, 1}")
            active = [True, True, True]
            active[1 + weak_user] = False
            shares = [False, False]
            shares[weak_user] = True
            return cls(scheme, tuple(active), tuple(shares), weak_user)
        raise ValueError(f"unknown scheme {scheme!r}; valid schemes are {', '.join(SCHEMES)}")

    @property
    def column_mask(self):
        return np.array(self.active, dtype=bool)

    @property
    def has_common(self):
        return self.active[0]


# --------------------------------------------------------------------------
# rates


def instantaneous_sinrs(H, P):
    """Per-user SINRs ``(gamma_c, gamma_p)`` for channel ``H`` and precoder ``P``.

    ``H`` has shape ``(..., n_t, 2)``; the common SINR treats both private
    streams as interference, the private SINR only the other private stream
    (the common stream is assumed cancelled).  Unit noise variance.
    """
    P = P.P if isinstance(P, PrecoderMatrix) else np.asarray(P)
    a = np.einsum("...tk,ti->...ki", np.conj(H), P)
    pw = np.abs(a) ** 2
    gamma_c = pw[..., 0] / (pw[..., 1] + pw[..., 2] + 1.0)
    sig = np.stack([pw[..., 0, 1], pw[..., 1, 2]], axis=-1)
    intf = np.stack([pw[..., 0, 2], pw[..., 1, 1]], axis=-1)
    gamma_p = sig / (intf + 1.0)
    return gamma_c, gamma_p


def _saa_rates(samples, P):
    """Mean rates in nats: (common per user, private per user)."""
    P = P.P if isinstance(P, PrecoderMatrix) else P
    return _saa_rates_kernel(
        np.ascontiguousarray(samples, dtype=np.complex128),
        np.ascontiguousarray(P, dtype=np.complex128),
    )


def average_rates(estimate, P, opts, model=None, rng=None, samples=None):
    """SAA average rates for precoder ``P`` given a channel estimate.

    Either pass ``samples`` (shape ``(M, n_t, 2)``) directly, or a
    :class:`CsitModel` from which ``opts.saa_samples`` realizations are drawn
    with ``rng`` (falls back to ``opts.random_state``).
    """
    if samples is None:
        if model is None:
            raise ValueError("average_rates needs either samples or a CsitModel")
        rng = check_random_state(opts.random_state if rng is None else rng)
        samples, _ = sample_realization_array(estimate, model, opts.saa_samples, rng)
    rc, rp = _saa_rates(samples, P)
    rc, rp = rc / LN2, rp / LN2
    return RateAllocation(float(rc[0]), float(rc[1]), float(rp[0]), float(rp[1]))


def _allocate(rc, rp, struct, r0):
    """Best common-rate split for the true SAA rates (any unit).

    Returns ``(objective, shares)`` or ``(None, None)`` when the QoS target
    cannot be met.  The split maximizes the common rate used and, among
    optimal splits, is closest to equal.
    """
    priv = np.where(struct.column_mask[1:], rp, 0.0)
    t = float(min(rc)) if struct.has_common else 0.0
    t = max(t, 0.0)
    shares = np.zeros(2)
    lower = np.zeros(2)
    for k in range(2):
        need = max(0.0, r0 - priv[k])
        if need > 0 and not struct.shares[k]:
            if need > 1e-12:
                return None, None
            need = 0.0
        lower[k] = need
    if lower.sum() > t + 1e-12:
        return None, None
    allowed = [k for k in range(2) if struct.shares[k]]
    if len(allowed) == 2:
        c0 = min(max(t / 2.0, lower[0]), t - lower[1])
        shares[:] = (c0, t - c0)
    elif len(allowed) == 1:
        shares[allowed[0]] = t
    else:
        t = 0.0
    return t + float(priv.sum()), shares


def _maxmin_value(rc, rp, struct):
    """Largest achievable minimum user rate for fixed stream rates."""
    priv = np.where(struct.column_mask[1:], rp, 0.0)
    t = max(float(min(rc)), 0.0) if struct.has_common else 0.0
    allowed = [k for k in range(2) if struct.shares[k]]
    if len(allowed) == 2:
        lo, hi = sorted(priv)
        return lo + t if hi - lo >= t else (lo + hi + t) / 2.0
    if len(allowed) == 1:
        w = allowed[0]
        return min(priv[w] + t, priv[1 - w])
    return float(min(priv))


# --------------------------------------------------------------------------
# weighted-MMSE surrogate


@njit(cache=True)
def _surrogate_terms(samples, P):
    """MMSE-weight expansion of the SAA rates around ``P``.

    For a stream with signal power ``s`` and total received power ``tot``
    the MMSE receiver is ``g = a^* / tot`` and the optimal weight
    ``u = tot / (tot - s)``.
    """
    M, n_t, _ = samples.shape
    Q = np.zeros((4, 3, n_t, n_t), dtype=np.complex128)
    L = np.zeros((4, 3, n_t), dtype=np.complex128)
    const = np.zeros(4)
    a = np.zeros(3, dtype=np.complex128)
    pw = np.zeros(3)
    for m in range(M):
        for k in range(2):
            h = samples[m, :, k]
            for i in range(3):
                acc = 0j
                for t in range(n_t):
                    acc += np.conj(h[t]) * P[t, i]
                a[i] = acc
                pw[i] = acc.real ** 2 + acc.imag ** 2
            # common stream at user k
            tot = pw[0] + pw[1] + pw[2] + 1.0
            u = tot / (tot - pw[0])
            g = np.conj(a[0]) / tot
            wq = u * (g.real ** 2 + g.imag ** 2)
            for t in range(n_t):
                for r in range(n_t):
                    Q[k, 0, t, r] += wq * h[t] * np.conj(h[r])
                L[k, 0, t] += u * np.conj(g) * h[t]
            const[k] += wq + u - np.log(u)
            # private stream k at user k
            tot = pw[1 + k] + pw[2 - k] + 1.0
            u = tot / (tot - pw[1 + k])
            g = np.conj(a[1 + k]) / tot
            wq = u * (g.real ** 2 + g.imag ** 2)
            for t in range(n_t):
                for r in range(n_t):
                    Q[2 + k, 1, t, r] += wq * h[t] * np.conj(h[r])
                L[2 + k, 1 + k, t] += u * np.conj(g) * h[t]
            const[2 + k] += wq + u - np.log(u)
    Q /= M
    L /= M
    const /= M
    for k in range(2):
        Q[k, 1] = Q[k, 0]
        Q[k, 2] = Q[k, 0]
        Q[2 + k, 2] = Q[2 + k, 1]
    return Q, L, const


@njit(cache=True)
def _saa_rates_kernel(samples, P):
    M, n_t, _ = samples.shape
    rc = np.zeros(2)
    rp = np.zeros(2)
    pw = np.zeros(3)
    for m in range(M):
        for k in range(2):
            for i in range(3):
                acc = 0j
                for t in range(n_t):
                    acc += np.conj(samples[m, t, k]) * P[t, i]
                pw[i] = acc.real ** 2 + acc.imag ** 2
            rc[k] += np.log1p(pw[0] / (pw[1] + pw[2] + 1.0))
            rp[k] += np.log1p(pw[1 + k] / (pw[2 - k] + 1.0))
    return rc / M, rp / M


class _Surrogate:
    """Quadratic surrogate of the four stream rates around a precoder.

    Each surrogate rate (nats) is ``1 - (sum_i p_i^H Q[f,i] p_i
    - 2 Re sum_i L[f,i]^H p_i + const[f])`` and touches the true SAA rate
    at the expansion point.
    """

    def __init__(self, samples, P):
        self.Q, self.L, self.const = _surrogate_terms(
            samples, np.ascontiguousarray(P, dtype=np.complex128)
        )

    def values(self, P):
        return _surrogate_values(self.Q, self.L, self.const, np.ascontiguousarray(P, dtype=np.complex128))

    def values_and_grads(self, P):
        """Values and gradients w.r.t. real and imaginary parts, shape (4, n_t, 3)."""
        QP = np.einsum("fitu,ui->fit", self.Q, P)
        quad = np.real(np.einsum("ti,fit->f", np.conj(P), QP))
        lin = np.real(np.einsum("fit,ti->f", np.conj(self.L), P))
        vals = 1.0 - (quad - 2.0 * lin + self.const)
        d = -2.0 * (QP - self.L)  # (f, i, t)
        d = np.transpose(d, (0, 2, 1))
        return vals, d.real, d.imag

    def weighted_solution(self, weights, mask, power):
        """Maximizer of the weighted surrogate sum under the power budget."""
        return _weighted_solution(self.Q, self.L, np.asarray(weights, dtype=np.float64), mask, float(power))


@njit(cache=True)
def _weighted_solution(Q, L, w, mask, power):
    n_t = Q.shape[-1]
    P = np.zeros((n_t, 3), dtype=np.complex128)
    evals = np.zeros((3, n_t))
    q = np.zeros((3, n_t), dtype=np.complex128)
    vecs = np.zeros((3, n_t, n_t), dtype=np.complex128)
    scale = 1e-300
    for i in range(3):
        if not mask[i]:
            continue
        M = np.zeros((n_t, n_t), dtype=np.complex128)
        v = np.zeros(n_t, dtype=np.complex128)
        for f in range(4):
            if w[f] != 0.0:
                M += w[f] * Q[f, i]
                v += w[f] * L[f, i]
        M = 0.5 * (M + np.conj(M.T))
        e, V = np.linalg.eigh(M)
        vecs[i] = V
        for j in range(n_t):
            evals[i, j] = max(e[j], 0.0)
            q[i, j] = np.vdot(V[:, j], v)
            scale = max(scale, evals[i, j], abs(q[i, j]) ** 2)

    q2 = np.abs(q) ** 2
    keep = np.zeros((3, n_t), dtype=np.bool_)
    null_mass = 0.0
    total0 = 0.0
    for i in range(3):
        if not mask[i]:
            continue
        for j in range(n_t):
            if evals[i, j] <= 1e-13 * scale:
                if q2[i, j] > 1e-26 * scale:
                    keep[i, j] = True
                    null_mass += q2[i, j]
            else:
                keep[i, j] = True
                total0 += q2[i, j] / evals[i, j] ** 2

    mu = 0.0
    if null_mass > 0.0 or total0 > power:
        # f(mu) = sum q2 / (e + mu)^2 is convex and decreasing, so Newton
        # started left of the root climbs to it monotonically.
        if null_mass > 0.0:
            mu = np.sqrt(null_mass / power)
        for _ in range(200):
            f = 0.0
            df = 0.0
            for i in range(3):
                for j in range(n_t):
                    if keep[i, j]:
                        d = evals[i, j] + mu
                        f += q2[i, j] / (d * d)
                        df -= 2.0 * q2[i, j] / (d * d * d)
            step = (f - power) / df
            new = mu - step
            if new <= mu or abs(step) <= 1e-15 * max(new, 1e-300):
                mu = max(mu, new)
                break
            mu = new

    for i in range(3):
        if not mask[i]:
            continue
        for j in range(n_t):
            if keep[i, j]:
                coef = q[i, j] / (evals[i, j] + mu)
                for t in range(n_t):
                    P[t, i] += vecs[i, t, j] * coef
    return P


@njit(cache=True)
def _surrogate_values(Q, L, const, P):
    out = np.empty(4)
    n_t = P.shape[0]
    for f in range(4):
        acc = const[f]
        for i in range(3):
            for t in range(n_t):
                qp = 0j
                for r in range(n_t):
                    qp += Q[f, i, t, r] * P[r, i]
                acc += (np.conj(P[t, i]) * qp).real - 2.0 * (np.conj(L[f, i, t]) * P[t, i]).real
        out[f] = 1.0 - acc
    return out


@njit(cache=True)
def _dual_common_step(Q, L, const, w_priv, mask, power):
    """Exact surrogate step with a common stream: bisection on the
    multiplier splitting weight between the two common-rate constraints."""
    w = np.zeros(4)
    w[2] = w_priv[0]
    w[3] = w_priv[1]

    w[0], w[1] = 0.0, 1.0
    P = _weighted_solution(Q, L, w, mask, power)
    v = _surrogate_values(Q, L, const, P)
    if v[0] - v[1] >= 0.0:
        return P
    w[0], w[1] = 1.0, 0.0
    P = _weighted_solution(Q, L, w, mask, power)
    v = _surrogate_values(Q, L, const, P)
    if v[0] - v[1] <= 0.0:
        return P
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        w[0], w[1] = mid, 1.0 - mid
        P = _weighted_solution(Q, L, w, mask, power)
        v = _surrogate_values(Q, L, const, P)
        if v[0] - v[1] < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return P


def _build_samples(estimate, model, opts):
    rng = check_random_state(opts.random_state)
    samples, _ = sample_realization_array(estimate, model, opts.saa_samples, rng)
    return samples


class _AlternatingSolver:
    """Weighted-MMSE alternating optimization on a fixed SAA sample set."""

    def __init__(self, samples, power, struct, opts):
        self.samples = samples
        self.power = power
        self.struct = struct
        self.opts = opts
        self.r0 = opts.qos_rate * LN2

    # true-rate bookkeeping (nats)
    def evaluate(self, P):
        rc, rp = _saa_rates(self.samples, P)
        obj, shares = _allocate(rc, rp, self.struct, self.r0)
        return obj, shares, rc, rp

    def maxmin(self, P):
        rc, rp = _saa_rates(self.samples, P)
        return _maxmin_value(rc, rp, self.struct)

    # precoder subproblems
    def _weights(self, lam1):
        st = self.struct
        w = np.zeros(4)
        if st.has_common:
            w[_C1], w[_C2] = lam1, 1.0 - lam1
        w[_P1] = 1.0 if st.active[1] else 0.0
        w[_P2] = 1.0 if st.active[2] else 0.0
        return w

    def _dual_step(self, sur):
        """Exact maximizer of the surrogate objective without QoS."""
        st = self.struct
        mask = st.column_mask
        w_priv = np.array([1.0 if st.active[1] else 0.0, 1.0 if st.active[2] else 0.0])
        if not st.has_common:
            return sur.weighted_solution(self._weights(0.0), mask, self.power)
        return _dual_common_step(sur.Q, sur.L, sur.const, w_priv, mask, float(self.power))

    def _surrogate_feasible(self, sur, P):
        vals = sur.values(P)
        ok, _ = _allocate(vals[:2], vals[2:], self.struct, self.r0)
        return ok is not None

    def _slsqp_step(self, sur, P0, shares0, phase_one=False):
        """Solve the surrogate program with QoS (or max-min) constraints."""
        st = self.struct
        cols = np.flatnonzero(st.column_mask)
        share_idx = [k for k in range(2) if st.shares[k]]
        n_t = P0.shape[0]
        nP = n_t * len(cols)
        nc = len(share_idx)
        n = 2 * nP + nc + (1 if phase_one else 0)
        r0 = self.r0

        def unpack(x):
            P = np.zeros((n_t, 3), dtype=np.complex128)
            P[:, cols] = (x[:nP] + 1j * x[nP:2 * nP]).reshape(n_t, len(cols))
            c = np.zeros(2)
            c[share_idx] = x[2 * nP:2 * nP + nc]
            return P, c

        def pgrad(dr, di):
            return np.concatenate([dr[:, cols].ravel(), di[:, cols].ravel()])

        def priv_weight(k):
            return 1.0 if st.active[1 + k] else 0.0

        def objective(x):
            if phase_one:
                g = np.zeros(n)
                g[-1] = -1.0
                return -x[-1], g
            P, c = unpack(x)
            vals, dr, di = sur.values_and_grads(P)
            f = c.sum()
            g = np.zeros(n)
            for k in range(2):
                wk = priv_weight(k)
                f += wk * vals[2 + k]
                g[:2 * nP] += wk * pgrad(dr[2 + k], di[2 + k])
            g[2 * nP:2 * nP + nc] = 1.0
            return -f, -g

        def cons(x):
            P, c = unpack(x)
            vals, dr, di = sur.values_and_grads(P)
            rows, jac = [], []
            if st.has_common:
                for j in range(2):
                    rows.append(vals[j] - c.sum())
                    gj = np.zeros(n)
                    gj[:2 * nP] = pgrad(dr[j], di[j])
                    gj[2 * nP:2 * nP + nc] = -1.0
                    jac.append(gj)
            for k in range(2):
                wk = priv_weight(k)
                target = x[-1] if phase_one else r0
                rows.append(c[k] + wk * vals[2 + k] - target)
                gk = np.zeros(n)
                gk[:2 * nP] = wk * pgrad(dr[2 + k], di[2 + k])
                if st.shares[k]:
                    gk[2 * nP + share_idx.index(k)] = 1.0
                if phase_one:
                    gk[-1] = -1.0
                jac.append(gk)
            rows.append(self.power - float(np.sum(np.abs(P) ** 2)))
            gp = np.zeros(n)
            gp[:2 * nP] = -2.0 * np.concatenate([P[:, cols].real.ravel(), P[:, cols].imag.ravel()])
            jac.append(gp)
            return np.array(rows), np.array(jac)

        x0 = np.concatenate([P0[:, cols].real.ravel(), P0[:, cols].imag.ravel(), shares0[share_idx]])
        if phase_one:
            vals = sur.values(P0)
            x0 = np.append(x0, _maxmin_value(vals[:2], vals[2:], st))
        bounds = [(None, None)] * (2 * nP) + [(0.0, None)] * nc + ([(None, None)] if phase_one else [])
        res = minimize(
            objective, x0, jac=True, method="SLSQP", bounds=bounds,
            constraints=[{"type": "ineq", "fun": lambda x: cons(x)[0], "jac": lambda x: cons(x)[1]}],
            options={"maxiter": 200, "ftol": 1e-12},
        )
        P, _ = unpack(res.x)
        tp = float(np.sum(np.abs(P) ** 2))
        if tp > self.power:
            P *= math.sqrt(self.power / tp)
        return P

    # driver
    def run(self, P0):
        opts, st = self.opts, self.struct
        P = P0 * st.column_mask[None, :]
        history = []
        n_iter = 0

        obj, shares, _, _ = self.evaluate(P)
        if obj is None:
            P, n_iter, ok = self._phase_one(P)
            if not ok:
                return P, "infeasible", n_iter, history
            obj, shares, _, _ = self.evaluate(P)
        history.append(obj)
        status = "max_iterations"
        while n_iter < opts.max_iterations:
            n_iter += 1
            sur = _Surrogate(self.samples, P)
            cand = self._dual_step(sur)
            if self.r0 > 0 and not self._surrogate_feasible(sur, cand):
                cand = self._slsqp_step(sur, P, shares)
            new_obj, new_shares, _, _ = self.evaluate(cand)
            if new_obj is None or new_obj < obj:
                status = "converged"
                break
            converged = new_obj - obj <= opts.tolerance * max(abs(new_obj), 1e-12)
            P, obj, shares = cand, new_obj, new_shares
            history.append(obj)
            if converged:
                status = "converged"
                break
        return P, status, n_iter, history

    def _phase_one(self, P):
        """Push the minimum user rate above the QoS target, if possible."""
        value = self.maxmin(P)
        for it in range(1, self.opts.max_iterations + 1):
            rc, rp = _saa_rates(self.samples, P)
            shares = _maxmin_shares(rc, rp, self.struct)
            cand = self._slsqp_step(_Surrogate(self.samples, P), P, shares, phase_one=True)
            new_value = self.maxmin(cand)
            if new_value <= value:
                return P, it, False
            gain = new_value - value
            P, value = cand, new_value
            if self.evaluate(P)[0] is not None:
                return P, it, True
            if gain <= self.opts.tolerance * abs(value):
                return P, it, False
        return P, self.opts.max_iterations, False


def _maxmin_shares(rc, rp, struct):
    priv = np.where(struct.column_mask[1:], rp, 0.0)
    t = max(float(min(rc)), 0.0) if struct.has_common else 0.0
    shares = np.zeros(2)
    allowed = [k for k in range(2) if struct.shares[k]]
    if len(allowed) == 2:
        lo = int(np.argmin(priv))
        give = min(t, abs(priv[1] - priv[0]))
        shares[lo] = give + (t - give) / 2.0
        shares[1 - lo] = (t - give) / 2.0
    elif len(allowed) == 1:
        shares[allowed[0]] = t
    return shares


# --------------------------------------------------------------------------
# initialization and public optimizers


def initial_precoder(estimate, power, struct, common_share=0.1):
    """Warm start: common along the dominant left singular vector of the
    estimate, private streams matched to their users, equal power split."""
    H = check_channel(estimate, n_users=2)
    n_t = H.shape[0]
    P = np.zeros((n_t, 3), dtype=np.complex128)
    n_priv = sum(struct.active[1:])
    priv_share = 1.0 - common_share if struct.has_common else 1.0
    if struct.has_common:
        u, _, _ = np.linalg.svd(H)
        P[:, 0] = u[:, 0] * math.sqrt(common_share * power if n_priv else power)
    for k in range(2):
        if struct.active[1 + k]:
            h = H[:, k]
            P[:, 1 + k] = h / np.linalg.norm(h) * math.sqrt(priv_share * power / n_priv)
    return P


def single_user_starts(estimate, power, struct, leak=0.02):
    """Starts favouring one user: its private beam matched at (nearly) full
    power, other streams silent or at a ``leak`` share.  Equal-power starts
    rarely reach the single-user optima that win under imperfect CSIT."""
    H = check_channel(estimate, n_users=2)
    starts = []
    for k in range(2):
        if not struct.active[1 + k]:
            continue
        h = H[:, k]
        beam = h / np.linalg.norm(h)
        pure = np.zeros((H.shape[0], 3), dtype=np.complex128)
        pure[:, 1 + k] = beam * math.sqrt(power)
        starts.append(pure)
        others = [i for i in range(3) if struct.active[i] and i != 1 + k]
        if others:
            mixed = initial_precoder(H, power, struct)
            for i in others:
                mixed[:, i] *= math.sqrt(leak * power) / max(np.linalg.norm(mixed[:, i]), 1e-300)
            mixed[:, 1 + k] = beam * math.sqrt((1.0 - leak * len(others)) * power)
            starts.append(mixed)
    return starts


def _activate(P, estimate, power, struct, share=0.05):
    """Give every silent active stream a small power share so AO can grow it."""
    P = P * struct.column_mask[None, :]
    silent = [i for i in range(3) if struct.active[i] and np.linalg.norm(P[:, i]) < 1e-9 * math.sqrt(power)]
    if not silent:
        return P
    P = P * math.sqrt(1.0 - share * len(silent))
    fresh = initial_precoder(estimate, power, struct)
    for i in silent:
        d = fresh[:, i] / np.linalg.norm(fresh[:, i])
        P[:, i] = d * math.sqrt(share * power)
    return P


def _finish(scheme, solver, P, status, n_iter, history, weak_user=None):
    obj, shares, rc, rp = solver.evaluate(P)
    if obj is None:
        status = "infeasible"
        shares = np.zeros(2)
    rp = np.where(solver.struct.column_mask[1:], rp, 0.0)
    if not solver.struct.has_common:
        rc = np.zeros(2)
    rates = RateAllocation(
        float(rc[0] / LN2), float(rc[1] / LN2), float(rp[0] / LN2), float(rp[1] / LN2),
        float(shares[0] / LN2), float(shares[1] / LN2),
    )
    return PrecoderSolution(
        scheme=scheme,
        precoder=PrecoderMatrix(P),
        rates=rates,
        status=status,
        n_iter=n_iter,
        objective_history=[h / LN2 for h in history],
        weak_user=weak_user,
    )


def _optimize(scheme, estimate, model, opts, samples=None, weak_user=None, starts=None):
    H = check_channel(estimate, n_users=2)
    if samples is None:
        samples = _build_samples(H, model, opts)
    struct = _Structure.of(scheme, weak_user)
    solver = _AlternatingSolver(samples, model.power, struct, opts)
    if starts is None:
        starts = [initial_precoder(H, model.power, struct)] + single_user_starts(H, model.power, struct)
    best = None
    for P0 in starts:
        P, status, n_iter, history = solver.run(P0)
        sol = _finish(scheme, solver, P, status, n_iter, history, weak_user)
        if best is None or _better(sol, best):
            best = sol
    return best


def _better(a, b):
    if a.feasible != b.feasible:
        return a.feasible
    return a.rates.sum_rate > b.rates.sum_rate + 1e-12


def optimize_sdma(estimate, model, opts, samples=None):
    """SDMA precoders: no common stream, interference treated as noise."""
    return _optimize("sdma", estimate, model, opts, samples)


def weak_user_candidates(estimate, margin_db=1.0):
    """Weak user by smaller estimated channel norm; both users when the
    norms are within ``margin_db``."""
    H = check_channel(estimate, n_users=2)
    norms = np.linalg.norm(H, axis=0)
    weak = int(np.argmin(norms))
    gap_db = 20.0 * math.log10(max(norms.max(), 1e-300) / max(norms.min(), 1e-300))
    return [weak, 1 - weak] if gap_db < margin_db else [weak]


def optimize_noma(estimate, model, opts, samples=None, weak_user=None):
    """NOMA precoders: the weak user's message rides on the common stream."""
    H = check_channel(estimate, n_users=2)
    if samples is None:
        samples = _build_samples(H, model, opts)
    candidates = [weak_user] if weak_user is not None else weak_user_candidates(H)
    best = None
    for w in candidates:
        sol = _optimize("noma", H, model, opts, samples, weak_user=w)
        if best is None or _better(sol, best):
            best = sol
    return best


def _as_rsma_candidate(sol, solver):
    """Re-score a baseline solution as an RSMA point (its precoder is feasible)."""
    return _finish("rsma", solver, sol.precoder.P, sol.status, sol.n_iter, list(np.array(sol.objective_history) * LN2))


def optimize_rsma(estimate, model, opts, samples=None, baselines=None):
    """RSMA precoders and common-rate split maximizing the average sum rate.

    The search starts from the default warm start and from the best of the
    SDMA/NOMA solutions on the same sample set; since both are restrictions
    of RSMA, the returned objective is never below either baseline.
    ``baselines`` may carry precomputed SDMA/NOMA solutions for these samples.
    """
    H = check_channel(estimate, n_users=2)
    if samples is None:
        samples = _build_samples(H, model, opts)
    if baselines is None:
        baselines = [optimize_sdma(H, model, opts, samples), optimize_noma(H, model, opts, samples)]
    struct = _Structure.of("rsma")
    solver = _AlternatingSolver(samples, model.power, struct, opts)

    starts = [initial_precoder(H, model.power, struct)]
    feasible = [b for b in baselines if b.feasible]
    if feasible:
        top = max(feasible, key=lambda s: s.rates.sum_rate)
        starts.append(_activate(top.precoder.P, H, model.power, struct))
    best = _optimize("rsma", H, model, opts, samples, starts=starts)
    for b in feasible:
        cand = _as_rsma_candidate(b, solver)
        if _better(cand, best):
            best = cand
    return best


def optimize(scheme, estimate, model, opts, samples=None, **kwargs):
    if scheme == "rsma":
        return optimize_rsma(estimate, model, opts, samples, **kwargs)
    if scheme == "sdma":
        return optimize_sdma(estimate, model, opts, samples)
    if scheme == "noma":
        return optimize_noma(estimate, model, opts, samples, **kwargs)
    raise ValueError(f"unknown scheme {scheme!r}; valid schemes are {', '.join(SCHEMES)}")


def ergodic_sum_rate(scheme, model, n_estimates, opts, rng, n_t=2):
    """Mean optimized average sum rate over fresh channel estimates (bps/Hz).

    Infeasible instances contribute zero.
    """
    n_estimates = check_count(n_estimates, "n_estimates")
    rng = check_random_state(rng)
    total = 0.0
    for _ in range(n_estimates):
        H = sample_estimate(n_t, 2, rng)
        sub = replace(opts, random_state=np.random.default_rng(rng.integers(2**63)))
        total += optimize(scheme, H, model, sub).objective
    return total / n_estimates


# --------------------------------------------------------------------------
# estimator interface


class RateSplittingPrecoder(BaseEstimator, TransformerMixin):
    """Average-sum-rate precoder design as a scikit-learn style estimator.

    Parameters
    ----------
    scheme : {"rsma", "sdma", "noma"}, default "rsma"
    snr_db : float, default 20.0
        Transmit SNR; total power is ``10 ** (snr_db / 10)`` with unit noise.
    alpha : float, default 0.6
        CSIT quality exponent; ``numpy.inf`` means perfect CSIT.
    saa_samples : int, default 1000
    qos_rate : float, default 0.0
        Minimum rate per user (bps/Hz).
    max_iter : int, default 200
    tol : float, default 1e-4
    random_state : int, Generator or None

    Attributes
    ----------
    solution_ : PrecoderSolution
    precoder_ : ndarray of shape (n_t, 3)
    rates_ : RateAllocation
    status_ : str
    n_iter_ : int
    """

    def __init__(self, scheme="rsma", snr_db=20.0, alpha=0.6, saa_samples=1000,
                 qos_rate=0.0, max_iter=200, tol=1e-4, random_state=None):
        self.scheme = scheme
        self.snr_db = snr_db
        self.alpha = alpha
        self.saa_samples = saa_samples
        self.qos_rate = qos_rate
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _model(self):
        return CsitModel.from_snr_db(self.snr_db, self.alpha)

    def _opts(self):
        return SolverOptions(
            saa_samples=self.saa_samples, max_iterations=self.max_iter, tolerance=self.tol,
            qos_rate=self.qos_rate, random_state=self.random_state,
        )

    def fit(self, X, y=None):
        """Optimize the precoders for channel estimate ``X`` of shape (n_t, 2)."""
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; valid schemes are {', '.join(SCHEMES)}")
        H = check_channel(X, n_users=2)
        sol = optimize(self.scheme, H, self._model(), self._opts())
        self.solution_ = sol
        self.precoder_ = sol.precoder.P
        self.rates_ = sol.rates
        self.status_ = sol.status
        self.n_iter_ = sol.n_iter
        return self

    def transform(self, X):
        """Precode stream symbols ``X`` of shape (3, S) into antenna signals (n_t, S)."""
        check_is_fitted(self, "precoder_")
        S = np.asarray(X)
        if S.ndim != 2 or S.shape[0] != 3:
            raise ValueError(f"stream symbols must have shape (3, S), got {S.shape}")
        return self.precoder_ @ S

    def score(self, X=None, y=None):
        """Average sum rate of the fitted solution (bps/Hz)."""
        check_is_fitted(self, "solution_")
        return self.solution_.objective
