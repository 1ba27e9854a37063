"""Block-fading MISO broadcast channel with imperfect CSIT.

The transmitter sees an estimate ``H_hat`` with i.i.d. CN(0, 1) entries; the
true channel is ``sqrt(1 - s2) * H_hat + sqrt(s2) * H_err`` where the error
variance is ``s2 = P ** -alpha``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_channel, check_count, check_positive, check_random_state

# Substream identifiers for SeedSequence spawn keys.
STREAM_IDS = {
    "estimate": 0,
    "error": 1,
    "saa": 2,
    "noise": 3,
    "bits": 4,
    "interleaver": 5,
}


def error_variance(power, alpha):
    """CSIT error variance ``power ** -alpha``; ``alpha = inf`` means perfect CSIT."""
    power = check_positive(power, "power")
    alpha = float(alpha)
    if alpha == np.inf:
        return 0.0
    alpha = check_positive(alpha, "alpha", strict=False)
    return power ** (-alpha)


@dataclass(frozen=True)
class CsitModel:
    """Imperfect-CSIT model at total transmit power ``power`` (linear)."""

    alpha: float
    power: float
    sigma_e2: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "sigma_e2", error_variance(self.power, self.alpha))

    @classmethod
    def from_snr_db(cls, snr_db, alpha):
        return cls(alpha=alpha, power=10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class ChannelSet:
    """One block: transmitter estimate, estimation error and true channel.

    Only ``estimate`` may be handed to the transmitter side; receivers use
    ``realization``.
    """

    estimate: np.ndarray
    error: np.ndarray
    realization: np.ndarray
    model: CsitModel

    def residual(self):
        s2 = self.model.sigma_e2
        rebuilt = np.sqrt(1.0 - s2) * self.estimate + np.sqrt(s2) * self.error
        return float(np.max(np.abs(self.realization - rebuilt)))


def complex_normal(shape, rng):
    """Circularly-symmetric CN(0, 1) samples."""
    rng = check_random_state(rng)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_estimate(n_t, n_users, rng):
    n_t = check_count(n_t, "n_t")
    n_users = check_count(n_users, "n_users")
    return complex_normal((n_t, n_users), rng)


def combine(estimate, error, sigma_e2):
    """Apply the estimate/error mixing rule elementwise (broadcasts over ``error``)."""
    return np.sqrt(1.0 - sigma_e2) * estimate + np.sqrt(sigma_e2) * error


def sample_realization_array(estimate, model, count, rng):
    """Draw ``count`` channel realizations consistent with ``estimate``.

    Returns ``(realizations, errors)`` with shape ``(count, n_t, n_users)``.
    This is the vectorized core behind :func:`sample_realizations` and the
    SAA sampler of the precoder.
    """
    estimate = check_channel(estimate)
    count = check_count(count, "count")
    errors = complex_normal((count,) + estimate.shape, rng)
    return combine(estimate[None], errors, model.sigma_e2), errors


def sample_realizations(estimate, model, count, rng):
    """List of :class:`ChannelSet` sharing ``estimate`` with fresh errors."""
    estimate = check_channel(estimate)
    realizations, errors = sample_realization_array(estimate, model, count, rng)
    return [
        ChannelSet(estimate=estimate, error=e, realization=h, model=model)
        for h, e in zip(realizations, errors)
    ]


def substream(seed, name, *key):
    """Independent generator for component ``name`` at position ``key``.

    Every (seed, name, key) triple maps to its own SeedSequence so channel,
    noise and data bits can be regenerated in isolation.
    """
    key = tuple(int(k) for k in key)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_IDS[name],) + key)
    return np.random.default_rng(ss)
