"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    ``None`` gives a fresh OS-seeded generator, an int or a
    :class:`numpy.random.SeedSequence` gives a seeded one, and an existing
    generator is returned untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value}")
    return value


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_channel(H, n_users=None):
    """Validate a channel matrix of shape ``(n_t, n_users)``.

    Returns a complex128 copy-free view when possible.
    """
    H = np.asarray(H)
    if H.ndim != 2:
        raise ValueError(f"channel matrix must be 2-D (n_t, n_users), got shape {H.shape}")
    if n_users is not None and H.shape[1] != n_users:
        raise ValueError(f"expected {n_users} user columns, got {H.shape[1]}")
    H = H.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(H)):
        raise ValueError("channel matrix contains non-finite entries")
    return H


def check_bits(bits, length=None, name="bits"):
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {bits.shape}")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError(f"{name} must contain only 0/1 values")
    if length is not None and bits.size != length:
        raise ValueError(f"{name} has length {bits.size}, expected {length}")
    return bits.astype(np.uint8, copy=False)


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0
