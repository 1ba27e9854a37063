import numpy as np
import pytest
from hypothesis import given, strategies as st

from rsmalink.channel import (
    CsitModel, combine, error_variance, sample_estimate, sample_realizations, substream,
)


def test_error_variance_follows_power_law():
    assert error_variance(100.0, 0.6) == pytest.approx(100.0 ** -0.6)
    assert error_variance(10.0, 0.0) == 1.0
    assert error_variance(10.0, np.inf) == 0.0


def test_model_from_snr():
    m = CsitModel.from_snr_db(20.0, 0.6)
    assert m.power == pytest.approx(100.0)
    assert m.sigma_e2 == pytest.approx(10 ** -1.2)


def test_invalid_inputs_raise():
    with pytest.raises(ValueError):
        error_variance(0.0, 0.6)
    with pytest.raises(ValueError):
        error_variance(10.0, -1.0)
    with pytest.raises(ValueError):
        sample_estimate(2, 0, 0)


def test_estimate_statistics(rng):
    H = sample_estimate(2, 2, rng)
    assert H.shape == (2, 2) and H.dtype == np.complex128
    big = sample_estimate(200, 500, rng)
    assert np.mean(np.abs(big) ** 2) == pytest.approx(1.0, abs=0.02)
    assert abs(np.mean(big)) < 0.02


@given(st.floats(0.0, 40.0), st.floats(0.0, 2.0), st.integers(0, 2**32 - 1))
def test_realizations_satisfy_mixing_identity(snr_db, alpha, seed):
    rng = np.random.default_rng(seed)
    model = CsitModel.from_snr_db(snr_db, alpha)
    H_hat = sample_estimate(2, 2, rng)
    for cs in sample_realizations(H_hat, model, 5, rng):
        assert cs.residual() < 1e-12


def test_true_channel_has_unit_variance(rng):
    model = CsitModel.from_snr_db(5.0, 0.6)
    H_hat = sample_estimate(2, 20000, rng)
    E = sample_estimate(2, 20000, rng)
    H = combine(H_hat, E, model.sigma_e2)
    assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, abs=0.02)


def test_substreams_are_reproducible_and_distinct():
    a = substream(7, "noise", 3, 4).standard_normal(4)
    b = substream(7, "noise", 3, 4).standard_normal(4)
    c = substream(7, "noise", 3, 5).standard_normal(4)
    d = substream(7, "bits", 3, 4).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)
