import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssfmbound.capacity import capacity_bound
from ssfmbound.engine import PropagationSpecs, propagate
from ssfmbound.field import ChannelParams, ConfigurationError, SimulationGrid, generate_input, proper_gaussian
from ssfmbound.mi import (
    AuxiliaryChannelFit,
    dispersion_compensate,
    estimate_mi,
    fit_auxiliary,
    mi_lower_bound,
)

M, L = 20_000, 8


def gaussian(seed, var=1.0, shape=(M, L)):
    return proper_gaussian(np.random.default_rng(seed), shape, var)


def test_identity_channel_is_degenerate():
    x = gaussian(0)
    fit = fit_auxiliary(x, x)
    assert fit.gain == pytest.approx(1, abs=1e-15)
    assert fit.effective_noise_variance < 1e-30
    assert fit.degenerate
    assert mi_lower_bound(fit) == math.inf


def test_additive_noise_concentration():
    s2 = 0.3
    x = gaussian(1)
    n = gaussian(2, s2)
    fit = fit_auxiliary(x, x + n)
    band = 5 / math.sqrt(M * L)
    assert abs(fit.gain - 1) < band
    assert abs(fit.effective_noise_variance - s2) < band * s2 * 5
    assert fit.sample_count == M * L
    assert fit.rate_standard_error > 0


def test_exact_linear_fit():
    x = gaussian(3)
    fit = fit_auxiliary(x, 2j * x)
    assert fit.gain == pytest.approx(2j, abs=1e-14)
    assert fit.effective_noise_variance < 1e-25


def test_rate_examples():
    assert mi_lower_bound(AuxiliaryChannelFit(1.0, 1.0, 1.0, 1, 1.0)) == pytest.approx(1.0)
    assert mi_lower_bound(AuxiliaryChannelFit(0.0, 1.0, 0.0, 1, 1.0)) == 0.0
    assert mi_lower_bound(AuxiliaryChannelFit(1.0, 1.0, 1.0, 1, 1.0), P=3.0) == pytest.approx(2.0)


def test_independent_output_gives_near_zero():
    fit = fit_auxiliary(gaussian(4), gaussian(5))
    assert fit.per_sample_rate < 1e-3


def test_fit_errors():
    with pytest.raises(ConfigurationError):
        fit_auxiliary(np.zeros((10, 2)), np.ones((10, 2)))
    with pytest.raises(ConfigurationError):
        fit_auxiliary(np.ones((10, 2)), np.ones((10, 3)))


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(-math.pi, math.pi), seed=st.integers(0, 1000))
def test_common_rotation_invariance(theta, seed):
    x = gaussian(seed, shape=(500, 4))
    y = 0.7 * x + gaussian(seed + 1, 0.5, (500, 4))
    u = complex(math.cos(theta), math.sin(theta))
    a = fit_auxiliary(x, y)
    b = fit_auxiliary(u * x, u * y)
    assert abs(b.gain) == pytest.approx(abs(a.gain), rel=1e-12)
    assert b.effective_noise_variance == pytest.approx(a.effective_noise_variance, rel=1e-12)


def test_dispersion_compensation_undoes_linear_channel():
    g = SimulationGrid(0.1, 0.1, 20, 16)
    p = ChannelParams(beta2=-3.0, beta3=0.2)
    for symmetric in (False, True):
        specs = PropagationSpecs(symmetric=symmetric)
        x = generate_input("iid-gaussian", 1.0, g, seed=1, realizations=5)
        y = propagate(x, p, g, specs).output.samples
        np.testing.assert_allclose(dispersion_compensate(y, p, g, specs), x.samples, atol=1e-12)


def test_linear_channel_reaches_log_snr():
    g = SimulationGrid(0.1, 0.1, 10, 16)
    p = ChannelParams(beta2=2.0, gamma=0.0, n_ase=1.0, b_n=1.0)
    E0 = 10 * p.total_noise_energy(g)
    est = estimate_mi(p, g, PropagationSpecs(), E0, 20_000, seed=3)
    assert est.snr == pytest.approx(10.0)
    assert est.per_sample_bits == pytest.approx(math.log2(11), rel=0.02)


def test_nonlinear_estimate_below_bound():
    g = SimulationGrid(0.1, 0.1, 10, 16)
    p = ChannelParams(beta2=2.0, gamma=3.0, n_ase=1.0, b_n=1.0)
    E0 = 10 * p.total_noise_energy(g)
    est = estimate_mi(p, g, PropagationSpecs(), E0, 5_000, seed=3)
    L = g.num_samples
    assert L * est.per_sample_bits <= capacity_bound(E0, p, g) + 3 * L * est.standard_error
