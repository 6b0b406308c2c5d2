import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssfmbound.capacity import (
    UNBOUNDED,
    CapacityReport,
    MissingTrajectoryError,
    bandwidth_bins,
    bound_rate,
    capacity_bound,
    measure_bandwidth,
    snr,
    spectral_efficiency_report,
)
from ssfmbound.engine import propagate
from ssfmbound.field import ChannelParams, ConfigurationError, SimulationGrid, dft, generate_input, idft

GRID = SimulationGrid(delta_z=0.1, delta_t=0.5, num_steps=10, num_samples=64)
PARAMS = ChannelParams(beta2=1.0, gamma=0.0, n_ase=2.0, b_n=1.0)
NOISE = PARAMS.total_noise_energy(GRID)


@pytest.mark.parametrize("ratio,bits", [(0.0, 0.0), (1.0, 64.0), (15.0, 256.0), (3.0, 128.0)])
def test_capacity_bound_examples(ratio, bits):
    assert capacity_bound(ratio * NOISE, PARAMS, GRID) == pytest.approx(bits, abs=1e-12)


def test_noiseless_bound_is_unbounded():
    p = ChannelParams(n_ase=0.0)
    assert capacity_bound(1.0, p, GRID) is UNBOUNDED
    assert snr(1.0, p, GRID) == math.inf
    assert snr(0.0, p, GRID) == 0.0


def test_negative_energy_rejected():
    with pytest.raises(ConfigurationError):
        capacity_bound(-1.0, PARAMS, GRID)


def test_bound_rate_is_bits_per_second():
    E0 = 7 * NOISE
    assert bound_rate(E0, PARAMS, GRID) == pytest.approx(GRID.sim_bandwidth * 3.0)


def test_bound_concave_nondecreasing():
    e = np.linspace(0, 40 * NOISE, 200)
    c = np.array([capacity_bound(x, PARAMS, GRID) for x in e])
    d1 = np.diff(c)
    d2 = np.diff(c, 2)
    assert np.all(d1 > 0)
    assert np.all(d2 <= 1e-12)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 1e6), b=st.floats(0, 1e6))
def test_bound_monotone(a, b):
    lo, hi = sorted((a, b))
    assert capacity_bound(lo, PARAMS, GRID) <= capacity_bound(hi, PARAMS, GRID)


# -- bandwidth ----------------------------------------------------------------

@pytest.mark.parametrize("eps", [1e-6, 1e-3, 0.5, 0.99])
def test_single_tone_is_one_bin(eps):
    f = generate_input("single-tone", 1.0, GRID, tone_bin=3)
    assert measure_bandwidth(f.samples[None], GRID, eps) == pytest.approx(GRID.sim_bandwidth / 64)


def test_white_ensemble_containment():
    e = generate_input("iid-gaussian", 1.0, GRID, seed=3, realizations=20_000)
    w = measure_bandwidth(e, GRID, 0.1)
    bin_hz = GRID.sim_bandwidth / GRID.num_samples
    assert abs(w - 0.9 * GRID.sim_bandwidth) <= 2 * bin_hz


def test_band_limited_quarter():
    L = GRID.num_samples
    e = generate_input("bandlimited-gaussian", 1.0, GRID, seed=1, realizations=2000, band=(0, L // 4 - 1))
    assert measure_bandwidth(e, GRID, 1e-3) == pytest.approx(GRID.sim_bandwidth / 4)


def test_band_wrapping_around_dc():
    L = 16
    p = np.zeros(L)
    p[[14, 15, 0, 1, 2]] = 1.0
    assert bandwidth_bins(p, 1e-3) == 5


def test_zero_ensemble_has_zero_bandwidth():
    assert measure_bandwidth(np.zeros((4, 64), dtype=complex), GRID) == 0.0


def test_bandwidth_monotone_in_epsilon():
    rng = np.random.default_rng(0)
    p = rng.random(64) ** 4
    widths = [bandwidth_bins(p, eps) for eps in (0.5, 0.1, 1e-2, 1e-3, 1e-6)]
    assert widths == sorted(widths)


def test_bandwidth_epsilon_range():
    with pytest.raises(ConfigurationError):
        bandwidth_bins(np.ones(4), 0.0)
    with pytest.raises(ConfigurationError):
        bandwidth_bins(np.ones(4), 1.0)


def test_linear_channel_keeps_bandwidth():
    L = GRID.num_samples
    p = ChannelParams(beta2=-5.0, gamma=0.0, n_ase=1e-6)
    e = generate_input("bandlimited-gaussian", 1.0, GRID, seed=2, realizations=4000, band=(0, L // 8))
    rec = propagate(e, p, GRID, seed=4, track_spectrum=True)
    w_in = bandwidth_bins(rec.periodograms[0])
    w_out = bandwidth_bins(rec.periodograms[-1])
    assert abs(w_out - w_in) <= 1


# -- report -------------------------------------------------------------------

def _flat(L):
    return np.ones(L)


def _band(L, width):
    p = np.zeros(L)
    p[:width] = 1.0
    return p


def test_report_full_band_equals_log():
    E0 = 3 * NOISE
    r = spectral_efficiency_report([_flat(64), _flat(64)], E0, PARAMS, GRID)
    assert r.spectral_efficiency["sim-bandwidth"] == pytest.approx(2.0)
    assert r.spectral_efficiency["max-bandwidth"] == pytest.approx(2.0)
    assert r.recommended == "max-bandwidth"
    assert r.check() == []


def test_report_arithmetic_example():
    r = spectral_efficiency_report([_band(64, 16), _band(64, 32), _band(64, 8)], NOISE, PARAMS, GRID)
    assert r.max_bandwidth == pytest.approx(GRID.sim_bandwidth / 2)
    assert r.input_bandwidth == pytest.approx(GRID.sim_bandwidth / 4)
    se = r.spectral_efficiency
    assert (se["sim-bandwidth"], se["max-bandwidth"], se["input-bandwidth"]) == pytest.approx((1, 2, 4))
    assert r.bound_bits_total == pytest.approx(64.0)
    assert r.check() == []


def test_report_needs_trajectory():
    e = generate_input("iid-gaussian", 1.0, GRID, seed=0, realizations=10)
    rec = propagate(e, PARAMS, GRID, seed=1)
    with pytest.raises(MissingTrajectoryError, match="retain_trajectory"):
        spectral_efficiency_report(rec, 1.0, PARAMS, GRID)
    r = spectral_efficiency_report(rec, 1.0, PARAMS, GRID, require_max=False)
    assert len(r.bandwidth_profile) == 2


def test_report_from_trajectory_matches_spectra():
    e = generate_input("iid-gaussian", 1.0, GRID, seed=0, realizations=50)
    a = propagate(e, PARAMS, GRID, seed=1, retain_trajectory=True)
    b = propagate(e, PARAMS, GRID, seed=1, track_spectrum=True)
    ra = spectral_efficiency_report(a, 1.0, PARAMS, GRID)
    rb = spectral_efficiency_report(b, 1.0, PARAMS, GRID)
    assert ra.bandwidth_profile == rb.bandwidth_profile


def test_report_check_flags_violations():
    r = CapacityReport(
        snr=1.0, bound_bits_total=64.0, bound_rate=1.0, bandwidth_profile=[1.0, 0.5],
        max_bandwidth=0.5, input_bandwidth=1.0, sim_bandwidth=0.4,
        spectral_efficiency={"max-bandwidth": 5.0, "input-bandwidth": 1.0},
    )
    assert set(r.check()) == {"W >= W(z0)", "W <= B", "SE_W <= SE_W0"}


def test_nonlinear_broadening_narrowband_input():
    L = GRID.num_samples
    p = ChannelParams(beta2=0.5, gamma=8.0, n_ase=1e-4)
    e = generate_input("bandlimited-gaussian", 4.0, GRID, seed=5, realizations=500, band=(0, L // 8))
    rec = propagate(e, p, GRID, seed=6, track_spectrum=True)
    r = spectral_efficiency_report(rec, 4.0, p, GRID)
    assert r.bandwidth_profile[-1] > r.bandwidth_profile[0]
    se = r.spectral_efficiency
    assert se["max-bandwidth"] < se["input-bandwidth"]
    assert r.check() == []


def test_periodogram_parseval_consistency():
    x = generate_input("iid-gaussian", 2.0, GRID, seed=9, realizations=100).samples
    assert np.allclose(idft(dft(x)), x)
