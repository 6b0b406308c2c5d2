"""Capacity bound, bandwidth measurement and spectral-efficiency normalizations."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .field import ChannelParams, ConfigurationError, SimulationGrid, as_array, dft

UNBOUNDED = math.inf


class MissingTrajectoryError(ValueError):
    """Raised when the maximal bandwidth is requested without per-position spectra."""


def snr(E0: float, params: ChannelParams, grid: SimulationGrid) -> float:
    """``E0 / (N_ASE B_n T)``; infinite for a noiseless channel with ``E0 > 0``."""
    noise = params.total_noise_energy(grid)
    if noise <= 0:
        return UNBOUNDED if E0 > 0 else 0.0
    return E0 / noise


def capacity_bound(E0: float, params: ChannelParams, grid: SimulationGrid) -> float:
    """Upper bound ``L log2(1 + E0 / (N_ASE B_n T))`` in bits per block.

    Returns ``UNBOUNDED`` (``math.inf``) when there is no noise.
    """
    if E0 < 0:
        raise ConfigurationError(f"E0 must be >= 0, got {E0}")
    if params.total_noise_energy(grid) <= 0:
        return UNBOUNDED
    return grid.num_samples * math.log2(1.0 + snr(E0, params, grid))


def bound_rate(E0: float, params: ChannelParams, grid: SimulationGrid) -> float:
    """Capacity bound per second, ``B log2(1 + SNR)``."""
    return capacity_bound(E0, params, grid) / grid.total_time


def mean_periodogram(e) -> np.ndarray:
    """Ensemble-averaged ``|dft(x)|**2`` per bin."""
    x = as_array(e)
    spec = dft(x)
    p = spec.real**2 + spec.imag**2
    return p.reshape(-1, p.shape[-1]).mean(axis=0)


def bandwidth_bins(periodogram, epsilon: float = 1e-3) -> int:
    """Bins in the narrowest contiguous band holding ``1 - epsilon`` of the power.

    The band starts at the bin nearest the circular spectral centroid and
    grows one bin at a time toward whichever neighbour carries more power
    (ties go to the higher-frequency side), wrapping around the DFT circle.
    """
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    p = np.asarray(periodogram, dtype=float)
    L = p.size
    total = p.sum()
    if total <= 0:
        return 0
    target = (1.0 - epsilon) * total
    phasor = np.sum(p * np.exp(2j * np.pi * np.arange(L) / L))
    if abs(phasor) <= 1e-12 * total:
        center = int(np.argmax(p))
    else:
        center = int(round(np.angle(phasor) * L / (2 * np.pi))) % L
    lo = hi = center
    acc = p[center]
    width = 1
    # tolerate roundoff when the target equals the total
    while acc < target * (1 - 1e-12) and width < L:
        right, left = p[(hi + 1) % L], p[(lo - 1) % L]
        if right >= left:
            hi += 1
            acc += right
        else:
            lo -= 1
            acc += left
        width += 1
    return width


def measure_bandwidth(e, grid: SimulationGrid, epsilon: float = 1e-3) -> float:
    """Power-containment bandwidth ``W`` in Hz of an ensemble (or periodogram)."""
    p = np.asarray(e) if _is_periodogram(e) else mean_periodogram(e)
    return bandwidth_bins(p, epsilon) * grid.sim_bandwidth / grid.num_samples


def _is_periodogram(e) -> bool:
    return isinstance(e, np.ndarray) and e.ndim == 1 and np.isrealobj(e)


@dataclass(frozen=True)
class CapacityReport:
    snr: float
    bound_bits_total: float
    bound_rate: float
    bandwidth_profile: list
    max_bandwidth: float
    input_bandwidth: float
    sim_bandwidth: float
    spectral_efficiency: dict = field(default_factory=dict)
    recommended: str = "max-bandwidth"
    epsilon: float = 1e-3

    def check(self) -> list:
        """Names of violated report invariants (empty when consistent)."""
        bad = []
        L_bits = self.bound_bits_total
        if not (L_bits >= 0):
            bad.append("bound_bits_total >= 0")
        if self.max_bandwidth < self.input_bandwidth:
            bad.append("W >= W(z0)")
        if self.max_bandwidth > self.sim_bandwidth * (1 + 1e-12):
            bad.append("W <= B")
        se_w = self.spectral_efficiency.get("max-bandwidth")
        se_w0 = self.spectral_efficiency.get("input-bandwidth")
        if se_w is not None and se_w0 is not None and se_w > se_w0:
            bad.append("SE_W <= SE_W0")
        return bad

    def as_dict(self) -> dict:
        return asdict(self)


def _se(B, width, per_sample):
    if width <= 0:
        return UNBOUNDED
    return B / width * per_sample


def spectral_efficiency_report(
    spectra,
    E0: float,
    params: ChannelParams,
    grid: SimulationGrid,
    epsilon: float = 1e-3,
    require_max: bool = True,
) -> CapacityReport:
    """Bound and spectral efficiency under the B, W and W(z0) normalizations.

    Parameters
    ----------
    spectra : PropagationRecord or sequence
        A record with ``periodograms`` or ``trajectory``, or a sequence of
        per-position periodograms / ensembles ordered by position. With only
        the endpoints available the maximal bandwidth cannot be formed.
    """
    pgrams = _spectra(spectra, require_max)
    profile = [measure_bandwidth(p, grid, epsilon) for p in pgrams]
    B = grid.sim_bandwidth
    s = snr(E0, params, grid)
    per_sample = math.log2(1.0 + s) if math.isfinite(s) else UNBOUNDED
    W = max(profile)
    W0 = profile[0]
    return CapacityReport(
        snr=s,
        bound_bits_total=capacity_bound(E0, params, grid),
        bound_rate=bound_rate(E0, params, grid),
        bandwidth_profile=profile,
        max_bandwidth=W,
        input_bandwidth=W0,
        sim_bandwidth=B,
        spectral_efficiency={
            "sim-bandwidth": _se(B, B, per_sample),
            "max-bandwidth": _se(B, W, per_sample),
            "input-bandwidth": _se(B, W0, per_sample),
        },
        epsilon=epsilon,
    )


def _spectra(spectra, require_max) -> list:
    pg = getattr(spectra, "periodograms", None)
    if pg is not None:
        return [np.asarray(p) for p in pg]
    traj = getattr(spectra, "trajectory", None)
    if traj is not None:
        return [mean_periodogram(f) for f in traj]
    if hasattr(spectra, "output"):
        if require_max:
            raise MissingTrajectoryError(
                "max-bandwidth normalization needs every position: rerun with "
                "retain_trajectory=True or track_spectrum=True"
            )
        return [mean_periodogram(spectra.input), mean_periodogram(spectra.output)]
    items: Sequence = list(spectra)
    if not items:
        raise ConfigurationError("no spectra given")
    return [np.asarray(p) if _is_periodogram(p) else mean_periodogram(p) for p in items]
