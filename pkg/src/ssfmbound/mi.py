"""Achievable-rate floor from a memoryless Gaussian auxiliary channel.

For i.i.d. proper Gaussian input of power ``P`` and any channel, fitting
``y = h x + w`` with the linear-MMSE gain ``h`` and treating ``w`` as
Gaussian noise of the fitted variance gives
``I(x; y) >= log2(1 + |h|**2 P / var(w))`` per sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import PropagationSpecs, propagate
from .field import (
    ChannelParams,
    ConfigurationError,
    SimulationGrid,
    as_array,
    dft,
    generate_input,
    idft,
)

UNBOUNDED = math.inf


@dataclass(frozen=True)
class AuxiliaryChannelFit:
    gain: complex
    effective_noise_variance: float
    per_sample_rate: float  # bits per complex sample
    sample_count: int
    input_power: float
    rate_standard_error: float = 0.0

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.per_sample_rate)


def _rate(gain, var, power):
    if var <= 1e-24 * max(abs(gain) ** 2 * power, 1e-300):
        return UNBOUNDED
    return math.log2(1.0 + abs(gain) ** 2 * power / var)


def _fit_moments(x, y):
    px = float(np.mean(x.real**2 + x.imag**2))
    if px <= 0:
        raise ConfigurationError("input ensemble has zero power")
    h = complex(np.mean(y * x.conj()) / px)
    r = y - h * x
    var = float(np.mean(r.real**2 + r.imag**2))
    return h, var, px


def fit_auxiliary(x_ensemble, y_ensemble, batches: int = 20) -> AuxiliaryChannelFit:
    """Pooled scalar gain and residual variance from paired input/output ensembles.

    The rate standard error comes from ``batches`` disjoint groups of
    realizations.
    """
    x = np.atleast_2d(as_array(x_ensemble))
    y = np.atleast_2d(as_array(y_ensemble))
    if x.shape != y.shape:
        raise ConfigurationError(f"paired ensembles differ in shape: {x.shape} vs {y.shape}")
    h, var, px = _fit_moments(x, y)
    rate = _rate(h, var, px)
    se = 0.0
    m = x.shape[0]
    nb = min(batches, m)
    if nb >= 2 and math.isfinite(rate):
        parts = np.array_split(np.arange(m), nb)
        rates = []
        for idx in parts:
            hb, vb, pb = _fit_moments(x[idx], y[idx])
            rates.append(_rate(hb, vb, pb))
        rates = np.asarray(rates)
        if np.all(np.isfinite(rates)):
            se = float(rates.std(ddof=1) / math.sqrt(nb))
    return AuxiliaryChannelFit(h, var, rate, x.size, px, se)


def mi_lower_bound(fit: AuxiliaryChannelFit, P: Optional[float] = None) -> float:
    """``log2(1 + |h|**2 P / sigma_eff**2)`` bits per complex sample; ``UNBOUNDED`` if degenerate."""
    power = fit.input_power if P is None else P
    return _rate(fit.gain, fit.effective_noise_variance, power)


def dispersion_compensate(y, params: ChannelParams, grid: SimulationGrid, specs: PropagationSpecs):
    """Undo the cumulative all-pass response of ``K`` steps (nonlinearity is left alone).

    A fixed unitary map of the output, so it cannot raise the true mutual
    information; it only removes inter-sample mixing the scalar fit cannot see.
    """
    frac = 0.5 if specs.symmetric else 1.0
    h = specs.linear.response(params, grid, frac)
    steps = grid.num_steps * (2 if specs.symmetric else 1)
    # unit-modulus responses: raising the phase avoids accumulating roundoff
    total = np.exp(-1j * steps * np.angle(h)) if specs.linear.is_all_pass else np.conj(h) ** steps
    return idft(dft(as_array(y)) * total)


@dataclass(frozen=True)
class MIEstimate:
    fit: AuxiliaryChannelFit
    per_sample_bits: float
    standard_error: float
    snr: float


def estimate_mi(
    params: ChannelParams,
    grid: SimulationGrid,
    specs: PropagationSpecs,
    E0: float,
    M: int,
    seed: int = 0,
    compensate: bool = True,
    workers: int = 1,
) -> MIEstimate:
    """Propagate ``M`` i.i.d. Gaussian blocks of energy ``E0`` and fit the auxiliary channel."""
    x = generate_input("iid-gaussian", E0, grid, seed=seed, realizations=M)
    rec = propagate(x, params, grid, specs, seed=seed, workers=workers)
    y = as_array(rec.output)
    if compensate:
        y = dispersion_compensate(y, params, grid, specs)
    fit = fit_auxiliary(x, y)
    noise = params.total_noise_energy(grid)
    s = E0 / noise if noise > 0 else UNBOUNDED
    return MIEstimate(fit, mi_lower_bound(fit, E0 / grid.num_samples), fit.rate_standard_error, s)
