"""Discretization grid, channel parameters, sampled fields and the unitary DFT.

Energy follows the discrete-sum convention ``sum(|a|**2)`` (the trace of the
correlation matrix); multiply by ``delta_t`` for joules.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft

INPUT_KINDS = ("iid-gaussian", "single-tone", "sinc-pulse-train", "bandlimited-gaussian")

# Realizations per independent RNG stream. Fixed so that results never depend
# on how blocks are scheduled.
BLOCK_SIZE = 4096


class ConfigurationError(ValueError):
    """Raised for invalid grids, parameters or shapes."""


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform space/time grid.

    Parameters
    ----------
    delta_z : float
        Spatial step in meters.
    delta_t : float
        Temporal sample spacing in seconds.
    num_steps : int
        Number of space steps ``K``.
    num_samples : int
        Number of time samples ``L`` (even).
    """

    delta_z: float
    delta_t: float
    num_steps: int
    num_samples: int

    def __post_init__(self):
        if not (self.delta_z > 0 and np.isfinite(self.delta_z)):
            raise ConfigurationError(f"delta_z must be positive, got {self.delta_z}")
        if not (self.delta_t > 0 and np.isfinite(self.delta_t)):
            raise ConfigurationError(f"delta_t must be positive, got {self.delta_t}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ConfigurationError(f"num_steps must be an integer >= 1, got {self.num_steps}")
        if int(self.num_samples) != self.num_samples or self.num_samples < 2 or self.num_samples % 2:
            raise ConfigurationError(
                f"num_samples must be an even integer >= 2, got {self.num_samples}"
            )

    @property
    def total_time(self) -> float:
        return self.num_samples * self.delta_t

    @property
    def sim_bandwidth(self) -> float:
        return 1.0 / self.delta_t

    @property
    def total_length(self) -> float:
        return self.num_steps * self.delta_z

    @property
    def bin_frequencies(self) -> np.ndarray:
        """Signed DFT bin frequencies in Hz."""
        return scipy.fft.fftfreq(self.num_samples, self.delta_t)


def _profile(values, name, length=None):
    if values is None:
        return None
    arr = np.asarray(values, dtype=float).copy()
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional")
    if length is not None and arr.size != length:
        raise ConfigurationError(f"{name} has length {arr.size}, expected {length}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ChannelParams:
    """Physical constants of the channel.

    ``loss_profile`` holds per-DFT-bin amplitude factors in (0, 1] and
    ``noise_profile`` per-bin noise-variance multipliers; ``None`` means
    all ones.
    """

    beta2: float = 0.0
    gamma: float = 0.0
    n_ase: float = 0.0
    b_n: float = 1.0
    beta3: float = 0.0
    loss_profile: Optional[np.ndarray] = field(default=None, compare=False)
    noise_profile: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("beta2", "beta3", "gamma"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if not (self.n_ase >= 0 and np.isfinite(self.n_ase)):
            raise ConfigurationError(f"n_ase must be >= 0, got {self.n_ase}")
        if not (self.b_n > 0 and np.isfinite(self.b_n)):
            raise ConfigurationError(f"b_n must be > 0, got {self.b_n}")
        loss = _profile(self.loss_profile, "loss_profile")
        if loss is not None and not np.all((loss > 0) & (loss <= 1)):
            raise ConfigurationError("loss_profile entries must lie in (0, 1]")
        noise = _profile(self.noise_profile, "noise_profile")
        if noise is not None and not np.all(noise >= 0):
            raise ConfigurationError("noise_profile entries must be >= 0")
        object.__setattr__(self, "loss_profile", loss)
        object.__setattr__(self, "noise_profile", noise)

    def check_grid(self, grid: SimulationGrid) -> None:
        for name in ("loss_profile", "noise_profile"):
            prof = getattr(self, name)
            if prof is not None and prof.size != grid.num_samples:
                raise ConfigurationError(
                    f"{name} has length {prof.size}, grid has L={grid.num_samples}"
                )

    @property
    def has_loss(self) -> bool:
        return self.loss_profile is not None and not np.all(self.loss_profile == 1.0)

    def step_noise_variance(self, grid: SimulationGrid) -> float:
        """Per-sample complex noise variance added in one space step."""
        return self.n_ase * self.b_n / grid.total_length * grid.delta_z * grid.delta_t

    def total_noise_energy(self, grid: SimulationGrid) -> float:
        """``N_ASE * B_n * T``: expected noise energy accumulated over the link."""
        return self.n_ase * self.b_n * grid.total_time


def _frozen(samples) -> np.ndarray:
    arr = np.array(samples, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("field samples must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FieldState:
    """One realization of the sampled field at space index ``position``."""

    samples: np.ndarray
    position: int = 0

    def __post_init__(self):
        arr = _frozen(self.samples)
        if arr.ndim != 1:
            raise ConfigurationError("FieldState samples must be a 1-D vector")
        object.__setattr__(self, "samples", arr)

    @property
    def num_samples(self) -> int:
        return self.samples.size


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``M`` i.i.d. realizations at a common position, stored as an ``(M, L)`` array."""

    samples: np.ndarray
    position: int = 0

    def __post_init__(self):
        arr = _frozen(self.samples)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ConfigurationError("Ensemble samples must have shape (M, L) with M >= 1")
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_states(cls, states: Sequence[FieldState]) -> "Ensemble":
        if not states:
            raise ConfigurationError("cannot build an ensemble from zero realizations")
        positions = {s.position for s in states}
        lengths = {s.num_samples for s in states}
        if len(positions) != 1 or len(lengths) != 1:
            raise ConfigurationError("realizations must share L and position index")
        return cls(np.stack([s.samples for s in states]), positions.pop())

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.size

    def __getitem__(self, i) -> FieldState:
        return FieldState(self.samples[i], self.position)


def as_array(f) -> np.ndarray:
    """Samples of a FieldState/Ensemble, or the argument itself as an array."""
    if isinstance(f, (FieldState, Ensemble)):
        return f.samples
    return np.asarray(f, dtype=complex)


def _check_length(x: np.ndarray, length: Optional[int]):
    if length is not None and x.shape[-1] != length:
        raise ConfigurationError(f"vector length {x.shape[-1]} does not match grid L={length}")


def dft(x, length: Optional[int] = None, workers: Optional[int] = None) -> np.ndarray:
    """Unitary DFT along the last axis, ``X[l] = sum_m x[m] exp(-2j*pi*l*m/L) / sqrt(L)``.

    ``length`` optionally pins the expected ``L``.
    """
    x = as_array(x)
    _check_length(x, length)
    return scipy.fft.fft(x, axis=-1, norm="ortho", workers=workers)


def idft(x, length: Optional[int] = None, workers: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`dft` (conjugate transpose of the unitary DFT matrix)."""
    x = as_array(x)
    _check_length(x, length)
    return scipy.fft.ifft(x, axis=-1, norm="ortho", workers=workers)


def energy(f):
    """Sum of squared magnitudes along the last axis.

    Returns a float for a single field and an array of per-realization
    energies for an ensemble.
    """
    x = as_array(f)
    e = np.sum(x.real**2 + x.imag**2, axis=-1)
    return float(e) if np.ndim(e) == 0 else e


def proper_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Proper complex Gaussian draws with total variance ``variance`` (``variance/2`` per component)."""
    scale = np.sqrt(variance / 2.0)
    out = rng.standard_normal(tuple(shape) + (2,))
    return scale * (out[..., 0] + 1j * out[..., 1])


def stream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, *indices)``.

    The stream depends only on its key, never on the order in which streams
    are requested.
    """
    tag = int.from_bytes(purpose.encode("utf-8")[:8].ljust(8, b"\0"), "little")
    key = (tag,) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def _sinc_train(symbols: np.ndarray, num_samples: int) -> np.ndarray:
    """Periodic sinc pulses carrying ``symbols``, band-limited to ``len(symbols)`` bins."""
    n_sym = symbols.shape[-1]
    if num_samples % n_sym:
        raise ConfigurationError("num_samples must be a multiple of the number of symbols")
    if n_sym == num_samples:
        return symbols.astype(complex)
    up =np.zeros(symbols.shape[:-1] + (num_samples,), dtype=complex)
    up[..., :: num_samples // n_sym] = symbols
    spec = scipy.fft.fft(up, axis=-1)
    keep = np.abs(scipy.fft.fftfreq(num_samples, 1.0 / num_samples)) < n_sym / 2
    if n_sym % 2 == 0:
        # split the Nyquist-of-symbol bin evenly between +/- n_sym/2
        edge = n_sym // 2
        spec[..., edge] *= 0.5
        spec[..., -edge] *= 0.5
        keep[edge] = keep[-edge] = True
    spec[..., ~keep] = 0
    return scipy.fft.ifft(spec, axis=-1)


def generate_input(
    kind: str,
    energy_target: float,
    grid: SimulationGrid,
    seed: int = 0,
    realizations: Optional[int] = None,
    *,
    tone_bin: int = 0,
    num_symbols: Optional[int] = None,
    amplitudes=None,
    band: Optional[tuple] = None,
):
    """Draw launch fields of energy ``energy_target`` (``E0``).

    Parameters
    ----------
    kind : str
        ``iid-gaussian``: each sample proper complex Gaussian of variance
        ``E0/L`` (energy ``E0`` in expectation).
        ``single-tone``: complex exponential at DFT bin ``tone_bin``.
        ``sinc-pulse-train``: periodic sinc pulses carrying QPSK symbols
        (or the given ``amplitudes``), rescaled to energy ``E0``.
        ``bandlimited-gaussian``: Gaussian DFT coefficients on the bins
        ``band = (lo, hi)`` inclusive, zero elsewhere; energy ``E0`` in
        expectation.
    energy_target : float
        Target energy, must be positive.
    grid : SimulationGrid
    seed : int
        Master seed; realizations are drawn from per-block streams.
    realizations : int, optional
        Number of realizations. ``None`` returns a single FieldState,
        otherwise an Ensemble.

    Returns
    -------
    FieldState or Ensemble
    """
    if kind not in INPUT_KINDS:
        raise ConfigurationError(f"unknown input kind {kind!r}; expected one of {INPUT_KINDS}")
    if not energy_target > 0:
        raise ConfigurationError(f"input energy must be positive, got {energy_target}")
    L = grid.num_samples
    m = 1 if realizations is None else int(realizations)
    if m < 1:
        raise ConfigurationError("realizations must be >= 1")

    if kind == "single-tone":
        tone = np.exp(2j * np.pi * tone_bin * np.arange(L) / L) * np.sqrt(energy_target / L)
        out = np.broadcast_to(tone, (m, L))
    elif kind == "sinc-pulse-train":
        n_sym = num_symbols or L // 4 or 1
        if amplitudes is not None:
            symbols = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (m, n_sym))
        else:
            symbols = _blocked(seed, "input", m, lambda rng, n: _qpsk(rng, (n, n_sym)))
        out = _sinc_train(np.array(symbols), L)
        e = energy(out)
        nz = e > 0
        out[nz] *= np.sqrt(energy_target / e[nz])[:, None]
    elif kind == "iid-gaussian":
        out = _blocked(seed, "input", m, lambda rng, n: proper_gaussian(rng, (n, L), energy_target / L))
    else:
        if band is None:
            raise ConfigurationError("bandlimited-gaussian needs band=(lo, hi)")
        lo, hi = (int(b) for b in band)
        bins = np.arange(lo, hi + 1) % L
        width = np.unique(bins).size

        def draw(rng, n):
            spec = np.zeros((n, L), dtype=complex)
            spec[:, bins] = proper_gaussian(rng, (n, bins.size), energy_target / width)
            return scipy.fft.ifft(spec, axis=-1, norm="ortho")

        out = _blocked(seed, "input", m, draw)
    if realizations is None:
        return FieldState(out[0], 0)
    return Ensemble(out, 0)


def _qpsk(rng, shape):
    bits = rng.integers(0, 4, size=shape)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))


def _blocked(seed, purpose, m, draw):
    parts = []
    for b, start in enumerate(range(0, m, BLOCK_SIZE)):
        n = min(BLOCK_SIZE, m - start)
        parts.append(draw(stream(seed, purpose, b), n))
    return np.concatenate(parts, axis=0)
