"""Split-step propagation: nonlinear phase, all-pass filtering, additive noise."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .field import (
    BLOCK_SIZE,
    ChannelParams,
    ConfigurationError,
    Ensemble,
    FieldState,
    SimulationGrid,
    as_array,
    dft,
    idft,
    proper_gaussian,
    stream,
)

Field = Union[FieldState, Ensemble]


class PropagationRangeError(IndexError):
    """Raised when stepping past position K."""


class UnsupportedConfigurationError(ValueError):
    """Raised when an operation cannot handle the configured channel."""


# Named amplitude-to-phase maps usable from config files. Each factory takes a
# scalar coefficient and returns f(|a|) in radians.
PHASE_FUNCTIONS: dict[str, Callable[[float], Callable[[np.ndarray], np.ndarray]]] = {
    "quadratic": lambda c: (lambda r: c * r**2),
    "linear": lambda c: (lambda r: c * r),
    "saturable": lambda c: (lambda r: c * r**2 / (1.0 + r**2)),
    "cubic": lambda c: (lambda r: c * r**3),
}


@dataclass(frozen=True)
class NonlinearPhaseSpec:
    """Amplitude-dependent phase rotation.

    ``kerr`` rotates by ``gamma * |a|**2 * delta_z``; ``gamma=None`` takes the
    value from ChannelParams. ``custom`` rotates by
    ``phase_fn(|a|)``, either a callable or a name from ``PHASE_FUNCTIONS``
    combined with ``coefficient``.

    ``amplitude_gain`` multiplies every sample and exists only to build
    negative controls; anything other than 1 breaks energy conservation.
    """

    mode: str = "kerr"
    phase_fn: Union[str, Callable, None] = None
    coefficient: float = 1.0
    gamma: Optional[float] = None
    amplitude_gain: float = 1.0

    def __post_init__(self):
        if self.mode not in ("kerr", "custom"):
            raise ConfigurationError(f"unknown nonlinear mode {self.mode!r}")
        if self.mode == "custom":
            if self.phase_fn is None:
                raise ConfigurationError("custom nonlinear mode needs phase_fn")
            if isinstance(self.phase_fn, str) and self.phase_fn not in PHASE_FUNCTIONS:
                raise ConfigurationError(
                    f"unknown phase function {self.phase_fn!r}; known: {sorted(PHASE_FUNCTIONS)}"
                )

    def phase(self, amplitude: np.ndarray, gamma: float, delta_z: float) -> np.ndarray:
        if self.mode == "kerr":
            if self.gamma is not None:
                gamma = self.gamma
            return (gamma * delta_z) * amplitude**2
        fn = self.phase_fn
        if isinstance(fn, str):
            fn = PHASE_FUNCTIONS[fn](self.coefficient)
        return np.asarray(fn(amplitude), dtype=float)

    def is_identity(self, gamma: float) -> bool:
        if self.gamma is not None:
            gamma = self.gamma
        return self.mode == "kerr" and gamma == 0 and self.amplitude_gain == 1.0


@dataclass(frozen=True)
class AllPassSpec:
    """Frequency-domain diagonal filter applied once per space step.

    Modes
    -----
    paper-dispersion
        Phase ``-(beta2/2) s**2 / (L dt)**2 * dz`` with ``s`` the signed bin
        index (``l`` below ``L/2``, ``l - L`` above), plus the analogous
        ``-(beta3/6) s**3 / (L dt)**3 * dz`` term. No ``2*pi`` factor.
    physical-dispersion
        Phase ``-(beta2/2) w**2 dz - (beta3/6) w**3 dz`` with ``w`` the signed
        angular bin frequency.
    custom-phases
        ``phases`` (radians, length L) applied per full step.

    ``beta2``/``beta3`` of ``None`` are taken from ChannelParams.
    ``magnitude`` is a per-bin factor for negative controls only; the filter
    is all-pass exactly when it is absent or all ones.
    """

    mode: str = "paper-dispersion"
    beta2: Optional[float] = None
    beta3: Optional[float] = None
    phases: Optional[np.ndarray] = field(default=None, compare=False)
    magnitude: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in ("paper-dispersion", "physical-dispersion", "custom-phases"):
            raise ConfigurationError(f"unknown all-pass mode {self.mode!r}")
        if self.mode == "custom-phases" and self.phases is None:
            raise ConfigurationError("custom-phases mode needs a phase vector")
        if self.phases is not None:
            object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))
        if self.magnitude is not None:
            object.__setattr__(self, "magnitude", np.asarray(self.magnitude, dtype=float))

    @property
    def is_all_pass(self) -> bool:
        return self.magnitude is None or bool(np.all(self.magnitude == 1.0))

    def phase(self, params: Optional[ChannelParams], grid: SimulationGrid,
              fraction: float = 1.0) -> np.ndarray:
        L = grid.num_samples
        dz = grid.delta_z * fraction
        if self.mode == "custom-phases":
            if self.phases.size != L:
                raise ConfigurationError(f"custom phase vector has length {self.phases.size}, L={L}")
            return self.phases * fraction
        if self.mode == "paper-dispersion":
            s = np.arange(L, dtype=float)
            s[L // 2 :] -= L
            x = s / (L * grid.delta_t)
        else:
            x = 2 * np.pi * grid.bin_frequencies
        b2 = self.beta2 if self.beta2 is not None else getattr(params, "beta2", None)
        b3 = self.beta3 if self.beta3 is not None else getattr(params, "beta3", 0.0)
        if b2 is None:
            raise ConfigurationError("dispersion mode needs beta2 on the spec or ChannelParams")
        return -(b2 / 2) * x**2 * dz - (b3 / 6) * x**3 * dz

    def response(self, params: Optional[ChannelParams], grid: SimulationGrid, fraction: float = 1.0) -> np.ndarray:
        """Diagonal of the frequency-domain filter for a step of ``fraction * delta_z``."""
        h = np.exp(1j * self.phase(params, grid, fraction))
        if self.magnitude is not None:
            if self.magnitude.size != grid.num_samples:
                raise ConfigurationError("magnitude vector length does not match L")
            h = h * self.magnitude**fraction
        return h


@dataclass(frozen=True)
class PropagationSpecs:
    """Step operators plus the splitting scheme.

    ``symmetric=False`` runs nonlinear, linear, [loss], noise per step.
    ``symmetric=True`` runs half-linear, nonlinear, half-linear, [loss], noise.
    """

    nonlinear: NonlinearPhaseSpec = NonlinearPhaseSpec()
    linear: AllPassSpec = AllPassSpec()
    symmetric: bool = False


@dataclass(frozen=True, eq=False)
class PropagationRecord:
    input: Field
    output: Field
    trajectory: Optional[tuple] = None
    periodograms: Optional[np.ndarray] = None
    seed: Optional[int] = None
    block_size: int = BLOCK_SIZE

    @property
    def positions(self) -> list:
        if self.trajectory is None:
            return [self.input.position, self.output.position]
        return [f.position for f in self.trajectory]


def _wrap(like, arr, position):
    if isinstance(like, FieldState):
        return FieldState(arr, position)
    if isinstance(like, Ensemble):
        return Ensemble(arr, position)
    return arr


def _position(f) -> int:
    return getattr(f, "position", 0)


def _nonlinear(a, spec, gamma, delta_z):
    if spec.is_identity(gamma):
        return a
    phi = spec.phase(np.abs(a), gamma, delta_z)
    out = a * np.exp(1j * phi)
    if spec.amplitude_gain != 1.0:
        out = out * spec.amplitude_gain
    return out


def _filter(a, h, workers=None):
    if np.all(h == 1.0):
        return a
    return idft(dft(a, workers=workers) * h, workers=workers)


def nonlinear_step(f, spec: NonlinearPhaseSpec, delta_z: float, gamma: Optional[float] = None):
    """Rotate every sample by its amplitude-dependent phase.

    Amplitudes are untouched (unless ``spec.amplitude_gain`` is set), so energy
    is preserved realization by realization.
    """
    if gamma is None:
        gamma = 0.0 if spec.gamma is None else spec.gamma
    a = as_array(f)
    return _wrap(f, _nonlinear(a, spec, gamma, delta_z), _position(f))


def linear_step(f, spec: AllPassSpec, grid: SimulationGrid, params: Optional[ChannelParams] = None,
                fraction: float = 1.0):
    """Apply ``idft(D * dft(a))`` with ``D`` the diagonal all-pass response."""
    a = as_array(f)
    if a.shape[-1] != grid.num_samples:
        raise ConfigurationError(f"field length {a.shape[-1]} does not match L={grid.num_samples}")
    return _wrap(f, _filter(a, spec.response(params, grid, fraction)), _position(f))


def apply_loss(f, loss_profile, grid: SimulationGrid):
    """Scale DFT bin ``l`` by ``loss_profile[l]``; energy can only decrease."""
    g = np.asarray(loss_profile, dtype=float)
    a = as_array(f)
    if g.ndim != 1 or g.size != grid.num_samples or a.shape[-1] != grid.num_samples:
        raise ConfigurationError(
            f"loss profile of length {g.size} does not match L={grid.num_samples}"
        )
    return _wrap(f, _filter(a, g), _position(f))


def _noise(rng, shape, params, grid):
    var = params.step_noise_variance(grid)
    n = proper_gaussian(rng, shape, var)
    if params.noise_profile is not None:
        n = idft(dft(n) * np.sqrt(params.noise_profile))
    return n


def noise_step(f, params: ChannelParams, grid: SimulationGrid, rng: np.random.Generator):
    """Add proper complex Gaussian noise of per-sample variance ``(N_ASE B_n / z*) dz dt``.

    With a noise profile the white noise is shaped per DFT bin by
    ``sqrt(noise_profile)``.
    """
    a = as_array(f)
    if params.n_ase == 0:
        return f if isinstance(f, (FieldState, Ensemble)) else a
    return _wrap(f, a + _noise(rng, a.shape, params, grid), _position(f))


class _Stepper:
    """Precomputed per-step operators for one (params, grid, specs) triple."""

    def __init__(self, params, grid, specs, workers=None):
        params.check_grid(grid)
        self.params, self.grid, self.specs = params, grid, specs
        self.workers = workers
        frac = 0.5 if specs.symmetric else 1.0
        self.h = specs.linear.response(params, grid, frac)
        self.loss = params.loss_profile if params.has_loss else None

    def deterministic(self, a):
        p, g, s = self.params, self.grid, self.specs
        if s.symmetric:
            a = _filter(a, self.h, self.workers)
            a = _nonlinear(a, s.nonlinear, p.gamma, g.delta_z)
            a = _filter(a, self.h, self.workers)
        else:
            a = _nonlinear(a, s.nonlinear, p.gamma, g.delta_z)
            a = _filter(a, self.h, self.workers)
        if self.loss is not None:
            a = _filter(a, self.loss, self.workers)
        return a

    def step(self, a, rng):
        a = self.deterministic(a)
        if self.params.n_ase > 0:
            a = a + _noise(rng, a.shape, self.params, self.grid)
        return a

    def inverse(self, a):
        p, g, s = self.params, self.grid, self.specs
        hc = np.conj(self.h)
        inv_nl = lambda b: b * np.exp(-1j * s.nonlinear.phase(np.abs(b), p.gamma, g.delta_z))
        if s.nonlinear.is_identity(p.gamma):
            inv_nl = lambda b: b
        if s.symmetric:
            return _filter(inv_nl(_filter(a, hc)), hc)
        return inv_nl(_filter(a, hc))


def propagate_step(f, params: ChannelParams, grid: SimulationGrid,
                   specs: PropagationSpecs = PropagationSpecs(),
                   rng: Optional[np.random.Generator] = None):
    """Advance ``f`` from position ``k`` to ``k + 1``."""
    k = _position(f)
    if k >= grid.num_steps:
        raise PropagationRangeError(f"cannot step past position K={grid.num_steps}")
    if rng is None and params.n_ase > 0:
        raise ConfigurationError("noisy step needs an rng")
    a = _Stepper(params, grid, specs).step(as_array(f), rng)
    return _wrap(f, a, k + 1)


def _periodogram(a):
    spec = dft(a)
    p = spec.real**2 + spec.imag**2
    return p.reshape(-1, p.shape[-1]).sum(axis=0)


def _run_block(stepper, a, seed, block, k0, retain, track):
    K = stepper.grid.num_steps
    traj = [a] if retain else None
    pgrams = [_periodogram(a)] if track else None
    for k in range(k0, K):
        rng = stream(seed, "noise", block, k) if stepper.params.n_ase > 0 else None
        a = stepper.step(a, rng)
        if retain:
            traj.append(a)
        if track:
            pgrams.append(_periodogram(a))
    return a, traj, pgrams


def propagate(
    input_field,
    params: ChannelParams,
    grid: SimulationGrid,
    specs: PropagationSpecs = PropagationSpecs(),
    seed: int = 0,
    retain_trajectory: bool = False,
    track_spectrum: bool = False,
    workers: int = 1,
) -> PropagationRecord:
    """Run the ``K``-step cascade from position 0.

    Realizations are processed in fixed blocks of ``BLOCK_SIZE``; block ``b``
    at step ``k`` draws its noise from the stream ``(seed, "noise", b, k)``,
    so the output is identical for any ``workers`` count.

    ``track_spectrum`` stores the ensemble-summed periodogram ``sum |dft(a)|**2``
    at every position without keeping the fields.
    """
    k0 = _position(input_field)
    if k0 != 0:
        raise PropagationRangeError("propagate expects an input at position 0")
    a0 = as_array(input_field)
    single = a0.ndim == 1
    a2 = a0[None, :] if single else a0
    if a2.shape[-1] != grid.num_samples:
        raise ConfigurationError(f"field length {a2.shape[-1]} does not match L={grid.num_samples}")
    stepper = _Stepper(params, grid, specs)
    starts = list(range(0, a2.shape[0], BLOCK_SIZE))
    jobs = [(b, a2[s : s + BLOCK_SIZE]) for b, s in enumerate(starts)]

    def run(job):
        b, blk = job
        return _run_block(stepper, blk, seed, b, 0, retain_trajectory, track_spectrum)

    if workers and workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    out = np.concatenate([r[0] for r in results], axis=0)
    trajectory = None
    if retain_trajectory:
        trajectory = tuple(
            _wrap(input_field, _unbatch(np.concatenate([r[1][k] for r in results]), single), k)
            for k in range(grid.num_steps + 1)
        )
    pgrams = None
    if track_spectrum:
        pgrams = np.sum([np.asarray(r[2]) for r in results], axis=0) / a2.shape[0]
    return PropagationRecord(
        input=input_field,
        output=_wrap(input_field, _unbatch(out, single), grid.num_steps),
        trajectory=trajectory,
        periodograms=pgrams,
        seed=seed,
    )


def _unbatch(a, single):
    return a[0] if single else a


def inverse_propagate_deterministic(output_field, params: ChannelParams, grid: SimulationGrid,
                                    specs: PropagationSpecs = PropagationSpecs()):
    """Undo the noiseless cascade from position ``K`` back to 0.

    Each step inverts the filter with the conjugate response, then removes
    the nonlinear phase, which is recomputable because the nonlinear step
    keeps ``|a|``.
    """
    if params.has_loss:
        raise UnsupportedConfigurationError("loss is not invertible in this scheme")
    if not specs.linear.is_all_pass or specs.nonlinear.amplitude_gain != 1.0:
        raise UnsupportedConfigurationError("inverse requires unitary steps")
    stepper = _Stepper(params, grid, specs)
    a = as_array(output_field)
    for _ in range(grid.num_steps):
        a = stepper.inverse(a)
    return _wrap(output_field, a, 0)
