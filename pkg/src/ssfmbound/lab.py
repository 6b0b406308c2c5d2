"""Statistical checks of energy/trace accounting and entropy behaviour of the cascade.

Every check returns :class:`CheckRecord` values (name, statistic, tolerance,
pass/fail) so the CLI can print and serialize them uniformly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln
from scipy.stats import kurtosis, skew

from .engine import PropagationSpecs, inverse_propagate_deterministic, nonlinear_step, propagate
from .field import (
    ChannelParams,
    ConfigurationError,
    Ensemble,
    FieldState,
    SimulationGrid,
    as_array,
    energy,
    proper_gaussian,
    stream,
)


@dataclass(frozen=True)
class CheckRecord:
    name: str
    statistic: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def as_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.details.get("skipped"):
            status = "SKIP"
        return (
            f"{status} {self.name} statistic={self.statistic:.6g} "
            f"tolerance={self.tolerance:.6g}"
        )

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "details": self.details,
        }


@dataclass(frozen=True)
class CorrelationEstimate:
    matrix: np.ndarray
    pseudo_matrix: np.ndarray
    sample_count: int

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def is_psd(self) -> bool:
        L = self.matrix.shape[0]
        lam = np.linalg.eigvalsh(self.matrix)
        return bool(lam.min() > -1e-10 * max(self.trace, 0.0) / L)


@dataclass(frozen=True)
class EntropyEstimate:
    """Differential entropy in nats over the real embedding of the samples."""

    value: float
    standard_error: float
    estimator: str
    k: int
    sample_count: int
    dimension: int
    jittered: bool = False
    bias_estimate: float = 0.0


def _real_embedding(samples) -> np.ndarray:
    x = np.asarray(as_array(samples) if isinstance(samples, (FieldState, Ensemble)) else samples)
    if np.iscomplexobj(x):
        if x.ndim == 1:
            x = x[:, None]
        return np.concatenate([x.real, x.imag], axis=1)
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _complex_rows(samples) -> np.ndarray:
    x = as_array(samples) if isinstance(samples, (FieldState, Ensemble)) else np.asarray(samples)
    x = np.asarray(x, dtype=complex)
    return x[:, None] if x.ndim == 1 else x


def estimate_correlation(e) -> CorrelationEstimate:
    """Empirical correlation ``mean(x x^H)`` and pseudo-covariance of an ensemble."""
    x = _complex_rows(e)
    m = x.shape[0]
    if m < 2:
        raise ConfigurationError("correlation estimate needs at least 2 realizations")
    r = x.T @ x.conj() / m
    r = 0.5 * (r + r.conj().T)
    xc = x - x.mean(axis=0)
    q = xc.T @ xc / m
    return CorrelationEstimate(r, q, m)


def _kl_terms(x, k, seed):
    eps = cKDTree(x).query(x, k=k + 1)[0][:, k]
    jittered = False
    if np.any(eps == 0):
        scale = np.std(x) or 1.0
        x = x + 1e-12 * scale * stream(seed, "jitter").standard_normal(x.shape)
        eps = cKDTree(x).query(x, k=k + 1)[0][:, k]
        jittered = True
    m, d = x.shape
    log_unit_ball = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1)
    terms = d * np.log(eps)
    return digamma(m) - digamma(k) + log_unit_ball + terms.mean(), terms, jittered


def knn_entropy(samples, k: int = 4, bootstrap: int = 100, seed: int = 0,
                estimate_bias: bool = False) -> EntropyEstimate:
    """Kozachenko-Leonenko k-nearest-neighbour entropy estimate (nats).

    ``h = psi(M) - psi(k) + log(V_d) + d * mean(log eps_i)`` with ``eps_i``
    the Euclidean distance from point ``i`` to its ``k``-th neighbour and
    ``V_d`` the unit-ball volume. Complex samples of shape ``(M, L)`` are
    embedded in ``2L`` real dimensions. The standard error is a bootstrap
    over the per-point log-distance terms.

    With ``estimate_bias`` the finite-sample bias is estimated by Richardson
    extrapolation against the two half samples, assuming bias ~ M**(-2/d).
    The value itself is left uncorrected.
    """
    x = _real_embedding(samples)
    m, d = x.shape
    if m < 100:
        raise ConfigurationError(f"knn_entropy needs at least 100 samples, got {m}")
    if not 1 <= k <= 20:
        raise ConfigurationError(f"k must lie in [1, 20], got {k}")
    value, terms, jittered = _kl_terms(x, k, seed)
    rng = stream(seed, "bootstrap")
    means = np.array([terms[rng.integers(0, m, m)].mean() for _ in range(bootstrap)])
    se = float(means.std(ddof=1)) if bootstrap > 1 else float(terms.std() / math.sqrt(m))
    bias = 0.0
    if estimate_bias:
        half = np.mean([_kl_terms(x[i::2], k, seed)[0] for i in range(2)])
        bias = -float(value - half) / (2 ** (2 / d) - 1)
    return EntropyEstimate(float(value), se, "knn", k, m, d, jittered, bias)


def histogram_entropy(samples, bins: int = 200) -> EntropyEstimate:
    """Plug-in histogram entropy for up to 2 real dimensions."""
    x = _real_embedding(samples)
    m, d = x.shape
    if d > 2:
        raise ConfigurationError("histogram_entropy supports at most 2 real dimensions")
    counts, edges = np.histogramdd(x, bins=bins)
    cell = np.prod([e[1] - e[0] for e in edges])
    p = counts[counts > 0] / m
    value = float(-(p * np.log(p)).sum() + math.log(cell))
    # Delta-method standard error of the plug-in estimate
    se = float(np.sqrt(max((p * np.log(p) ** 2).sum() - (p * np.log(p)).sum() ** 2, 0.0) / m))
    return EntropyEstimate(value, max(se, 1e-12), "histogram", bins, m, d)


def entropy_power(h, num_complex_dims: int) -> float:
    """``exp(h / L) / (pi e)`` for a length-L complex vector."""
    value = h.value if isinstance(h, EntropyEstimate) else float(h)
    return math.exp(value / num_complex_dims) / (math.pi * math.e)


def _power_se(h: EntropyEstimate, num_complex_dims: int) -> float:
    return entropy_power(h, num_complex_dims) * h.standard_error / num_complex_dims


def check_trace_conservation(before, after_nonlinear, after_linear, tolerance: float = 1e-11):
    """Per-realization energy comparison across the two deterministic steps.

    Returns one record per step. Equal energies realization by realization
    imply equal traces of the correlation matrices.
    """
    x0, x1, x2 = (_complex_rows(e) for e in (before, after_nonlinear, after_linear))
    if not (x0.shape == x1.shape == x2.shape):
        raise ConfigurationError("ensembles must share M and L")
    e0, e1, e2 = energy(x0), energy(x1), energy(x2)
    scale = np.maximum(e0, np.finfo(float).tiny)
    out = []
    for name, ea, eb in (("trace_nonlinear", e0, e1), ("trace_linear", e1, e2)):
        dev = float(np.max(np.abs(eb - ea) / scale))
        out.append(
            CheckRecord(
                name,
                dev,
                tolerance,
                dev < tolerance or dev == 0.0,
                {"trace_before": float(ea.mean()), "trace_after": float(eb.mean())},
            )
        )
    return out


def _draw_scalar_input(kind, rng, m, width, power, ring_width):
    if kind == "gaussian":
        return proper_gaussian(rng, (m, width), power)
    if kind == "ring":
        r = math.sqrt(power) * (1 + ring_width * (rng.random((m, width)) - 0.5))
        return r * np.exp(2j * np.pi * rng.random((m, width)))
    if kind == "disk":
        r = math.sqrt(2 * power) * np.sqrt(rng.random((m, width)))
        return r * np.exp(2j * np.pi * rng.random((m, width)))
    raise ConfigurationError(f"unknown input distribution {kind!r}")


def verify_nonlinear_entropy_preservation(
    params: ChannelParams,
    grid: SimulationGrid,
    M: int,
    *,
    num_samples: int = 1,
    distribution: str = "gaussian",
    power: float = 1.0,
    ring_width: float = 0.05,
    spec=None,
    k: int = 4,
    seed: int = 0,
) -> CheckRecord:
    """Compare k-NN entropy of an input cloud with that of its nonlinear-step image.

    The nonlinear step acts sample by sample, so ``num_samples`` may be 1
    regardless of the grid. Passes when the difference is below three
    combined standard errors.
    """
    from .engine import NonlinearPhaseSpec

    spec = spec or NonlinearPhaseSpec()
    rng = stream(seed, "entropy-input")
    a = _draw_scalar_input(distribution, rng, M, num_samples, power, ring_width)
    b = nonlinear_step(a, spec, grid.delta_z, params.gamma)
    h_in = knn_entropy(a, k=k, seed=seed)
    h_out = knn_entropy(b, k=k, seed=seed)
    diff = abs(h_out.value - h_in.value)
    tol = 3 * math.hypot(h_in.standard_error, h_out.standard_error)
    return CheckRecord(
        "nonlinear_entropy_preservation",
        diff,
        tol,
        diff <= tol,
        {
            "h_before": h_in.value,
            "h_after": h_out.value,
            "gamma_dz": params.gamma * grid.delta_z,
            "distribution": distribution,
        },
    )


def _is_constant(x: np.ndarray) -> bool:
    return bool(np.all(x == x[0]))


def verify_epi(x_samples, y_samples, k: int = 4, seed: int = 0) -> CheckRecord:
    """Check ``V(X+Y) >= V(X) + V(Y)`` with k-NN entropy-power estimates.

    A deterministic ``Y`` (all rows equal) gets ``V(Y) = 0``. Passes when the
    slack is above minus three propagated standard errors plus the estimated
    estimator bias carried into entropy power.
    """
    x, y = _complex_rows(x_samples), _complex_rows(y_samples)
    if x.shape != y.shape:
        raise ConfigurationError(f"dimension mismatch: {x.shape} vs {y.shape}")
    L = x.shape[1]

    def power(z, s):
        if _is_constant(z):
            return 0.0, 0.0, 0.0
        h = knn_entropy(z, k=k, seed=s, estimate_bias=True)
        v = entropy_power(h, L)
        return v, _power_se(h, L), v * abs(h.bias_estimate) / L

    vx, sx, bx = power(x, seed)
    vy, sy, by = power(y, seed + 1)
    vs, ss, bs = power(x + y, seed + 2)
    se = math.sqrt(sx**2 + sy**2 + ss**2)
    bias = bx + by + bs
    slack = vs - (vx + vy)
    tol = 3 * se + bias
    return CheckRecord(
        "epi",
        slack,
        tol,
        slack >= -tol,
        {"V_x": vx, "V_y": vy, "V_sum": vs, "standard_error": se, "bias_allowance": bias},
    )


@dataclass(frozen=True)
class MaxEntropyReport:
    entropy: EntropyEstimate
    gaussian_bound: Optional[float]  # log[(pi e)^L det R]
    trace_bound: float  # L log(pi e Tr R / L)
    degenerate: bool
    records: tuple


def max_entropy_gap(e, k: int = 4, seed: int = 0) -> MaxEntropyReport:
    """Three-term ordering ``h <= log[(pi e)^L det R] <= L log(pi e Tr R / L)``."""
    x = _complex_rows(e)
    m, L = x.shape
    h = knn_entropy(x, k=k, seed=seed)
    corr = estimate_correlation(x)
    sign, logdet = np.linalg.slogdet(corr.matrix)
    tr = corr.trace
    right = L * math.log(math.pi * math.e * tr / L) if tr > 0 else -math.inf
    slack = 3 * h.standard_error
    degenerate = not (sign > 0 and np.isfinite(logdet))
    records = []
    if degenerate:
        mid = None
        records.append(CheckRecord("entropy_le_trace_bound", h.value - right, slack, h.value <= right + slack))
        records.append(CheckRecord("det_bound_degenerate", 0.0, 0.0, True, {"skipped": True}))
    else:
        mid = L * math.log(math.pi * math.e) + float(logdet)
        records.append(CheckRecord("entropy_le_det_bound", h.value - mid, slack, h.value <= mid + slack))
        # AM-GM on the eigenvalues of R: exact up to roundoff
        tol = 1e-10 * max(1.0, abs(right))
        records.append(CheckRecord("det_bound_le_trace_bound", mid - right, tol, mid <= right + tol))
    return MaxEntropyReport(h, mid, right, degenerate, tuple(records))


def check_energy_ledger(output, E0: float, params: ChannelParams, grid: SimulationGrid,
                        n_se: float = 3.0) -> CheckRecord:
    """Mean output energy against ``E0 + N_ASE B_n T`` within ``n_se`` standard errors."""
    e = np.atleast_1d(energy(output))
    expected = E0 + params.total_noise_energy(grid)
    se = float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0
    dev = abs(float(e.mean()) - expected)
    tol = n_se * se if se > 0 else 1e-10 * max(expected, np.finfo(float).tiny)
    return CheckRecord(
        "energy_ledger", dev, tol, dev <= tol,
        {"mean_energy": float(e.mean()), "expected": expected, "standard_error": se},
    )


def check_amplitude_preservation(before, after, tolerance: float = 1e-14) -> CheckRecord:
    a, b = np.abs(as_array(before)), np.abs(as_array(after))
    scale = max(float(a.max()), np.finfo(float).tiny)
    dev = float(np.max(np.abs(b - a))) / scale
    return CheckRecord("amplitude_preservation", dev, tolerance, dev <= tolerance)


def check_diagonal_preserved(before, after) -> CheckRecord:
    """Diagonal of the correlation matrix before/after the nonlinear step (``5/sqrt(M)`` band)."""
    r0 = np.real(np.diag(estimate_correlation(before).matrix))
    r1 = np.real(np.diag(estimate_correlation(after).matrix))
    m = _complex_rows(before).shape[0]
    dev = float(np.max(np.abs(r1 - r0) / np.maximum(r0, np.finfo(float).tiny)))
    tol = 5 / math.sqrt(m)
    return CheckRecord("correlation_diagonal", dev, tol, dev < tol)


def check_noise_statistics(noise, variance: float) -> list:
    """Properness (pseudo-covariance) and component normality of noise samples."""
    n = _complex_rows(noise)
    m = n.shape[0]
    band = 5 / math.sqrt(m)
    corr = estimate_correlation(n)
    pseudo = float(np.max(np.abs(corr.pseudo_matrix)))
    comps = np.concatenate([n.real.ravel(), n.imag.ravel()])
    sk = abs(float(skew(comps)))
    ku = abs(float(kurtosis(comps)))
    # skewness/excess-kurtosis standard errors are sqrt(6/M), sqrt(24/M)
    count = comps.size
    return [
        CheckRecord("noise_properness", pseudo, band * variance, pseudo < band * variance),
        CheckRecord("noise_skewness", sk, 5 * math.sqrt(6 / count), sk < 5 * math.sqrt(6 / count)),
        CheckRecord("noise_kurtosis", ku, 5 * math.sqrt(24 / count), ku < 5 * math.sqrt(24 / count)),
    ]


def check_invertibility(x, params: ChannelParams, grid: SimulationGrid,
                        specs: PropagationSpecs, tolerance: float = 1e-9) -> CheckRecord:
    """Noiseless forward cascade followed by its inverse."""
    quiet = ChannelParams(beta2=params.beta2, beta3=params.beta3, gamma=params.gamma,
                          n_ase=0.0, b_n=params.b_n)
    out = propagate(x, quiet, grid, specs).output
    back = as_array(inverse_propagate_deterministic(out, quiet, grid, specs))
    a = as_array(x)
    err = float(np.linalg.norm(back - a) / max(np.linalg.norm(a), np.finfo(float).tiny))
    return CheckRecord("round_trip_inverse", err, tolerance, err < tolerance)


def verify_conditional_entropy(params: ChannelParams, grid: SimulationGrid, specs: PropagationSpecs,
                               launch, M: int, k: int = 4, seed: int = 0) -> CheckRecord:
    """Output entropy for a fixed launch field against ``L log(pi e N_ASE B_n T / L)``.

    With the input a point mass, the conditional entropy given the input is
    the plain entropy of the output ensemble.
    """
    a0 = as_array(launch)
    L = grid.num_samples
    if a0.shape != (L,):
        raise ConfigurationError("launch must be a single length-L field")
    if params.n_ase <= 0:
        raise ConfigurationError("conditional entropy check needs noise")
    ens = Ensemble(np.broadcast_to(a0, (M, L)), 0)
    out = propagate(ens, params, grid, specs, seed=seed).output
    h = knn_entropy(out, k=k, seed=seed, estimate_bias=True)
    floor = L * math.log(math.pi * math.e * params.total_noise_energy(grid) / L)
    slack = h.value - floor
    tol = 3 * h.standard_error + abs(h.bias_estimate)
    return CheckRecord(
        "conditional_entropy_floor", slack, tol, slack >= -tol,
        {"h_output": h.value, "floor": floor, "bias_estimate": h.bias_estimate},
    )
