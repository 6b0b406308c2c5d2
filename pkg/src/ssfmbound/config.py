"""Experiment configuration: sectioned INI files with SI units."""
from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .engine import AllPassSpec, NonlinearPhaseSpec, PropagationSpecs
from .field import INPUT_KINDS, ChannelParams, ConfigurationError, SimulationGrid


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section/key."""


@dataclass
class GridConfig:
    delta_z: float = 1.0
    delta_t: float = 1.0
    num_steps: int = 50
    num_samples: int = 64


@dataclass
class ChannelConfig:
    beta2: float = 0.0
    beta3: float = 0.0
    gamma: float = 0.0
    n_ase: float = 1.0
    b_n: float = 1.0
    dispersion: str = "paper-dispersion"
    custom_phases: str = ""
    custom_magnitude: str = ""
    nonlinearity: str = "kerr"
    nonlinear_coefficient: float = 1.0
    nonlinear_amplitude_gain: float = 1.0
    scheme: str = "standard"
    loss_profile: str = ""
    noise_profile: str = ""


@dataclass
class InputConfig:
    kind: str = "iid-gaussian"
    energy: float = 0.0
    power: float = 0.0
    tone_bin: int = 0
    num_symbols: int = 0
    band_lo: int = 0
    band_hi: int = 0


@dataclass
class RunConfig:
    realizations: int = 1000
    seed: int = 0
    retain_trajectory: bool = False
    epsilon: float = 1e-3
    knn_k: int = 4
    bootstrap: int = 100
    entropy_realizations: int = 20000
    workers: int = 1
    snr_db: str = ""


@dataclass
class OutputConfig:
    dir: str = "out"
    formats: str = "json,csv,dump"


SECTIONS = {
    "grid": GridConfig,
    "channel": ChannelConfig,
    "input": InputConfig,
    "run": RunConfig,
    "output": OutputConfig,
}


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    input: InputConfig = field(default_factory=InputConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = field(default=".", compare=False)

    # -- derived objects -------------------------------------------------
    def build_grid(self) -> SimulationGrid:
        g = self.grid
        try:
            return SimulationGrid(g.delta_z, g.delta_t, g.num_steps, g.num_samples)
        except ConfigurationError as exc:
            raise ConfigError(f"[grid] {exc}") from exc

    def _vector(self, key: str) -> Optional[np.ndarray]:
        name = getattr(self.channel, key)
        if not name:
            return None
        path = name if os.path.isabs(name) else os.path.join(self.base_dir, name)
        if not os.path.exists(path):
            raise ConfigError(f"[channel] {key}: file not found: {path}")
        try:
            arr = np.loadtxt(path, dtype=float, ndmin=1)
        except ValueError as exc:
            raise ConfigError(f"[channel] {key}: {exc}") from exc
        if arr.size != self.grid.num_samples:
            raise ConfigError(
                f"[channel] {key}: {path} has {arr.size} entries, expected L={self.grid.num_samples}"
            )
        return arr

    def build_params(self) -> ChannelParams:
        c = self.channel
        try:
            return ChannelParams(
                beta2=c.beta2, beta3=c.beta3, gamma=c.gamma, n_ase=c.n_ase, b_n=c.b_n,
                loss_profile=self._vector("loss_profile"),
                noise_profile=self._vector("noise_profile"),
            )
        except ConfigurationError as exc:
            raise ConfigError(f"[channel] {exc}") from exc

    def build_specs(self) -> PropagationSpecs:
        c = self.channel
        if c.scheme not in ("standard", "symmetric"):
            raise ConfigError(f"[channel] scheme: expected standard|symmetric, got {c.scheme!r}")
        try:
            if c.nonlinearity == "kerr":
                nl = NonlinearPhaseSpec("kerr", amplitude_gain=c.nonlinear_amplitude_gain)
            else:
                nl = NonlinearPhaseSpec("custom", c.nonlinearity, c.nonlinear_coefficient,
                                        amplitude_gain=c.nonlinear_amplitude_gain)
            mode = "custom-phases" if c.dispersion == "custom" else c.dispersion
            lin = AllPassSpec(mode, phases=self._vector("custom_phases"),
                              magnitude=self._vector("custom_magnitude"))
        except ConfigurationError as exc:
            raise ConfigError(f"[channel] {exc}") from exc
        return PropagationSpecs(nl, lin, c.scheme == "symmetric")

    def input_energy(self) -> float:
        i = self.input
        if i.energy > 0:
            return i.energy
        if i.power > 0:
            return i.power * self.grid.num_samples
        raise ConfigError("[input] set energy (E0) or power (P per sample) to a positive value")

    def snr_list(self) -> list:
        if not self.run.snr_db.strip():
            return []
        try:
            return [float(v) for v in self.run.snr_db.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"[run] snr_db: {exc}") from exc

    def validate(self) -> None:
        self.build_grid()
        self.build_params()
        self.build_specs()
        if self.input.kind not in INPUT_KINDS:
            raise ConfigError(f"[input] kind: expected one of {INPUT_KINDS}, got {self.input.kind!r}")
        self.input_energy()
        if self.run.realizations < 1:
            raise ConfigError("[run] realizations must be >= 1")
        if not 0 < self.run.epsilon < 1:
            raise ConfigError("[run] epsilon must lie in (0, 1)")
        self.snr_list()


def _convert(raw: str, typ, where: str):
    try:
        if typ is bool:
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_TYPES = {"float": float, "int": int, "bool": bool, "str": str}


def loads(text: str, base_dir: str = ".") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    parts = {}
    for name, cls in SECTIONS.items():
        values = {}
        known = {f.name: f for f in fields(cls)}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError(f"[{name}] unknown key {key!r}")
                typ = _TYPES[known[key].type] if isinstance(known[key].type, str) else known[key].type
                values[key] = _convert(raw, typ, f"[{name}] {key}")
        parts[name] = cls(**values)
    return ExperimentConfig(**parts, base_dir=base_dir)


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name in SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {k: _format(v) for k, v in dataclasses.asdict(section).items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
