"""Experiment configuration: INI-style ``key = value`` files.

Sections are ``[system]`` (every :class:`SystemParameters` field),
``[uncertainty]``, ``[experiment]`` and ``[sampler]``.  Missing keys fall
back to the defaults below; unknown keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aeroelastic import SystemParameters
from .errors import ConfigError, FlutterBayesError
from .inference import MCMCConfig
from .prior import RANDOMIZED, REGIMES, ParameterUncertainty

STAGE_KEYS = {"data": 1, "prior": 2, "chain": 3}


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParameters = field(default_factory=SystemParameters)
    cov_fraction: float = 0.10
    randomized: tuple = RANDOMIZED
    airspeed_fractions: tuple = (0.5, 0.6, 0.7)
    noise_rms_fraction: float = 0.12
    sampler: MCMCConfig = field(default_factory=MCMCConfig)
    regimes: tuple = REGIMES
    seeds: tuple = (0,)
    output_dir: str = "run"
    n_mc: int = 50_000
    n_samples: int = 200
    sample_rate: float = 100.0
    measured_dof: str = "pitch"
    h0: float = 0.01
    alpha0: float = 0.05
    flutter_bracket: tuple = (10.0, 80.0)

    def __post_init__(self):
        problems = []
        if not self.airspeed_fractions:
            problems.append("experiment.airspeed_fractions: must list at least one fraction")
        for f in self.airspeed_fractions:
            if not 0 < f < 1:
                problems.append(f"experiment.airspeed_fractions: {f} is not in (0, 1)")
        if list(self.airspeed_fractions) != sorted(set(self.airspeed_fractions)):
            problems.append("experiment.airspeed_fractions: must be strictly increasing")
        if not self.regimes:
            problems.append("experiment.regimes: must name at least one regime")
        for r in self.regimes:
            if r not in REGIMES:
                problems.append(f"experiment.regimes: unknown regime {r!r}")
        if self.noise_rms_fraction < 0:
            problems.append("experiment.noise_rms_fraction: must be non-negative")
        if self.cov_fraction < 0:
            problems.append("uncertainty.cov_fraction: must be non-negative")
        if self.n_mc < 2:
            problems.append("experiment.n_mc: must be at least 2")
        if self.n_samples < 1 or self.sample_rate <= 0:
            problems.append("experiment.n_samples / sample_rate: must be positive")
        if self.measured_dof not in ("heave", "pitch"):
            problems.append("experiment.measured_dof: must be 'heave' or 'pitch'")
        if not self.seeds:
            problems.append("experiment.seeds: must list at least one seed")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def uncertainty(self) -> ParameterUncertainty:
        return ParameterUncertainty(self.system, self.cov_fraction, tuple(self.randomized))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "system": self.system.to_dict(),
            "uncertainty": {"cov_fraction": self.cov_fraction, "randomized": list(self.randomized)},
            "experiment": {
                "airspeed_fractions": list(self.airspeed_fractions),
                "noise_rms_fraction": self.noise_rms_fraction,
                "regimes": list(self.regimes),
                "seeds": list(self.seeds),
                "output_dir": self.output_dir,
                "n_mc": self.n_mc,
                "n_samples": self.n_samples,
                "sample_rate": self.sample_rate,
                "measured_dof": self.measured_dof,
                "h0": self.h0,
                "alpha0": self.alpha0,
                "flutter_bracket": list(self.flutter_bracket),
            },
            "sampler": dataclasses.asdict(self.sampler),
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (independent of file formatting)."""
        payload = self.to_dict()
        payload["experiment"].pop("output_dir")
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def stage_seed(self, stage: str, seed: int, index: int = 0) -> int:
        """Independent, reproducible integer seed for one stage/stream."""
        ss = np.random.SeedSequence([int(seed), STAGE_KEYS[stage], int(index)])
        return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section, values in cfg.to_dict().items():
        parser[section] = {k: _fmt(v) for k, v in values.items()}
    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines += [f"{k} = {v}" for k, v in parser[section].items()]
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text: str, cast) -> tuple:
    return tuple(cast(x.strip()) for x in text.split(",") if x.strip())


_EXPERIMENT_TYPES = {
    "airspeed_fractions": lambda s: _list(s, float),
    "noise_rms_fraction": float,
    "regimes": lambda s: _list(s, str),
    "seeds": lambda s: _list(s, int),
    "output_dir": str,
    "n_mc": int,
    "n_samples": int,
    "sample_rate": float,
    "measured_dof": str,
    "h0": float,
    "alpha0": float,
    "flutter_bracket": lambda s: _list(s, float),
}


def system_from_mapping(values: dict) -> SystemParameters:
    kwargs = {}
    names = SystemParameters.field_names()
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"system.{key}: unknown parameter")
        try:
            kwargs[key] = _parse_bool(raw) if key == "apply_span_scaling" else float(raw)
        except ValueError as exc:
            raise ConfigError(f"system.{key}: {exc}") from None
    try:
        return SystemParameters(**kwargs)
    except FlutterBayesError as exc:
        raise ConfigError(f"system: {exc}") from None


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(parser.sections()) - {"system", "uncertainty", "experiment", "sampler"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    kwargs = {}
    if parser.has_section("system"):
        kwargs["system"] = system_from_mapping(dict(parser["system"]))
    if parser.has_section("uncertainty"):
        for key, raw in parser["uncertainty"].items():
            try:
                if key == "cov_fraction":
                    kwargs["cov_fraction"] = float(raw)
                elif key == "randomized":
                    kwargs["randomized"] = _list(raw, str)
                else:
                    raise ConfigError(f"uncertainty.{key}: unknown key")
            except ValueError as exc:
                raise ConfigError(f"uncertainty.{key}: {exc}") from None
    if parser.has_section("experiment"):
        for key, raw in parser["experiment"].items():
            if key not in _EXPERIMENT_TYPES:
                raise ConfigError(f"experiment.{key}: unknown key")
            try:
                kwargs[key] = _EXPERIMENT_TYPES[key](raw)
            except ValueError as exc:
                raise ConfigError(f"experiment.{key}: {exc}") from None
    if parser.has_section("sampler"):
        fields = {f.name: f.type for f in dataclasses.fields(MCMCConfig)}
        skw = {}
        for key, raw in parser["sampler"].items():
            if key not in fields:
                raise ConfigError(f"sampler.{key}: unknown key")
            try:
                skw[key] = float(raw) if key in ("initial_step_scale", "regularization_epsilon") else int(raw)
            except ValueError as exc:
                raise ConfigError(f"sampler.{key}: {exc}") from None
        try:
            kwargs["sampler"] = MCMCConfig(**skw)
        except FlutterBayesError as exc:
            raise ConfigError(f"sampler: {exc}") from None
    try:
        cfg = ExperimentConfig(**kwargs)
        cfg.uncertainty
    except ConfigError:
        raise
    except FlutterBayesError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_system(params: SystemParameters) -> str:
    """``key = value`` lines for every :class:`SystemParameters` field."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in params.to_dict().items())


def parse_system(text: str) -> SystemParameters:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return system_from_mapping(values)
