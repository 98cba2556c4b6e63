"""Run configuration schema with strict loading and dotted-path overrides."""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .maddpg import MaddpgConfig

MODES = ("co-opt-continuous", "co-opt-discrete", "two-stage", "clear-only")
LOG_STEPS = ("all", "window", "none")


class ConfigError(ValueError):
    pass


@dataclass
class DesignConfig:
    sigma: float = 5.0
    lr: float | None = None  # None picks the per-mode default below
    n_up: int = 10
    normalize: bool = True
    baseline_decay: float = 0.95
    mu_init: float | None = None  # 0 MW (Gaussian) or 0.5 (Bernoulli)
    mu_floor: float = 0.01
    fixed_increment: float = 50.0
    reference_capacity: float = 100.0

    def learning_rate(self, mode):
        if self.lr is not None:
            return self.lr
        return 0.05 if mode == "co-opt-discrete" else 2.0


@dataclass
class RunConfig:
    case: str = "ieee30"
    mode: str = "co-opt-continuous"
    episodes: int = 1000
    horizon: int | None = None  # None: full profile
    gamma: float = 0.99
    w_anu: float | None = None  # None: 8760 / horizon
    candidates: list[str] | None = None  # None: candidates flagged in the case
    scenario: dict[str, float] | None = None  # strategic generator name -> fixed bid
    fixed_design: list[float] | None = None  # clear-only evaluation design
    shed_penalty: float | None = 10_000.0
    seed: int = 0
    output_dir: str = "runs/default"
    summary_fraction: float = 0.1
    checkpoint_every: int = 500
    log_steps: str = "window"
    progress_every: int = 0  # 0: every 5% of the run
    maddpg: MaddpgConfig = field(default_factory=MaddpgConfig)
    design: DesignConfig = field(default_factory=DesignConfig)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        if self.log_steps not in LOG_STEPS:
            raise ConfigError(f"log_steps must be one of {', '.join(LOG_STEPS)}")
        if self.mode.startswith("co-opt") and self.episodes < self.design.n_up:
            raise ConfigError("N >= N_up required: episodes must be at least design.n_up")
        if self.episodes < 1:
            raise ConfigError("episodes must be positive")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.w_anu is not None and not self.w_anu > 0:
            raise ConfigError("w_anu must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if not 0 < self.summary_fraction <= 1:
            raise ConfigError("summary_fraction must lie in (0, 1]")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be positive")
        if self.shed_penalty is not None and not self.shed_penalty > 0:
            raise ConfigError("shed_penalty must be positive or null")
        if self.mode == "two-stage" and not self.scenario:
            raise ConfigError("two-stage mode needs a fixed-bid scenario")
        if self.scenario and any(not v > 0 for v in self.scenario.values()):
            raise ConfigError("scenario bids must be positive")
        d = self.design
        if not d.sigma > 0 or (d.lr is not None and not d.lr > 0) or d.n_up < 1:
            raise ConfigError("design.sigma, design.lr and design.n_up must be positive")
        if not 0 < d.baseline_decay < 1:
            raise ConfigError("design.baseline_decay must lie in (0, 1)")
        if not 0 < d.mu_floor < 0.5:
            raise ConfigError("design.mu_floor must lie in (0, 0.5)")
        if not d.fixed_increment > 0 or not d.reference_capacity > 0:
            raise ConfigError("design.fixed_increment and design.reference_capacity must be positive")
        try:
            self.maddpg.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self


def _check(value, tp, path):
    """Coerce ``value`` to annotation ``tp`` or raise ConfigError."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        for a in args:
            if a is type(None):
                continue
            try:
                return _check(value, a, path)
            except ConfigError:
                pass
        raise ConfigError(f"{path}: {value!r} does not match {tp}")
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_check(v, args[0], f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return {_check(k, args[0], path): _check(v, args[1], f"{path}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, str):
            # YAML 1.1 reads "1e-4" as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return str(value)
    raise ConfigError(f"{path}: unsupported type {tp}")


def _build(cls, doc, prefix=""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        where = f" in {prefix}" if prefix else ""
        raise ConfigError(f"unknown config keys{where}: {', '.join(sorted(map(str, unknown)))}")
    kw = {k: _check(v, hints[k], f"{prefix}.{k}" if prefix else k) for k, v in doc.items()}
    return cls(**kw)


def config_from_dict(doc):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return _build(RunConfig, doc).validate()


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def apply_overrides(doc, overrides):
    """Apply ``a.b=c`` strings to a nested dict; values parse as YAML scalars."""
    doc = dict(doc or {})
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        node = doc
        for p in parts[:-1]:
            child = node.get(p)
            child = dict(child) if isinstance(child, dict) else {}
            node[p] = child
            node = child
        node[parts[-1]] = value
    return doc


def load_config(path=None, overrides=()):
    doc = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: parse failure: {exc}") from exc
    return config_from_dict(apply_overrides(doc, overrides))
