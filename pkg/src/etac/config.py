"""Run configuration: dataclasses plus a TOML loader with field-level diagnostics."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .mpc import MpcConfig
from .triggers import TriggerParams

MODES = ("ETAC", "TTAC", "ETC")


class ConfigError(ValueError):
    pass


@dataclass
class PlantConfig:
    platform: bool = True
    ground_effect: bool = True
    snr_db: float | None = 35.0
    dt: float = 0.01
    rotor_radius: float = 0.05
    zeta_cap: float = 2.0
    platform_amplitude: float = 0.5
    platform_components: int = 10
    h_touchdown: float = 0.05


@dataclass
class ModelConfig:
    source: str = "train"
    degree: int = 2
    n_traj: int = 100
    traj_len: int = 150
    ridge: float = 1e-8
    train_seed: int = 0


@dataclass
class TriggerConfig:
    sigma: float = 5e-8
    beta: float = 0.09
    gamma: float = 1e-4
    alpha: float = 0.09
    q_scale: float = 100.0


@dataclass
class AdaptationConfig:
    window: int = 10
    forgetting: float = 0.95
    recompute: bool = True
    rcond: float = 0.01
    push: str = "always"

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise ValueError("window must be an integer >= 1")
        if not 0 < self.forgetting <= 1:
            raise ValueError("forgetting must lie in (0, 1]")
        if self.rcond < 0:
            raise ValueError("rcond must be non-negative")
        if self.push not in ("trigger", "always"):
            raise ValueError("push must be 'trigger' or 'always'")


@dataclass
class RunConfig:
    mode: str = "ETAC"
    h0: float = 5.0
    v0: float = 1.0
    seed: int = 0
    max_time: float = 40.0
    plant: PlantConfig = field(default_factory=PlantConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    triggers: TriggerConfig = field(default_factory=TriggerConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)

    def __post_init__(self):
        self.mode = str(self.mode).upper()
        if self.mode not in MODES:
            raise ConfigError(f"run.mode: expected one of {', '.join(MODES)}, got {self.mode!r}")
        if self.h0 <= self.plant.h_touchdown:
            raise ConfigError("run.h0: initial height must exceed the touchdown height")
        if self.max_time <= 0:
            raise ConfigError("run.max_time: must be positive")
        if self.plant.dt <= 0:
            raise ConfigError("plant.dt: must be positive")
        if self.plant.snr_db is not None and self.plant.snr_db <= 0:
            raise ConfigError("plant.snr_db: must be positive (or \"off\")")

    @property
    def adapts(self) -> bool:
        return self.mode != "ETC"

    def trigger_params(self, q: int) -> TriggerParams:
        t = self.triggers
        return TriggerParams(sigma=t.sigma, beta=t.beta, gamma=t.gamma, alpha=t.alpha,
                             Q=t.q_scale * np.eye(q), horizon=self.mpc.horizon)

    def replace(self, **changes) -> "RunConfig":
        """Copy with top-level fields or ``section__field`` entries replaced."""
        top = {k: v for k, v in changes.items() if "__" not in k}
        cfg = dataclasses.replace(self, **top)
        grouped: dict = {}
        for key, value in changes.items():
            if "__" in key:
                section, name = key.split("__", 1)
                grouped.setdefault(section, {})[name] = value
        # one replace per section, so jointly consistent changes are validated together
        for section, fields in grouped.items():
            setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **fields))
        cfg.__post_init__()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "plant": PlantConfig,
    "model": ModelConfig,
    "mpc": MpcConfig,
    "triggers": TriggerConfig,
    "adaptation": AdaptationConfig,
}
_RUN_FIELDS = ("mode", "h0", "v0", "seed", "max_time")


def _coerce(section: str, name: str, value, target_type):
    where = f"{section}.{name}"
    if name == "snr_db" and (value is None or (isinstance(value, str) and value.lower() in ("off", "none"))):
        return None
    if name == "snr_db" or target_type in (float, "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if target_type in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if target_type in (bool, "bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if target_type in (str, "str"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, section: str, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for name, value in data.items():
        if name not in fields:
            raise ConfigError(f"{section}.{name}: unknown field (expected one of {', '.join(fields)})")
        kwargs[name] = _coerce(section, name, value, fields[name].type)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    run = data.pop("run", {})
    if not isinstance(run, dict):
        raise ConfigError("[run] must be a table")
    kwargs = {}
    for name, value in run.items():
        if name not in _RUN_FIELDS:
            raise ConfigError(f"run.{name}: unknown field (expected one of {', '.join(_RUN_FIELDS)})")
        kind = {"mode": str, "seed": int}.get(name, float)
        kwargs[name] = _coerce("run", name, value, kind)
    for section, cls in _SECTIONS.items():
        if section in data:
            kwargs[section] = _build(cls, section, data.pop(section))
    if data:
        raise ConfigError(f"unknown section [{next(iter(data))}] (expected run, {', '.join(_SECTIONS)})")
    try:
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
