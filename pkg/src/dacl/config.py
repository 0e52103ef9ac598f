"""Run configuration: JSON file + dotted overrides, strict keys, stable hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import ContrastiveConfig, EncoderConfig
from .datasets import SyntheticSpec
from .diffusion import TimestepRange, make_schedule
from .errors import ConfigError
from .latentvae import VaeConfig
from .scoring import ProbeConfig
from .baselines import DaeConfig, GaussianAugConfig

METHODS = ("dacl", "gauss-contrastive", "dae")
PROTOCOLS = ("prototype", "probe", "both")


@dataclass
class SyntheticSection:
    per_class: int = 500
    dim: int = 64
    separation: float = 4.0
    spread: float = 1.0
    patients_per_class: int = 50
    seed: int | None = None  # None follows the run seed


@dataclass
class DataSection:
    path: str | None = None  # feature CSV; synthetic data when unset
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)


@dataclass
class SplitSection:
    fraction: float = 0.7
    seed: int | None = None


@dataclass
class ScheduleSection:
    T: int = 50
    beta_min: float = 1e-4
    beta_max: float = 0.02


@dataclass
class TrainSection:
    epochs: int = 200
    lr: float = 1e-4
    batch_size: int = 64
    margin: float = 1.0
    t_lo: int = 1
    t_hi: int | None = None  # None means T
    sigma: float = 0.1
    balanced: bool = False
    normalize: bool = False
    temb_dim: int = 64
    hidden: tuple[int, ...] = (256, 256)
    embed_dim: int = 128


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    vae: VaeConfig = field(default_factory=VaeConfig)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    method: str = "dacl"
    train: TrainSection = field(default_factory=TrainSection)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    protocol: str = "both"
    output_dir: str = "runs/dacl"
    seed: int = 0

    # --- derived views -------------------------------------------------
    def synthetic_spec(self) -> SyntheticSpec:
        s = self.data.synthetic
        return SyntheticSpec(s.per_class, s.dim, s.separation, s.spread, s.patients_per_class,
                             self.seed if s.seed is None else s.seed)

    def make_schedule(self):
        return make_schedule(self.schedule.T, self.schedule.beta_min, self.schedule.beta_max)

    def timestep_range(self) -> TimestepRange:
        hi = self.schedule.T if self.train.t_hi is None else self.train.t_hi
        return TimestepRange(self.train.t_lo, hi).validate(self.schedule.T)

    def contrastive(self) -> ContrastiveConfig:
        t = self.train
        return ContrastiveConfig(t.epochs, t.lr, t.batch_size, t.margin, t.balanced)

    def encoder(self) -> EncoderConfig:
        t = self.train
        return EncoderConfig(t.temb_dim, tuple(t.hidden), t.embed_dim, t.normalize)

    def dae(self) -> DaeConfig:
        t = self.train
        return DaeConfig(t.epochs, t.lr, t.batch_size, t.temb_dim, tuple(t.hidden))

    def gaussian(self) -> GaussianAugConfig:
        return GaussianAugConfig(self.train.sigma)

    # --- validation / resolution --------------------------------------
    def resolved(self) -> "RunConfig":
        """Copy with run-seed defaults and the timestep range filled in, validated."""
        cfg = from_dict(to_dict(self))
        if cfg.data.synthetic.seed is None:
            cfg.data.synthetic.seed = cfg.seed
        if cfg.split.seed is None:
            cfg.split.seed = cfg.seed
        if cfg.train.t_hi is None:
            cfg.train.t_hi = cfg.schedule.T
        cfg.validate()
        return cfg

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.data.path is None:
            self.synthetic_spec().validate()
        if not 0.0 < self.split.fraction < 1.0:
            raise ConfigError(f"split.fraction must be in (0, 1), got {self.split.fraction}")
        v = self.vae
        if v.latent_dim < 1 or v.epochs < 1 or v.batch_size < 1 or v.lr <= 0 or v.kl_weight < 0:
            raise ConfigError("vae: latent_dim, epochs, batch_size must be >= 1, lr > 0, kl_weight >= 0")
        if any(h < 1 for h in v.hidden):
            raise ConfigError("vae.hidden widths must be >= 1")
        self.make_schedule()
        self.timestep_range()
        self.contrastive().validate()
        self.gaussian().validate()
        t = self.train
        if t.temb_dim < 2 or t.temb_dim % 2:
            raise ConfigError(f"train.temb_dim must be even and >= 2, got {t.temb_dim}")
        if t.embed_dim < 1 or any(h < 1 for h in t.hidden):
            raise ConfigError("train.embed_dim and train.hidden widths must be >= 1")
        p = self.probe
        if p.epochs < 1 or p.batch_size < 1 or p.lr <= 0:
            raise ConfigError("probe: epochs, batch_size must be >= 1 and lr > 0")
        return self


def to_dict(obj) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(obj)))


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(f'{where}{k}' for k in unknown))}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}{name}.")
        elif isinstance(current, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{where}{name}: expected a list")
            kwargs[name] = tuple(value)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}{name}: expected true/false, got {value!r}")
            kwargs[name] = value
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}{name}: expected a number, got {value!r}")
            kwargs[name] = float(value)
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where}{name}: expected an integer, got {value!r}")
            kwargs[name] = value
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def apply_override(data: dict, dotted: str, value: Any) -> dict:
    node = data
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted}: {k} is not a section")
    node[keys[-1]] = value
    return data


def parse_override(item: str) -> tuple[str, Any]:
    """``key.path=value`` where value is JSON, falling back to a bare string."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    for key, value in (overrides or {}).items():
        apply_override(data, key, value)
    return from_dict(data).resolved()


def _file_digest(path: str) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return "missing"


def _digest(payload: Any) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that affects results; the output directory is excluded."""
    d = to_dict(cfg)
    d.pop("output_dir")
    if cfg.data.path is not None:
        d["data"]["file_sha256"] = _file_digest(cfg.data.path)
        d["data"]["path"] = Path(cfg.data.path).name
    return _digest(d)


def phase1_hash(cfg: RunConfig) -> str:
    """Hash of the inputs that determine the VAE and the split."""
    d = to_dict(cfg)
    payload = {"data": d["data"], "split": d["split"], "vae": d["vae"], "seed": d["seed"]}
    if cfg.data.path is not None:
        payload["data"] = {"file_sha256": _file_digest(cfg.data.path)}
    return _digest(payload)
