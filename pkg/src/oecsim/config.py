"""Scenario configuration: dataclasses, YAML loading and validation."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .broker import DeploymentKind, SchedulingPolicy
from .network import LatencyModel, TierParams
from .nodes import ChurnProcess, ServiceProfile
from .workload import TaskSpec


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class LatencyConfig:
    intra_zone_mean_ms: float = 5.0
    intra_zone_spread_ms: float = 2.0
    inter_zone_mean_ms: float = 10.0
    inter_zone_spread_ms: float = 3.0
    cloud_mean_ms: float = 50.0
    cloud_spread_ms: float = 6.0
    # how the *_spread_ms values are read: "stddev" or "variance"
    spread_is: str = "stddev"
    bandwidth_bytes_per_s: float = math.inf

    def model(self) -> LatencyModel:
        return LatencyModel(
            TierParams(self.intra_zone_mean_ms, self.intra_zone_spread_ms),
            TierParams(self.inter_zone_mean_ms, self.inter_zone_spread_ms),
            TierParams(self.cloud_mean_ms, self.cloud_spread_ms),
            self.spread_is,
        )


@dataclass
class ChurnConfig:
    enabled: bool = True
    mean_uptime_s: float = 60.0
    mean_downtime_s: float = 10.0

    def process(self) -> ChurnProcess:
        return ChurnProcess(self.mean_uptime_s, self.mean_downtime_s)


@dataclass
class ServiceConfig:
    solve_time_ms: float = 2.0
    factorization_time_ms: float = 8.0

    def profile(self, servers: int | None = 1) -> ServiceProfile:
        return ServiceProfile(self.solve_time_ms, self.factorization_time_ms, servers)


@dataclass
class TaskConfig:
    n: int = 147
    nnz: int = 1294

    def spec(self) -> TaskSpec:
        return TaskSpec(self.n, self.nnz)


@dataclass
class EconomicsConfig:
    base_rate: float = 1.0  # currency per minute
    base_floor: float = 1.0
    floor_alpha: float = 0.5
    lease_duration_s: float = 30.0
    gates_supply: bool = False
    reserve_price: float = 0.0


@dataclass
class ScenarioConfig:
    deployment: DeploymentKind = DeploymentKind.OEC_CLOUD
    zones: int = 2
    devices_per_zone: int = 10
    fogs_per_zone: int = 1
    oec_participants_per_zone: int = 3
    arrival_rate_per_s: float = 2.0
    horizon_s: float = 60.0
    runs: int = 100
    master_seed: int = 1
    policy: SchedulingPolicy = SchedulingPolicy.NEAREST_TIER_FIRST
    monitor_interval_s: float = 1.0
    latency: LatencyConfig = field(default_factory=LatencyConfig)
    churn: ChurnConfig = field(default_factory=ChurnConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    economics: EconomicsConfig = field(default_factory=EconomicsConfig)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @property
    def effective_policy(self) -> SchedulingPolicy:
        if self.deployment is DeploymentKind.CLOUD_ONLY:
            return SchedulingPolicy.CLOUD_ONLY
        return self.policy

    def validate(self) -> "ScenarioConfig":
        for name in ("zones", "devices_per_zone", "fogs_per_zone", "oec_participants_per_zone"):
            _int_at_least(name, getattr(self, name), 0)
        _int_at_least("runs", self.runs, 1)
        _int_at_least("master_seed", self.master_seed, 0)
        if self.master_seed >= 2**64:
            raise ConfigError("master_seed", "must fit in 64 bits")
        _positive("horizon_s", self.horizon_s)
        _positive("monitor_interval_s", self.monitor_interval_s)
        _finite_at_least("arrival_rate_per_s", self.arrival_rate_per_s, 0.0)
        if self.deployment is DeploymentKind.DEDICATED_FOGS and self.fogs_per_zone * self.zones == 0:
            raise ConfigError("fogs_per_zone", "the fog deployment needs at least one fog")
        if self.deployment is DeploymentKind.OEC_CLOUD and self.oec_participants_per_zone * self.zones == 0:
            raise ConfigError(
                "oec_participants_per_zone", "the OEC deployment needs at least one participant"
            )

        lat = self.latency
        for tier in ("intra_zone", "inter_zone", "cloud"):
            _positive(f"latency.{tier}_mean_ms", getattr(lat, f"{tier}_mean_ms"))
            _finite_at_least(f"latency.{tier}_spread_ms", getattr(lat, f"{tier}_spread_ms"), 0.0)
        if lat.spread_is not in ("stddev", "variance"):
            raise ConfigError("latency.spread_is", "must be 'stddev' or 'variance'")
        if not _is_number(lat.bandwidth_bytes_per_s) or not lat.bandwidth_bytes_per_s > 0:
            raise ConfigError("latency.bandwidth_bytes_per_s", "must be positive")

        if not isinstance(self.churn.enabled, bool):
            raise ConfigError("churn.enabled", "must be a boolean")
        _positive("churn.mean_uptime_s", self.churn.mean_uptime_s)
        _positive("churn.mean_downtime_s", self.churn.mean_downtime_s)
        _positive("service.solve_time_ms", self.service.solve_time_ms)
        _positive("service.factorization_time_ms", self.service.factorization_time_ms)
        _int_at_least("task.n", self.task.n, 1)
        _int_at_least("task.nnz", self.task.nnz, 0)
        if self.task.nnz > self.task.n**2:
            raise ConfigError("task.nnz", "cannot exceed n*n")

        eco = self.economics
        _positive("economics.base_rate", eco.base_rate)
        _finite_at_least("economics.base_floor", eco.base_floor, 0.0)
        if not (isinstance(eco.floor_alpha, (int, float)) and 0 < eco.floor_alpha <= 1):
            raise ConfigError("economics.floor_alpha", "must lie in (0, 1]")
        _positive("economics.lease_duration_s", eco.lease_duration_s)
        if not isinstance(eco.gates_supply, bool):
            raise ConfigError("economics.gates_supply", "must be a boolean")
        _finite_at_least("economics.reserve_price", eco.reserve_price, 0.0)
        return self

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, enum.Enum):
                return v.value
            return v

        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                out[f.name] = {g.name: conv(getattr(v, g.name)) for g in dataclasses.fields(v)}
            else:
                out[f.name] = conv(v)
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _int_at_least(name: str, value, low: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < low:
        raise ConfigError(name, f"must be >= {low}")


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive(name: str, value) -> None:
    if not _is_number(value) or not math.isfinite(value) or value <= 0:
        raise ConfigError(name, f"must be a positive finite number, got {value!r}")


def _finite_at_least(name: str, value, low: float) -> None:
    if not _is_number(value) or not math.isfinite(value) or value < low:
        raise ConfigError(name, f"must be a finite number >= {low}, got {value!r}")


_SECTIONS = {
    "latency": LatencyConfig,
    "churn": ChurnConfig,
    "service": ServiceConfig,
    "task": TaskConfig,
    "economics": EconomicsConfig,
}


def _coerce(name: str, value, default):
    if isinstance(default, enum.Enum):
        try:
            return type(default)(value)
        except ValueError:
            choices = ", ".join(m.value for m in type(default))
            raise ConfigError(name, f"unknown value {value!r} (choose from {choices})") from None
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a mapping")
    template = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(name, "unknown field")
        if key in _SECTIONS and cls is ScenarioConfig:
            kwargs[key] = _build(_SECTIONS[key], value or {}, f"{key}.")
        else:
            kwargs[key] = _coerce(name, value, getattr(template, key))
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> ScenarioConfig:
    return _build(ScenarioConfig, data or {}).validate()


def load_config(path) -> ScenarioConfig:
    """Read a YAML scenario file. Raises ConfigError on bad content, OSError on IO."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return config_from_dict(data)
