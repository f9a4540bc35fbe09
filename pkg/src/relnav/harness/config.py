"""Run configuration: dataclasses, YAML load/dump, and a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from relnav.att_observer import AttConfig
from relnav.pv_observer import RiccatiConfig
from relnav.sensors import NoiseSpec
from relnav.truthsim import SCENARIOS


class ConfigError(ValueError):
    pass


@dataclass
class AttitudeSection:
    k_R: float = 1.5
    # "estimate" runs the filter; "truth" feeds the true attitude to the
    # position/velocity observer (used by the error-system self-test)
    source: str = "estimate"


@dataclass
class RiccatiSection:
    mode: str = "auto"
    P0: float = 2.0
    D: float = 10.0
    s_xi: float = 0.05
    s_v: float = 0.05
    s_theta: float = 0.05
    gamma_floor: float = 0.01


@dataclass
class NoiseSection:
    gyro_std: float = 0.0
    accel_std: float = 0.0
    bearing_cone_std_deg: float = 0.0
    normal_cone_std_deg: float = 0.0
    vision_decimation: int = 1


@dataclass
class InitialEstimateSection:
    attitude_mean_deg: float = 45.0
    attitude_std_deg: float = 30.0
    xi_mean: list[float] = field(default_factory=lambda: [-4.5, -5.0, 6.0])
    xi_std: float = 3.0
    v_mean: list[float] = field(default_factory=lambda: [1.0, -1.5, 0.5])
    v_std: float = 1.0


@dataclass
class TruthSection:
    p_B: list[float] = field(default_factory=lambda: [0.0, 0.0, 8.0])
    v_B_body: list[float] = field(default_factory=lambda: [2.0, 0.0, 0.0])
    p_T: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    # None: (1, 0, 0) for the coupled scenario, zero otherwise
    v_T_body: list[float] | None = None
    Q_B_rotvec_deg: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    Q_T_rotvec_deg: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class RunConfig:
    scenario: str = "cascade"
    horizon_s: float = 30.0
    dt: float = 1e-3
    seed: int = 0
    decimation: int = 10
    attitude: AttitudeSection = field(default_factory=AttitudeSection)
    riccati: RiccatiSection = field(default_factory=RiccatiSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    initial_estimate: InitialEstimateSection = field(default_factory=InitialEstimateSection)
    truth: TruthSection = field(default_factory=TruthSection)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {sorted(SCENARIOS)}")
        if not self.horizon_s > 0:
            raise ConfigError("horizon_s must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.decimation < 1 or self.noise.vision_decimation < 1:
            raise ConfigError("decimation factors must be >= 1")
        if self.attitude.source not in ("estimate", "truth"):
            raise ConfigError("attitude.source must be 'estimate' or 'truth'")
        if self.riccati.mode not in ("auto", "cascade6", "coupled7"):
            raise ConfigError("riccati.mode must be auto, cascade6 or coupled7")
        for name in ("xi_mean", "v_mean"):
            if len(getattr(self.initial_estimate, name)) != 3:
                raise ConfigError(f"initial_estimate.{name} needs 3 components")
        # the component configs carry their own checks
        try:
            self.att_config()
            self.riccati_config()
            self.noise_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_s / self.dt))

    @property
    def observer_mode(self) -> str:
        if self.riccati.mode != "auto":
            return self.riccati.mode
        return "coupled7" if self.scenario == "coupled" else "cascade6"

    @property
    def v_T_body(self) -> list[float]:
        if self.truth.v_T_body is not None:
            return list(self.truth.v_T_body)
        return [1.0, 0.0, 0.0] if self.scenario == "coupled" else [0.0, 0.0, 0.0]

    def att_config(self) -> AttConfig:
        return AttConfig(k_R=self.attitude.k_R)

    def riccati_config(self) -> RiccatiConfig:
        r = self.riccati
        return RiccatiConfig(
            mode=self.observer_mode,
            D=r.D * np.eye(3),
            s_xi=r.s_xi,
            s_v=r.s_v,
            s_theta=r.s_theta,
            gamma_floor=r.gamma_floor,
            P0_scale=r.P0,
        )

    def noise_spec(self) -> NoiseSpec:
        n = self.noise
        return NoiseSpec(n.gyro_std, n.accel_std, n.bearing_cone_std_deg, n.normal_cone_std_deg)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> RunConfig:
        """Copy with top-level fields or ``section__field`` keys changed."""
        d = self.to_dict()
        for key, value in changes.items():
            if "__" in key:
                section, name = key.split("__", 1)
                d[section][name] = value
            else:
                d[key] = value
        return from_dict(d)


def _build(cls, data: dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _SECTIONS.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip(".")) if sub else value
    return cls(**kwargs)


_SECTIONS = {
    (RunConfig, "attitude"): AttitudeSection,
    (RunConfig, "riccati"): RiccatiSection,
    (RunConfig, "noise"): NoiseSection,
    (RunConfig, "initial_estimate"): InitialEstimateSection,
    (RunConfig, "truth"): TruthSection,
}


def from_dict(data: dict[str, Any]) -> RunConfig:
    try:
        return _build(RunConfig, data, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def default_config(scenario: str = "cascade") -> RunConfig:
    cfg = RunConfig(scenario=scenario)
    cfg.truth.v_T_body = cfg.v_T_body
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def dump_config(cfg: RunConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
    if path is not None:
        Path(path).write_text(text)
    return text
