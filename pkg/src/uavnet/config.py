"""Experiment configuration: nested dataclasses loaded from YAML.

Every section is optional in the file; missing keys take the defaults
below. Unknown keys anywhere are an error.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .channel import ChannelParams, db_to_linear, dbm_to_watt
from .dynamics import KinematicLimits, PropulsionConstants
from .scenario import (CylindricalObstacle, RectangularObstacle, Scenario, UserDevice,
                       Workspace)


class ConfigError(ValueError):
    pass


@dataclass
class WorkspaceConfig:
    x_max: float = 500.0
    y_max: float = 500.0
    h_min: float = 100.0
    h_max: float = 150.0


@dataclass
class ObstacleConfig:
    kind: str = "cylinder"
    center: list = field(default_factory=lambda: [0.0, 0.0])
    radius: Optional[float] = None
    half_extents: Optional[list] = None
    height: float = 120.0
    name: str = ""


@dataclass
class UserConfig:
    position: list = field(default_factory=lambda: [0.0, 0.0])
    urgency_per_mbps: Optional[float] = None
    target_mbps: Optional[float] = None


def _default_obstacles():
    return [
        ObstacleConfig("cylinder", [130.0, 370.0], radius=35.0),
        ObstacleConfig("rectangle", [360.0, 140.0], half_extents=[45.0, 30.0]),
        ObstacleConfig("rectangle", [330.0, 360.0], half_extents=[30.0, 50.0]),
    ]


@dataclass
class ScenarioConfig:
    workspace: WorkspaceConfig = field(default_factory=WorkspaceConfig)
    obstacles: list = field(default_factory=_default_obstacles)
    users: list = field(default_factory=list)
    n_users: int = 30
    user_seed: int = 2018


@dataclass
class UavConfig:
    count: int = 3
    capacity: int = 10
    array_rows: int = 4
    array_cols: int = 4
    power_budget: float = 1.0
    initial_energy: float = 20000.0
    v_max: float = 20.0
    a_max: float = 5.0
    d_min: float = 3.0
    init_altitude: list = field(default_factory=lambda: [100.0, 150.0])


@dataclass
class PropulsionConfig:
    P0: float = 59.03
    P1: float = 79.07
    U_tip: float = 120.0
    v0: float = 3.6
    d0: float = 0.6
    rho0: float = 1.225
    g0: float = 0.05
    A1: float = 0.5030


@dataclass
class ChannelConfig:
    ref_gain_db: float = -30.0
    path_loss_exp: float = 2.2
    rician_factor: float = 10.0
    pure_los: bool = False
    carrier_hz: float = 2.4e9
    spacing_ratio: float = 0.5
    noise_dbm: float = -65.0
    bandwidth: float = 1e6


@dataclass
class TierConfig:
    urgency_per_mbps: float = 1.0
    target_mbps: float = 2.0
    weight: float = 1.0


def _default_tiers():
    return [TierConfig(0.5, 1.0), TierConfig(1.0, 2.0), TierConfig(2.0, 4.0)]


@dataclass
class SatisfactionConfig:
    shaping: float = 8.0
    tiers: list = field(default_factory=_default_tiers)
    resample_each_slot: bool = False


@dataclass
class RewardConfig:
    kappa1: float = 0.01
    kappa2: float = 0.01
    kappa3: float = 0.01
    kappa4: float = 1.0
    kappa5: float = 0.1
    kappa6: float = 0.1
    d_safe_cyl: float = 10.0
    d_safe_rect: list = field(default_factory=lambda: [10.0, 10.0])


@dataclass
class MdpConfig:
    dt: float = 1.0
    horizon: int = 200
    strict_capacity: bool = True
    beamforming: str = "water-filling"
    eq23_literal: bool = False
    obs_clip: float = 10.0


@dataclass
class PPOConfig:
    episodes: int = 1000
    update_every_episodes: int = 10
    buffer_capacity: int = 50000
    lr: float = 5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 10
    batch_size: int = 256
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    # stop the epoch loop once a minibatch's approximate KL exceeds 1.5 * target_kl
    target_kl: Optional[float] = None
    hidden: list = field(default_factory=lambda: [256, 128])
    log_std_init: float = 0.0
    # gain of the actor's last layer; 0 starts from zero-mean commands and uniform logits
    actor_out_gain: float = 0.01
    reward_scale: float = 1.0
    normalize_obs: bool = False
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class ExperimentConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    uav: UavConfig = field(default_factory=UavConfig)
    propulsion: PropulsionConfig = field(default_factory=PropulsionConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    satisfaction: SatisfactionConfig = field(default_factory=SatisfactionConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    mdp: MdpConfig = field(default_factory=MdpConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    output_dir: str = "runs"
    baseline: str = "fixed-uav"

    def __post_init__(self):
        validate(self)

    # -- derived objects -------------------------------------------------
    def workspace(self) -> Workspace:
        w = self.scenario.workspace
        return Workspace(w.x_max, w.y_max, w.h_min, w.h_max)

    def propulsion_constants(self) -> PropulsionConstants:
        return PropulsionConstants(**dataclasses.asdict(self.propulsion))

    def limits(self) -> KinematicLimits:
        return KinematicLimits(self.uav.v_max, self.uav.a_max, self.uav.d_min, self.mdp.dt)

    def channel_params(self) -> ChannelParams:
        c = self.channel
        return ChannelParams(
            ref_gain=db_to_linear(c.ref_gain_db),
            path_loss_exp=c.path_loss_exp,
            rician_factor=float("inf") if c.pure_los else c.rician_factor,
            carrier_hz=c.carrier_hz,
            spacing_ratio=c.spacing_ratio,
            noise_power=dbm_to_watt(c.noise_dbm),
            bandwidth=c.bandwidth,
        )

    def build_scenario(self) -> Scenario:
        """Scenario with users at configured or seeded-uniform positions.

        Urgency tiers are assigned per episode by the environment; explicit
        per-user values in the file are kept as given.
        """
        cyl, rect = [], []
        for o in self.scenario.obstacles:
            if o.kind == "cylinder":
                cyl.append(CylindricalObstacle(tuple(o.center), o.radius, o.height, o.name))
            else:
                rect.append(RectangularObstacle(tuple(o.center), tuple(o.half_extents), o.height, o.name))
        ws = self.workspace()
        if self.scenario.users:
            positions = [u.position for u in self.scenario.users]
        else:
            rng = np.random.default_rng(self.scenario.user_seed)
            positions = rng.uniform([0.0, 0.0], [ws.x_max, ws.y_max], size=(self.scenario.n_users, 2))
        tier = self.satisfaction.tiers[0]
        users = [UserDevice(tuple(p), tier.urgency_per_mbps * 1e-6, tier.target_mbps * 1e6)
                 for p in positions]
        return Scenario(ws, tuple(cyl), tuple(rect), tuple(users))

    @property
    def n_users(self) -> int:
        return len(self.scenario.users) if self.scenario.users else self.scenario.n_users

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def validate(cfg: ExperimentConfig) -> None:
    errors = []
    w = cfg.scenario.workspace
    if not (w.x_max > 0 and w.y_max > 0 and 0 < w.h_min < w.h_max):
        errors.append("workspace needs positive extents and 0 < h_min < h_max")
    for i, o in enumerate(cfg.scenario.obstacles):
        if o.kind not in ("cylinder", "rectangle"):
            errors.append(f"obstacle {i}: unknown kind {o.kind!r}")
        elif o.kind == "cylinder" and not (o.radius and o.radius > 0):
            errors.append(f"obstacle {i}: cylinder needs a positive radius")
        elif o.kind == "rectangle" and not (o.half_extents and len(o.half_extents) == 2
                                            and min(o.half_extents) > 0):
            errors.append(f"obstacle {i}: rectangle needs two positive half extents")
        if not (w.h_min < o.height < w.h_max):
            errors.append(f"obstacle {i}: height must lie strictly between h_min and h_max")
    u = cfg.uav
    n_ant = u.array_rows * u.array_cols
    if u.count < 1 or u.capacity < 1 or n_ant < 1:
        errors.append("need at least one UAV, capacity >= 1 and one antenna")
    if u.capacity > n_ant:
        errors.append(f"capacity {u.capacity} exceeds antenna count {n_ant}")
    n_users = len(cfg.scenario.users) if cfg.scenario.users else cfg.scenario.n_users
    if n_users < 1:
        errors.append("need at least one user")
    if cfg.mdp.strict_capacity and u.count * u.capacity < n_users:
        errors.append(f"total capacity {u.count * u.capacity} below {n_users} users")
    if not (u.power_budget > 0 and u.initial_energy > 0 and u.v_max > 0 and u.a_max > 0
            and u.d_min >= 0):
        errors.append("UAV power, energy and kinematic limits must be positive")
    lo, hi = u.init_altitude
    if not (lo <= hi):
        errors.append("init_altitude must be [low, high]")
    if not cfg.satisfaction.shaping > 7:
        errors.append("satisfaction shaping constant must exceed 7")
    if not cfg.satisfaction.tiers:
        errors.append("need at least one urgency tier")
    for t in cfg.satisfaction.tiers:
        if not (t.urgency_per_mbps > 0 and t.target_mbps > 0 and t.weight > 0):
            errors.append("urgency tiers need positive urgency, target and weight")
    if cfg.mdp.beamforming not in ("water-filling", "equal"):
        errors.append(f"unknown beamforming scheme {cfg.mdp.beamforming!r}")
    if cfg.mdp.horizon < 1 or not cfg.mdp.dt > 0:
        errors.append("horizon must be >= 1 and dt > 0")
    if cfg.baseline not in ("fixed-uav", "equal-beam", "random-policy"):
        errors.append(f"unknown baseline kind {cfg.baseline!r}")
    p = cfg.ppo
    if not (0 <= p.gamma <= 1 and 0 <= p.gae_lambda <= 1):
        errors.append("gamma and gae_lambda must lie in [0, 1]")
    if p.batch_size < 1 or p.epochs < 0 or p.update_every_episodes < 1:
        errors.append("batch_size, epochs and update_every_episodes must be positive")
    if p.update_every_episodes * cfg.mdp.horizon > p.buffer_capacity:
        errors.append("rollout (update_every_episodes * horizon) exceeds buffer capacity")
    if errors:
        raise ConfigError("; ".join(errors))


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        sub = _SUBSECTIONS.get((cls, name))
        path = f"{where}.{name}" if where else name
        if sub is None:
            kwargs[name] = value
        elif isinstance(sub, list):
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list")
            kwargs[name] = [_build(sub[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
        else:
            kwargs[name] = _build(sub, value, path)
    if cls is ExperimentConfig:
        return kwargs
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SUBSECTIONS = {
    (ExperimentConfig, "scenario"): ScenarioConfig,
    (ExperimentConfig, "uav"): UavConfig,
    (ExperimentConfig, "propulsion"): PropulsionConfig,
    (ExperimentConfig, "channel"): ChannelConfig,
    (ExperimentConfig, "satisfaction"): SatisfactionConfig,
    (ExperimentConfig, "reward"): RewardConfig,
    (ExperimentConfig, "mdp"): MdpConfig,
    (ExperimentConfig, "ppo"): PPOConfig,
    (ScenarioConfig, "workspace"): WorkspaceConfig,
    (ScenarioConfig, "obstacles"): [ObstacleConfig],
    (ScenarioConfig, "users"): [UserConfig],
    (SatisfactionConfig, "tiers"): [TierConfig],
}


def config_from_dict(data: Optional[dict]) -> ExperimentConfig:
    kwargs = _build(ExperimentConfig, data or {}, "")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open() as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig, path) -> None:
    with Path(path).open("w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def packaged_config(name: str) -> Path:
    """Path of a config shipped with the package (``default`` or ``smoke``)."""
    return Path(__file__).with_name("configs") / f"{name}.yaml"
