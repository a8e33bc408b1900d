"""Scenario configuration: a JSON file mapped onto nested dataclasses.

Unknown keys are rejected, every section is validated on construction and
relative file paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .association import BsSite, HapsSite, MuTable, StationDirectory, TelecomAction
from .channel import AntennaParams, GroundLinkParams, HapsLinkParams, PathLossParams
from .edge_env import RewardWeights
from .llm_client import LlmEndpointConfig
from .meta_controller import MetaRewardWeights
from .mobility import IdmParams, MobilityConfig, TransportAction

EDGE_POLICIES = ("safe", "random", "greedy", "tabular", "llm", "fixed")
META_POLICIES = ("rule", "idle", "llm", "none")
SWEEPABLE = ("num_uavs", "num_terrestrial_bs", "edge_policy", "meta_policy")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TabularParams:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_steps: int = 10_000
    num_bins: int = 8

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        if self.num_bins < 2:
            raise ValueError("num_bins must be >= 2")


@dataclass(frozen=True)
class ExperienceParams:
    k: int = 5
    good_threshold: float = 0.0
    store_capacity: int = 10_000
    shared_store: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.store_capacity < 1:
            raise ValueError("store_capacity must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    # fleet and highway
    num_uavs: int = 5
    num_lanes: int = 5
    v_min: float = 5.0
    v_max: float = 20.0
    highway_length_m: float = 1000.0
    lane_width_m: float = 4.0
    base_altitude_m: float = 120.0
    lane_altitude_step_m: float = 0.0
    spawn_length_m: float = 300.0
    min_spawn_gap_m: float = 25.0
    collision_length_m: float = 5.0
    speed_step_mps: float = 2.0
    dt_s: float = 1.0
    idm: IdmParams = IdmParams()

    # stations
    num_terrestrial_bs: int = 10
    bs_quota: int = 3
    bs_bandwidth_hz: float = 10e6
    bs_height_m: float = 25.0
    bs_offset_m: float = 100.0
    bs_positions: Optional[list] = None
    bs_positions_file: Optional[str] = None
    haps_quota: int = 5
    haps_capacity_mbps: float = 100.0
    haps_altitude_m: float = 20_000.0
    antenna: AntennaParams = AntennaParams()
    path_loss: PathLossParams = PathLossParams()
    ground_link: GroundLinkParams = GroundLinkParams()
    haps: HapsLinkParams = HapsLinkParams()

    # decision process
    reward: RewardWeights = RewardWeights()
    meta_reward: MetaRewardWeights = MetaRewardWeights()
    mu: MuTable = MuTable()
    meta_mu_mode: str = "penalty"
    meta_period: int = 5
    observed_uavs: int = 3
    target_rate_mbps: float = 1.0
    initial_attach: str = "T1"

    # experiment
    episode_cap: int = 30
    episodes: int = 100
    seed: int = 0
    edge_policy: str = "safe"
    meta_policy: str = "rule"
    fixed_transport: str = "IDLE"
    fixed_telecom: str = "T1"
    tabular: TabularParams = TabularParams()
    llm: LlmEndpointConfig = LlmEndpointConfig()
    experience: ExperienceParams = ExperienceParams()
    mock_llm_transcript: Optional[str] = None
    live_llm: bool = False

    def __post_init__(self):
        checks = [
            (self.num_uavs >= 1, "num_uavs >= 1"),
            (self.num_lanes >= 1, "num_lanes >= 1"),
            (self.v_min < self.v_max, "v_min < v_max"),
            (self.v_min >= 0, "v_min >= 0"),
            (self.episode_cap >= 1, "episode_cap >= 1"),
            (self.episodes >= 0, "episodes >= 0"),
            (self.num_terrestrial_bs >= 1 or self.bs_positions is not None, "num_terrestrial_bs >= 1"),
            (self.bs_quota >= 1, "bs_quota >= 1"),
            (self.haps_quota >= 1, "haps_quota >= 1"),
            (self.haps_capacity_mbps > 0, "haps_capacity_mbps > 0"),
            (self.highway_length_m > 0, "highway_length_m > 0"),
            (self.meta_period >= 0, "meta_period >= 0"),
            (self.observed_uavs >= 1, "observed_uavs >= 1"),
            (self.target_rate_mbps >= 0, "target_rate_mbps >= 0"),
            (self.edge_policy in EDGE_POLICIES, f"edge_policy in {EDGE_POLICIES}"),
            (self.meta_policy in META_POLICIES, f"meta_policy in {META_POLICIES}"),
            (self.meta_mu_mode in ("penalty", "count"), "meta_mu_mode in ('penalty', 'count')"),
            (self.fixed_transport in TransportAction.__members__, "fixed_transport is a transport action"),
            (self.fixed_telecom in TelecomAction.__members__, "fixed_telecom is a telecom action"),
            (self.initial_attach in TelecomAction.__members__, "initial_attach is a telecom action"),
            (self.min_spawn_gap_m > self.collision_length_m, "min_spawn_gap_m > collision_length_m"),
        ]
        for ok, rule in checks:
            if not ok:
                raise ConfigError(f"invalid config: requires {rule}")
        for name in ("bs_positions_file", "mock_llm_transcript"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"invalid config: {name} {path!r} does not exist")

    @property
    def gbs_carrier_hz(self) -> float:
        return self.path_loss.carrier_hz

    @property
    def initial_attach_action(self) -> TelecomAction:
        return TelecomAction[self.initial_attach]

    def mobility_config(self) -> MobilityConfig:
        return MobilityConfig(
            num_lanes=self.num_lanes, v_min=self.v_min, v_max=self.v_max, dt=self.dt_s,
            speed_step_mps=self.speed_step_mps, lane_width_m=self.lane_width_m,
            base_altitude_m=self.base_altitude_m, lane_altitude_step_m=self.lane_altitude_step_m,
            collision_length_m=self.collision_length_m, idm=self.idm)

    def bs_layout(self) -> list:
        """(x, y) of each terrestrial BS.

        Default: evenly spaced along the highway, alternating sides at
        ``bs_offset_m`` from the centre line of the lane block.
        """
        if self.bs_positions is not None:
            return [tuple(map(float, p)) for p in self.bs_positions]
        if self.bs_positions_file is not None:
            return [tuple(map(float, p)) for p in json.loads(Path(self.bs_positions_file).read_text())]
        centre = (self.num_lanes - 1) * self.lane_width_m / 2.0
        n = self.num_terrestrial_bs
        spacing = self.highway_length_m / n
        return [((k + 0.5) * spacing, centre + (self.bs_offset_m if k % 2 == 0 else -self.bs_offset_m))
                for k in range(n)]

    def build_directory(self) -> StationDirectory:
        centre = (self.num_lanes - 1) * self.lane_width_m / 2.0
        sites = [
            BsSite(station_id=k, x_m=x, y_m=y, height_m=self.bs_height_m, quota=self.bs_quota,
                   bandwidth_hz=self.bs_bandwidth_hz,
                   # Alternate sector orientation so a sector faces the highway.
                   sector_azimuth_rad=math.pi / 2.0 if y < centre else -math.pi / 2.0,
                   antenna=self.antenna)
            for k, (x, y) in enumerate(self.bs_layout())
        ]
        haps = HapsSite(station_id=len(sites), x_m=self.highway_length_m / 2.0, y_m=centre,
                        altitude_m=self.haps_altitude_m, quota=self.haps_quota, link=self.haps)
        return StationDirectory(sites, haps)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "idm": IdmParams,
    "antenna": AntennaParams,
    "path_loss": PathLossParams,
    "ground_link": GroundLinkParams,
    "haps": HapsLinkParams,
    "reward": RewardWeights,
    "meta_reward": MetaRewardWeights,
    "mu": MuTable,
    "tabular": TabularParams,
    "llm": LlmEndpointConfig,
    "experience": ExperienceParams,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is ScenarioConfig and key in _SECTIONS:
            value = _build(_SECTIONS[key], value, key)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(data: dict, base_dir: Optional[Path] = None) -> ScenarioConfig:
    data = dict(data)
    if base_dir is not None:
        for key in ("bs_positions_file", "mock_llm_transcript"):
            if data.get(key) is not None:
                data[key] = str((Path(base_dir) / data[key]).resolve())
    return _build(ScenarioConfig, data, "")


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    data.pop("$comment", None)
    return config_from_dict(data, path.parent)


def packaged_scenario(name: str) -> Path:
    ref = resources.files("uavhighway") / "scenarios" / f"{name}.json"
    return Path(str(ref))


def with_overrides(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    try:
        return dataclasses.replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

