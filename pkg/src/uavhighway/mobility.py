"""UAV kinematics on a multi-lane aerial highway.

Longitudinal motion follows the intelligent driver model (IDM) when a UAV
keeps its lane; FASTER/SLOWER are discrete speed commands and lane changes
complete within one step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional


class TransportAction(enum.IntEnum):
    LANE_LEFT = 0
    IDLE = 1
    LANE_RIGHT = 2
    FASTER = 3
    SLOWER = 4


@dataclass(frozen=True)
class IdmParams:
    desired_speed_mps: float = 20.0
    safe_time_headway_s: float = 1.5
    max_accel_mps2: float = 3.0
    comfortable_decel_mps2: float = 3.0
    min_gap_m: float = 2.0
    accel_exponent: float = 4.0

    def __post_init__(self):
        for name in ("desired_speed_mps", "safe_time_headway_s", "max_accel_mps2",
                     "comfortable_decel_mps2", "min_gap_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.accel_exponent < 1:
            raise ValueError("accel_exponent must be >= 1")


@dataclass(frozen=True)
class MobilityConfig:
    num_lanes: int = 5
    v_min: float = 5.0
    v_max: float = 20.0
    dt: float = 1.0
    speed_step_mps: float = 2.0
    lane_width_m: float = 4.0
    base_altitude_m: float = 120.0
    lane_altitude_step_m: float = 0.0
    collision_length_m: float = 5.0
    idm: IdmParams = IdmParams()

    def __post_init__(self):
        if self.num_lanes < 1:
            raise ValueError("num_lanes must be >= 1")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def lane_altitude(self, lane: int) -> float:
        return self.base_altitude_m + lane * self.lane_altitude_step_m

    def lane_offset(self, lane: int) -> float:
        return lane * self.lane_width_m


@dataclass(frozen=True)
class UavState:
    uav_id: int
    x_m: float
    lane_index: int
    altitude_m: float
    speed_mps: float
    heading_rad: float = 0.0
    lateral_speed_mps: float = 0.0
    lane_changes_total: int = 0
    serving_station: Optional[int] = None
    steps_elapsed: int = 0
    handovers_total: int = 0
    # Lane left during this step's lane change; None otherwise.
    prev_lane_index: Optional[int] = None
    rejected_maneuvers: int = 0


def idm_acceleration(v: float, delta_v: float, gap: float, params: IdmParams) -> float:
    """IDM acceleration for own speed ``v``, approach rate ``delta_v`` and net gap.

    Pass ``gap=math.inf`` (and ``delta_v=0``) when there is no leader.
    """
    if gap <= 0:
        raise ValueError(f"non-positive gap {gap}: vehicles overlap")
    a, b = params.max_accel_mps2, params.comfortable_decel_mps2
    free = (v / params.desired_speed_mps) ** params.accel_exponent
    if math.isinf(gap):
        return a * (1.0 - free)
    s_star = desired_gap(v, delta_v, params)
    return a * (1.0 - free - (s_star / gap) ** 2)


def desired_gap(v: float, delta_v: float, params: IdmParams) -> float:
    a, b = params.max_accel_mps2, params.comfortable_decel_mps2
    return params.min_gap_m + v * params.safe_time_headway_s + v * delta_v / (2.0 * math.sqrt(a * b))


def find_leader(state: UavState, fleet) -> Optional[UavState]:
    """Nearest UAV strictly ahead in the same lane; ties broken by id."""
    best = None
    for other in fleet:
        if other.uav_id == state.uav_id or other.lane_index != state.lane_index:
            continue
        if other.x_m <= state.x_m and not (other.x_m == state.x_m and other.uav_id > state.uav_id):
            continue
        if best is None or (other.x_m, other.uav_id) < (best.x_m, best.uav_id):
            best = other
    return best


def leader_gap(state: UavState, leader: Optional[UavState], cfg: MobilityConfig):
    """Return (net gap, approach rate) to ``leader``; (inf, 0) without one."""
    if leader is None:
        return math.inf, 0.0
    gap = leader.x_m - state.x_m - cfg.collision_length_m
    return gap, state.speed_mps - leader.speed_mps


def apply_transport_action(state: UavState, action: TransportAction, cfg: MobilityConfig,
                           leader: Optional[UavState] = None) -> UavState:
    """Advance one UAV by one step under ``action``.

    ``leader`` is only consulted for IDLE. A lane change off the highway edge
    degrades to IDLE and is counted in ``rejected_maneuvers``.
    """
    action = TransportAction(action)
    lane = state.lane_index
    v = state.speed_mps
    lane_changes = state.lane_changes_total
    rejected = state.rejected_maneuvers
    lateral = 0.0
    prev_lane = None

    if action in (TransportAction.LANE_LEFT, TransportAction.LANE_RIGHT):
        target = lane - 1 if action == TransportAction.LANE_LEFT else lane + 1
        if 0 <= target < cfg.num_lanes:
            prev_lane = lane
            lane = target
            lane_changes += 1
            lateral = cfg.lane_width_m / cfg.dt
        else:
            rejected += 1
            action = TransportAction.IDLE

    if action == TransportAction.FASTER:
        v = v + cfg.speed_step_mps
    elif action == TransportAction.SLOWER:
        v = v - cfg.speed_step_mps
    elif action == TransportAction.IDLE:
        gap, dv = leader_gap(state, leader, cfg)
        # Already overlapping: brake as hard as allowed, detection happens elsewhere.
        acc = idm_acceleration(v, dv, gap, cfg.idm) if gap > 0 else -math.inf
        v = v + acc * cfg.dt
    v = min(max(v, cfg.v_min), cfg.v_max)

    return replace(
        state,
        x_m=state.x_m + v * cfg.dt,
        lane_index=lane,
        altitude_m=cfg.lane_altitude(lane),
        speed_mps=v,
        lateral_speed_mps=lateral,
        lane_changes_total=lane_changes,
        prev_lane_index=prev_lane,
        rejected_maneuvers=rejected,
    )


def occupied_lanes(state: UavState) -> frozenset:
    if state.prev_lane_index is None:
        return frozenset((state.lane_index,))
    return frozenset((state.lane_index, state.prev_lane_index))


def detect_collisions(states, cfg: MobilityConfig) -> set:
    """Pairs ``(id_a, id_b)`` with ``id_a < id_b`` sharing a lane within the collision length.

    A UAV mid-lane-change occupies both its source and target lanes.
    """
    states = list(states)
    pairs = set()
    for i, a in enumerate(states):
        lanes_a = occupied_lanes(a)
        for b in states[i + 1:]:
            if a.uav_id == b.uav_id:
                continue
            if lanes_a.isdisjoint(occupied_lanes(b)):
                continue
            if abs(a.x_m - b.x_m) < cfg.collision_length_m:
                pairs.add((min(a.uav_id, b.uav_id), max(a.uav_id, b.uav_id)))
    return pairs
