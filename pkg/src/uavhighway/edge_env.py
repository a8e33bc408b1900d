"""Per-step multi-UAV environment.

Each step applies transport actions, refreshes every radio link, resolves
telecom actions station by station, checks collisions and scores both the
transport and the telecom objective. The HAPS meta-controller hooks in via
:meth:`EdgeEnv.meta_state` and :meth:`EdgeEnv.apply_meta_action`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import channel as ch
from .association import (
    HandoverKind,
    LinkReport,
    StationDirectory,
    TelecomAction,
    annotate_weighted_rates,
    apply_association,
    detach,
    handover_penalty,
    handover_ratio,
    select_station,
    weighted_rate,
)
from .meta_controller import (
    Link,
    MetaAction,
    MetaKind,
    MetaState,
    MetaTransition,
    MetaUav,
    compute_haps_load,
    meta_reward,
)
from .mobility import (
    TransportAction,
    UavState,
    apply_transport_action,
    detect_collisions,
    find_leader,
)

log = logging.getLogger(__name__)

MBPS = 1e6


@dataclass(frozen=True)
class RewardWeights:
    """Transport (w1..w3) and telecom (w4) reward weights.

    Safety (w2) and connectivity (w4) are meant to dominate. w4 applies to
    the weighted rate in Mbps.
    """

    w1: float = 1.0
    w2: float = 5.0
    w3: float = 0.5
    w4: float = 0.1

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3, self.w4) < 0:
            raise ValueError("reward weights must be nonnegative")


@dataclass(frozen=True)
class ObsRow:
    uav_id: int
    x: float
    y: float
    z: float
    v: float
    psi: float
    n_r: int
    n_h: int
    vy: float = 0.0
    valid: bool = True

    def as_tuple(self):
        return (self.x, self.y, self.z, self.v, self.psi, self.n_r, self.n_h)


SENTINEL_ROW = ObsRow(uav_id=-1, x=0.0, y=0.0, z=0.0, v=0.0, psi=0.0, n_r=0, n_h=0, vy=0.0, valid=False)


@dataclass(frozen=True)
class ObservationMatrix:
    rows: tuple

    @property
    def ego(self) -> ObsRow:
        return self.rows[0]

    def to_array(self) -> np.ndarray:
        return np.array([r.as_tuple() for r in self.rows], dtype=float)


@dataclass(frozen=True)
class TelecomSummary:
    gbs_cnt: int
    haps_cnt: int
    current_station: Optional[int]
    last_mu: float = 0.0


@dataclass(frozen=True)
class DecisionContext:
    uav_id: int
    observation: ObservationMatrix
    telecom_summary: TelecomSummary
    rng_seed_slice: int = 0


@dataclass(frozen=True)
class UavOutcome:
    transport_reward: float
    telecom_reward: float
    collided: bool
    done: bool
    raw_transport_reward: float
    weighted_rate_mbps: float
    station: Optional[int]
    mu: float
    transport_cost: float
    telecom_cost: float


@dataclass(frozen=True)
class StepOutcome:
    step: int
    per_uav: dict
    collision_pairs: frozenset
    events: tuple = ()


def transport_reward_raw(uav: UavState, collided: bool, w: RewardWeights, v_min: float, v_max: float) -> float:
    if v_max <= v_min:
        raise ValueError("v_max must exceed v_min")
    chi = uav.lane_changes_total / uav.steps_elapsed if uav.steps_elapsed > 0 else 0.0
    speed_term = (uav.speed_mps - v_min) / (v_max - v_min)
    return w.w1 * speed_term - w.w2 * float(collided) - w.w3 * chi


def transport_reward(uav: UavState, collided: bool, w: RewardWeights, v_min: float, v_max: float) -> float:
    """Speed bonus minus collision and lane-change penalties, floored at zero."""
    return max(0.0, transport_reward_raw(uav, collided, w, v_min, v_max))


def telecom_reward(weighted_rate_mbps: float, xi: float, w: RewardWeights) -> float:
    if weighted_rate_mbps < 0:
        raise ValueError("weighted rate must be nonnegative")
    return w.w4 * weighted_rate_mbps * (1.0 - min(1.0, xi))


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


class EdgeEnv:
    """Multi-UAV aerial highway with terrestrial BSs and one HAPS.

    ``config`` is a :class:`uavhighway.config.ScenarioConfig`.
    """

    def __init__(self, config):
        self.config = config
        self.mobility = config.mobility_config()
        self.step_index = 0
        self.uavs: dict = {}
        self.removed: dict = {}
        self.directory: Optional[StationDirectory] = None
        self.offloaded: set = set()
        self.priorities: dict = {}
        self._radio: dict = {}
        self._haps_fading: dict = {}
        self._haps_cache: dict = {}
        self._last_wr: dict = {}
        self._last_mu: dict = {}
        self.rng = np.random.default_rng(0)

    # -- setup ------------------------------------------------------------

    def reset(self, seed) -> None:
        cfg = self.config
        self.rng = np.random.default_rng(seed)
        self.directory = cfg.build_directory()
        self.step_index = 0
        self.offloaded = set()
        self.removed = {}
        self._last_wr = {}
        self._last_mu = {}
        self.uavs = {u.uav_id: u for u in self._spawn()}
        self.priorities = {uid: int(self.rng.integers(1, 6)) for uid in sorted(self.uavs)}
        self._refresh_radio()
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            reports = self._candidates(uav)
            sid = select_station(uav, cfg.initial_attach_action, reports, self.directory, cfg.mu)
            uav, _ = apply_association(uav, sid, self.directory, step=0)
            self.uavs[uid] = uav
            self._last_wr[uid] = self._serving_wr_mbps(uav)
            self._last_mu[uid] = 0.0

    def _spawn(self) -> list:
        """Place UAVs in random lanes without overlaps, speeds uniform in [v_min, v_max]."""
        cfg = self.config
        m = self.mobility
        placed = []
        lanes = {lane: [] for lane in range(m.num_lanes)}
        for uid in range(cfg.num_uavs):
            for _ in range(1000):
                lane = int(self.rng.integers(0, m.num_lanes))
                x = float(self.rng.uniform(0.0, cfg.spawn_length_m))
                if all(abs(x - other) >= cfg.min_spawn_gap_m for other in lanes[lane]):
                    break
            else:
                raise ValueError("cannot place UAVs: spawn region too crowded")
            lanes[lane].append(x)
            v = float(self.rng.uniform(m.v_min, m.v_max))
            placed.append(UavState(uav_id=uid, x_m=x, lane_index=lane,
                                   altitude_m=m.lane_altitude(lane), speed_mps=v))
        return placed

    # -- radio ------------------------------------------------------------

    def uav_position(self, uav: UavState):
        return uav.x_m, self.mobility.lane_offset(uav.lane_index), uav.altitude_m

    def geometry_to(self, site, uav: UavState) -> ch.Geometry:
        x, y, z = self.uav_position(uav)
        dx, dy, dz = x - site.x_m, y - site.y_m, z - site.height_m
        d2 = math.hypot(dx, dy)
        d3 = math.sqrt(d2 * d2 + dz * dz)
        bearing = math.atan2(dy, dx)
        # Serve from the sector whose boresight is closest to the UAV.
        phi = min((_wrap_angle(bearing - site.sector_azimuth_rad - k * 2.0 * math.pi / 3.0)
                   for k in range(3)), key=abs)
        return ch.Geometry(azimuth_rad=phi, elevation_rad=math.atan2(dz, d2),
                           distance_3d_m=d3, distance_2d_m=d2, uav_altitude_m=z)

    def _site_arrays(self):
        sites = self.directory.terrestrial
        return (np.array([s.x_m for s in sites]), np.array([s.y_m for s in sites]),
                np.array([s.height_m for s in sites]), np.array([s.sector_azimuth_rad for s in sites]),
                np.array([s.bandwidth_hz for s in sites]))

    def _refresh_radio(self) -> None:
        """Recompute every terrestrial link and draw fresh HAPS fading.

        Vectorised over stations; matches :meth:`geometry_to` plus the
        scalar channel functions.
        """
        cfg = self.config
        self._radio = {}
        self._haps_fading = {}
        self._haps_cache = {}
        sites = self.directory.terrestrial
        if not sites:
            for uid in sorted(self.uavs):
                self._radio[uid] = []
                self._haps_fading[uid] = ch.rician_power_sample(self.rng, self.directory.haps.link.rician_k)
            return
        sx, sy, sh, saz, sbw = self._site_arrays()
        antennas = {s.antenna for s in sites}
        noise = 10.0 ** (cfg.ground_link.noise_power_dbm / 10.0)
        sectors = np.arange(3)[:, None] * 2.0 * math.pi / 3.0
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            x, y, z = self.uav_position(uav)
            dx, dy, dz = x - sx, y - sy, z - sh
            d2 = np.hypot(dx, dy)
            d3 = np.sqrt(d2 * d2 + dz * dz)
            cand = np.mod(np.arctan2(dy, dx) - saz - sectors + math.pi, 2.0 * math.pi) - math.pi
            phi = cand[np.argmin(np.abs(cand), axis=0), np.arange(len(sites))]
            zeta = np.arctan2(dz, d2)
            if len(antennas) == 1:
                ant = sites[0].antenna
                gains = ch.element_gain(zeta, phi, ant) + ch.array_factor_db(zeta, ant)
            else:
                gains = np.array([float(ch.element_gain(zeta[k], phi[k], s.antenna)
                                        + ch.array_factor_db(zeta[k], s.antenna)) for k, s in enumerate(sites)])
            p_los = np.array([ch.los_probability_hd(z, d) for d in d2])
            fspl = ch.free_space_path_loss_db(d3, cfg.path_loss.carrier_hz)
            losses = fspl + p_los * cfg.path_loss.excess_loss_los_db + (1.0 - p_los) * cfg.path_loss.excess_loss_nlos_db
            powers = cfg.ground_link.tx_power_dbm + gains - losses
            lin = 10.0 ** (powers / 10.0)
            total = float(lin.sum())
            sinrs = lin / (total - lin + noise)
            rates = sbw * np.log2(1.0 + sinrs)
            self._radio[uid] = [
                LinkReport(station_id=site.station_id, uav_id=uid, step=self.step_index, is_haps=False,
                           gain_db=float(gains[k]), path_loss_db=float(losses[k]), rx_power_dbm=float(powers[k]),
                           sinr=float(sinrs[k]), rate_bps=float(rates[k]),
                           in_range=bool(powers[k] >= cfg.ground_link.rx_power_min_dbm))
                for k, site in enumerate(sites)
            ]
            self._haps_fading[uid] = ch.rician_power_sample(self.rng, self.directory.haps.link.rician_k)

    def haps_report(self, uav: UavState, load: Optional[int] = None) -> LinkReport:
        """HAPS link for ``uav``; bandwidth is split as 1/max(quota, load)."""
        haps = self.directory.haps
        if load is None:
            load = self.directory.candidate_load(haps.station_id, uav)
        key = (uav.uav_id, uav.x_m, uav.lane_index, uav.altitude_m, load)
        cached = self._haps_cache.get(key)
        if cached is not None:
            return cached
        link = haps.link
        x, y, z = self.uav_position(uav)
        d = math.sqrt((x - haps.x_m) ** 2 + (y - haps.y_m) ** 2 + (haps.altitude_m - z) ** 2)
        gain = ch.haps_channel_gain(d, link, self._haps_fading[uav.uav_id])
        alloc = ch.HapsAllocation(bandwidth_fraction=1.0 / max(haps.quota, load), power_fraction=1.0)
        bw = alloc.bandwidth_fraction * link.total_bandwidth_hz
        report = LinkReport(
            station_id=haps.station_id, uav_id=uav.uav_id, step=self.step_index, is_haps=True,
            gain_db=10.0 * math.log10(link.antenna_gain_linear),
            path_loss_db=20.0 * math.log10(4.0 * math.pi * d * link.carrier_hz / ch.SPEED_OF_LIGHT),
            rx_power_dbm=10.0 * math.log10(link.max_uav_tx_power_w * gain) + 30.0,
            sinr=link.max_uav_tx_power_w * gain / (bw * link.noise_psd_w_per_hz),
            rate_bps=ch.haps_rate(alloc, gain, link), in_range=True)
        self._haps_cache[key] = report
        return report

    def link_reports(self, uav_id) -> list:
        uav = self.uavs[uav_id]
        return list(self._radio[uav_id]) + [self.haps_report(uav)]

    def _candidates(self, uav: UavState) -> list:
        reports = [r for r in self._radio[uav.uav_id] if r.in_range]
        if uav.uav_id not in self.offloaded or not reports:
            reports.append(self.haps_report(uav))
        return reports

    def _serving_wr_mbps(self, uav: UavState) -> float:
        sid = uav.serving_station
        if sid is None:
            return 0.0
        if self.directory.is_haps(sid):
            rate = self.haps_report(uav).rate_bps
        else:
            rate = next(r.rate_bps for r in self._radio[uav.uav_id] if r.station_id == sid)
        return weighted_rate(rate, self.directory.loads[sid], self.directory.quota(sid), 0.0) / MBPS

    # -- observation ------------------------------------------------------

    def _row(self, uav: UavState, target_bps: float) -> ObsRow:
        n_r = sum(1 for r in self._radio[uav.uav_id] if r.in_range and r.rate_bps >= target_bps)
        n_h = 0
        if uav.uav_id not in self.offloaded and self.haps_report(uav).rate_bps >= target_bps:
            n_h = 1
        return ObsRow(uav_id=uav.uav_id, x=uav.x_m, y=float(uav.lane_index), z=uav.altitude_m,
                      v=uav.speed_mps, psi=uav.heading_rad, n_r=n_r, n_h=n_h,
                      vy=uav.lateral_speed_mps, valid=True)

    def observe(self, ego_id, m1: Optional[int] = None, target_rate_bps: Optional[float] = None) -> ObservationMatrix:
        """Ego row, then the ``m1 - 1`` nearest UAVs by longitudinal distance, padded."""
        m1 = self.config.observed_uavs if m1 is None else m1
        if target_rate_bps is None:
            target_rate_bps = self.config.target_rate_mbps * MBPS
        ego = self.uavs[ego_id]
        others = sorted((u for u in self.uavs.values() if u.uav_id != ego_id),
                        key=lambda u: (abs(u.x_m - ego.x_m), u.uav_id))
        rows = [self._row(ego, target_rate_bps)]
        rows += [self._row(u, target_rate_bps) for u in others[:max(m1 - 1, 0)]]
        rows += [SENTINEL_ROW] * (m1 - len(rows))
        return ObservationMatrix(tuple(rows))

    def context(self, uav_id) -> DecisionContext:
        obs = self.observe(uav_id)
        summary = TelecomSummary(gbs_cnt=obs.ego.n_r, haps_cnt=obs.ego.n_h,
                                 current_station=self.uavs[uav_id].serving_station,
                                 last_mu=self._last_mu.get(uav_id, 0.0))
        seed = int(self.config.seed) * 1_000_003 + self.step_index * 1009 + uav_id
        return DecisionContext(uav_id=uav_id, observation=obs, telecom_summary=summary, rng_seed_slice=seed)

    def contexts(self) -> dict:
        return {uid: self.context(uid) for uid in sorted(self.uavs)}

    @property
    def live_ids(self) -> list:
        return sorted(self.uavs)

    # -- step -------------------------------------------------------------

    def step(self, joint_actions: dict) -> StepOutcome:
        cfg = self.config
        if set(joint_actions) != set(self.uavs):
            raise ValueError(f"expected actions for UAVs {sorted(self.uavs)}, got {sorted(joint_actions)}")
        self.step_index += 1
        m = self.mobility

        # (1) kinematics, synchronous on the pre-step fleet
        fleet = list(self.uavs.values())
        moved = {}
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            tran, _ = joint_actions[uid]
            nxt = apply_transport_action(uav, TransportAction(tran), m, find_leader(uav, fleet))
            moved[uid] = replace(nxt, steps_elapsed=uav.steps_elapsed + 1)
        self.uavs = moved

        # (2) radio
        self._refresh_radio()

        # (3) telecom
        events = []
        chosen_wr = {}
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            _, tele = joint_actions[uid]
            reports = self._candidates(uav)
            sid = select_station(uav, TelecomAction(tele), reports, self.directory, cfg.mu)
            chosen = [r for r in reports if r.station_id == sid] or \
                [r for r in self.link_reports(uid) if r.station_id == sid]
            scored = annotate_weighted_rates(uav, chosen[:1], self.directory, cfg.mu)[0]
            uav, event = apply_association(uav, sid, self.directory, step=self.step_index)
            self.uavs[uid] = uav
            chosen_wr[uid] = scored.weighted_rate_bps / MBPS
            self._last_mu[uid] = scored.mu
            if event.kind is not HandoverKind.NONE:
                events.append(event)
        for uid in self.uavs:
            self._last_wr[uid] = chosen_wr[uid]

        # (4) collisions
        pairs = frozenset(detect_collisions(self.uavs.values(), m))
        collided = {uid for pair in pairs for uid in pair}

        # (5) rewards, (6) termination
        w = cfg.reward
        cap_reached = self.step_index >= cfg.episode_cap
        per_uav = {}
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            hit = uid in collided
            raw = transport_reward_raw(uav, hit, w, m.v_min, m.v_max)
            xi = handover_ratio(uav)
            wr = chosen_wr[uid]
            chi = uav.lane_changes_total / uav.steps_elapsed
            per_uav[uid] = UavOutcome(
                transport_reward=max(0.0, raw),
                telecom_reward=telecom_reward(wr, xi, w),
                collided=hit,
                done=hit or cap_reached,
                raw_transport_reward=raw,
                weighted_rate_mbps=wr,
                station=uav.serving_station,
                mu=self._last_mu[uid],
                transport_cost=w.w2 * float(hit) + w.w3 * chi,
                telecom_cost=w.w4 * wr * min(1.0, xi),
            )
        for uid in sorted(collided):
            uav = detach(self.uavs.pop(uid), self.directory)
            self.removed[uid] = uav
            self.offloaded.discard(uid)
        return StepOutcome(step=self.step_index, per_uav=per_uav, collision_pairs=pairs, events=tuple(events))

    # -- meta hooks ---------------------------------------------------------

    def _admitting_ground(self, uav: UavState) -> list:
        return [r for r in self._radio[uav.uav_id]
                if r.in_range and not self.directory.saturated_for(r.station_id, uav)]

    def meta_state(self) -> MetaState:
        haps_id = self.directory.haps_id
        rows = []
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            on_haps = uav.serving_station == haps_id
            if on_haps:
                recall = self._serving_wr_mbps(uav)
            else:
                load = self.directory.candidate_load(haps_id, uav)
                rate = self.haps_report(uav, load).rate_bps
                recall = weighted_rate(rate, load, self.directory.haps.quota, 0.0) / MBPS
            rows.append(MetaUav(
                uav_id=uid, link=Link.HAPS if on_haps else Link.TBS,
                rate_mbps=self._serving_wr_mbps(uav), priority=self.priorities[uid],
                ground_coverage=bool(self._admitting_ground(uav)),
                offloaded=uid in self.offloaded, haps_rate_mbps=recall))
        return MetaState(per_uav=tuple(rows), haps_capacity_mbps=self.config.haps_capacity_mbps,
                         haps_quota=self.directory.haps.quota)

    def apply_meta_action(self, action: MetaAction):
        """Enforce an Offload/Recall; returns (events, summed mu, handover count).

        Targets that are not eligible (wrong link, no admitting ground
        station) are skipped with a warning.
        """
        cfg = self.config
        haps_id = self.directory.haps_id
        events = []
        total_mu = 0.0
        for uid in sorted(action.targets):
            uav = self.uavs.get(uid)
            if uav is None:
                log.warning("meta action targets unknown or removed UAV %s", uid)
                continue
            if action.kind is MetaKind.OFFLOAD:
                if uav.serving_station != haps_id:
                    log.warning("cannot offload UAV %s: not on HAPS", uid)
                    continue
                ground = self._admitting_ground(uav)
                if not ground:
                    log.warning("cannot offload UAV %s: no admitting ground station", uid)
                    continue
                sid = select_station(uav, TelecomAction.T2, ground, self.directory, cfg.mu)
                self.offloaded.add(uid)
            elif action.kind is MetaKind.RECALL:
                if uav.serving_station == haps_id:
                    log.warning("cannot recall UAV %s: already on HAPS", uid)
                    continue
                if self.directory.saturated_for(haps_id, uav):
                    log.warning("cannot recall UAV %s: HAPS at quota", uid)
                    continue
                sid = haps_id
                self.offloaded.discard(uid)
            else:
                continue
            total_mu += handover_penalty(uav.serving_station, sid, self.directory, cfg.mu)
            uav, event = apply_association(uav, sid, self.directory, step=self.step_index)
            self.uavs[uid] = uav
            self._last_wr[uid] = self._serving_wr_mbps(uav)
            events.append(event)
        return events, total_mu, len(events)

    def meta_step(self, policy, episode: int = 0) -> MetaTransition:
        cfg = self.config
        state = self.meta_state()
        action = policy.decide(state)
        events, total_mu, count = self.apply_meta_action(action)
        penalty = float(count) if cfg.meta_mu_mode == "count" else total_mu
        after = self.meta_state()
        saturated = compute_haps_load(after) > cfg.haps_capacity_mbps
        reward = meta_reward(after, saturated, penalty, cfg.meta_reward)
        policy.record_outcome(state, action, reward, after)
        return MetaTransition(episode=episode, step=self.step_index, state=state, action=action,
                              reward=reward, next_state=after, saturated=saturated,
                              total_mu=penalty, events=tuple(events))


@dataclass
class EpisodeResult:
    episode: int
    steps: list = field(default_factory=list)
    meta_transitions: list = field(default_factory=list)
    records: list = field(default_factory=list)
    lifetimes: dict = field(default_factory=dict)
    num_uavs: int = 0
    handovers: int = 0


def episode_seed(seed: int, episode: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(episode)])


def run_episode(env: EdgeEnv, edge_policy, meta_policy=None, episode: int = 0, seed: int = 0,
                max_steps: Optional[int] = None, action_override=None, on_step=None) -> EpisodeResult:
    """Run one episode and collect outcomes, meta transitions and log records.

    ``action_override(step, contexts)`` may return a joint-action dict that
    replaces the policy's choices (used for transcript replay).
    """
    env.reset(episode_seed(seed, episode))
    cap = env.config.episode_cap if max_steps is None else min(max_steps, env.config.episode_cap)
    period = env.config.meta_period
    result = EpisodeResult(episode=episode, num_uavs=len(env.uavs))
    start_handovers = {uid: u.handovers_total for uid, u in env.uavs.items()}
    for uid in env.uavs:
        result.lifetimes[uid] = 0

    for _ in range(cap):
        if not env.uavs:
            break
        contexts = env.contexts()
        actions = None if action_override is None else action_override(env.step_index + 1, contexts)
        if actions is None:
            actions = {uid: edge_policy.decide(ctx) for uid, ctx in contexts.items()}
        outcome = env.step(actions)
        result.steps.append(outcome)
        for uid in outcome.per_uav:
            result.lifetimes[uid] = outcome.step
        next_contexts = env.contexts()
        for uid, o in outcome.per_uav.items():
            edge_policy.record_outcome(contexts[uid], actions[uid], o.transport_reward + o.telecom_reward,
                                       next_contexts.get(uid))
        meta = None
        if meta_policy is not None and period > 0 and outcome.step % period == 0 and env.uavs:
            meta = env.meta_step(meta_policy, episode)
            result.meta_transitions.append(meta)
        result.records.append(step_record(episode, outcome, actions, env, meta))
        if on_step is not None:
            on_step(outcome)

    final = {**env.removed, **env.uavs}
    result.handovers = sum(final[uid].handovers_total - start_handovers[uid] for uid in start_handovers)
    return result


def step_record(episode: int, outcome: StepOutcome, actions: dict, env: EdgeEnv, meta) -> dict:
    states = {**env.removed, **env.uavs}
    rec = {
        "episode": episode,
        "step": outcome.step,
        "uavs": [
            {
                "id": uid,
                "x": states[uid].x_m,
                "lane": states[uid].lane_index,
                "z": states[uid].altitude_m,
                "v": states[uid].speed_mps,
                "station": o.station,
                "tran_action": TransportAction(actions[uid][0]).name,
                "tele_action": TelecomAction(actions[uid][1]).name,
                "transport_reward": o.transport_reward,
                "telecom_reward": o.telecom_reward,
                "weighted_rate_mbps": o.weighted_rate_mbps,
                "collided": o.collided,
                "done": o.done,
            }
            for uid, o in sorted(outcome.per_uav.items())
        ],
        "collisions": sorted(list(p) for p in outcome.collision_pairs),
        "handovers": [
            {"uav": e.uav_id, "from": e.from_station, "to": e.to_station, "kind": e.kind.value}
            for e in outcome.events
        ],
    }
    if meta is not None:
        rec["meta"] = {
            "action": meta.action.render(),
            "reward": meta.reward,
            "haps_load_mbps": compute_haps_load(meta.state),
            "saturated": meta.saturated,
            "handovers": [{"uav": e.uav_id, "from": e.from_station, "to": e.to_station,
                           "kind": e.kind.value} for e in meta.events],
        }
    return rec
