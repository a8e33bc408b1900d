import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavhighway import channel as ch
from uavhighway.association import TelecomAction, apply_association, total_load
from uavhighway.config import ScenarioConfig
from uavhighway.edge_env import (
    EdgeEnv,
    RewardWeights,
    SENTINEL_ROW,
    episode_seed,
    run_episode,
    telecom_reward,
    transport_reward,
    transport_reward_raw,
)
from uavhighway.meta_controller import Link, MetaAction, RuleBasedMetaPolicy
from uavhighway.mobility import TransportAction, UavState
from uavhighway.policies import FixedPolicy, RandomPolicy, SafeHeuristicPolicy

W = RewardWeights()


def env_for(seed=0, **kw):
    env = EdgeEnv(ScenarioConfig(**kw))
    env.reset(episode_seed(seed, 0))
    return env


def test_vectorised_radio_matches_scalar_channel():
    env = env_for(seed=3)
    cfg = env.config
    for uid, uav in env.uavs.items():
        reports = env._radio[uid]
        powers = []
        for site, rep in zip(env.directory.terrestrial, reports):
            geom = env.geometry_to(site, uav)
            p = ch.received_power_dbm(geom, site.antenna, cfg.path_loss, cfg.ground_link)
            powers.append(p)
            assert rep.rx_power_dbm == pytest.approx(p, rel=1e-12, abs=1e-9)
            assert rep.in_range == ch.in_service_range(p, cfg.ground_link)
        for k, rep in enumerate(reports):
            s = ch.sinr(powers[k], powers[:k] + powers[k + 1:], cfg.ground_link.noise_power_dbm)
            assert rep.sinr == pytest.approx(s, rel=1e-9)
            assert rep.rate_bps == pytest.approx(ch.shannon_rate(cfg.bs_bandwidth_hz, s), rel=1e-9)


def test_haps_report_uses_load_share():
    env = env_for()
    uav = env.uavs[0]
    link = env.directory.haps.link
    one = env.haps_report(uav, load=1)
    many = env.haps_report(uav, load=10)
    x, y, z = env.uav_position(uav)
    haps = env.directory.haps
    d = math.dist((x, y, z), (haps.x_m, haps.y_m, haps.altitude_m))
    gain = ch.haps_channel_gain(d, link, env._haps_fading[0])
    expect = ch.haps_rate(ch.HapsAllocation(1.0 / haps.quota, 1.0), gain, link)
    assert one.rate_bps == pytest.approx(expect, rel=1e-12)
    assert many.rate_bps < one.rate_bps


def test_reset_attaches_everyone_and_balances_loads():
    env = env_for()
    assert len(env.uavs) == 5
    assert all(u.serving_station is not None for u in env.uavs.values())
    assert total_load(env.directory) == 5
    assert all(1 <= p <= 5 for p in env.priorities.values())


def test_same_seed_same_episode():
    a = run_episode(EdgeEnv(ScenarioConfig()), RandomPolicy(1), seed=4)
    b = run_episode(EdgeEnv(ScenarioConfig()), RandomPolicy(1), seed=4)
    assert a.records == b.records


def test_step_requires_actions_for_all_uavs():
    env = env_for()
    with pytest.raises(ValueError):
        env.step({0: (TransportAction.IDLE, TelecomAction.T1)})


def test_step_outcome_fields_and_loads():
    env = env_for(seed=1)
    out = env.step({uid: (TransportAction.FASTER, TelecomAction.T1) for uid in env.uavs})
    assert out.step == 1
    for uid, o in out.per_uav.items():
        assert o.transport_reward >= 0.0
        assert o.telecom_reward >= 0.0
        assert o.station == env.uavs[uid].serving_station if uid in env.uavs else True
    live = sum(1 for u in env.uavs.values() if u.serving_station is not None)
    assert total_load(env.directory) == live


def test_collided_uavs_are_removed_and_detached():
    env = env_for(num_uavs=2, spawn_length_m=30.0, min_spawn_gap_m=6.0, num_lanes=1)
    # Both at minimum speed 2 m apart: the follower cannot brake any further.
    a, b = env.uavs[0], env.uavs[1]
    env.uavs[0] = replace(a, speed_mps=5.0)
    env.uavs[1] = replace(b, x_m=a.x_m + 2.0, speed_mps=5.0)
    out = env.step({0: (TransportAction.IDLE, TelecomAction.T1), 1: (TransportAction.IDLE, TelecomAction.T1)})
    assert out.collision_pairs == frozenset({(0, 1)})
    assert all(o.collided and o.done for o in out.per_uav.values())
    assert env.uavs == {} and set(env.removed) == {0, 1}
    assert total_load(env.directory) == 0


def test_episode_runs_to_cap_with_safe_policy():
    cfg = ScenarioConfig()
    res = run_episode(EdgeEnv(cfg), SafeHeuristicPolicy(), seed=0)
    assert len(res.steps) == cfg.episode_cap
    assert res.steps[-1].per_uav[0].done


def test_observation_shape_and_padding():
    env = env_for(num_uavs=2)
    obs = env.observe(0, m1=4)
    assert len(obs.rows) == 4
    assert obs.ego.uav_id == 0 and obs.rows[1].uav_id == 1
    assert obs.rows[2] == SENTINEL_ROW and obs.rows[3] == SENTINEL_ROW
    assert obs.to_array().shape == (4, 7)


def test_meta_controller_offloads_when_capacity_low():
    cfg = ScenarioConfig(haps_capacity_mbps=1.0, initial_attach="T3")
    env = EdgeEnv(cfg)
    res = run_episode(env, FixedPolicy(TransportAction.IDLE, TelecomAction.T1), RuleBasedMetaPolicy(), seed=0)
    actions = [t.action for t in res.meta_transitions]
    assert len(actions) == cfg.episode_cap // cfg.meta_period
    assert any(a.kind.value == "Offload" for a in actions)
    for t in res.meta_transitions:
        for e in t.events:
            assert e.uav_id in env.offloaded or e.to_station == env.directory.haps_id
    rec = [r for r in res.records if "meta" in r]
    assert len(rec) == len(actions) and rec[0]["meta"]["action"] == actions[0].render()


def test_recall_skipped_when_haps_full():
    env = env_for(haps_quota=1)
    haps = env.directory.haps_id
    # One UAV on the HAPS, everyone else on ground station 0.
    for uid in env.uavs:
        env.uavs[uid], _ = apply_association(env.uavs[uid], haps if uid == 0 else 0, env.directory)
    env.offloaded.add(1)
    events, _, count = env.apply_meta_action(MetaAction.recall(1))
    assert count == 0 and events == [] and env.directory.loads[haps] == 1


def test_meta_state_reflects_links():
    env = env_for()
    state = env.meta_state()
    assert state.haps_capacity_mbps == 100.0
    for row in state.per_uav:
        on_haps = env.uavs[row.uav_id].serving_station == env.directory.haps_id
        assert (row.link is Link.HAPS) == on_haps


def _fleet_uav(v=12.0, lanes=0, steps=10):
    return UavState(uav_id=0, x_m=0.0, lane_index=0, altitude_m=120.0, speed_mps=v,
                    lane_changes_total=lanes, steps_elapsed=steps)


@given(st.floats(5.0, 20.0), st.integers(0, 10), st.integers(1, 30), st.booleans())
def test_transport_reward_closed_form(v, lanes, steps, hit):
    u = _fleet_uav(v, min(lanes, steps), steps)
    expect = W.w1 * (v - 5.0) / 15.0 - W.w2 * hit - W.w3 * min(lanes, steps) / steps
    assert transport_reward_raw(u, hit, W, 5.0, 20.0) == pytest.approx(expect, abs=1e-12)
    assert transport_reward(u, hit, W, 5.0, 20.0) == max(0.0, transport_reward_raw(u, hit, W, 5.0, 20.0))


@pytest.mark.parametrize("xi, factor", [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0), (1.2, 0.0)])
def test_telecom_reward_clamps_handover_ratio(xi, factor):
    assert telecom_reward(20.0, xi, W) == pytest.approx(W.w4 * 20.0 * factor, abs=1e-12)


def test_reward_validation():
    with pytest.raises(ValueError):
        RewardWeights(w1=-1.0)
    with pytest.raises(ValueError):
        telecom_reward(-1.0, 0.0, W)
    with pytest.raises(ValueError):
        transport_reward_raw(_fleet_uav(), False, W, 20.0, 5.0)


def test_episode_seed_streams_differ():
    a = np.random.default_rng(episode_seed(0, 0)).random()
    b = np.random.default_rng(episode_seed(0, 1)).random()
    assert a != b
