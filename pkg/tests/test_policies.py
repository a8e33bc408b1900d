import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavhighway.association import TelecomAction as T
from uavhighway.edge_env import DecisionContext, ObservationMatrix, ObsRow, SENTINEL_ROW, TelecomSummary
from uavhighway.mobility import IdmParams, TransportAction as TA, desired_gap
from uavhighway.policies import (
    JOINT_ACTIONS,
    PADDING_BIN,
    FixedPolicy,
    GreedyTelecomPolicy,
    RandomPolicy,
    SafeHeuristicPolicy,
    TabularQPolicy,
    decide,
    discretize,
    leader_in_view,
    record_outcome,
)


def row(uid=0, x=0.0, lane=0, v=0.0, vy=0.0, n_r=0, n_h=0):
    return ObsRow(uav_id=uid, x=x, y=float(lane), z=120.0, v=v, psi=0.0, n_r=n_r, n_h=n_h, vy=vy)


def ctx(*rows, uid=0):
    obs = ObservationMatrix(tuple(rows))
    return DecisionContext(uid, obs, TelecomSummary(obs.ego.n_r, obs.ego.n_h, None))


def test_discretize_examples():
    assert discretize(ObservationMatrix((row(),))).bins == (0, 0, 0, 0, 0, 0)
    assert discretize(ObservationMatrix((row(v=20.0),))).bins[2] == 7
    bins = discretize(ObservationMatrix((row(), row(uid=1, x=37.5)))).bins
    assert bins[4] == 3


def test_discretize_layout_and_padding():
    obs = ObservationMatrix((row(x=10.0, lane=2, v=15.0, vy=4.0, n_r=2, n_h=1), row(uid=1, x=60.0, lane=3),
                             SENTINEL_ROW))
    bins = discretize(obs).bins
    assert len(bins) == 3 * 4 + 2
    assert bins[:4] == (0, 0, 6, 1)
    assert bins[8:12] == (PADDING_BIN,) * 4
    assert bins[-2:] == (2, 1)
    with pytest.raises(ValueError):
        discretize(obs, num_bins=1)


@given(st.floats(-500, 500), st.integers(0, 10), st.floats(0, 40), st.floats(-10, 10), st.integers(2, 16))
def test_bins_in_range(x, lane, v, vy, n):
    bins = discretize(ObservationMatrix((row(), row(uid=1, x=x, lane=lane, v=v, vy=vy))), n).bins
    assert all(0 <= b < n for b in bins[:8])


def test_leader_in_view():
    rows = (row(x=0.0), row(uid=1, x=30.0), row(uid=2, x=10.0, lane=1), row(uid=3, x=-5.0))
    assert leader_in_view(ObservationMatrix(rows)).uav_id == 1
    assert leader_in_view(ObservationMatrix((row(),))) is None


def test_safe_heuristic():
    pol = SafeHeuristicPolicy()
    assert decide(pol, ctx(row(v=15.0))) == (TA.IDLE, T.T1)
    s_star = desired_gap(15.0, 0.0, IdmParams())
    near = ctx(row(v=15.0), row(uid=1, x=5.0 + 2 * s_star - 1.0, v=15.0))
    far = ctx(row(v=15.0), row(uid=1, x=5.0 + 2 * s_star + 1.0, v=15.0))
    assert decide(pol, near) == (TA.SLOWER, T.T1)
    assert decide(pol, far) == (TA.IDLE, T.T1)


def test_fixed_and_greedy():
    assert FixedPolicy(TA.FASTER, T.T2).decide(ctx(row())) == (TA.FASTER, T.T2)
    assert GreedyTelecomPolicy().decide(ctx(row())) == (TA.IDLE, T.T3)


def test_random_policy_reproducible():
    c = ctx(row())
    p, q = RandomPolicy(11), RandomPolicy(11)
    assert [p.decide(c) for _ in range(50)] == [q.decide(c) for _ in range(50)]
    assert all(x in JOINT_ACTIONS for x in (p.decide(c) for _ in range(50)))


def test_joint_action_vocabulary():
    assert len(JOINT_ACTIONS) == 15
    assert len(set(JOINT_ACTIONS)) == 15


def test_q_update_full_overwrite():
    pol = TabularQPolicy(alpha=1.0, gamma=0.0)
    assert pol.update(("s",), 0, 5.0) == 5.0


def test_q_update_bellman():
    pol = TabularQPolicy(alpha=0.5, gamma=0.9)
    pol.table[("n",)] = np.zeros(15)
    pol.table[("n",)][3] = 2.0
    assert pol.update(("s",), 0, 1.0, ("n",)) == pytest.approx(1.4, abs=1e-12)


def test_greedy_selection_with_zero_epsilon():
    pol = TabularQPolicy(epsilon_start=0.0, epsilon_end=0.0)
    c = ctx(row())
    idx = JOINT_ACTIONS.index((TA.FASTER, T.T1))
    pol.table[pol.key(c)] = np.zeros(15)
    pol.table[pol.key(c)][idx] = 1.0
    assert pol.decide(c) == (TA.FASTER, T.T1)
    assert all(pol.decide(c) == (TA.FASTER, T.T1) for _ in range(20))


def test_record_outcome_updates_table_and_noop_baselines():
    pol = TabularQPolicy(alpha=1.0, gamma=0.0)
    c = ctx(row())
    record_outcome(pol, c, (TA.SLOWER, T.T3), 2.5, None)
    assert pol.q_values(pol.key(c))[JOINT_ACTIONS.index((TA.SLOWER, T.T3))] == 2.5
    fixed = FixedPolicy()
    before = fixed.action
    assert record_outcome(fixed, c, fixed.action, 1.0, c) is fixed and fixed.action == before
    pol.frozen = True
    record_outcome(pol, c, (TA.SLOWER, T.T3), 9.0, None)
    assert pol.q_values(pol.key(c))[JOINT_ACTIONS.index((TA.SLOWER, T.T3))] == 2.5


def test_epsilon_anneals_linearly():
    pol = TabularQPolicy(epsilon_start=1.0, epsilon_end=0.0, anneal_steps=10)
    assert pol.epsilon == 1.0
    pol.decisions = 5
    assert pol.epsilon == 0.5
    pol.decisions = 100
    assert pol.epsilon == 0.0


def test_save_load_round_trip(tmp_path):
    pol = TabularQPolicy(alpha=0.3, gamma=0.7)
    pol.update((1, 2), 4, 3.0)
    pol.decisions = 12
    path = tmp_path / "q.json"
    pol.save(path)
    back = TabularQPolicy.load(path)
    assert back.alpha == 0.3 and back.gamma == 0.7 and back.decisions == 12
    assert np.array_equal(back.q_values((1, 2)), pol.q_values((1, 2)))


@settings(max_examples=50)
@given(st.floats(-10, 10), st.floats(0.0, 0.99))
def test_q_stays_bounded_on_fixed_transition(r, gamma):
    pol = TabularQPolicy(alpha=0.5, gamma=gamma)
    for _ in range(300):
        q = pol.update(("s",), 0, r, ("s",))
    assert np.isfinite(q)
    assert abs(q) <= abs(r) / (1.0 - gamma) + 1e-9
