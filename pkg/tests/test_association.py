import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavhighway.association import (
    BsSite,
    HandoverKind,
    HapsSite,
    LinkReport,
    MuTable,
    NoAdmittingStation,
    NoStationInRange,
    StationDirectory,
    TelecomAction as T,
    annotate_weighted_rates,
    apply_association,
    classify_handover,
    detach,
    handover_penalty,
    handover_ratio,
    select_station,
    total_load,
    weighted_rate,
)
from uavhighway.mobility import UavState

import oracles

HAPS = 99


def directory(n_bs=3, quota=3, haps_quota=5, loads=None):
    bs = [BsSite(i, x_m=200.0 * i, y_m=0.0, quota=quota) for i in range(n_bs)]
    return StationDirectory(bs, HapsSite(HAPS, 0.0, 0.0, quota=haps_quota), dict(loads or {}))


def uav(uid=0, server=None, **kw):
    return UavState(uav_id=uid, x_m=0.0, lane_index=2, altitude_m=120.0, speed_mps=15.0,
                    serving_station=server, **kw)


def report(sid, rate, uid=0, in_range=True):
    return LinkReport(station_id=sid, uav_id=uid, step=0, is_haps=sid == HAPS, gain_db=0.0,
                      path_loss_db=0.0, rx_power_dbm=0.0, sinr=1.0, rate_bps=rate, in_range=in_range)


def test_weighted_rate_shares_over_quota():
    assert weighted_rate(30.0, 5, 3, 0.0) == 10.0
    assert weighted_rate(30.0, 2, 3, 0.0) == 15.0
    assert weighted_rate(30.0, 1, 3, 0.5) == 15.0


def test_weighted_rate_rejects_empty_load():
    with pytest.raises(ValueError):
        weighted_rate(1.0, 0, 3, 0.0)


@given(st.floats(0, 1e9), st.integers(1, 50), st.integers(1, 10), st.sampled_from([0.0, 0.25, 0.5]))
def test_weighted_rate_matches_oracle(rate, load, quota, mu):
    assert weighted_rate(rate, load, quota, mu) == pytest.approx(oracles.weighted_rate(rate, load, quota, mu),
                                                                 rel=1e-12)


def test_handover_taxonomy_and_penalties():
    d = directory()
    assert classify_handover(None, 0, d) is HandoverKind.NONE
    assert classify_handover(1, 1, d) is HandoverKind.NONE
    assert classify_handover(0, 1, d) is HandoverKind.HORIZONTAL
    assert classify_handover(0, HAPS, d) is HandoverKind.VERTICAL
    assert classify_handover(HAPS, 2, d) is HandoverKind.VERTICAL
    assert handover_penalty(1, 1, d) == 0.0
    assert handover_penalty(0, HAPS, d) == 0.5
    assert handover_penalty(0, 1, d) == 0.25
    assert handover_penalty(0, 1, d, MuTable(horizontal=0.1)) == 0.1


def test_t1_and_t3_diverge_on_handover_cost():
    # Station 1 is faster but reaching it from the HAPS is a vertical handover.
    d = directory(loads={HAPS: 1})
    u = uav(server=HAPS)
    reps = [report(1, 30e6), report(HAPS, 20e6)]
    assert select_station(u, T.T3, reps, d) == 1
    assert select_station(u, T.T1, reps, d) == HAPS


def test_t1_accounts_for_load():
    d = directory(loads={0: 3, 1: 0})
    reps = [report(0, 40e6), report(1, 20e6)]
    # Station 0 would share 40 over 3 users; station 1 gives 20 alone.
    assert select_station(uav(), T.T1, reps, d) == 1
    assert select_station(uav(), T.T3, reps, d) == 0


def test_t2_skips_saturated_station():
    d = directory(loads={0: 3, 1: 1})
    reps = [report(0, 90e6), report(1, 10e6)]
    assert select_station(uav(), T.T2, reps, d) == 1
    # Already served by station 0, so staying does not raise its load.
    assert select_station(uav(server=0), T.T2, reps, directory(loads={0: 3, 1: 1})) == 0


def test_t2_keeps_server_when_nothing_admits():
    d = directory(quota=1, loads={0: 1, 1: 1, 2: 1})
    reps = [report(0, 5e6), report(1, 9e6)]
    assert select_station(uav(server=2), T.T2, reps, d) == 2
    with pytest.raises(NoAdmittingStation):
        select_station(uav(), T.T2, reps, d)


def test_no_station_in_range():
    with pytest.raises(NoStationInRange):
        select_station(uav(), T.T1, [report(0, 1e6, in_range=False)], directory())


def test_ties_go_to_lowest_id():
    reps = [report(2, 10e6), report(1, 10e6), report(0, 10e6)]
    for action in T:
        assert select_station(uav(), action, reps, directory()) == 0


def test_annotate_sets_mu_and_load():
    d = directory(loads={0: 4, 1: 1})
    out = annotate_weighted_rates(uav(server=1), [report(0, 30e6), report(1, 30e6)], d)
    assert out[0].mu == 0.25 and out[0].weighted_rate_bps == pytest.approx(30e6 / 3 * 0.75)
    assert out[1].mu == 0.0 and out[1].weighted_rate_bps == 30e6


def test_apply_association_moves_load():
    d = directory()
    u, ev = apply_association(uav(), 0, d, step=1)
    assert ev.kind is HandoverKind.NONE and u.handovers_total == 0
    assert d.loads[0] == 1
    u, ev = apply_association(u, HAPS, d, step=2)
    assert ev.kind is HandoverKind.VERTICAL and u.handovers_total == 1
    assert d.loads[0] == 0 and d.loads[HAPS] == 1
    u, ev = apply_association(u, HAPS, d, step=3)
    assert ev.kind is HandoverKind.NONE and d.loads[HAPS] == 1
    u = detach(u, d)
    assert total_load(d) == 0 and u.serving_station is None
    with pytest.raises(KeyError):
        apply_association(u, 1234, d)


def test_handover_ratio():
    assert handover_ratio(uav(handovers_total=12, steps_elapsed=10)) == 1.2
    with pytest.raises(ValueError):
        handover_ratio(uav())


def test_directory_validation():
    with pytest.raises(ValueError):
        StationDirectory([BsSite(HAPS, 0.0, 0.0)], HapsSite(HAPS, 0.0, 0.0))
    with pytest.raises(ValueError):
        directory(quota=0)


_rates = st.lists(st.floats(1e5, 1e9), min_size=1, max_size=6)


@given(_rates, st.floats(0.01, 100.0), st.sampled_from(list(T)))
def test_selection_invariant_to_rate_scaling(rates, scale, action):
    reps = [report(i, r) for i, r in enumerate(rates)]
    scaled = [report(i, r * scale) for i, r in enumerate(rates)]
    d = directory(n_bs=len(rates), loads={0: 2})
    assert select_station(uav(server=0), action, reps, d) == select_station(uav(server=0), action, scaled, d)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(list(T))), min_size=1, max_size=40),
       st.lists(st.floats(1e5, 1e8), min_size=5, max_size=5), st.integers(1, 4))
def test_load_conservation_and_t2_quota(moves, rates, quota):
    # Random reassignment sequences keep loads equal to the attached UAV count;
    # T2 moves never push a station beyond its quota.
    d = directory(n_bs=4, quota=quota, haps_quota=quota)
    fleet = {i: uav(i) for i in range(6)}
    reps = [report(i, r) for i, r in enumerate(rates[:4])] + [report(HAPS, rates[4])]
    for uid, action in moves:
        u = fleet[uid]
        try:
            sid = select_station(u, action, reps, d)
        except NoAdmittingStation:
            continue
        before = d.loads.get(sid, 0)
        fleet[uid], _ = apply_association(u, sid, d)
        if action == T.T2 and u.serving_station != sid:
            assert before + 1 <= quota
        attached = sum(1 for v in fleet.values() if v.serving_station is not None)
        assert total_load(d) == attached
        for s in d.station_ids():
            assert d.loads[s] == sum(1 for v in fleet.values() if v.serving_station == s)
