"""UAV-to-station association: weighted rate, handover taxonomy, quotas and
the three station-selection strategies T1/T2/T3."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

from .channel import AntennaParams, HapsLinkParams
from .mobility import UavState


class HandoverKind(enum.Enum):
    NONE = "NONE"
    HORIZONTAL = "HORIZONTAL"
    VERTICAL = "VERTICAL"


class TelecomAction(enum.IntEnum):
    T1 = 0  # max weighted rate
    T2 = 1  # max weighted rate with mu=0, skipping saturated stations
    T3 = 2  # max instantaneous rate


class NoStationInRange(RuntimeError):
    pass


class NoAdmittingStation(NoStationInRange):
    """T2 found no station able to admit the UAV and it has no server to keep."""


@dataclass(frozen=True)
class BsSite:
    station_id: int
    x_m: float
    y_m: float
    height_m: float = 25.0
    quota: int = 3
    bandwidth_hz: float = 10e6
    # Boresight azimuth of sector 0; sectors are spaced 120 degrees apart.
    sector_azimuth_rad: float = 0.0
    antenna: AntennaParams = AntennaParams()


@dataclass(frozen=True)
class HapsSite:
    station_id: int
    x_m: float
    y_m: float
    altitude_m: float = 20_000.0
    quota: int = 5
    link: HapsLinkParams = HapsLinkParams()


@dataclass(frozen=True)
class LinkReport:
    station_id: int
    uav_id: int
    step: int
    is_haps: bool
    gain_db: float
    path_loss_db: float
    rx_power_dbm: float
    sinr: float
    rate_bps: float
    in_range: bool
    # Filled by annotate_weighted_rates for the evaluating UAV.
    weighted_rate_bps: float = 0.0
    mu: float = 0.0


@dataclass(frozen=True)
class HandoverEvent:
    uav_id: int
    from_station: Optional[int]
    to_station: int
    kind: HandoverKind
    step: int


@dataclass(frozen=True)
class MuTable:
    horizontal: float = 0.25
    vertical: float = 0.5


@dataclass
class StationDirectory:
    terrestrial: list
    haps: HapsSite
    loads: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.station_id for s in self.terrestrial] + [self.haps.station_id]
        if len(set(ids)) != len(ids):
            raise ValueError("station ids must be unique")
        for sid in ids:
            if self.quota(sid) < 1:
                raise ValueError(f"station {sid} quota must be >= 1")
            self.loads.setdefault(sid, 0)

    @property
    def haps_id(self) -> int:
        return self.haps.station_id

    def is_haps(self, station_id) -> bool:
        return station_id == self.haps.station_id

    def station_ids(self) -> list:
        return [s.station_id for s in self.terrestrial] + [self.haps.station_id]

    def site(self, station_id):
        if station_id == self.haps.station_id:
            return self.haps
        for s in self.terrestrial:
            if s.station_id == station_id:
                return s
        raise KeyError(station_id)

    def quota(self, station_id) -> int:
        return self.site(station_id).quota

    def candidate_load(self, station_id, uav: UavState) -> int:
        """Load of ``station_id`` if ``uav`` were (or stays) attached to it."""
        load = self.loads[station_id]
        return load if uav.serving_station == station_id else load + 1

    def saturated_for(self, station_id, uav: UavState) -> bool:
        return self.candidate_load(station_id, uav) > self.quota(station_id)

    def copy(self) -> "StationDirectory":
        return StationDirectory(self.terrestrial, self.haps, dict(self.loads))


def classify_handover(prev, nxt, directory: StationDirectory) -> HandoverKind:
    if prev is None or prev == nxt:
        return HandoverKind.NONE
    if directory.is_haps(prev) or directory.is_haps(nxt):
        return HandoverKind.VERTICAL
    return HandoverKind.HORIZONTAL


def handover_penalty(prev, nxt, directory: StationDirectory, mu: MuTable = MuTable()) -> float:
    kind = classify_handover(prev, nxt, directory)
    if kind is HandoverKind.VERTICAL:
        return mu.vertical
    if kind is HandoverKind.HORIZONTAL:
        return mu.horizontal
    return 0.0


def weighted_rate(rate_bps: float, station_load: int, quota: int, mu: float) -> float:
    """Rate shared over ``min(quota, load)`` users and discounted by ``1 - mu``.

    ``station_load`` must already count the evaluating UAV.
    """
    if station_load <= 0:
        raise ValueError("station_load must count the evaluating UAV (>= 1)")
    if quota < 1:
        raise ValueError("quota must be >= 1")
    return rate_bps / min(quota, station_load) * (1.0 - mu)


def annotate_weighted_rates(uav: UavState, reports, directory: StationDirectory,
                            mu_table: MuTable = MuTable(), use_mu: bool = True) -> list:
    out = []
    for r in reports:
        mu = handover_penalty(uav.serving_station, r.station_id, directory, mu_table) if use_mu else 0.0
        load = directory.candidate_load(r.station_id, uav)
        wr = weighted_rate(r.rate_bps, load, directory.quota(r.station_id), mu)
        out.append(replace(r, weighted_rate_bps=wr, mu=mu))
    return out


def _ranked(reports, key):
    # Highest key first; lower station id wins ties.
    return sorted(reports, key=lambda r: (-key(r), r.station_id))


def select_station(uav: UavState, action: TelecomAction, reports, directory: StationDirectory,
                   mu_table: MuTable = MuTable()) -> int:
    """Pick a serving station among in-range ``reports`` for ``uav``.

    T2 only ever returns a station that admits ``uav`` within quota. If no
    in-range candidate admits it, the UAV keeps its current server (even
    when that server dropped out of range); with no server it raises
    :class:`NoAdmittingStation`.
    """
    candidates = [r for r in reports if r.in_range]
    if not candidates:
        raise NoStationInRange(f"UAV {uav.uav_id} has no station in range")
    action = TelecomAction(action)
    if action == TelecomAction.T3:
        return _ranked(candidates, lambda r: r.rate_bps)[0].station_id
    if action == TelecomAction.T1:
        scored = annotate_weighted_rates(uav, candidates, directory, mu_table)
        return _ranked(scored, lambda r: r.weighted_rate_bps)[0].station_id
    scored = _ranked(annotate_weighted_rates(uav, candidates, directory, mu_table, use_mu=False),
                     lambda r: r.weighted_rate_bps)
    for r in scored:
        if not directory.saturated_for(r.station_id, uav):
            return r.station_id
    if uav.serving_station is not None:
        return uav.serving_station
    raise NoAdmittingStation(f"UAV {uav.uav_id}: every in-range station is at quota")


def apply_association(uav: UavState, new_station: int, directory: StationDirectory,
                      step: int = 0):
    """Attach ``uav`` to ``new_station`` and keep ``directory.loads`` consistent.

    Returns the updated state and the handover event; initial attachment
    (no previous server) is reported with kind NONE and is not counted.
    """
    if new_station not in directory.loads:
        raise KeyError(f"unknown station {new_station}")
    prev = uav.serving_station
    kind = classify_handover(prev, new_station, directory)
    event = HandoverEvent(uav.uav_id, prev, new_station, kind, step)
    if prev == new_station:
        return uav, event
    if prev is not None:
        directory.loads[prev] -= 1
    directory.loads[new_station] += 1
    count = uav.handovers_total + (0 if kind is HandoverKind.NONE else 1)
    return replace(uav, serving_station=new_station, handovers_total=count), event


def detach(uav: UavState, directory: StationDirectory) -> UavState:
    if uav.serving_station is not None:
        directory.loads[uav.serving_station] -= 1
    return replace(uav, serving_station=None)


def handover_ratio(uav: UavState) -> float:
    if uav.steps_elapsed <= 0:
        raise ValueError("handover ratio undefined before the first step")
    return uav.handovers_total / uav.steps_elapsed


def total_load(directory: StationDirectory) -> int:
    return sum(directory.loads.values())
