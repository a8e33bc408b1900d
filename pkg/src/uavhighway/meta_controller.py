"""HAPS meta-controller: load bookkeeping, Offload/Recall/Idle decisions and
the meta reward.

Rates and capacity are in Mbps. The HAPS load is the sum of the weighted
rates of HAPS-attached UAVs, in the same unit as the capacity.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

log = logging.getLogger(__name__)


class Link(enum.Enum):
    HAPS = "HAPS"
    TBS = "TBS"


@dataclass(frozen=True)
class MetaUav:
    uav_id: int
    link: Link
    rate_mbps: float
    priority: int = 3
    ground_coverage: bool = True
    # Barred from the HAPS by an earlier Offload.
    offloaded: bool = False
    # Contribution to the HAPS load if recalled; defaults to rate_mbps.
    haps_rate_mbps: Optional[float] = None

    def __post_init__(self):
        if not 1 <= self.priority <= 5:
            raise ValueError("priority must be in [1, 5]")

    @property
    def recall_rate(self) -> float:
        return self.rate_mbps if self.haps_rate_mbps is None else self.haps_rate_mbps


@dataclass(frozen=True)
class MetaState:
    per_uav: tuple
    haps_capacity_mbps: float
    haps_quota: Optional[int] = None

    @property
    def haps_load_mbps(self) -> float:
        return compute_haps_load(self)

    def by_id(self, uav_id) -> MetaUav:
        for u in self.per_uav:
            if u.uav_id == uav_id:
                return u
        raise KeyError(uav_id)

    def haps_count(self) -> int:
        return sum(1 for u in self.per_uav if u.link is Link.HAPS)


class MetaKind(enum.Enum):
    OFFLOAD = "Offload"
    RECALL = "Recall"
    IDLE = "Idle"


@dataclass(frozen=True)
class MetaAction:
    kind: MetaKind
    targets: frozenset = frozenset()

    @classmethod
    def offload(cls, *ids):
        return cls(MetaKind.OFFLOAD, frozenset(ids))

    @classmethod
    def recall(cls, *ids):
        return cls(MetaKind.RECALL, frozenset(ids))

    @classmethod
    def idle(cls):
        return cls(MetaKind.IDLE)

    def __post_init__(self):
        if self.kind is MetaKind.IDLE and self.targets:
            raise ValueError("Idle takes no targets")
        if self.kind is not MetaKind.IDLE and not self.targets:
            raise ValueError(f"{self.kind.value} needs at least one target")

    def render(self) -> str:
        if self.kind is MetaKind.IDLE:
            return "Idle"
        return f"{self.kind.value}{{{','.join(str(i) for i in sorted(self.targets))}}}"

    def __str__(self):
        return self.render()


@dataclass(frozen=True)
class MetaRewardWeights:
    eta1: float = 0.01
    eta2: float = 1.0
    eta3: float = 1.0

    def __post_init__(self):
        if min(self.eta1, self.eta2, self.eta3) < 0:
            raise ValueError("meta reward weights must be nonnegative")


def compute_haps_load(state: MetaState) -> float:
    return sum(u.rate_mbps for u in state.per_uav if u.link is Link.HAPS)


def project_load(state: MetaState, action: MetaAction) -> float:
    """HAPS load after ``action`` with every rate held fixed."""
    load = compute_haps_load(state)
    for uid in action.targets:
        u = state.by_id(uid)
        if action.kind is MetaKind.OFFLOAD and u.link is Link.HAPS:
            load -= u.rate_mbps
        elif action.kind is MetaKind.RECALL and u.link is Link.TBS:
            load += u.recall_rate
    return load


def validate_meta_action(state: MetaState, action: MetaAction) -> None:
    for uid in action.targets:
        u = state.by_id(uid)
        if action.kind is MetaKind.OFFLOAD and u.link is not Link.HAPS:
            raise ValueError(f"UAV {uid} is not HAPS-attached and cannot be offloaded")
        if action.kind is MetaKind.RECALL and u.link is not Link.TBS:
            raise ValueError(f"UAV {uid} is not TBS-attached and cannot be recalled")


def rule_based_meta_policy(state: MetaState) -> MetaAction:
    """Offload one UAV when the HAPS is over capacity, otherwise recall one.

    Offload picks the lowest-rate HAPS UAV with ground coverage (higher
    priority number, then lower id, break ties). Recall picks the highest-rate
    offloaded UAV whose return keeps the load within capacity and, when the
    state carries a HAPS quota, within quota.
    """
    load = compute_haps_load(state)
    if load > state.haps_capacity_mbps:
        movable = [u for u in state.per_uav if u.link is Link.HAPS and u.ground_coverage]
        if not movable:
            log.warning("HAPS over capacity (%.3f > %.3f) but no UAV has ground coverage",
                        load, state.haps_capacity_mbps)
            return MetaAction.idle()
        pick = min(movable, key=lambda u: (u.rate_mbps, -u.priority, u.uav_id))
        return MetaAction.offload(pick.uav_id)

    if state.haps_quota is not None and state.haps_count() >= state.haps_quota:
        return MetaAction.idle()
    eligible = [u for u in state.per_uav
                if u.link is Link.TBS and u.offloaded
                and load + u.recall_rate <= state.haps_capacity_mbps]
    if eligible:
        pick = min(eligible, key=lambda u: (-u.recall_rate, u.uav_id))
        return MetaAction.recall(pick.uav_id)
    return MetaAction.idle()


def meta_reward(state_after: MetaState, saturated: bool, total_mu: float,
                w: MetaRewardWeights = MetaRewardWeights()) -> float:
    """Throughput term minus saturation and handover penalties.

    ``total_mu`` is the summed handover penalty (or handover count, per
    configuration) caused by this meta step.
    """
    throughput = sum(u.rate_mbps for u in state_after.per_uav)
    return w.eta1 * throughput - w.eta2 * float(bool(saturated)) - w.eta3 * total_mu


class MetaPolicy:
    """Meta-level decision interface."""

    name = "meta"

    def decide(self, state: MetaState) -> MetaAction:
        raise NotImplementedError

    def record_outcome(self, state, action, reward, next_state) -> None:
        pass


class IdleMetaPolicy(MetaPolicy):
    name = "idle"

    def decide(self, state):
        return MetaAction.idle()


class RuleBasedMetaPolicy(MetaPolicy):
    name = "rule"

    def decide(self, state):
        return rule_based_meta_policy(state)


@dataclass(frozen=True)
class MetaTransition:
    episode: int
    step: int
    state: MetaState
    action: MetaAction
    reward: float
    next_state: MetaState
    saturated: bool
    total_mu: float
    events: tuple = field(default_factory=tuple)


def run_meta_loop(env, policy: MetaPolicy, episodes: int, steps: int, edge_policy=None,
                  seed: int = 0) -> list:
    """Drive ``env`` for ``episodes`` episodes of at most ``steps`` edge steps.

    The meta policy acts every ``env.config.meta_period`` edge steps. Edge
    actions come from ``edge_policy`` (keep lane, T1 when omitted). Returns
    the list of meta transitions in order.
    """
    from .edge_env import run_episode
    from .policies import FixedPolicy

    edge_policy = edge_policy or FixedPolicy()
    transcript = []
    for ep in range(episodes):
        result = run_episode(env, edge_policy, policy, episode=ep, seed=seed, max_steps=steps)
        transcript.extend(result.meta_transitions)
    return transcript
