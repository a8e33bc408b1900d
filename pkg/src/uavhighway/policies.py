"""Edge-level decision policies sharing one interface.

Every policy maps a :class:`DecisionContext` to a joint
``(TransportAction, TelecomAction)`` and may learn from outcomes through
``record_outcome``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .association import TelecomAction
from .edge_env import DecisionContext, ObservationMatrix
from .mobility import IdmParams, TransportAction, desired_gap

NORMALISED_BOUNDS = (100.0, 100.0, 20.0, 20.0)
PADDING_BIN = -1

JOINT_ACTIONS = tuple(itertools.product(TransportAction, TelecomAction))


@dataclass(frozen=True)
class DiscretizedState:
    bins: tuple

    def as_vector(self) -> np.ndarray:
        return np.asarray(self.bins, dtype=float)


def _bin(value: float, bound: float, num_bins: int) -> int:
    clamped = min(max(value, 0.0), bound)
    return min(int(math.floor(clamped / bound * num_bins)), num_bins - 1)


def discretize(obs: ObservationMatrix, num_bins: int = 8, bounds=NORMALISED_BOUNDS) -> DiscretizedState:
    """Quantise (x, y, vx, vy) of every row, then append the ego's telecom counters.

    ``x`` is the longitudinal distance to the ego (0 for the ego row), ``y``
    the lane index, ``vx`` the forward speed and ``vy`` the lateral speed
    magnitude. Padding rows map to ``PADDING_BIN``.
    """
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    ego = obs.rows[0]
    bins = []
    for row in obs.rows:
        if not row.valid:
            bins.extend([PADDING_BIN] * 4)
            continue
        fields = (abs(row.x - ego.x), row.y, row.v, abs(row.vy))
        bins.extend(_bin(f, b, num_bins) for f, b in zip(fields, bounds))
    bins.extend([int(ego.n_r), int(ego.n_h)])
    return DiscretizedState(tuple(bins))


def leader_in_view(obs: ObservationMatrix):
    """Closest observed UAV ahead of the ego in its lane, or None."""
    ego = obs.rows[0]
    ahead = [r for r in obs.rows[1:] if r.valid and r.y == ego.y and r.x >= ego.x]
    return min(ahead, key=lambda r: (r.x, r.uav_id)) if ahead else None


class Policy:
    """Base class for edge policies."""

    name = "policy"

    def decide(self, ctx: DecisionContext):
        raise NotImplementedError

    def record_outcome(self, ctx, action, reward, next_ctx) -> None:
        pass


class FixedPolicy(Policy):
    """Always returns the same joint action."""

    name = "fixed"

    def __init__(self, transport=TransportAction.IDLE, telecom=TelecomAction.T1):
        self.action = (TransportAction(transport), TelecomAction(telecom))

    def decide(self, ctx):
        return self.action


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def decide(self, ctx):
        t = TransportAction(int(self.rng.integers(len(TransportAction))))
        c = TelecomAction(int(self.rng.integers(len(TelecomAction))))
        return t, c


class SafeHeuristicPolicy(Policy):
    """Slow down when the leader is closer than twice the IDM desired gap."""

    name = "safe"

    def __init__(self, idm: IdmParams = IdmParams(), vehicle_length_m: float = 5.0,
                 telecom: TelecomAction = TelecomAction.T1):
        self.idm = idm
        self.vehicle_length_m = vehicle_length_m
        self.telecom = TelecomAction(telecom)

    def decide(self, ctx):
        obs = ctx.observation
        leader = leader_in_view(obs)
        if leader is not None:
            ego = obs.rows[0]
            gap = leader.x - ego.x - self.vehicle_length_m
            if gap < 2.0 * desired_gap(ego.v, ego.v - leader.v, self.idm):
                return TransportAction.SLOWER, self.telecom
        return TransportAction.IDLE, self.telecom


class GreedyTelecomPolicy(Policy):
    """Keep lane and always take the highest instantaneous rate (T3)."""

    name = "greedy"

    def decide(self, ctx):
        return TransportAction.IDLE, TelecomAction.T3


class TabularQPolicy(Policy):
    """Epsilon-greedy one-step Q-learning over the 15 composite joint actions.

    Epsilon is annealed linearly from ``epsilon_start`` to ``epsilon_end``
    over ``anneal_steps`` decisions.
    """

    name = "tabular"

    def __init__(self, alpha=0.1, gamma=0.95, epsilon_start=1.0, epsilon_end=0.05,
                 anneal_steps=10_000, num_bins=8, seed=0):
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.anneal_steps = anneal_steps
        self.num_bins = num_bins
        self.rng = np.random.default_rng(seed)
        self.table: dict = {}
        self.decisions = 0
        self.frozen = False

    @property
    def epsilon(self) -> float:
        if self.anneal_steps <= 0:
            return self.epsilon_end
        frac = min(1.0, self.decisions / self.anneal_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def key(self, ctx) -> tuple:
        return discretize(ctx.observation, self.num_bins).bins

    def q_values(self, key) -> np.ndarray:
        return self.table.get(key, np.zeros(len(JOINT_ACTIONS)))

    def decide(self, ctx):
        eps = self.epsilon
        if not self.frozen:
            self.decisions += 1
        if eps > 0 and self.rng.random() < eps:
            return JOINT_ACTIONS[int(self.rng.integers(len(JOINT_ACTIONS)))]
        q = self.q_values(self.key(ctx))
        return JOINT_ACTIONS[int(np.argmax(q))]

    def update(self, key, action_index: int, reward: float, next_key=None) -> float:
        q = self.table.setdefault(key, np.zeros(len(JOINT_ACTIONS)))
        future = 0.0 if next_key is None else float(np.max(self.q_values(next_key)))
        q[action_index] += self.alpha * (reward + self.gamma * future - q[action_index])
        return float(q[action_index])

    def record_outcome(self, ctx, action, reward, next_ctx):
        if self.frozen:
            return
        idx = JOINT_ACTIONS.index((TransportAction(action[0]), TelecomAction(action[1])))
        next_key = None if next_ctx is None else self.key(next_ctx)
        self.update(self.key(ctx), idx, reward, next_key)

    def save(self, path) -> None:
        data = {
            "alpha": self.alpha, "gamma": self.gamma, "num_bins": self.num_bins,
            "decisions": self.decisions,
            "table": [{"state": list(k), "q": [float(v) for v in q]} for k, q in sorted(self.table.items())],
        }
        Path(path).write_text(json.dumps(data, indent=1))

    @classmethod
    def load(cls, path, **kwargs) -> "TabularQPolicy":
        data = json.loads(Path(path).read_text())
        pol = cls(alpha=data["alpha"], gamma=data["gamma"], num_bins=data["num_bins"], **kwargs)
        pol.decisions = data["decisions"]
        pol.table = {tuple(e["state"]): np.asarray(e["q"], dtype=float) for e in data["table"]}
        return pol


def decide(policy: Policy, ctx: DecisionContext):
    return policy.decide(ctx)


def record_outcome(policy: Policy, ctx, action, reward, next_ctx):
    policy.record_outcome(ctx, action, reward, next_ctx)
    return policy
