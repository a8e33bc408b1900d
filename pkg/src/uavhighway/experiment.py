"""Seeded episode batches, per-episode metrics, sweeps and report files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .association import TelecomAction
from .config import SWEEPABLE, ConfigError, ScenarioConfig, with_overrides
from .edge_env import EdgeEnv, run_episode
from .llm_client import HttpTransport, LlmEdgePolicy, LlmMetaPolicy, ScriptedTransport, parse_meta
from .meta_controller import IdleMetaPolicy, MetaAction, MetaPolicy, RuleBasedMetaPolicy
from .mobility import TransportAction
from .policies import FixedPolicy, GreedyTelecomPolicy, RandomPolicy, SafeHeuristicPolicy, TabularQPolicy

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUMMARY_WINDOW = 200


@dataclass(frozen=True)
class MetricsRow:
    """Aggregates of one episode.

    Rewards are summed over UAVs and steps. ``step_count`` is the mean
    number of steps a UAV stayed in the episode. Costs are the accumulated
    penalty terms: ``w2*collision + w3*lane_change_ratio`` for transport and
    the telecom reward foregone to handovers, ``w4*WR*min(1, xi)``.
    """

    episode: int
    total_reward: float
    transport_reward: float
    telecom_reward: float
    step_count: float
    collision_rate: float
    transport_cost: float
    telecom_cost: float
    handover_count: int


METRIC_COLUMNS = tuple(f.name for f in dataclasses.fields(MetricsRow))
SUMMARY_METRICS = METRIC_COLUMNS[1:]


class ExperimentAborted(RuntimeError):
    """An episode raised; ``rows`` holds the episodes completed before it."""

    def __init__(self, message, rows, logs):
        super().__init__(message)
        self.rows = rows
        self.logs = logs


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)
    logs: list = field(default_factory=list)
    llm_fallbacks: int = 0


def episode_metrics(result) -> MetricsRow:
    transport = telecom = t_cost = c_cost = 0.0
    collided = set()
    for step in result.steps:
        for uid, o in sorted(step.per_uav.items()):
            transport += o.transport_reward
            telecom += o.telecom_reward
            t_cost += o.transport_cost
            c_cost += o.telecom_cost
            if o.collided:
                collided.add(uid)
    n = max(result.num_uavs, 1)
    lifetimes = [result.lifetimes[uid] for uid in sorted(result.lifetimes)]
    return MetricsRow(
        episode=result.episode,
        total_reward=transport + telecom,
        transport_reward=transport,
        telecom_reward=telecom,
        step_count=float(np.mean(lifetimes)) if lifetimes else 0.0,
        collision_rate=len(collided) / n,
        transport_cost=t_cost,
        telecom_cost=c_cost,
        handover_count=int(result.handovers),
    )


# --- policy wiring -----------------------------------------------------------

def build_transport(cfg: ScenarioConfig, mock_transcript=None, live: Optional[bool] = None):
    """Transport for LLM-backed policies: scripted transcript or live HTTP."""
    live = cfg.live_llm if live is None else live
    path = mock_transcript or cfg.mock_llm_transcript
    if live:
        return HttpTransport(cfg.llm.base_url)
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"mock LLM transcript {str(path)!r} does not exist")
        return ScriptedTransport.from_transcript(path)
    raise ConfigError("LLM policies need a mock transcript (--mock-llm) or --live-llm")


def build_edge_policy(cfg: ScenarioConfig, transport=None):
    telecom = TelecomAction[cfg.fixed_telecom]
    safe = SafeHeuristicPolicy(cfg.idm, cfg.collision_length_m, telecom)
    name = cfg.edge_policy
    if name == "safe":
        return safe
    if name == "fixed":
        return FixedPolicy(TransportAction[cfg.fixed_transport], telecom)
    if name == "random":
        return RandomPolicy(cfg.seed)
    if name == "greedy":
        return GreedyTelecomPolicy()
    if name == "tabular":
        t = cfg.tabular
        return TabularQPolicy(t.alpha, t.gamma, t.epsilon_start, t.epsilon_end, t.anneal_steps,
                              t.num_bins, seed=cfg.seed)
    if name == "llm":
        e = cfg.experience
        return LlmEdgePolicy(cfg.llm, transport, fallback=safe, num_bins=cfg.tabular.num_bins, k=e.k,
                             good_threshold=e.good_threshold, store_capacity=e.store_capacity,
                             shared_store=e.shared_store)
    raise ConfigError(f"unknown edge policy {name!r}")


def build_meta_policy(cfg: ScenarioConfig, transport=None):
    name = cfg.meta_policy
    if name == "none":
        return None
    if name == "idle":
        return IdleMetaPolicy()
    if name == "rule":
        return RuleBasedMetaPolicy()
    if name == "llm":
        e = cfg.experience
        return LlmMetaPolicy(cfg.llm, transport, fallback=RuleBasedMetaPolicy(), k=e.k,
                             good_threshold=e.good_threshold, store_capacity=e.store_capacity)
    raise ConfigError(f"unknown meta policy {name!r}")


def needs_llm(cfg: ScenarioConfig) -> bool:
    return cfg.edge_policy == "llm" or cfg.meta_policy == "llm"


# --- running -----------------------------------------------------------------

def run_experiment(cfg: ScenarioConfig, edge_policy=None, meta_policy=None, transport=None,
                   keep_logs: bool = True, on_episode=None) -> ExperimentResult:
    """Run ``cfg.episodes`` seeded episodes.

    Policies default to the ones named in ``cfg``. Policies persist across
    episodes so learning ones keep their state. If an episode raises,
    :class:`ExperimentAborted` carries the rows finished so far.
    """
    if transport is None and needs_llm(cfg) and (edge_policy is None or meta_policy is None):
        transport = build_transport(cfg)
    if edge_policy is None:
        edge_policy = build_edge_policy(cfg, transport)
    if meta_policy is None:
        meta_policy = build_meta_policy(cfg, transport)
    env = EdgeEnv(cfg)
    out = ExperimentResult()
    for ep in range(cfg.episodes):
        try:
            res = run_episode(env, edge_policy, meta_policy, episode=ep, seed=cfg.seed)
        except Exception as exc:
            raise ExperimentAborted(f"episode {ep} failed: {exc}", out.rows, out.logs) from exc
        row = episode_metrics(res)
        out.rows.append(row)
        if keep_logs:
            out.logs.extend(res.records)
        if on_episode is not None:
            on_episode(row)
    for pol in (edge_policy, meta_policy):
        stats = getattr(pol, "stats", None)
        if stats is not None:
            out.llm_fallbacks += stats.fallbacks
    return out


def summarize(rows, window: int = SUMMARY_WINDOW) -> dict:
    """Mean and population std of each metric over the last ``window`` episodes."""
    tail = list(rows)[-window:]
    out = {"episodes": len(tail)}
    for name in SUMMARY_METRICS:
        vals = np.asarray([getattr(r, name) for r in tail], dtype=float)
        out[f"{name}_mean"] = float(vals.mean()) if len(vals) else 0.0
        out[f"{name}_std"] = float(vals.std()) if len(vals) else 0.0
    return out


def _sort_key(value):
    return (0, value, "") if isinstance(value, (int, float)) else (1, 0, str(value))


def sweep(cfg: ScenarioConfig, parameter: str, values, transport=None, window: int = SUMMARY_WINDOW) -> list:
    """One summary row per distinct value, ordered by value whatever the input order."""
    if parameter not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {parameter!r}; sweepable: {', '.join(SWEEPABLE)}")
    rows = []
    for value in sorted(set(values), key=_sort_key):
        sub = with_overrides(cfg, **{parameter: value})
        result = run_experiment(sub, transport=transport, keep_logs=False)
        rows.append({"parameter": parameter, "value": value, **summarize(result.rows, window)})
    return rows


# --- reports -----------------------------------------------------------------

def _cell(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_cell(getattr(r, c)) for c in METRIC_COLUMNS])


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [MetricsRow(episode=int(d["episode"]), handover_count=int(d["handover_count"]),
                           **{c: float(d[c]) for c in METRIC_COLUMNS if c not in ("episode", "handover_count")})
                for d in reader]


def emit_reports(rows, out_dir, summary: Optional[dict] = None, logs=None, sweep_rows=None) -> list:
    """Write metrics.csv, summary.json and one ``<metric>.dat`` per metric.

    Returns the written paths. ``logs`` (step records) go to episodes.jsonl
    and ``sweep_rows`` to sweep.csv when given.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        path = out / "metrics.csv"
        write_metrics_csv(rows, path)
        written.append(path)

        doc = {"schema_version": SCHEMA_VERSION, "columns": list(METRIC_COLUMNS),
               "summary": summary if summary is not None else summarize(rows)}
        if sweep_rows is not None:
            doc["sweep"] = sweep_rows
        path = out / "summary.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(path)

        for name in SUMMARY_METRICS:
            path = out / f"{name}.dat"
            lines = [f"# episode {name}"] + [f"{r.episode} {_cell(getattr(r, name))}" for r in rows]
            path.write_text("\n".join(lines) + "\n")
            written.append(path)

        if logs is not None:
            path = out / "episodes.jsonl"
            with open(path, "w") as fh:
                for rec in logs:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
            written.append(path)

        if sweep_rows is not None:
            path = out / "sweep.csv"
            cols = ["parameter", "value", "episodes"] + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "std")]
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for s in sweep_rows:
                    w.writerow([_cell(s[c]) for c in cols])
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write reports under {out}: {exc}") from exc
    return written


# --- replay ------------------------------------------------------------------

def load_episode_log(path) -> dict:
    """Group step records from episodes.jsonl by episode."""
    episodes: dict = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
            episodes.setdefault(rec["episode"], []).append(rec)
    return episodes


class _LoggedMetaPolicy(MetaPolicy):
    def __init__(self, env, actions: dict):
        self.env = env
        self.actions = actions

    def decide(self, state):
        text = self.actions.get(self.env.step_index)
        return MetaAction.idle() if text is None else parse_meta(text)


def replay_episode(cfg: ScenarioConfig, records: list):
    """Re-run one logged episode with its recorded edge actions.

    Logged meta actions are replayed too. Returns ``(result, mismatches)``
    where mismatches lists ``(step, uav, field, logged, replayed)``.
    """
    by_step = {r["step"]: r for r in records}
    episode = records[0]["episode"]

    def override(step, contexts):
        rec = by_step.get(step)
        if rec is None:
            return None
        acts = {u["id"]: (TransportAction[u["tran_action"]], TelecomAction[u["tele_action"]]) for u in rec["uavs"]}
        return acts if set(acts) == set(contexts) else None

    env = EdgeEnv(cfg)
    meta = _LoggedMetaPolicy(env, {s: r["meta"]["action"] for s, r in by_step.items() if "meta" in r})
    result = run_episode(env, SafeHeuristicPolicy(cfg.idm, cfg.collision_length_m), meta,
                         episode=episode, seed=cfg.seed, action_override=override)
    mismatches = []
    for rec in result.records:
        logged = by_step.get(rec["step"])
        if logged is None:
            mismatches.append((rec["step"], None, "step", None, rec["step"]))
            continue
        for new, old in zip(rec["uavs"], logged["uavs"]):
            for key in ("x", "lane", "v", "station", "transport_reward", "telecom_reward", "collided"):
                if new[key] != old[key]:
                    mismatches.append((rec["step"], new["id"], key, old[key], new[key]))
    if len(result.records) != len(records):
        mismatches.append((None, None, "length", len(records), len(result.records)))
    return result, mismatches
