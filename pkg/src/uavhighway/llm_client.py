"""LLM-as-policy plumbing for the meta and edge controllers.

Prompts are rendered from fixed templates, similar past experiences are
retrieved by Euclidean distance, replies are parsed from XML-like tags and
any failure falls back to a conventional policy.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .association import TelecomAction
from .meta_controller import Link, MetaAction, MetaKind, MetaPolicy, MetaState, RuleBasedMetaPolicy, \
    compute_haps_load, validate_meta_action
from .mobility import TransportAction
from .policies import NORMALISED_BOUNDS, PADDING_BIN, Policy, SafeHeuristicPolicy, discretize

log = logging.getLogger(__name__)

META_TAGS = ("meta_action",)
EDGE_TAGS = ("tran_action", "tele_action")


class Label(enum.Enum):
    GOOD = "GOOD"
    BAD = "BAD"


@dataclass(frozen=True)
class Experience:
    state_vector: tuple
    action: object
    reward: float
    label: Label

    @classmethod
    def labelled(cls, state_vector, action, reward, good_threshold=0.0):
        label = Label.GOOD if reward >= good_threshold else Label.BAD
        return cls(tuple(float(v) for v in state_vector), action, float(reward), label)


class ExperienceStore:
    """Bounded FIFO store of experiences sharing one state dimension.

    States live in a preallocated ring buffer so retrieval does not rebuild
    a matrix per query. Appends and reads are guarded by a lock so several
    decision loops can share a store.
    """

    def __init__(self, capacity: int = 10_000, good_threshold: float = 0.0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.good_threshold = good_threshold
        self._slots = [None] * capacity
        self._states = None
        self._good = np.zeros(capacity, dtype=bool)
        self._head = 0
        self._count = 0
        self._lock = threading.Lock()
        self.dim = None

    def __len__(self):
        return self._count

    def add(self, state_vector, action, reward) -> Experience:
        exp = Experience.labelled(state_vector, action, reward, self.good_threshold)
        self.append(exp)
        return exp

    def append(self, exp: Experience) -> None:
        with self._lock:
            if self.dim is None:
                self.dim = len(exp.state_vector)
                self._states = np.zeros((self.capacity, self.dim))
            elif len(exp.state_vector) != self.dim:
                raise ValueError(f"state dimension {len(exp.state_vector)} != store dimension {self.dim}")
            if self._count < self.capacity:
                pos = (self._head + self._count) % self.capacity
                self._count += 1
            else:
                pos = self._head
                self._head = (self._head + 1) % self.capacity
            self._slots[pos] = exp
            self._states[pos] = exp.state_vector
            self._good[pos] = exp.label is Label.GOOD

    def snapshot(self) -> list:
        with self._lock:
            return [self._slots[(self._head + i) % self.capacity] for i in range(self._count)]

    def nearest(self, query_vector, k: int = 5):
        """Top-``k`` GOOD and BAD experiences by Euclidean distance, ties by insertion order."""
        with self._lock:
            n = self._count
            if n == 0 or k <= 0:
                return [], []
            q = np.asarray(query_vector, dtype=float)
            if q.shape != (self.dim,):
                raise ValueError(f"query dimension {q.shape[0]} does not match store dimension {self.dim}")
            dist = np.sqrt(np.sum((self._states[:n] - q) ** 2, axis=1))
            rank = (np.arange(n) - self._head) % self.capacity
            good = self._good[:n]
            out = []
            for mask in (good, ~good):
                idx = np.flatnonzero(mask)
                out.append([self._slots[i] for i in _k_smallest(dist[idx], rank[idx], idx, k)])
            return out[0], out[1]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.snapshot():
                fh.write(json.dumps({"state": list(e.state_vector), "action": render_action(e.action),
                                     "reward": e.reward, "label": e.label.value}) + "\n")

    @classmethod
    def load(cls, path, capacity: int = 10_000, good_threshold: float = 0.0) -> "ExperienceStore":
        store = cls(capacity, good_threshold)
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                store.append(Experience(tuple(rec["state"]), parse_action_text(rec["action"]),
                                        rec["reward"], Label(rec["label"])))
        return store


def _k_smallest(dist, rank, idx, k):
    """``idx`` entries of the ``k`` smallest ``dist``, ties broken by ``rank``."""
    if len(dist) > k:
        # Keep everything tied with the k-th distance so the tie-break stays exact.
        kth = np.partition(dist, k - 1)[k - 1]
        keep = dist <= kth
        dist, rank, idx = dist[keep], rank[keep], idx[keep]
    return idx[np.lexsort((rank, dist))[:k]]


def retrieve_experiences(store, query_vector, k: int = 5):
    """Top-``k`` GOOD and top-``k`` BAD experiences nearest to ``query_vector``.

    Distance is Euclidean; equal distances keep insertion order. ``store``
    is an :class:`ExperienceStore` or a sequence of experiences.
    """
    if isinstance(store, ExperienceStore):
        return store.nearest(query_vector, k)
    tmp = ExperienceStore(max(len(store), 1))
    for e in store:
        tmp.append(e)
    return tmp.nearest(query_vector, k)


# --- actions as text ---------------------------------------------------------

def render_edge_action(action) -> str:
    t, c = action
    return (f"<tran_action>{TransportAction(t).name}</tran_action>\n"
            f"<tele_action>{TelecomAction(c).name.lower()}</tele_action>")


def render_meta_action(action: MetaAction) -> str:
    return f"<meta_action>{action.render()}</meta_action>"


def render_action(action) -> str:
    if isinstance(action, MetaAction):
        return action.render()
    t, c = action
    return f"{TransportAction(t).name},{TelecomAction(c).name.lower()}"


def parse_action_text(text: str):
    if "," in text and "{" not in text:
        t, c = text.split(",", 1)
        return parse_transport(t), parse_telecom(c)
    return parse_meta(text)


class ParseError(ValueError):
    """Reply could not be turned into actions; ``problems`` maps tag to reason."""

    def __init__(self, problems: dict):
        self.problems = dict(problems)
        detail = "; ".join(f"{tag}: {why}" for tag, why in self.problems.items())
        super().__init__(f"unparseable reply ({detail})")

    @property
    def tags(self) -> list:
        return list(self.problems)


_META_RE = re.compile(r"^(offload|recall)\s*\{\s*(\d+(?:\s*,\s*\d+)*)\s*\}$", re.I)


def parse_transport(text: str) -> TransportAction:
    name = text.strip().upper().replace(" ", "_").replace("-", "_")
    try:
        return TransportAction[name]
    except KeyError:
        raise ValueError(f"unknown transport action {text!r}") from None


def parse_telecom(text: str) -> TelecomAction:
    try:
        return TelecomAction[text.strip().upper()]
    except KeyError:
        raise ValueError(f"unknown telecom action {text!r}") from None


def parse_meta(text: str) -> MetaAction:
    body = text.strip()
    if body.lower() == "idle":
        return MetaAction.idle()
    m = _META_RE.match(body)
    if not m:
        raise ValueError(f"unknown meta action {text!r}")
    ids = frozenset(int(s) for s in m.group(2).split(","))
    kind = MetaKind.OFFLOAD if m.group(1).lower() == "offload" else MetaKind.RECALL
    return MetaAction(kind, ids)


_GRAMMAR = {"meta_action": parse_meta, "tran_action": parse_transport, "tele_action": parse_telecom}


def parse_tagged_response(text: str, expected_tags) -> dict:
    """Extract the first well-formed ``<tag>body</tag>`` for each expected tag."""
    out, problems = {}, {}
    for tag in expected_tags:
        m = re.search(rf"<{tag}>(.*?)</{tag}>", text, re.S | re.I)
        if m is None:
            problems[tag] = "missing"
            continue
        body = m.group(1).strip()
        if not body:
            problems[tag] = "empty"
            continue
        try:
            out[tag] = _GRAMMAR[tag](body)
        except (KeyError, ValueError) as exc:
            problems[tag] = str(exc)
    if problems:
        raise ParseError(problems)
    return out


# --- prompts -----------------------------------------------------------------

@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    expected_tags: tuple
    metadata: tuple = ()

    def __post_init__(self):
        if not self.expected_tags:
            raise ValueError("expected_tags must not be empty")

    @property
    def full_text(self) -> str:
        return self.system_text + "\n" + self.user_text


def _num(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _signed(x: float) -> str:
    return f"{x:+.2f}"


_META_SYSTEM = """\
## Task Description
You are the meta-controller running on a high altitude platform station (HAPS). You decide which UAVs stay associated with the HAPS and which are moved to terrestrial base stations (TBS).

## Task Goal
- B_t is the sum of the rates of the UAVs on the HAPS; it must not exceed C.
- If B_t > C, pick HAPS users with low rates and hand them to ground stations. If there is room under C, let offloaded UAVs return.
- Every forced handover costs reward, and so does running the HAPS above C.

## Rules
Answer with exactly one meta action:
- Offload{ID1,ID2,...}: move the listed HAPS-attached UAVs to terrestrial base stations.
- Recall{ID1,ID2,...}: move the listed offloaded UAVs back to the HAPS.
- Idle: keep every association unchanged.
Wrap the action in <meta_action></meta_action> and give a one-line reason.
"""


def meta_state_vector(state: MetaState) -> tuple:
    """Fixed-size summary used to index meta experiences."""
    haps = [u.rate_mbps for u in state.per_uav if u.link is Link.HAPS]
    recall = [u.recall_rate for u in state.per_uav if u.offloaded]
    return (compute_haps_load(state), state.haps_capacity_mbps, float(len(haps)),
            float(len(state.per_uav) - len(haps)), float(len(recall)),
            min(haps) if haps else 0.0, max(recall) if recall else 0.0)


def _meta_experience_line(e: Experience) -> str:
    load, cap, n_haps, n_tbs, n_off = e.state_vector[:5]
    return (f"- State: B_t={_num(load)} Mbps, C={_num(cap)} Mbps, {int(n_haps)} on HAPS, "
            f"{int(n_tbs)} on TBS, {int(n_off)} offloaded -> Action: {render_action(e.action)} "
            f"-> Reward: {_signed(e.reward)}")


def _edge_experience_line(e: Experience) -> str:
    state = ",".join(str(int(v)) for v in e.state_vector)
    t, c = e.action
    return (f"- State: [{state}], Action: {{{TransportAction(t).name}, {TelecomAction(c).name.lower()}}}, "
            f"Reward: {_signed(e.reward)}")


def _experience_block(good, bad, line) -> str:
    lines = ["## Experience Replay"]
    if not good and not bad:
        lines.append("No previous experiences are available yet.")
        return "\n".join(lines)
    lines.append("Good experiences (high reward):")
    lines += [line(e) for e in good] or ["- none available"]
    lines.append("Bad experiences (low reward):")
    lines += [line(e) for e in bad] or ["- none available"]
    return "\n".join(lines)


def build_meta_prompt(state: MetaState, experiences=((), ()), capacity: Optional[float] = None,
                      step: int = 0) -> PromptBundle:
    capacity = state.haps_capacity_mbps if capacity is None else capacity
    good, bad = experiences
    lines = [
        "## Environment Features",
        "- UAV ID: identifier of the UAV.",
        "- Link: serving station type, HAPS or TBS.",
        "- Rate [Mbps]: current weighted data rate of the UAV.",
        "- Priority: 1 is the most urgent task, 5 the least urgent.",
        "- Offloaded: yes when an earlier Offload bars the UAV from the HAPS.",
        f"HAPS capacity: C = {_num(capacity)} Mbps",
        "",
        "## Observations",
        "UAV ID | Link | Rate (Mbps) | Priority | Offloaded",
    ]
    for u in state.per_uav:
        lines.append(f"{u.uav_id} | {u.link.value} | {_num(u.rate_mbps)} | {u.priority} | "
                     f"{'yes' if u.offloaded else 'no'}")
    haps_rates = [u.rate_mbps for u in state.per_uav if u.link is Link.HAPS]
    total = compute_haps_load(state)
    if len(haps_rates) > 1:
        lines.append(f"Total HAPS load B_t = {' + '.join(_num(r) for r in haps_rates)} = {_num(total)} Mbps")
    else:
        lines.append(f"Total HAPS load B_t = {_num(total)} Mbps")
    lines.append("")
    lines.append(_experience_block(good, bad, _meta_experience_line))
    lines.append("")
    lines.append("Decision: reply with the chosen action inside <meta_action></meta_action>.")
    return PromptBundle(_META_SYSTEM, "\n".join(lines) + "\n", META_TAGS, ("meta", step))


_EDGE_SYSTEM = """\
## Task Description
You control one UAV, the ego UAV, on a multi-lane aerial highway. At every step you choose both a flight maneuver and a base-station selection strategy (t1, t2 or t3).

## Task Goal
- Transport: reward rises with speed; a crash costs far more than it can gain, and each lane change costs a little.
- Telecom: reward rises with the weighted rate (rate shared among a station's users) and falls as the handover ratio grows.

## Rules
- Transport action is one of FASTER, SLOWER, LANE_LEFT, LANE_RIGHT, IDLE.
- Telecom action is one of t1 (best weighted rate), t2 (best weighted rate among stations below quota), t3 (best instantaneous rate).
- The reply must contain <tran_action>...</tran_action> and <tele_action>...</tele_action>.
"""


def build_edge_prompt(ctx, experiences=((), ()), num_bins: int = 8, step: int = 0) -> PromptBundle:
    good, bad = experiences
    state = discretize(ctx.observation, num_bins)
    m1 = len(ctx.observation.rows)
    bounds = ", ".join(_num(b) for b in NORMALISED_BOUNDS)
    lines = [
        "## Environment Features",
        "Each row describes one UAV; the first row is the ego UAV.",
        "- x: longitudinal distance to the ego UAV (m)",
        "- y: lane index",
        "- vx: forward speed (m/s)",
        "- vy: lateral speed (m/s), only nonzero while switching lanes",
        "Ego link counts: gbs_cnt ground stations and haps_cnt HAPS links that meet the target rate.",
        f"x, y, vx, vy are clipped to [0, bound] with bounds [{bounds}] and split into {num_bins} bins.",
        "",
        "## Observations",
        f"Binned kinematics, one row per UAV ({m1} rows, ego first):",
    ]
    for r in range(m1):
        row = state.bins[4 * r:4 * r + 4]
        if all(b == PADDING_BIN for b in row):
            lines.append("[absent]")
        else:
            lines.append("[" + ", ".join(str(b) for b in row) + "]")
    s = ctx.telecom_summary
    lines.append(f"[gbs_cnt={s.gbs_cnt}, haps_cnt={s.haps_cnt}]")
    lines.append("")
    lines.append(_experience_block(good, bad, _edge_experience_line))
    lines.append("")
    lines.append("Decision: reply with both actions inside their tags.")
    return PromptBundle(_EDGE_SYSTEM, "\n".join(lines) + "\n", EDGE_TAGS, (ctx.uav_id, step))


# --- transports --------------------------------------------------------------

@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = "http://localhost:11434"
    model_name: str = "llama3.1:8b"
    timeout_ms: int = 30_000
    max_retries: int = 2
    temperature: float = 0.0
    backoff_s: float = 0.5

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class TransientLlmError(RuntimeError):
    """Timeout or server-side failure worth retrying."""


class EndpointUnavailable(RuntimeError):
    """The endpoint could not produce a reply."""


def chat_request(prompt: PromptBundle, cfg: LlmEndpointConfig) -> dict:
    return {
        "model": cfg.model_name,
        "messages": [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": prompt.user_text},
        ],
        "temperature": cfg.temperature,
        "stream": False,
    }


def request_hash(request: dict) -> str:
    canon = json.dumps({"model": request["model"], "messages": request["messages"]},
                       sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class HttpTransport:
    """OpenAI-compatible ``/v1/chat/completions`` client (Ollama serves one too)."""

    def __init__(self, base_url: str, session=None):
        import requests

        self.url = base_url.rstrip("/") + "/v1/chat/completions"
        self._requests = requests
        self.session = session or requests.Session()

    def complete(self, request: dict, timeout_s: float) -> str:
        exc_types = self._requests.exceptions
        try:
            resp = self.session.post(self.url, json=request, timeout=timeout_s)
        except (exc_types.Timeout, exc_types.ConnectionError) as exc:
            raise TransientLlmError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransientLlmError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise EndpointUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise EndpointUnavailable(f"malformed completion payload: {exc}") from exc


class ScriptedTransport:
    """Deterministic stand-in for an endpoint.

    Replies are looked up by request hash, then produced by ``responder``
    (called with the request dict), then ``default``. The first ``failures``
    calls raise :class:`TransientLlmError` to exercise retries.
    """

    def __init__(self, replies: Optional[dict] = None, default: Optional[str] = None,
                 responder: Optional[Callable] = None, failures: int = 0):
        self.replies = dict(replies or {})
        self.default = default
        self.responder = responder
        self.failures = failures
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_transcript(cls, path, **kwargs) -> "ScriptedTransport":
        replies, default = {}, None
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{n}: {exc}") from exc
                if "default" in rec:
                    default = rec["default"]
                else:
                    replies[rec["request_hash"]] = rec["reply"]
        return cls(replies, default=kwargs.pop("default", default), **kwargs)

    def complete(self, request: dict, timeout_s: float) -> str:
        with self._lock:
            self.calls += 1
            if self.failures > 0:
                self.failures -= 1
                raise TransientLlmError("scripted timeout")
        key = request_hash(request)
        if key in self.replies:
            return self.replies[key]
        if self.responder is not None:
            return self.responder(request)
        if self.default is not None:
            return self.default
        raise EndpointUnavailable(f"no scripted reply for request {key[:12]}")


class RecordingTransport:
    """Wraps a transport and appends (request hash, reply) lines to ``path``."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, request: dict, timeout_s: float) -> str:
        reply = self.inner.complete(request, timeout_s)
        with self._lock, open(self.path, "a") as fh:
            fh.write(json.dumps({"request_hash": request_hash(request), "reply": reply}) + "\n")
        return reply


def query_llm(prompt: PromptBundle, cfg: LlmEndpointConfig, transport, sleep=time.sleep) -> str:
    """Send ``prompt``; retry transient failures with exponential backoff."""
    request = chat_request(prompt, cfg)
    last = None
    for attempt in range(cfg.max_retries + 1):
        try:
            return transport.complete(request, cfg.timeout_ms / 1000.0)
        except TransientLlmError as exc:
            last = exc
            if attempt < cfg.max_retries:
                sleep(cfg.backoff_s * 2 ** attempt)
    raise EndpointUnavailable(f"gave up after {cfg.max_retries + 1} attempts: {last}")


# --- decisions ---------------------------------------------------------------

@dataclass
class FallbackStats:
    decisions: int = 0
    fallbacks: int = 0
    errors: list = field(default_factory=list)

    def note(self, error: Optional[Exception]):
        self.decisions += 1
        if error is not None:
            self.fallbacks += 1
            self.errors.append(type(error).__name__)


def llm_decide_with_fallback(role: str, inputs, cfg: LlmEndpointConfig, fallback_policy, transport,
                             experiences=((), ()), num_bins: int = 8, stats: Optional[FallbackStats] = None,
                             sleep=time.sleep):
    """Build, query and parse; on any failure return ``fallback_policy``'s decision.

    ``role`` is ``"edge"`` (``inputs`` is a DecisionContext) or ``"meta"``
    (``inputs`` is a MetaState). Never raises for endpoint or parse errors.
    """
    error = None
    try:
        if role == "edge":
            prompt = build_edge_prompt(inputs, experiences, num_bins)
            parsed = parse_tagged_response(query_llm(prompt, cfg, transport, sleep), EDGE_TAGS)
            action = (parsed["tran_action"], parsed["tele_action"])
        elif role == "meta":
            prompt = build_meta_prompt(inputs, experiences)
            action = parse_tagged_response(query_llm(prompt, cfg, transport, sleep), META_TAGS)["meta_action"]
            validate_meta_action(inputs, action)
        else:
            raise ValueError(f"unknown role {role!r}")
    except (EndpointUnavailable, TransientLlmError, ValueError, KeyError) as exc:
        error = exc
        log.info("LLM %s decision fell back: %s", role, exc)
        action = fallback_policy.decide(inputs)
    if stats is not None:
        stats.note(error)
    return action


class LlmEdgePolicy(Policy):
    """Edge policy querying an LLM with retrieved experiences.

    Experiences are kept per UAV unless ``shared_store`` is set.
    """

    name = "llm"

    def __init__(self, cfg: LlmEndpointConfig, transport, fallback: Optional[Policy] = None,
                 num_bins: int = 8, k: int = 5, good_threshold: float = 0.0,
                 store_capacity: int = 10_000, shared_store: bool = False, sleep=time.sleep):
        self.cfg = cfg
        self.transport = transport
        self.fallback = fallback or SafeHeuristicPolicy()
        self.num_bins = num_bins
        self.k = k
        self.good_threshold = good_threshold
        self.store_capacity = store_capacity
        self.shared_store = shared_store
        self.stores: dict = {}
        self.stats = FallbackStats()
        self.sleep = sleep

    def store_for(self, uav_id) -> ExperienceStore:
        key = "shared" if self.shared_store else uav_id
        if key not in self.stores:
            self.stores[key] = ExperienceStore(self.store_capacity, self.good_threshold)
        return self.stores[key]

    def decide(self, ctx):
        query = discretize(ctx.observation, self.num_bins).bins
        experiences = retrieve_experiences(self.store_for(ctx.uav_id), query, self.k)
        return llm_decide_with_fallback("edge", ctx, self.cfg, self.fallback, self.transport,
                                        experiences, self.num_bins, self.stats, self.sleep)

    def record_outcome(self, ctx, action, reward, next_ctx):
        state = discretize(ctx.observation, self.num_bins).bins
        self.store_for(ctx.uav_id).add(state, (TransportAction(action[0]), TelecomAction(action[1])), reward)


class LlmMetaPolicy(MetaPolicy):
    name = "llm"

    def __init__(self, cfg: LlmEndpointConfig, transport, fallback: Optional[MetaPolicy] = None,
                 k: int = 5, good_threshold: float = 0.0, store_capacity: int = 10_000, sleep=time.sleep):
        self.cfg = cfg
        self.transport = transport
        self.fallback = fallback or RuleBasedMetaPolicy()
        self.k = k
        self.store = ExperienceStore(store_capacity, good_threshold)
        self.stats = FallbackStats()
        self.sleep = sleep

    def decide(self, state):
        experiences = retrieve_experiences(self.store, meta_state_vector(state), self.k)
        return llm_decide_with_fallback("meta", state, self.cfg, self.fallback, self.transport,
                                        experiences, stats=self.stats, sleep=self.sleep)

    def record_outcome(self, state, action, reward, next_state):
        self.store.add(meta_state_vector(state), action, reward)
