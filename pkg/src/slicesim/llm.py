"""Optional LLM-backed planner behind the pluggable planner contract.

Every model decision is parsed from a strict JSON payload and re-validated
by the workflow before it can touch the network state; anything malformed
falls back to the rule-based operation for that subtask and leaves a failure
record. Transports are swappable: a live chat-completion endpoint or an
offline fixture replay, with optional recording of (prompt, response) pairs
as JSON lines for diff-able review.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from string import Template

from .domain import NetworkState, SliceConfig
from .perception import Observation, RawRequest
from .planning import (
    HandoverPlan,
    IntentCatalog,
    Move,
    PlannerError,
    PlanState,
    QosIntent,
    RateRange,
    RuleBasedPlanner,
    intent_digest,
)

ENV_BASE_URL = "SLICESIM_LLM_BASE_URL"
ENV_API_KEY = "SLICESIM_LLM_API_KEY"
ENV_MODEL = "SLICESIM_LLM_MODEL"


class SchemaError(Exception):
    pass


class TransportError(Exception):
    pass


class MissingFixture(Exception):
    pass


class MissingContextField(Exception):
    def __init__(self, fieldname: str):
        self.fieldname = fieldname
        super().__init__(f"prompt context missing '{fieldname}'")


@dataclass(frozen=True)
class SubtaskDecision:
    kind: str
    payload: dict


_COMMON_HEADER = (
    "You are the slice controller of a cellular base station. Work step by\n"
    "step, but respond with exactly one JSON object on the last line and no\n"
    "other JSON anywhere in the reply.\n")

PROMPT_TEMPLATES: dict[PlanState, Template] = {
    PlanState.INTENT_UNDERSTANDING: Template(
        _COMMON_HEADER
        + "Step 1 of 5, intent understanding: translate the service request\n"
          "into a recommended data-rate range (integer Mb/s) and latency\n"
          "bound (ms).\n\n"
          "Request: user=$user_id position=$position service=$service_text\n"
          "Known service classes:\n$catalog_block\n"
          "Network status:\n$occupancy_block\n"
          'Response schema: {"rate_min": <int>, "rate_max": <int>, '
          '"latency_ms": <int>}\n'),
    PlanState.USER_REGISTRATION: Template(
        _COMMON_HEADER
        + "Step 2 of 5, user registration: assign the user to the slice whose\n"
          "decision range covers the recommended minimum rate; in the overlap\n"
          "prefer the less occupied slice.\n\n"
          "Recommendation: $intent\n"
          "Slices:\n$slice_block\n"
          "Network status:\n$occupancy_block\n"
          'Response schema: {"slice": "<name>"}\n'),
    PlanState.SLICE_OPTIMIZATION: Template(
        _COMMON_HEADER
        + "Step 3 of 5, slice optimization: choose the integer data rate that\n"
          "keeps resource occupation minimal while meeting the recommendation\n"
          "and the channel cap.\n\n"
          "Recommendation: $intent\n"
          "Slice: $slice (decision range $decision_range, free RBs $free_rbs)\n"
          "Channel cap: $rate_cap Mb/s\n"
          'Response schema: {"rate": <int>}\n'),
    PlanState.QOS_EVALUATION: Template(
        _COMMON_HEADER
        + "Step 4 of 5, QoS evaluation: check whether every admitted user's\n"
          "allocated rate meets their recommendation and slice range.\n\n"
          "Allocations:\n$allocations_block\n"
          'Response schema: {"ok": <true|false>}\n'),
    PlanState.SLICE_HANDOVER: Template(
        _COMMON_HEADER
        + "Step 5 of 5, slice handover: free capacity in the congested slice\n"
          "by moving users whose rate also fits another slice, keeping each\n"
          "moved rate unchanged and within the destination range.\n\n"
          "Congested slice: $target (needs $needed_rbs RBs)\n"
          "Movable users:\n$candidates_block\n"
          "Free RBs elsewhere:\n$free_block\n"
          'Response schema: {"moves": [{"user": <int>, "from": "<slice>", '
          '"to": "<slice>", "rate": <int>}, ...]}\n'),
}


def render_prompt(subtask: PlanState, ctx: dict) -> str:
    """Render the subtask template; every placeholder must resolve."""
    template = PROMPT_TEMPLATES.get(subtask)
    if template is None:
        raise ValueError(f"no prompt template for {subtask}")
    try:
        return template.substitute(ctx)
    except KeyError as err:
        raise MissingContextField(err.args[0]) from None


def extract_json(text: str) -> dict:
    """Return the first JSON object found in free text; SchemaError if none."""
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(value, dict):
            return value
        idx = text.find("{", idx + 1)
    raise SchemaError("no JSON object in response")


def _require_int(payload: dict, field_name: str, minimum: int) -> int:
    value = payload.get(field_name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"'{field_name}' must be an integer")
    if value < minimum:
        raise SchemaError(f"'{field_name}' must be at least {minimum}")
    return value


def parse_decision(subtask: PlanState, response: str) -> SubtaskDecision:
    """Extract and schema-check the decision payload for a subtask."""
    payload = extract_json(response)
    if subtask is PlanState.INTENT_UNDERSTANDING:
        rate_min = _require_int(payload, "rate_min", 1)
        rate_max = _require_int(payload, "rate_max", 1)
        latency = _require_int(payload, "latency_ms", 1)
        if rate_min > rate_max:
            raise SchemaError(f"rate_min {rate_min} exceeds rate_max {rate_max}")
        return SubtaskDecision("intent", {
            "rate_min": rate_min, "rate_max": rate_max, "latency_ms": latency})
    if subtask is PlanState.USER_REGISTRATION:
        slice_kind = payload.get("slice")
        if not isinstance(slice_kind, str) or not slice_kind:
            raise SchemaError("'slice' must be a non-empty string")
        return SubtaskDecision("registration", {"slice": slice_kind})
    if subtask is PlanState.SLICE_OPTIMIZATION:
        return SubtaskDecision("optimization", {"rate": _require_int(payload, "rate", 1)})
    if subtask is PlanState.SLICE_HANDOVER:
        moves = payload.get("moves")
        if not isinstance(moves, list):
            raise SchemaError("'moves' must be a list")
        checked = []
        for move in moves:
            if not isinstance(move, dict):
                raise SchemaError("each move must be an object")
            user = _require_int(move, "user", 1)
            rate = _require_int(move, "rate", 1)
            src, dst = move.get("from"), move.get("to")
            if not isinstance(src, str) or not isinstance(dst, str):
                raise SchemaError("move 'from'/'to' must be slice names")
            checked.append({"user": user, "from": src, "to": dst, "rate": rate})
        return SubtaskDecision("handover", {"moves": checked})
    raise SchemaError(f"subtask {subtask.value} carries no decision payload")


class ReplayTransport:
    """Offline transport answering from a recorded fixture file.

    Repeated queries for the same (arrival_index, subtask) consume recorded
    responses in order, sticking to the last one once exhausted.
    """

    def __init__(self, path):
        self.path = path
        self._responses: dict[tuple[int, str], list[str]] = {}
        self._cursor: dict[tuple[int, str], int] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                entry_key = (int(entry["arrival_index"]), str(entry["subtask"]))
                self._responses.setdefault(entry_key, []).append(str(entry["response"]))

    def request(self, subtask: PlanState, prompt: str, arrival_index: int) -> str:
        entry_key = (arrival_index, subtask.value)
        responses = self._responses.get(entry_key)
        if not responses:
            raise MissingFixture(f"no fixture entry for {entry_key}")
        cursor = self._cursor.get(entry_key, 0)
        response = responses[min(cursor, len(responses) - 1)]
        self._cursor[entry_key] = cursor + 1
        return response


class LiveTransport:
    """One-request-per-subtask client for a chat-completion endpoint."""

    def __init__(self, base_url: str, api_key: str = "", model: str = "",
                 timeout: float = 30.0, temperature: float = 0.0):
        if not base_url:
            raise TransportError("no endpoint configured")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.temperature = temperature

    @classmethod
    def from_env(cls) -> "LiveTransport":
        return cls(base_url=os.environ.get(ENV_BASE_URL, ""),
                   api_key=os.environ.get(ENV_API_KEY, ""),
                   model=os.environ.get(ENV_MODEL, ""))

    def request(self, subtask: PlanState, prompt: str, arrival_index: int) -> str:
        try:
            import requests
        except ImportError as err:
            raise TransportError("requests is not installed") from err
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        try:
            resp = requests.post(f"{self.base_url}/chat/completions",
                                 json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransportError(str(err)) from err
        if resp.status_code != 200:
            raise TransportError(f"status {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise TransportError(f"malformed completion payload: {err}") from err


class FixtureWriter:
    """Appends fixture entries as UTF-8 JSON lines."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def write(self, arrival_index: int, subtask: PlanState, prompt: str,
              response: str) -> None:
        entry = {"arrival_index": arrival_index, "subtask": subtask.value,
                 "prompt": prompt, "response": response}
        self._fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class RecordingTransport:
    """Wraps another transport, recording every exchange to a fixture file."""

    def __init__(self, inner, writer: FixtureWriter):
        self.inner = inner
        self.writer = writer

    def request(self, subtask: PlanState, prompt: str, arrival_index: int) -> str:
        response = self.inner.request(subtask, prompt, arrival_index)
        self.writer.write(arrival_index, subtask, prompt, response)
        return response


def run_with_transport(transport, subtask: PlanState, ctx: dict,
                       arrival_index: int) -> SubtaskDecision:
    """Render, query, parse: one validated decision for one subtask."""
    prompt = render_prompt(subtask, ctx)
    response = transport.request(subtask, prompt, arrival_index)
    return parse_decision(subtask, response)


def _occupancy_block(obs: Observation) -> str:
    return "\n".join(
        f"  {kind}: occupancy {view.occupancy:.4f}, free RBs {view.free_rbs}"
        for kind, view in sorted(obs.slices.items()))


def _catalog_block(catalog: IntentCatalog) -> str:
    return "\n".join(
        f"  {label}: rate [{e.intent.rate_range.min},{e.intent.rate_range.max}] Mb/s,"
        f" latency {e.intent.latency_ms} ms"
        for label, e in sorted(catalog.entries.items()))


def _slice_block(configs: dict[str, SliceConfig]) -> str:
    return "\n".join(
        f"  {kind}: {c.total_rbs} RBs, decision range "
        f"[{c.decision_range.min},{c.decision_range.max}] Mb/s,"
        f" latency bound {c.latency_bound_ms} ms"
        for kind, c in sorted(configs.items()))


def intent_ctx(req: RawRequest, catalog: IntentCatalog, obs: Observation) -> dict:
    return {
        "user_id": req.user,
        "position": f"({req.position.x}, {req.position.y})",
        "service_text": req.service_text,
        "catalog_block": _catalog_block(catalog),
        "occupancy_block": _occupancy_block(obs),
    }


def registration_ctx(intent: QosIntent, configs: dict[str, SliceConfig],
                     obs: Observation) -> dict:
    return {
        "intent": intent_digest(intent),
        "slice_block": _slice_block(configs),
        "occupancy_block": _occupancy_block(obs),
    }


def optimization_ctx(intent: QosIntent, config: SliceConfig, free_rbs: int,
                     rate_cap: int | None) -> dict:
    return {
        "intent": intent_digest(intent),
        "slice": config.kind,
        "decision_range": f"[{config.decision_range.min},{config.decision_range.max}]",
        "free_rbs": free_rbs,
        "rate_cap": "unbounded" if rate_cap is None else rate_cap,
    }


def handover_ctx(state: NetworkState, target: str, needed_rbs: int) -> dict:
    ledger = state.slices[target]
    others = {k: l for k, l in state.slices.items() if k != target}
    candidates = [
        f"  user {user}: rate {alloc.rate} Mb/s in {target}"
        for user, alloc in sorted(ledger.allocations.items())
        if any(l.config.decision_range.contains(alloc.rate) for l in others.values())
    ]
    return {
        "target": target,
        "needed_rbs": needed_rbs,
        "candidates_block": "\n".join(candidates) if candidates else "  (none)",
        "free_block": "\n".join(
            f"  {k}: {l.free_rbs} free RBs" for k, l in sorted(others.items())),
    }


def intent_payload(intent: QosIntent) -> dict:
    return {"rate_min": intent.rate_range.min, "rate_max": intent.rate_range.max,
            "latency_ms": intent.latency_ms}


def handover_payload(plan: HandoverPlan) -> dict:
    return {"moves": [
        {"user": m.user, "from": m.src, "to": m.dst, "rate": m.rate}
        for m in plan.moves]}


class LlmPlanner:
    """Planner contract implementation backed by a transport.

    Decision payloads are schema-checked here and re-validated by the
    workflow; any failure surfaces as PlannerError so the workflow can fall
    back to the rule-based operation and log the failure.
    """

    def __init__(self, transport, catalog: IntentCatalog):
        self.transport = transport
        self.catalog = catalog

    def _decide(self, subtask: PlanState, ctx: dict,
                arrival_index: int) -> SubtaskDecision:
        try:
            return run_with_transport(self.transport, subtask, ctx, arrival_index)
        except (SchemaError, TransportError, MissingFixture,
                MissingContextField) as err:
            raise PlannerError(subtask, f"{type(err).__name__}: {err}") from err

    def propose_intent(self, req: RawRequest, catalog: IntentCatalog,
                       obs: Observation, arrival_index: int) -> QosIntent:
        decision = self._decide(PlanState.INTENT_UNDERSTANDING,
                                intent_ctx(req, catalog, obs), arrival_index)
        label = catalog.match(req.service_text) or "best-effort"
        payload = decision.payload
        return QosIntent(label, RateRange(payload["rate_min"], payload["rate_max"]),
                         payload["latency_ms"])

    def propose_slice(self, intent: QosIntent, configs: dict[str, SliceConfig],
                      obs: Observation, arrival_index: int) -> str:
        decision = self._decide(PlanState.USER_REGISTRATION,
                                registration_ctx(intent, configs, obs), arrival_index)
        return decision.payload["slice"]

    def propose_rate(self, intent: QosIntent, config: SliceConfig, free_rbs: int,
                     rate_cap: int | None, arrival_index: int) -> int:
        decision = self._decide(PlanState.SLICE_OPTIMIZATION,
                                optimization_ctx(intent, config, free_rbs, rate_cap),
                                arrival_index)
        return decision.payload["rate"]

    def propose_handover(self, state: NetworkState, target: str, needed_rbs: int,
                         arrival_index: int) -> HandoverPlan:
        decision = self._decide(PlanState.SLICE_HANDOVER,
                                handover_ctx(state, target, needed_rbs), arrival_index)
        moves = tuple(
            Move(user=m["user"], src=m["from"], dst=m["to"], rate=m["rate"])
            for m in decision.payload["moves"])
        return HandoverPlan(moves=moves, freed_rbs=0)


class RuleFixtureRecorder:
    """Planner that takes rule-based decisions while writing them as fixtures.

    The produced file replays through LlmPlanner with outcomes identical to a
    plain rule-based run, which makes it the reference fixture for offline
    testing.
    """

    def __init__(self, writer: FixtureWriter):
        self.writer = writer
        self.rule = RuleBasedPlanner()

    def _emit(self, subtask: PlanState, ctx: dict, payload: dict,
              arrival_index: int) -> None:
        self.writer.write(arrival_index, subtask, render_prompt(subtask, ctx),
                          json.dumps(payload))

    def propose_intent(self, req, catalog, obs, arrival_index):
        intent = self.rule.propose_intent(req, catalog, obs, arrival_index)
        self._emit(PlanState.INTENT_UNDERSTANDING, intent_ctx(req, catalog, obs),
                   intent_payload(intent), arrival_index)
        return intent

    def propose_slice(self, intent, configs, obs, arrival_index):
        kind = self.rule.propose_slice(intent, configs, obs, arrival_index)
        self._emit(PlanState.USER_REGISTRATION, registration_ctx(intent, configs, obs),
                   {"slice": kind}, arrival_index)
        return kind

    def propose_rate(self, intent, config, free_rbs, rate_cap, arrival_index):
        rate = self.rule.propose_rate(intent, config, free_rbs, rate_cap, arrival_index)
        self._emit(PlanState.SLICE_OPTIMIZATION,
                   optimization_ctx(intent, config, free_rbs, rate_cap),
                   {"rate": rate}, arrival_index)
        return rate

    def propose_handover(self, state, target, needed_rbs, arrival_index):
        plan = self.rule.propose_handover(state, target, needed_rbs, arrival_index)
        self._emit(PlanState.SLICE_HANDOVER, handover_ctx(state, target, needed_rbs),
                   handover_payload(plan), arrival_index)
        return plan
