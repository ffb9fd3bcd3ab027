"""The five-step admission workflow and its rule-based planner.

Each arrival runs intent understanding, user registration, slice
optimization and QoS evaluation; when the chosen slice cannot fit the
required rate, bounded slice-handover/re-optimization cycles try to free
capacity by moving overlap users to the other slice. All effects are applied
atomically: a rejected arrival leaves the network state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .domain import (
    URLLC,
    DomainError,
    NetworkState,
    RateRange,
    SliceConfig,
    SliceLedger,
    rbs_for_rate,
)
from .memory import FAILURE, SUCCESS, ActionRecord, CacheEntry, MemoryStore, make_key
from .perception import Observation, RawRequest, observe
from .tools import apply_handover


class UnknownIntent(Exception):
    pass


class NoEligibleSlice(Exception):
    pass


class CapBelowMin(Exception):
    pass


class MissingIntent(Exception):
    pass


class NoFeasiblePlan(Exception):
    pass


class Infeasible(Exception):
    def __init__(self, needed_rbs: int):
        self.needed_rbs = needed_rbs
        super().__init__(f"needs {needed_rbs} RBs")


class PlannerError(Exception):
    """A pluggable planner could not produce a usable decision for a subtask."""

    def __init__(self, subtask: "PlanState", reason: str):
        self.subtask = subtask
        self.reason = reason
        super().__init__(f"{subtask.value}: {reason}")


@dataclass(frozen=True)
class QosIntent:
    """Recommended data-rate range and latency bound for one request."""

    intent_class: str
    rate_range: RateRange
    latency_ms: int

    def __post_init__(self):
        if self.latency_ms < 1:
            raise ValueError("latency_ms must be positive")


@dataclass(frozen=True)
class CatalogEntry:
    label: str
    intent: QosIntent
    slice_kind: str
    weight: float


# Service-class templates. The "4K video" entry is the canonical one; the
# rest, and all weights, are configuration defaults (weights chosen so the
# stock 120-user experiment lands inside the documented tolerance bands).
DEFAULT_CLASSES: tuple[tuple[str, int, int, int, str, float], ...] = (
    ("4K video", 12, 15, 90, "eMBB", 0.11),
    ("HD video", 8, 10, 100, "eMBB", 0.22),
    ("web browsing", 5, 8, 200, "eMBB", 0.26),
    ("voice call", 1, 2, 10, "URLLC", 0.04),
    ("vehicle control", 3, 5, 5, "URLLC", 0.33),
    ("IoT telemetry", 1, 1, 50, "URLLC", 0.04),
)

# Lenient-mode stand-in when no catalog keyword matches.
BEST_EFFORT_INTENT = QosIntent("best-effort", RateRange(5, 5), 200)


class IntentCatalog:
    """Keyword-to-intent templates plus sampling weights for scenario generation."""

    def __init__(self, entries: dict[str, CatalogEntry]):
        if not entries:
            raise ValueError("catalog must not be empty")
        self.entries = dict(entries)

    def match(self, service_text: str) -> str | None:
        """Longest case-insensitive keyword contained in the service text."""
        text = service_text.lower()
        hits = [label for label in self.entries if label.lower() in text]
        if not hits:
            return None
        return max(hits, key=lambda label: (len(label), label))

    def intent_for(self, label: str) -> QosIntent:
        return self.entries[label].intent

    def slice_for(self, label: str) -> str:
        return self.entries[label].slice_kind

    def labels(self) -> list[str]:
        return list(self.entries)

    def weights(self) -> list[float]:
        return [e.weight for e in self.entries.values()]

    def check_against(self, configs: dict[str, SliceConfig]) -> None:
        """Validate templates against the slice configs; raises ValueError."""
        for label, entry in self.entries.items():
            if entry.weight <= 0:
                raise ValueError(f"class '{label}': weight must be positive")
            rate_min = entry.intent.rate_range.min
            if not any(c.decision_range.contains(rate_min) for c in configs.values()):
                raise ValueError(
                    f"class '{label}': rate minimum {rate_min} fits no slice decision range")
            home = configs.get(entry.slice_kind)
            if home is None:
                raise ValueError(f"class '{label}': unknown slice '{entry.slice_kind}'")
            if not home.decision_range.contains(rate_min):
                raise ValueError(
                    f"class '{label}': rate minimum {rate_min} outside its slice "
                    f"'{entry.slice_kind}' decision range")


def default_catalog() -> IntentCatalog:
    entries = {
        label: CatalogEntry(label, QosIntent(label, RateRange(lo, hi), lat), kind, weight)
        for label, lo, hi, lat, kind, weight in DEFAULT_CLASSES
    }
    return IntentCatalog(entries)


class PlanState(str, Enum):
    INTENT_UNDERSTANDING = "intent-understanding"
    USER_REGISTRATION = "user-registration"
    SLICE_OPTIMIZATION = "slice-optimization"
    QOS_EVALUATION = "qos-evaluation"
    SLICE_HANDOVER = "slice-handover"
    DONE = "done"
    REJECTED = "rejected"


_S = PlanState
LEGAL_TRANSITIONS: dict[PlanState, frozenset[PlanState]] = {
    _S.INTENT_UNDERSTANDING: frozenset({_S.USER_REGISTRATION, _S.REJECTED}),
    _S.USER_REGISTRATION: frozenset({_S.SLICE_OPTIMIZATION, _S.REJECTED}),
    _S.SLICE_OPTIMIZATION: frozenset({_S.QOS_EVALUATION, _S.REJECTED}),
    _S.QOS_EVALUATION: frozenset({_S.DONE, _S.SLICE_HANDOVER}),
    _S.SLICE_HANDOVER: frozenset({_S.SLICE_OPTIMIZATION, _S.REJECTED}),
    _S.DONE: frozenset(),
    _S.REJECTED: frozenset(),
}


@dataclass(frozen=True)
class TraceStep:
    state: PlanState
    input_digest: str
    output_digest: str


@dataclass
class PlanTrace:
    steps: list[TraceStep] = field(default_factory=list)
    reflection_count: int = 0

    def visit(self, state: PlanState, input_digest: str, output_digest: str) -> None:
        self.steps.append(TraceStep(state, input_digest, output_digest))

    def states(self) -> list[PlanState]:
        return [s.state for s in self.steps]

    def is_legal(self) -> bool:
        states = self.states()
        if not states or states[0] is not _S.INTENT_UNDERSTANDING:
            return False
        return all(b in LEGAL_TRANSITIONS[a] for a, b in zip(states, states[1:]))


@dataclass(frozen=True)
class Move:
    user: int
    src: str
    dst: str
    rate: int


@dataclass(frozen=True)
class HandoverPlan:
    moves: tuple[Move, ...]
    freed_rbs: int


EMPTY_PLAN = HandoverPlan(moves=(), freed_rbs=0)


@dataclass(frozen=True)
class Outcome:
    """Terminal result of one arrival's workflow."""

    status: str
    slice_kind: str | None = None
    rate: int | None = None
    rbs: int | None = None
    handovers: tuple[Move, ...] = ()
    reason: str | None = None

    @classmethod
    def admitted(cls, slice_kind: str, rate: int, rbs: int,
                 handovers: tuple[Move, ...] = ()) -> "Outcome":
        return cls(status="admitted", slice_kind=slice_kind, rate=rate, rbs=rbs,
                   handovers=handovers)

    @classmethod
    def rejected(cls, reason: str) -> "Outcome":
        return cls(status="rejected", reason=reason)

    @property
    def is_admitted(self) -> bool:
        return self.status == "admitted"


@dataclass(frozen=True)
class QosViolation:
    user: int
    detail: str


@dataclass(frozen=True)
class QosReport:
    ok: bool
    violations: tuple[QosViolation, ...]
    latency_warnings: tuple[QosViolation, ...]


def intent_digest(intent: QosIntent) -> str:
    return (f"class={intent.intent_class} "
            f"rate=[{intent.rate_range.min},{intent.rate_range.max}] "
            f"latency={intent.latency_ms}")


def decision_digest(slice_kind: str, rate: int, rbs: int) -> str:
    return f"slice={slice_kind} rate={rate} rbs={rbs}"


def plan_digest(plan: HandoverPlan) -> str:
    moves = ";".join(f"{m.user}:{m.src}->{m.dst}@{m.rate}" for m in plan.moves)
    return f"moves=[{moves}] freed={plan.freed_rbs}"


def understand_intent(req: RawRequest, catalog: IntentCatalog,
                      strict: bool = False) -> QosIntent:
    """Map the request's service text to a catalog intent template.

    Lenient mode substitutes a best-effort template for unknown services;
    strict mode raises UnknownIntent instead.
    """
    label = catalog.match(req.service_text)
    if label is None:
        if strict:
            raise UnknownIntent(f"no catalog entry matches '{req.service_text}'")
        return BEST_EFFORT_INTENT
    return catalog.intent_for(label)


def register(intent: QosIntent, configs: dict[str, SliceConfig],
             obs: Observation) -> str:
    """Assign the intent to a slice by its rate minimum.

    A minimum inside exactly one decision range pins the slice; in the
    overlap the less occupied slice wins, with ties going to URLLC so the
    wide slice keeps headroom.
    """
    eligible = [k for k, c in configs.items()
                if c.decision_range.contains(intent.rate_range.min)]
    if not eligible:
        raise NoEligibleSlice(f"rate minimum {intent.rate_range.min} fits no slice")
    if len(eligible) == 1:
        return eligible[0]
    return min(eligible,
               key=lambda k: (obs.slices[k].occupancy, 0 if k == URLLC else 1, k))


def optimize(intent: QosIntent, ledger: SliceLedger,
             rate_cap: int | None = None) -> tuple[int, int]:
    """Pick the occupation-minimizing feasible rate: the intent range minimum.

    Returns (rate, rbs). Raises CapBelowMin when the channel cap cannot carry
    the minimum, Infeasible when the slice lacks free RBs.
    """
    rate = intent.rate_range.min
    if rate_cap is not None and rate_cap < rate:
        raise CapBelowMin(f"cap {rate_cap} below intent minimum {rate}")
    needed = rbs_for_rate(rate, ledger.config.rb_rate)
    if needed > ledger.free_rbs:
        raise Infeasible(needed)
    return rate, needed


def evaluate_qos(state: NetworkState, intents: dict[int, QosIntent]) -> QosReport:
    """Check every admitted user's allocation against their intent and slice.

    Rate violations make the report not ok; latency shortfalls (slice bound
    above the intent's latency requirement) are reported as warnings only.
    """
    violations: list[QosViolation] = []
    warnings: list[QosViolation] = []
    for kind, ledger in state.slices.items():
        for user, alloc in ledger.allocations.items():
            intent = intents.get(user)
            if intent is None:
                raise MissingIntent(f"user {user} has no recorded intent")
            if not intent.rate_range.contains(alloc.rate):
                violations.append(QosViolation(
                    user, f"rate {alloc.rate} outside intent "
                          f"[{intent.rate_range.min},{intent.rate_range.max}]"))
            if not ledger.config.decision_range.contains(alloc.rate):
                violations.append(QosViolation(
                    user, f"rate {alloc.rate} outside {kind} decision range"))
            if intent.latency_ms < ledger.config.latency_bound_ms:
                warnings.append(QosViolation(
                    user, f"{kind} latency bound {ledger.config.latency_bound_ms}ms "
                          f"exceeds required {intent.latency_ms}ms"))
    return QosReport(ok=not violations, violations=tuple(violations),
                     latency_warnings=tuple(warnings))


def plan_handover(state: NetworkState, target: str, needed_rbs: int) -> HandoverPlan:
    """Free capacity in ``target`` by moving overlap users to another slice.

    Candidates are the target's users whose allocated rate also fits another
    slice's decision range, taken in ascending (rate, user) order while the
    destination has room, until the freed RBs cover the deficit. The emitted
    plan is the shortest prefix of that order which suffices.
    """
    ledger = state.slices[target]
    deficit = needed_rbs - ledger.free_rbs
    if deficit <= 0:
        return EMPTY_PLAN
    others = {k: l for k, l in state.slices.items() if k != target}
    running_free = {k: l.free_rbs for k, l in others.items()}
    candidates = sorted(
        ((alloc.rate, user) for user, alloc in ledger.allocations.items()),
        key=lambda pair: (pair[0], pair[1]))
    moves: list[Move] = []
    freed = 0
    for rate, user in candidates:
        dests = [
            k for k, l in others.items()
            if l.config.decision_range.contains(rate)
            and running_free[k] >= rbs_for_rate(rate, l.config.rb_rate)
        ]
        if not dests:
            continue
        dst = max(dests, key=lambda k: (running_free[k], k))
        running_free[dst] -= rbs_for_rate(rate, others[dst].config.rb_rate)
        freed += rbs_for_rate(rate, ledger.config.rb_rate)
        moves.append(Move(user=user, src=target, dst=dst, rate=rate))
        if freed >= deficit:
            return HandoverPlan(moves=tuple(moves), freed_rbs=freed)
    raise NoFeasiblePlan(
        f"candidates free only {freed} of the {deficit} RBs needed in {target}")


def validate_handover_plan(state: NetworkState, plan: HandoverPlan) -> None:
    """Re-check a plan against the current state; raises PlannerError."""
    running_free = {k: l.free_rbs for k, l in state.slices.items()}
    seen: set[int] = set()
    for m in plan.moves:
        if m.user in seen:
            raise PlannerError(_S.SLICE_HANDOVER, f"user {m.user} moved twice")
        seen.add(m.user)
        src = state.slices.get(m.src)
        dst = state.slices.get(m.dst)
        if src is None or dst is None or m.src == m.dst:
            raise PlannerError(_S.SLICE_HANDOVER, f"bad move endpoints {m.src}->{m.dst}")
        alloc = src.allocations.get(m.user)
        if alloc is None or alloc.rate != m.rate:
            raise PlannerError(_S.SLICE_HANDOVER, f"user {m.user} not at {m.rate} in {m.src}")
        if not dst.config.decision_range.contains(m.rate):
            raise PlannerError(_S.SLICE_HANDOVER, f"rate {m.rate} outside {m.dst} range")
        need = rbs_for_rate(m.rate, dst.config.rb_rate)
        if running_free[m.dst] < need:
            raise PlannerError(_S.SLICE_HANDOVER, f"{m.dst} lacks {need} free RBs")
        running_free[m.dst] -= need
        running_free[m.src] += rbs_for_rate(m.rate, src.config.rb_rate)


def plan_freed_rbs(state: NetworkState, plan: HandoverPlan, target: str) -> int:
    """RBs a plan frees in the target slice, recomputed rather than trusted."""
    return sum(rbs_for_rate(m.rate, state.slices[m.src].config.rb_rate)
               for m in plan.moves if m.src == target)


class RuleBasedPlanner:
    """Deterministic planner: the rule operations verbatim."""

    def propose_intent(self, req: RawRequest, catalog: IntentCatalog,
                       obs: Observation, arrival_index: int) -> QosIntent:
        return understand_intent(req, catalog)

    def propose_slice(self, intent: QosIntent, configs: dict[str, SliceConfig],
                      obs: Observation, arrival_index: int) -> str:
        return register(intent, configs, obs)

    def propose_rate(self, intent: QosIntent, config: SliceConfig, free_rbs: int,
                     rate_cap: int | None, arrival_index: int) -> int:
        return intent.rate_range.min

    def propose_handover(self, state: NetworkState, target: str, needed_rbs: int,
                         arrival_index: int) -> HandoverPlan:
        return plan_handover(state, target, needed_rbs)


@dataclass
class WorkflowConfig:
    """Knobs for one simulation run's workflow behavior."""

    catalog: IntentCatalog
    max_reflect: int = 3
    strict_intent: bool = False
    use_cache: bool = True
    rate_cap_fn: Callable[[RawRequest], int | None] | None = None
    intent_registry: dict[int, QosIntent] = field(default_factory=dict)


def _cache_entry_valid(entry: CacheEntry, obs: Observation, intent: QosIntent,
                       configs: dict[str, SliceConfig], rate_cap: int | None) -> bool:
    if (intent.rate_range.min, intent.rate_range.max) != (entry.rate_min, entry.rate_max):
        return False
    if entry.slice_kind not in configs:
        return False
    for kind, free_then in entry.free_at_store:
        view = obs.slices.get(kind)
        if view is None or view.free_rbs < free_then:
            return False
    if rate_cap is not None and entry.rate > rate_cap:
        return False
    try:
        if register(intent, configs, obs) != entry.slice_kind:
            return False
    except NoEligibleSlice:
        return False
    return obs.slices[entry.slice_kind].free_rbs >= entry.rbs


def _frees(obs: Observation) -> tuple[tuple[str, int], ...]:
    return tuple((kind, view.free_rbs) for kind, view in sorted(obs.slices.items()))


def run_workflow(req: RawRequest, state: NetworkState, memory: MemoryStore,
                 planner, config: WorkflowConfig):
    """Run the five-step workflow for one arrival.

    Returns (Outcome, state, PlanTrace). The state is mutated only on an
    admitted outcome; every rejection leaves it exactly as found. ``planner``
    may be None (rule-based) or any object honoring the planner contract;
    planner proposals failing validation fall back to the rule operations and
    leave a failure record in memory.
    """
    trace = PlanTrace()
    obs = observe(state)
    configs = {k: ledger.config for k, ledger in state.slices.items()}
    arrival = state.arrival_index
    intents = config.intent_registry

    def record(key, subtask, digest, outcome, reason=""):
        memory.record(ActionRecord(key, subtask.value, digest, outcome, arrival, reason))

    def reject(key, subtask, digest, reason):
        record(key, subtask, digest, FAILURE, reason)
        trace.visit(_S.REJECTED, reason, "")
        return Outcome.rejected(reason), state, trace

    # ---- intent understanding
    intent = _proposal(planner, memory, make_key(obs, "unknown"), arrival,
                       _S.INTENT_UNDERSTANDING,
                       lambda: planner.propose_intent(req, config.catalog, obs, arrival),
                       _validate_intent)
    if intent is None:
        try:
            intent = understand_intent(req, config.catalog, strict=config.strict_intent)
        except UnknownIntent:
            trace.visit(_S.INTENT_UNDERSTANDING, req.service_text, "unknown-intent")
            return reject(make_key(obs, "unknown"), _S.INTENT_UNDERSTANDING,
                          f"service={req.service_text}", "unknown-intent")
    trace.visit(_S.INTENT_UNDERSTANDING, req.service_text, intent_digest(intent))
    key = make_key(obs, intent.intent_class)
    rate_cap = config.rate_cap_fn(req) if config.rate_cap_fn is not None else None

    # ---- memory fast path: reuse a known-good direct admission
    if config.use_cache and planner is None:
        entry = memory.cached_outcome(key)
        if entry is not None and _cache_entry_valid(entry, obs, intent, configs, rate_cap):
            digest = decision_digest(entry.slice_kind, entry.rate, entry.rbs)
            if not memory.failed_before(key, digest):
                trace.visit(_S.USER_REGISTRATION, intent_digest(intent),
                            f"{entry.slice_kind} cached")
                trace.visit(_S.SLICE_OPTIMIZATION, f"slice={entry.slice_kind}",
                            f"{digest} cached")
                state.admit_user(req.user, entry.slice_kind, entry.rate)
                intents[req.user] = intent
                report = evaluate_qos(state, intents)
                if not report.ok:
                    raise DomainError(f"cached decision violated QoS: {report.violations}")
                trace.visit(_S.QOS_EVALUATION, digest, "ok")
                state.verify()
                record(key, _S.SLICE_OPTIMIZATION, digest, SUCCESS)
                memory.put_cached(key, CacheEntry(
                    entry.slice_kind, entry.rate, entry.rbs,
                    intent.rate_range.min, intent.rate_range.max, _frees(obs)))
                trace.visit(_S.DONE, digest, "")
                return (Outcome.admitted(entry.slice_kind, entry.rate, entry.rbs),
                        state, trace)

    # ---- user registration
    slice_kind = _proposal(planner, memory, key, arrival, _S.USER_REGISTRATION,
                           lambda: planner.propose_slice(intent, configs, obs, arrival),
                           lambda v: _validate_slice(v, intent, configs))
    if slice_kind is None:
        try:
            slice_kind = register(intent, configs, obs)
        except NoEligibleSlice:
            trace.visit(_S.USER_REGISTRATION, intent_digest(intent), "no-eligible-slice")
            return reject(key, _S.USER_REGISTRATION, intent_digest(intent),
                          "no-eligible-slice")
    trace.visit(_S.USER_REGISTRATION, intent_digest(intent), slice_kind)

    # ---- optimization / evaluation / handover cycles
    work = state  # cloned lazily before the first handover
    pending_moves: list[Move] = []
    pending_freed = 0
    reflections = 0
    while True:
        ledger = work.slices[slice_kind]
        rate = _proposal(planner, memory, key, arrival, _S.SLICE_OPTIMIZATION,
                         lambda: planner.propose_rate(intent, ledger.config,
                                                      ledger.free_rbs, rate_cap, arrival),
                         lambda v: _validate_rate(v, intent, ledger, rate_cap))
        needed = None
        if rate is None:
            try:
                rate, needed = optimize(intent, ledger, rate_cap)
            except CapBelowMin:
                trace.visit(_S.SLICE_OPTIMIZATION, f"slice={slice_kind} cap={rate_cap}",
                            "cap-below-min")
                return reject(key, _S.SLICE_OPTIMIZATION,
                              f"slice={slice_kind} cap={rate_cap}", "cap-below-min")
            except Infeasible as err:
                rate, needed = None, err.needed_rbs
        if rate is not None and needed is None:
            needed = rbs_for_rate(rate, ledger.config.rb_rate)

        intended_rate = rate if rate is not None else intent.rate_range.min
        digest = decision_digest(slice_kind, intended_rate, needed)
        if memory.failed_before(key, digest):
            trace.visit(_S.SLICE_OPTIMIZATION, f"slice={slice_kind}",
                        f"{digest} suppressed")
            return reject(key, _S.SLICE_OPTIMIZATION, digest, "no-retry")

        if rate is not None:
            trace.visit(_S.SLICE_OPTIMIZATION,
                        f"slice={slice_kind} free={ledger.free_rbs}", digest)
            hypo = state.clone() if work is state else work
            hypo.admit_user(req.user, slice_kind, rate)
            report = evaluate_qos(hypo, {**intents, req.user: intent})
            if not report.ok:
                raise DomainError(f"validated decision violated QoS: {report.violations}")
            trace.visit(_S.QOS_EVALUATION, digest, "ok")
            plan = HandoverPlan(tuple(pending_moves), pending_freed)
            if plan.moves:
                apply_handover(state, plan)
            state.admit_user(req.user, slice_kind, rate)
            state.verify()
            intents[req.user] = intent
            record(key, _S.SLICE_OPTIMIZATION, digest, SUCCESS)
            if not plan.moves and planner is None:
                memory.put_cached(key, CacheEntry(
                    slice_kind, rate, needed,
                    intent.rate_range.min, intent.rate_range.max, _frees(obs)))
            trace.visit(_S.DONE, digest, "")
            return (Outcome.admitted(slice_kind, rate, needed, plan.moves),
                    state, trace)

        # infeasible under current capacity: evaluate, then try a handover
        trace.visit(_S.SLICE_OPTIMIZATION,
                    f"slice={slice_kind} free={ledger.free_rbs}",
                    f"infeasible needed={needed}")
        trace.visit(_S.QOS_EVALUATION, digest,
                    f"unmet needed={needed} free={ledger.free_rbs}")
        if reflections >= config.max_reflect:
            trace.visit(_S.SLICE_HANDOVER, f"needed={needed}", "budget-exhausted")
            return reject(key, _S.SLICE_HANDOVER, digest, "reflection-exhausted")
        reflections += 1
        trace.reflection_count = reflections
        if work is state:
            work = state.clone()
        plan = _proposal(planner, memory, key, arrival, _S.SLICE_HANDOVER,
                         lambda: planner.propose_handover(work, slice_kind,
                                                          needed, arrival),
                         lambda v: validate_handover_plan(work, v))
        if plan is not None:
            plan = HandoverPlan(plan.moves, plan_freed_rbs(work, plan, slice_kind))
        else:
            try:
                plan = plan_handover(work, slice_kind, needed)
            except NoFeasiblePlan:
                trace.visit(_S.SLICE_HANDOVER, f"needed={needed}", "no-feasible-plan")
                return reject(key, _S.SLICE_HANDOVER, digest, "no-feasible-plan")
        apply_handover(work, plan)
        pending_moves.extend(plan.moves)
        pending_freed += plan.freed_rbs
        trace.visit(_S.SLICE_HANDOVER, f"needed={needed}", plan_digest(plan))


def _validate_intent(value) -> None:
    if not isinstance(value, QosIntent):
        raise PlannerError(_S.INTENT_UNDERSTANDING, f"not an intent: {value!r}")


def _validate_slice(value, intent: QosIntent, configs: dict[str, SliceConfig]) -> None:
    if value not in configs:
        raise PlannerError(_S.USER_REGISTRATION, f"unknown slice {value!r}")
    if not configs[value].decision_range.contains(intent.rate_range.min):
        raise PlannerError(_S.USER_REGISTRATION,
                           f"slice {value} cannot serve minimum {intent.rate_range.min}")


def _validate_rate(value, intent: QosIntent, ledger: SliceLedger,
                   rate_cap: int | None) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise PlannerError(_S.SLICE_OPTIMIZATION, f"rate not an integer: {value!r}")
    if not intent.rate_range.contains(value):
        raise PlannerError(_S.SLICE_OPTIMIZATION, f"rate {value} outside intent range")
    if not ledger.config.decision_range.contains(value):
        raise PlannerError(_S.SLICE_OPTIMIZATION, f"rate {value} outside decision range")
    if rate_cap is not None and value > rate_cap:
        raise PlannerError(_S.SLICE_OPTIMIZATION, f"rate {value} above channel cap {rate_cap}")
    if rbs_for_rate(value, ledger.config.rb_rate) > ledger.free_rbs:
        raise PlannerError(_S.SLICE_OPTIMIZATION, f"rate {value} does not fit free RBs")


def _proposal(planner, memory: MemoryStore, key, arrival: int, subtask: PlanState,
              produce, validate):
    """Ask the pluggable planner for a decision; fall back to None on failure.

    Any planner exception or validation failure is recorded as a Failure
    action so the run stays total and auditable.
    """
    if planner is None:
        return None
    try:
        value = produce()
        validate(value)
        return value
    except PlannerError as err:
        memory.record(ActionRecord(key, subtask.value, err.reason, FAILURE, arrival,
                                   reason="planner-fallback"))
        return None
    except Exception as err:  # noqa: BLE001 - adversarial planners must not abort runs
        memory.record(ActionRecord(key, subtask.value, f"{type(err).__name__}: {err}",
                                   FAILURE, arrival, reason="planner-fallback"))
        return None


def export_trace(traces, path) -> None:
    """Write traces as TSV: arrival_index, state, input digest, output digest."""
    def clean(text: str) -> str:
        return text.replace("\t", " ").replace("\n", " ")

    with open(path, "w", encoding="utf-8", newline="") as fh:
        for arrival_index, trace in traces:
            for step in trace.steps:
                fh.write(f"{arrival_index}\t{step.state.value}\t"
                         f"{clean(step.input_digest)}\t{clean(step.output_digest)}\n")
