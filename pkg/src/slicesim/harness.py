"""Scenario generation, experiment execution, metrics, and file emission.

A scenario is fully determined by its seed: arrival order is a seeded
permutation of the user ids, positions are i.i.d. uniform on the square, and
service classes are sampled by catalog weights. Runs are deterministic per
(scenario, config), down to byte-identical CSV output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .baseline import traditional_allocate
from .domain import (
    EMBB,
    URLLC,
    NetworkState,
    Position,
    RateRange,
    SliceConfig,
    default_slice_configs,
    fresh_state,
)
from .memory import MemoryStore
from .perception import RawRequest
from .planning import (
    IntentCatalog,
    CatalogEntry,
    PlanTrace,
    QosIntent,
    WorkflowConfig,
    default_catalog,
    run_workflow,
)
from .tools import ChannelModel, single_user_cap


class ConfigError(Exception):
    pass


class ScenarioMismatch(Exception):
    pass


@dataclass(frozen=True)
class Arrival:
    user: int
    position: Position
    service_class: str
    ground_truth_slice: str


@dataclass(frozen=True)
class Scenario:
    seed: int
    n_users: int
    area_m: float
    bs_position: Position
    arrivals: tuple[Arrival, ...]


@dataclass
class SimConfig:
    """Everything a run needs besides the scenario itself."""

    slice_configs: dict[str, SliceConfig] = field(default_factory=default_slice_configs)
    catalog: IntentCatalog | None = field(default_factory=default_catalog)
    max_reflect: int = 3
    channel: str = "ideal"
    channel_model: ChannelModel = field(default_factory=ChannelModel)
    memory_capacity: int = 10_000
    strict_intent: bool = False
    use_cache: bool = True

    def validate(self) -> None:
        if self.catalog is None or not getattr(self.catalog, "entries", None):
            raise ConfigError("catalog is empty")
        if self.channel not in ("ideal", "zfbf"):
            raise ConfigError(f"unknown channel mode '{self.channel}'")
        if self.max_reflect < 0:
            raise ConfigError("max_reflect must be non-negative")
        if self.memory_capacity < 1:
            raise ConfigError("memory capacity must be positive")
        for kind in (EMBB, URLLC):
            if kind not in self.slice_configs:
                raise ConfigError(f"missing slice config for {kind}")
        try:
            self.catalog.check_against(self.slice_configs)
        except ValueError as err:
            raise ConfigError(str(err)) from err


def gen_scenario(seed: int, n_users: int = 120, area_m: float = 450.0,
                 catalog: IntentCatalog | None = None) -> Scenario:
    """Build a deterministic arrival sequence for the given seed."""
    if n_users < 1:
        raise ConfigError("n_users must be at least 1")
    if area_m <= 0:
        raise ConfigError("area_m must be positive")
    catalog = catalog if catalog is not None else default_catalog()
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_users) + 1
    xs = rng.uniform(0.0, area_m, n_users)
    ys = rng.uniform(0.0, area_m, n_users)
    labels = catalog.labels()
    weights = np.asarray(catalog.weights(), dtype=float)
    weights = weights / weights.sum()
    class_idx = rng.choice(len(labels), size=n_users, p=weights)
    arrivals = tuple(
        Arrival(
            user=int(order[i]),
            position=Position(float(xs[i]), float(ys[i])),
            service_class=labels[class_idx[i]],
            ground_truth_slice=catalog.slice_for(labels[class_idx[i]]),
        )
        for i in range(n_users)
    )
    return Scenario(seed=seed, n_users=n_users, area_m=area_m,
                    bs_position=Position(area_m / 2.0, area_m / 2.0),
                    arrivals=arrivals)


CSV_COLUMNS = (
    "arrival_index", "user_id", "intent_class", "outcome", "slice", "rate_mbps",
    "rbs", "embb_occ", "urllc_occ", "aggregate_occ", "handovers_this_step",
    "embb_users", "urllc_users", "blocked_total",
)


@dataclass
class StepRecord:
    arrival_index: int
    user_id: int
    intent_class: str
    outcome: str
    slice_kind: str
    rate_mbps: int | None
    rbs: int | None
    embb_occ: float
    urllc_occ: float
    aggregate_occ: float
    handovers_this_step: int
    embb_users: int
    urllc_users: int
    blocked_total: int
    allocations: tuple = field(default=(), compare=False, repr=False)

    def csv_row(self) -> list[str]:
        return [
            str(self.arrival_index),
            str(self.user_id),
            self.intent_class,
            self.outcome,
            self.slice_kind,
            "" if self.rate_mbps is None else str(self.rate_mbps),
            "" if self.rbs is None else str(self.rbs),
            f"{self.embb_occ:.4f}",
            f"{self.urllc_occ:.4f}",
            f"{self.aggregate_occ:.4f}",
            str(self.handovers_this_step),
            str(self.embb_users),
            str(self.urllc_users),
            str(self.blocked_total),
        ]


@dataclass(frozen=True)
class Checkpoint:
    arrivals: int
    embb_users: int
    urllc_users: int
    aggregate_occ: float
    embb_occ: float
    urllc_occ: float
    blocked_total: int

    @property
    def total_served(self) -> int:
        return self.embb_users + self.urllc_users


@dataclass
class ResultLog:
    scenario_seed: int | None
    n_users: int
    policy: str
    channel: str
    records: list[StepRecord]
    checkpoints: list[Checkpoint]
    config_echo: dict | None = None
    traces: list[tuple[int, PlanTrace]] = field(default_factory=list, compare=False,
                                                repr=False)
    memory: MemoryStore | None = field(default=None, compare=False, repr=False)
    final_state: NetworkState | None = field(default=None, compare=False, repr=False)


def _checkpoints_from_records(records: list[StepRecord]) -> list[Checkpoint]:
    marks = [r for r in records if r.arrival_index % 5 == 0]
    if records and records[-1].arrival_index % 5 != 0:
        marks.append(records[-1])
    return [
        Checkpoint(arrivals=r.arrival_index, embb_users=r.embb_users,
                   urllc_users=r.urllc_users, aggregate_occ=r.aggregate_occ,
                   embb_occ=r.embb_occ, urllc_occ=r.urllc_occ,
                   blocked_total=r.blocked_total)
        for r in marks
    ]


def _allocation_snapshot(state: NetworkState) -> tuple:
    return tuple(
        (kind, tuple((user, alloc.rbs) for user, alloc in ledger.allocations.items()))
        for kind, ledger in sorted(state.slices.items())
    )


def run(scenario: Scenario, policy: str = "agent",
        config: SimConfig | None = None, planner=None,
        memory: MemoryStore | None = None) -> ResultLog:
    """Process all arrivals through the selected controller.

    Per-user failures become blocked records; only configuration problems
    raise. Deterministic per (scenario, config, planner).
    """
    config = config if config is not None else SimConfig()
    config.validate()
    if policy not in ("agent", "traditional"):
        raise ConfigError(f"unknown policy '{policy}'")

    state = fresh_state(config.slice_configs)
    memory = memory if memory is not None else MemoryStore(config.memory_capacity)
    rate_cap_fn = None
    if config.channel == "zfbf":
        bs, model, seed = scenario.bs_position, config.channel_model, scenario.seed
        rate_cap_fn = lambda req: single_user_cap(req.position, bs, model, seed)
    wf_config = WorkflowConfig(
        catalog=config.catalog, max_reflect=config.max_reflect,
        strict_intent=config.strict_intent, use_cache=config.use_cache,
        rate_cap_fn=rate_cap_fn)
    baseline_rng = np.random.default_rng([scenario.seed, 7])

    records: list[StepRecord] = []
    traces: list[tuple[int, PlanTrace]] = []
    for i, arrival in enumerate(scenario.arrivals):
        state.arrival_index = i + 1
        req = RawRequest(user=arrival.user, position=arrival.position,
                         service_text=arrival.service_class)
        if policy == "agent":
            outcome, state, trace = run_workflow(req, state, memory, planner, wf_config)
            traces.append((i + 1, trace))
        else:
            outcome = traditional_allocate(state, arrival.user,
                                           arrival.ground_truth_slice, baseline_rng)
        if not outcome.is_admitted:
            state.blocked.append((arrival.user, outcome.reason))
        state.verify()

        intent_class = config.catalog.match(arrival.service_class) or "best-effort"
        records.append(StepRecord(
            arrival_index=i + 1,
            user_id=arrival.user,
            intent_class=intent_class,
            outcome=("admitted" if outcome.is_admitted else f"blocked:{outcome.reason}"),
            slice_kind=outcome.slice_kind or "",
            rate_mbps=outcome.rate,
            rbs=outcome.rbs,
            embb_occ=round(state.slices[EMBB].occupancy(), 4),
            urllc_occ=round(state.slices[URLLC].occupancy(), 4),
            aggregate_occ=round(state.aggregate_occupancy(), 4),
            handovers_this_step=len(outcome.handovers),
            embb_users=len(state.slices[EMBB].allocations),
            urllc_users=len(state.slices[URLLC].allocations),
            blocked_total=len(state.blocked),
            allocations=_allocation_snapshot(state),
        ))

    echo = {
        "seed": scenario.seed,
        "users": scenario.n_users,
        "area_m": scenario.area_m,
        "policy": policy,
        "channel": config.channel,
        "max_reflect": config.max_reflect,
        "use_cache": config.use_cache,
        "slices": {
            kind: {
                "total_rbs": c.total_rbs,
                "rate_min": c.decision_range.min,
                "rate_max": c.decision_range.max,
                "latency_bound_ms": c.latency_bound_ms,
                "rb_rate": c.rb_rate,
            }
            for kind, c in sorted(config.slice_configs.items())
        },
        "classes": {
            label: {
                "rate_min": e.intent.rate_range.min,
                "rate_max": e.intent.rate_range.max,
                "latency_ms": e.intent.latency_ms,
                "slice": e.slice_kind,
                "weight": e.weight,
            }
            for label, e in sorted(config.catalog.entries.items())
        },
    }
    return ResultLog(
        scenario_seed=scenario.seed, n_users=scenario.n_users, policy=policy,
        channel=config.channel, records=records,
        checkpoints=_checkpoints_from_records(records), config_echo=echo,
        traces=traces, memory=memory, final_state=state)


@dataclass(frozen=True)
class CompareRow:
    arrivals: int
    served_a: int
    served_b: int
    embb_users_a: int
    embb_users_b: int
    urllc_users_a: int
    urllc_users_b: int
    occ_a: float
    occ_b: float

    @property
    def served_delta(self) -> int:
        return self.served_a - self.served_b

    @property
    def occ_delta(self) -> float:
        return round(self.occ_a - self.occ_b, 4)


def compare(log_a: ResultLog, log_b: ResultLog) -> list[CompareRow]:
    """Per-checkpoint service counts and aggregate occupancy, side by side."""
    if (log_a.scenario_seed != log_b.scenario_seed
            or log_a.n_users != log_b.n_users
            or log_a.scenario_seed is None):
        raise ScenarioMismatch(
            f"seed/size mismatch: ({log_a.scenario_seed}, {log_a.n_users}) vs "
            f"({log_b.scenario_seed}, {log_b.n_users})")
    rows = []
    for ck_a, ck_b in zip(log_a.checkpoints, log_b.checkpoints):
        rows.append(CompareRow(
            arrivals=ck_a.arrivals,
            served_a=ck_a.total_served, served_b=ck_b.total_served,
            embb_users_a=ck_a.embb_users, embb_users_b=ck_b.embb_users,
            urllc_users_a=ck_a.urllc_users, urllc_users_b=ck_b.urllc_users,
            occ_a=ck_a.aggregate_occ, occ_b=ck_b.aggregate_occ))
    return rows


def format_compare(rows: list[CompareRow], label_a: str = "A",
                   label_b: str = "B") -> str:
    table = [["arrivals", f"served {label_a}", f"served {label_b}", "delta",
              f"occ {label_a}", f"occ {label_b}", "delta"]]
    for r in rows:
        table.append([str(r.arrivals), str(r.served_a), str(r.served_b),
                      str(r.served_delta), f"{r.occ_a:.4f}", f"{r.occ_b:.4f}",
                      f"{r.occ_delta:+.4f}"])
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths))
                     for row in table)


def emit_csv(log: ResultLog, path) -> None:
    """Write one row per arrival with the fixed column set, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for record in log.records:
            fh.write(",".join(record.csv_row()) + "\n")


def read_csv(path) -> ResultLog:
    """Parse an emitted CSV back into a ResultLog core.

    Seed/policy/channel come from the sidecar meta file when present.
    """
    records: list[StepRecord] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ",".join(CSV_COLUMNS):
            raise ValueError(f"unexpected CSV header in {path}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise ValueError(f"bad CSV row: {line!r}")
            records.append(StepRecord(
                arrival_index=int(parts[0]),
                user_id=int(parts[1]),
                intent_class=parts[2],
                outcome=parts[3],
                slice_kind=parts[4],
                rate_mbps=None if parts[5] == "" else int(parts[5]),
                rbs=None if parts[6] == "" else int(parts[6]),
                embb_occ=float(parts[7]),
                urllc_occ=float(parts[8]),
                aggregate_occ=float(parts[9]),
                handovers_this_step=int(parts[10]),
                embb_users=int(parts[11]),
                urllc_users=int(parts[12]),
                blocked_total=int(parts[13]),
            ))
    meta = read_meta(meta_path_for(path))
    return ResultLog(
        scenario_seed=meta.get("seed") if meta else None,
        n_users=len(records),
        policy=meta.get("policy", "") if meta else "",
        channel=meta.get("channel", "") if meta else "",
        records=records,
        checkpoints=_checkpoints_from_records(records),
        config_echo=meta)


def meta_path_for(csv_path) -> str:
    text = str(csv_path)
    return (text[:-4] if text.endswith(".csv") else text) + ".meta.json"


def emit_meta(log: ResultLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(log.config_echo or {}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_meta(path) -> dict | None:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError:
        return None


def render_text_plot(log: ResultLog, bar_width: int = 30) -> str:
    """Checkpoint-level per-slice user/occupancy bars as plain text."""
    lines = [f"policy={log.policy} seed={log.scenario_seed} users={log.n_users}"]
    for ck in log.checkpoints:
        segments = []
        for kind, occ, users in ((URLLC, ck.urllc_occ, ck.urllc_users),
                                 (EMBB, ck.embb_occ, ck.embb_users)):
            filled = round(occ * bar_width)
            bar = "#" * filled + "." * (bar_width - filled)
            segments.append(f"{kind:>5} {users:>3} users [{bar}] {occ:>6.1%}")
        lines.append(f"after {ck.arrivals:>4} arrivals  " + "  ".join(segments))
    return "\n".join(lines) + "\n"


def emit_plot(log: ResultLog, path) -> str:
    """Render the stacked per-user RB chart; falls back to plain text.

    Returns the path actually written (a .txt sibling when matplotlib is
    unavailable or the requested path ends in .txt).
    """
    text_path = str(path)
    if not text_path.endswith(".txt"):
        try:
            return _emit_plot_image(log, path)
        except ImportError:
            text_path = str(path).rsplit(".", 1)[0] + ".txt"
    with open(text_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_text_plot(log))
    return text_path


def _emit_plot_image(log: ResultLog, path) -> str:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib import colormaps

    kinds = [URLLC, EMBB]
    fig, axes = plt.subplots(len(kinds), 1, figsize=(12, 6), sharex=True)
    cmap = colormaps["tab20"]
    for ax, kind in zip(axes, kinds):
        for record in log.records:
            bottom = 0
            for alloc_kind, allocs in record.allocations or ():
                if alloc_kind != kind:
                    continue
                for user, rbs in allocs:
                    ax.bar(record.arrival_index, rbs, bottom=bottom, width=0.85,
                           color=cmap(user % 20), edgecolor="white", linewidth=0.3)
                    bottom += rbs
        ax.set_ylabel(f"{kind} RBs")
        ax.set_ylim(0, None)
    axes[-1].set_xlabel("arrivals")
    fig.suptitle(f"Per-user RB allocation ({log.policy}, seed {log.scenario_seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def load_config_file(path) -> tuple[dict[str, SliceConfig], IntentCatalog]:
    """Load slice configs and the intent catalog from a JSON file.

    Both sections are optional; omitted ones fall back to the defaults.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot load config {path}: {err}") from err

    slice_configs = default_slice_configs()
    if "slices" in raw:
        slice_configs = {}
        for kind, spec_dict in raw["slices"].items():
            try:
                slice_configs[kind] = SliceConfig(
                    kind=kind,
                    total_rbs=int(spec_dict["total_rbs"]),
                    decision_range=RateRange(int(spec_dict["rate_min"]),
                                             int(spec_dict["rate_max"])),
                    latency_bound_ms=int(spec_dict["latency_bound_ms"]),
                    rb_rate=int(spec_dict.get("rb_rate", 1)),
                )
            except (KeyError, TypeError, ValueError) as err:
                raise ConfigError(f"bad slice '{kind}': {err}") from err

    catalog = default_catalog()
    if "classes" in raw:
        entries = {}
        for label, spec_dict in raw["classes"].items():
            try:
                entries[label] = CatalogEntry(
                    label=label,
                    intent=QosIntent(label,
                                     RateRange(int(spec_dict["rate_min"]),
                                               int(spec_dict["rate_max"])),
                                     int(spec_dict["latency_ms"])),
                    slice_kind=str(spec_dict["slice"]),
                    weight=float(spec_dict["weight"]),
                )
            except (KeyError, TypeError, ValueError) as err:
                raise ConfigError(f"bad class '{label}': {err}") from err
        if not entries:
            raise ConfigError("catalog is empty")
        catalog = IntentCatalog(entries)
    return slice_configs, catalog
