"""Command-line surface: run, compare, batch, replay.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ScenarioMismatch,
    SimConfig,
    compare,
    emit_csv,
    emit_meta,
    emit_plot,
    format_compare,
    gen_scenario,
    load_config_file,
    meta_path_for,
    read_csv,
    run,
)
from .llm import (
    FixtureWriter,
    LiveTransport,
    LlmPlanner,
    RecordingTransport,
    ReplayTransport,
    RuleFixtureRecorder,
)
from .planning import LEGAL_TRANSITIONS, PlanState, export_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicesim",
                                     description="network slicing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one seeded experiment")
    _add_run_args(run_p)
    run_p.add_argument("--seed", type=int, required=True)
    run_p.add_argument("--out", required=True, help="output directory")

    cmp_p = sub.add_parser("compare", help="compare two emitted result CSVs")
    cmp_p.add_argument("csv_a")
    cmp_p.add_argument("csv_b")

    batch_p = sub.add_parser("batch", help="run a seed range")
    _add_run_args(batch_p)
    batch_p.add_argument("--seeds", required=True,
                         help="inclusive seed range, e.g. 0..99, or one seed")
    batch_p.add_argument("--out", required=True, help="output directory")

    replay_p = sub.add_parser("replay", help="validate and summarize a trace export")
    replay_p.add_argument("--trace", required=True)
    return parser


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--policy", choices=("agent", "traditional"), default="agent")
    p.add_argument("--users", type=int, default=120)
    p.add_argument("--area", type=float, default=450.0)
    p.add_argument("--channel", choices=("ideal", "zfbf"), default="ideal")
    p.add_argument("--catalog", help="JSON config with slices and/or classes")
    p.add_argument("--max-reflect", type=int, default=3)
    p.add_argument("--llm", default="off",
                   help="off | replay:<fixture> | live (default off)")
    p.add_argument("--record", help="record decisions to this fixture file")


def _build_config(args) -> SimConfig:
    config = SimConfig(channel=args.channel, max_reflect=args.max_reflect)
    if args.catalog:
        config.slice_configs, config.catalog = load_config_file(args.catalog)
    config.validate()
    return config


def _build_planner(args, config: SimConfig):
    """Planner and optional fixture writer for the chosen --llm/--record mode."""
    mode = args.llm
    writer = FixtureWriter(args.record) if args.record else None
    if mode == "off":
        if writer is not None:
            return RuleFixtureRecorder(writer), writer
        return None, None
    if mode.startswith("replay:"):
        fixture = mode.split(":", 1)[1]
        if not fixture:
            raise ConfigError("--llm replay needs a fixture path: replay:<file>")
        transport = ReplayTransport(fixture)
        if writer is not None:
            transport = RecordingTransport(transport, writer)
        return LlmPlanner(transport, config.catalog), writer
    if mode == "live":
        transport = LiveTransport.from_env()
        if writer is not None:
            transport = RecordingTransport(transport, writer)
        return LlmPlanner(transport, config.catalog), writer
    raise ConfigError(f"unknown --llm mode '{mode}'")


def _run_one(seed: int, args, config: SimConfig, out_dir: Path) -> dict:
    scenario = gen_scenario(seed, n_users=args.users, area_m=args.area,
                            catalog=config.catalog)
    planner, writer = _build_planner(args, config)
    try:
        log = run(scenario, policy=args.policy, config=config, planner=planner)
    finally:
        if writer is not None:
            writer.close()
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    emit_csv(log, csv_path)
    emit_meta(log, meta_path_for(csv_path))
    plot_path = emit_plot(log, out_dir / "results.png")
    if args.policy == "agent":
        export_trace(log.traces, out_dir / "trace.tsv")
        log.memory.export_csv(out_dir / "memory_log.csv")
    final = log.checkpoints[-1]
    return {
        "seed": seed,
        "policy": args.policy,
        "served": final.total_served,
        "blocked": final.blocked_total,
        "embb_users": final.embb_users,
        "urllc_users": final.urllc_users,
        "aggregate_occ": final.aggregate_occ,
        "csv": str(csv_path),
        "plot": str(plot_path),
    }


def cmd_run(args) -> int:
    config = _build_config(args)
    summary = _run_one(args.seed, args, config, Path(args.out))
    print(f"seed {summary['seed']} policy {summary['policy']}: "
          f"{summary['served']} served, {summary['blocked']} blocked, "
          f"aggregate occupancy {summary['aggregate_occ']:.4f}")
    print(f"wrote {summary['csv']} and {summary['plot']}")
    return EXIT_OK


def cmd_compare(args) -> int:
    log_a = read_csv(args.csv_a)
    log_b = read_csv(args.csv_b)
    if log_a.scenario_seed is None or log_b.scenario_seed is None:
        raise ConfigError("compare needs the .meta.json sidecars next to the CSVs")
    rows = compare(log_a, log_b)
    label_a = log_a.policy or "A"
    label_b = log_b.policy or "B"
    print(format_compare(rows, label_a, label_b))
    return EXIT_OK


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo_text, hi_text = text.split("..", 1)
        try:
            lo, hi = int(lo_text), int(hi_text)
        except ValueError as err:
            raise ConfigError(f"bad seed range '{text}'") from err
        if hi < lo:
            raise ConfigError(f"empty seed range '{text}'")
        return list(range(lo, hi + 1))
    try:
        return [int(text)]
    except ValueError as err:
        raise ConfigError(f"bad seed '{text}'") from err


def cmd_batch(args) -> int:
    config = _build_config(args)
    seeds = _parse_seed_range(args.seeds)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    summaries = []
    for seed in seeds:  # ascending order keeps the merged output deterministic
        summaries.append(_run_one(seed, args, config, out_root / f"seed{seed}"))
    summary_path = out_root / "batch_summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("seed,policy,served,blocked,embb_users,urllc_users,aggregate_occ\n")
        for s in summaries:
            fh.write(f"{s['seed']},{s['policy']},{s['served']},{s['blocked']},"
                     f"{s['embb_users']},{s['urllc_users']},{s['aggregate_occ']:.4f}\n")
    print(f"ran {len(seeds)} seeds; wrote {summary_path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    arrivals: dict[int, list[PlanState]] = {}
    with open(args.trace, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ConfigError(f"{args.trace}:{lineno}: expected 4 tab-separated fields")
            try:
                index = int(parts[0])
                state = PlanState(parts[1])
            except ValueError as err:
                raise ConfigError(f"{args.trace}:{lineno}: {err}") from err
            arrivals.setdefault(index, []).append(state)
    violations = 0
    for index in sorted(arrivals):
        states = arrivals[index]
        if states[0] is not PlanState.INTENT_UNDERSTANDING:
            print(f"arrival {index}: trace does not start with intent understanding")
            violations += 1
        for a, b in zip(states, states[1:]):
            if b not in LEGAL_TRANSITIONS[a]:
                print(f"arrival {index}: illegal transition {a.value} -> {b.value}")
                violations += 1
    print(f"{len(arrivals)} arrivals, {sum(len(v) for v in arrivals.values())} "
          f"state visits, {violations} violations")
    return EXIT_OK if violations == 0 else EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "compare": cmd_compare,
                "batch": cmd_batch, "replay": cmd_replay}
    try:
        return handlers[args.command](args)
    except (ConfigError, ScenarioMismatch) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
