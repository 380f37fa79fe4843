"""Benchmark harness: run write policies over synthetic or recorded streams,
measure throughput / occupancy / accuracy, sweep capacities, and emit
plot-ready CSV or JSON.

Subcommands: gen (scenario config -> .mbt trace), run (one strategy),
sweep (capacity sweep with adaptive-lfu), compare (aligned multi-strategy
runs). FEATBANK_THREADS caps how many runs of a sweep/compare execute in
parallel (default 1; parallel runs share the clock, so keep it at 1 when the
timings matter). Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ADAPTIVE_LFU,
    FIRST_AND_LATEST,
    STRATEGIES,
    FrameFeatures,
    StrategyConfig,
)
from .errors import FeatBankError
from .scenarios import BUNDLED, bundled_scenario, load_scenario_file
from .simstream import decode_read, generate, iou, surrogate_predictor
from .strategies import run_sequence
from .trace import read_trace, write_trace

CSV_SCHEMA = "featbank-run-csv v1"
SWEEP_SCHEMA = "featbank-sweep-csv v1"

_STRATEGY_ALIASES = {
    "first-latest": FIRST_AND_LATEST,
    **{s: s for s in STRATEGIES},
}


@dataclass
class RunRow:
    frame: int
    strategy: str
    bank_frames_equivalent: float
    read_seconds: float
    write_seconds: float
    evictions: int
    iou: dict[int, float]  # objects tracked at this frame


@dataclass
class RunSummary:
    frames: int
    total_seconds: float
    init_seconds: float
    frames_per_second: float
    mean_bank_frames_equivalent: float
    mean_iou: float
    writes: int
    evictions: int


@dataclass
class RunReport:
    strategy: str
    object_ids: list[int]
    rows: list[RunRow] = field(default_factory=list)
    summary: RunSummary | None = None


@dataclass
class StreamInput:
    frames: list[FrameFeatures]
    truths: list[np.ndarray]
    entry_frames: dict[int, int]
    label: str


def run_benchmark(stream: StreamInput, cfg: StrategyConfig) -> RunReport:
    """Run one strategy over a stream; wall clock covers the sequence loop
    only (scoring happens afterwards from the recorded reads)."""
    t0 = time.perf_counter()
    reads, state = run_sequence(
        stream.frames, stream.entry_frames, cfg, predictor=surrogate_predictor
    )
    total = time.perf_counter() - t0

    objects = sorted(stream.entry_frames)
    report = RunReport(strategy=cfg.strategy, object_ids=objects)
    per_object: dict[int, list[float]] = {m: [] for m in objects}
    bank_sum = 0.0
    for st in state.stats:
        tracked = [m for m in objects if stream.entry_frames[m] < st.frame]
        scores: dict[int, float] = {}
        if tracked:
            _, labels = decode_read(reads[st.frame], tracked)
            truth = stream.truths[st.frame]
            for m in tracked:
                scores[m] = iou(labels, truth, m)
                per_object[m].append(scores[m])
        bank_sum += st.bank_frames_equivalent
        report.rows.append(
            RunRow(
                frame=st.frame,
                strategy=cfg.strategy,
                bank_frames_equivalent=st.bank_frames_equivalent,
                read_seconds=st.read_seconds,
                write_seconds=st.write_seconds,
                evictions=st.evictions,
                iou=scores,
            )
        )
    object_means = [float(np.mean(v)) for v in per_object.values() if v]
    report.summary = RunSummary(
        frames=len(stream.frames),
        total_seconds=total,
        init_seconds=state.initial_write_seconds,
        frames_per_second=len(stream.frames) / total if total > 0 else float("inf"),
        mean_bank_frames_equivalent=bank_sum / len(report.rows) if report.rows else 0.0,
        mean_iou=float(np.mean(object_means)) if object_means else 1.0,
        writes=state.write_count,
        evictions=state.initial_evictions + sum(r.evictions for r in report.rows),
    )
    return report


def sweep_capacity(
    stream: StreamInput, capacities: list[int], base: StrategyConfig, threads: int = 1
) -> list[RunReport]:
    if len(capacities) < 2:
        raise ValueError("a capacity sweep needs at least 2 capacities")
    configs = [
        StrategyConfig(
            strategy=base.strategy,
            capacity_frames=c,
            write_interval=base.write_interval,
            top_k=base.top_k,
            pin_first_frame=base.pin_first_frame,
            rng_seed=base.rng_seed,
        )
        for c in capacities
    ]
    return _run_many(stream, configs, threads)


def compare_strategies(
    stream: StreamInput, strategies: list[str], base: StrategyConfig, threads: int = 1
) -> list[RunReport]:
    if len(strategies) < 2:
        raise ValueError("a comparison needs at least 2 strategies")
    configs = [
        StrategyConfig(
            strategy=s,
            capacity_frames=base.capacity_frames,
            write_interval=base.write_interval,
            top_k=base.top_k,
            pin_first_frame=base.pin_first_frame,
            rng_seed=base.rng_seed,
        )
        for s in strategies
    ]
    return _run_many(stream, configs, threads)


def _run_many(stream: StreamInput, configs, threads: int) -> list[RunReport]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda c: run_benchmark(stream, c), configs))
    return [run_benchmark(stream, cfg) for cfg in configs]


# ----------------------------------------------------------------------
# report serialization
# ----------------------------------------------------------------------


def _row_record(row: RunRow, objects: list[int]) -> dict:
    rec = {
        "frame": row.frame,
        "strategy": row.strategy,
        "bank_frames_equivalent": f"{row.bank_frames_equivalent:.6g}",
        "read_seconds": f"{row.read_seconds:.9f}",
        "write_seconds": f"{row.write_seconds:.9f}",
        "evictions": row.evictions,
    }
    for m in objects:
        rec[f"iou_{m}"] = f"{row.iou[m]:.6f}" if m in row.iou else ""
    return rec


def write_run_csv(reports: list[RunReport], out) -> None:
    objects = sorted({m for rep in reports for m in rep.object_ids})
    fields = [
        "frame", "strategy", "bank_frames_equivalent",
        "read_seconds", "write_seconds", "evictions",
    ] + [f"iou_{m}" for m in objects]
    out.write(f"# {CSV_SCHEMA}\n")
    writer = csv.DictWriter(out, fieldnames=fields)
    writer.writeheader()
    for rep in reports:
        for row in rep.rows:
            writer.writerow(_row_record(row, objects))


def write_sweep_csv(capacities: list[int], reports: list[RunReport], out) -> None:
    out.write(f"# {SWEEP_SCHEMA}\n")
    writer = csv.writer(out)
    writer.writerow(
        ["capacity_frames", "mean_iou", "frames_per_second", "mean_bank_frames_equivalent"]
    )
    for cap, rep in zip(capacities, reports):
        s = rep.summary
        writer.writerow(
            [cap, f"{s.mean_iou:.6f}", f"{s.frames_per_second:.4f}",
             f"{s.mean_bank_frames_equivalent:.4f}"]
        )


def _summary_record(rep: RunReport) -> dict:
    s = rep.summary
    return {
        "strategy": rep.strategy,
        "frames": s.frames,
        "total_seconds": s.total_seconds,
        "init_seconds": s.init_seconds,
        "frames_per_second": s.frames_per_second,
        "mean_bank_frames_equivalent": s.mean_bank_frames_equivalent,
        "mean_iou": s.mean_iou,
        "writes": s.writes,
        "evictions": s.evictions,
    }


def report_json(reports: list[RunReport]) -> dict:
    objects = sorted({m for rep in reports for m in rep.object_ids})
    return {
        "schema": CSV_SCHEMA,
        "objects": objects,
        "rows": [
            {
                "frame": r.frame,
                "strategy": r.strategy,
                "bank_frames_equivalent": r.bank_frames_equivalent,
                "read_seconds": r.read_seconds,
                "write_seconds": r.write_seconds,
                "evictions": r.evictions,
                "iou": {str(m): v for m, v in r.iou.items()},
            }
            for rep in reports
            for r in rep.rows
        ],
        "summaries": [_summary_record(rep) for rep in reports],
    }


def _print_summaries(reports: list[RunReport], out) -> None:
    for rep in reports:
        s = rep.summary
        out.write(
            f"{rep.strategy}: fps={s.frames_per_second:.2f} "
            f"mean_bank={s.mean_bank_frames_equivalent:.2f} "
            f"mean_iou={s.mean_iou:.4f} writes={s.writes} evictions={s.evictions}\n"
        )


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage failures exit 1, not argparse's 2
        raise _UsageError(message)


def _add_io_flags(p: _Parser) -> None:
    p.add_argument("--input", help="recorded .mbt trace to replay")
    p.add_argument("--scenario", help=f"bundled name ({', '.join(BUNDLED)}) or a .cfg path")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_cfg_flags(p: _Parser) -> None:
    p.add_argument("--capacity-frames", type=int, default=2)
    p.add_argument("--write-interval", type=int, default=5)
    p.add_argument("--topk", type=int, default=50)
    p.add_argument("--pin-first", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="featbank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="render a scenario config into a .mbt trace")
    gen.add_argument("--scenario", required=True, help="bundled name or .cfg path")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run one strategy over a stream")
    _add_io_flags(run)
    _add_cfg_flags(run)
    run.add_argument(
        "--strategy",
        default=ADAPTIVE_LFU,
        choices=sorted(_STRATEGY_ALIASES),
    )

    sweep = sub.add_parser("sweep", help="capacity sweep with adaptive-lfu")
    _add_io_flags(sweep)
    _add_cfg_flags(sweep)
    sweep.add_argument("--capacities", required=True, help="comma list, e.g. 2,4,8")

    cmp_ = sub.add_parser("compare", help="side-by-side strategy comparison")
    _add_io_flags(cmp_)
    _add_cfg_flags(cmp_)
    cmp_.add_argument("--strategies", required=True, help="comma list of strategies")

    return parser


def _resolve_scenario(name_or_path: str, seed: int | None):
    if name_or_path in BUNDLED:
        return bundled_scenario(name_or_path, seed=seed)
    scenario = load_scenario_file(name_or_path)
    return scenario.with_seed(seed) if seed is not None else scenario


def _load_stream(args) -> StreamInput:
    if bool(args.input) == bool(args.scenario):
        raise _UsageError("exactly one of --input or --scenario is required")
    if args.input:
        data = read_trace(args.input)
        return StreamInput(data.frames, data.truths, data.entry_frames, args.input)
    scenario = _resolve_scenario(args.scenario, args.seed)
    frames, truths = generate(scenario)
    return StreamInput(frames, truths, scenario.entry_frames(), scenario.name)


def _base_config(args, strategy: str = ADAPTIVE_LFU) -> StrategyConfig:
    return StrategyConfig(
        strategy=strategy,
        capacity_frames=args.capacity_frames,
        write_interval=args.write_interval,
        top_k=args.topk,
        pin_first_frame=args.pin_first,
        rng_seed=args.seed if args.seed is not None else 0,
    )


def _threads() -> int:
    raw = os.environ.get("FEATBANK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise _UsageError(f"FEATBANK_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise _UsageError(f"FEATBANK_THREADS must be >= 1, got {n}")
    return n


def _emit(args, render_csv, payload_json) -> None:
    if args.format == "json":
        text = json.dumps(payload_json, indent=2) + "\n"
    else:
        buf = io.StringIO()
        render_csv(buf)
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_gen(args) -> int:
    scenario = _resolve_scenario(args.scenario, args.seed)
    frames, truths = generate(scenario)
    write_trace(args.out, frames, truths, scenario.entry_frames())
    k = frames[0].keys
    print(
        f"wrote {args.out}: {len(frames)} frames, grid {k.height}x{k.width}, "
        f"c_key {k.channels}, objects {sorted(scenario.entry_frames())}"
    )
    return 0


def _cmd_run(args) -> int:
    stream = _load_stream(args)
    cfg = _base_config(args, _STRATEGY_ALIASES[args.strategy])
    report = run_benchmark(stream, cfg)
    _emit(args, lambda out: write_run_csv([report], out), report_json([report]))
    if args.out:
        _print_summaries([report], sys.stdout)
    return 0


def _cmd_sweep(args) -> int:
    stream = _load_stream(args)
    try:
        capacities = [int(c) for c in args.capacities.split(",") if c.strip()]
    except ValueError:
        raise _UsageError(f"--capacities expects integers, got {args.capacities!r}")
    if len(capacities) < 2:
        raise _UsageError("--capacities needs at least 2 values")
    reports = sweep_capacity(stream, capacities, _base_config(args), threads=_threads())
    payload = {
        "schema": SWEEP_SCHEMA,
        "points": [
            {"capacity_frames": cap, **_summary_record(rep)}
            for cap, rep in zip(capacities, reports)
        ],
    }
    _emit(args, lambda out: write_sweep_csv(capacities, reports, out), payload)
    if args.out:
        for cap, rep in zip(capacities, reports):
            s = rep.summary
            print(f"capacity {cap}: mean_iou={s.mean_iou:.4f} fps={s.frames_per_second:.2f}")
    return 0


def _cmd_compare(args) -> int:
    stream = _load_stream(args)
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if len(names) < 2:
        raise _UsageError("--strategies needs at least 2 strategies")
    try:
        resolved = [_STRATEGY_ALIASES[s] for s in names]
    except KeyError as exc:
        raise _UsageError(f"unknown strategy {exc.args[0]!r}")
    reports = compare_strategies(stream, resolved, _base_config(args), threads=_threads())
    _emit(args, lambda out: write_run_csv(reports, out), report_json(reports))
    _print_summaries(reports, sys.stdout if args.out else sys.stderr)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FeatBankError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
