"""``soc`` command line: generate | run | eval | bench.

Exit codes: 0 success, 1 usage error, 2 data error.  Relative output paths
are resolved against ``$SOC_OUTPUT_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import EngineParams, StreamError
from .engine import SOCEngine
from .evaluation import MembershipTracker, TRAJECTORY_EVERY, build_report, throughput
from .io import (
    AssignmentWriter,
    DataError,
    StreamReader,
    load_snapshot,
    read_assignments,
    read_stream,
    save_snapshot,
    write_stream,
)
from .streamgen import RecipeError, generate_recipe, generate_stream, load_recipe, recipe_model

OUTPUT_DIR_ENV = "SOC_OUTPUT_DIR"
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def out_path(p) -> Path:
    p = Path(p)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _params(args) -> EngineParams:
    try:
        return EngineParams(
            r=args.radius,
            alpha=args.alpha,
            H=args.max_skeleton,
            split_enabled=args.split,
            grid_delta=args.grid_delta,
            master_seed=args.seed,
            full_sweep=args.full_sweep,
            split_candidates=args.split_candidates or None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# subcommands

def cmd_generate(args) -> int:
    recipe = load_recipe(args.recipe)
    stream = generate_recipe(recipe, args.seed)
    with open(out_path(args.out), "w") as fh:
        write_stream(stream, fh)
    print(f"wrote {len(stream)} points to {out_path(args.out)}", file=sys.stderr)
    return 0


_PARAM_FLAGS = ("alpha", "radius", "max_skeleton", "split", "seed", "grid_delta", "full_sweep", "split_candidates")


def cmd_run(args) -> int:
    if args.resume:
        given = [f for f in _PARAM_FLAGS if getattr(args, f) is not None]
        if given:
            raise UsageError(f"--resume takes parameters from the snapshot; drop {', '.join('--' + g.replace('_', '-') for g in given)}")
        engine = load_snapshot(args.resume)
    else:
        defaults = EngineParams()
        for flag, value in (("alpha", defaults.alpha), ("radius", defaults.r), ("max_skeleton", defaults.H),
                            ("split", True), ("seed", 0), ("full_sweep", False),
                            ("split_candidates", defaults.split_candidates)):
            if getattr(args, flag) is None:
                setattr(args, flag, value)
        engine = SOCEngine(_params(args))
    if args.stop_after is not None and args.stop_after < engine.n_seen:
        raise UsageError("--stop-after lies before the snapshot's stream position")

    start = engine.n_seen
    mode = "a" if args.append else "w"
    consumed = 0
    with open(out_path(args.assignments_out), mode) as fh, StreamReader(args.stream) as reader:
        writer = AssignmentWriter(fh)
        for i, (x, _) in enumerate(reader):
            consumed = i + 1
            if i < start:
                continue
            if args.stop_after is not None and engine.n_seen >= args.stop_after:
                break
            try:
                ev = engine.process_point(x)
            except StreamError as exc:
                raise DataError(f"line {i + 1}: {exc}") from None
            writer.write(ev)
    if consumed < start:
        raise DataError("stream is shorter than the snapshot's stream position")
    if args.snapshot_out:
        save_snapshot(engine, out_path(args.snapshot_out))
    sizes = [len(S) for S in engine.partition.sets.values()]
    summary = {
        "points_processed": engine.n_seen - start,
        "stream_position": engine.n_seen,
        "n_clusters": len(engine.partition),
        "max_skeleton": max(sizes, default=0),
    }
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    stream = read_stream(args.stream)
    events = read_assignments(args.assignments)
    if len(events) != len(stream):
        raise DataError(f"length mismatch: {len(events)} assignments for {len(stream)} points")
    tracker = MembershipTracker(stream.labels)
    traj = []
    for i, (x, ev) in enumerate(zip(stream.X, events)):
        if ev.point_index != i:
            raise DataError(f"assignment {i + 1} has point_index {ev.point_index}")
        tracker.observe(x, ev)
        if (i + 1) % TRAJECTORY_EVERY == 0:
            traj.append((i + 1, len(tracker.members)))
    if len(events) % TRAJECTORY_EVERY:
        traj.append((len(events), len(tracker.members)))
    if not events:
        raise DataError("cannot evaluate an empty stream")
    membership = tracker.membership()
    report = build_report(membership, stream.labels, {"assignments": str(args.assignments)}, traj)
    text = report.to_json()
    if args.report_out:
        out_path(args.report_out).write_text(text + "\n")
    else:
        print(text)
    if args.trajectory_csv:
        report.write_trajectory_csv(out_path(args.trajectory_csv))
    return 0


def cmd_bench(args) -> int:
    recipe = load_recipe(args.recipe)
    n = max(args.points, 10_000)
    X = generate_stream(recipe_model(recipe, args.seed, n)).X
    result = {"recipe": recipe.name, "points": n, "reference_micros_per_point": [60, 90]}
    for label, split in (("split", True), ("no_split", False)):
        runs = []
        for rep in range(args.repeat):
            runs.append(throughput(X, EngineParams(split_enabled=split, master_seed=args.seed)))
        us = float(np.median(runs))
        result[label] = {"micros_per_point": us, "points_per_second": 1e6 / us, "runs": runs}
    print(json.dumps(result, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="soc", description="Skeleton-based online clustering of point streams.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a labelled JSONL stream from a recipe")
    g.add_argument("recipe", help="built-in name (B1, B2, L1, L2) or path to a JSON recipe")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None, help="defaults to the recipe's seed")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="cluster a JSONL stream")
    r.add_argument("stream")
    r.add_argument("--assignments-out", required=True)
    r.add_argument("--alpha", type=float)
    r.add_argument("--radius", type=float)
    r.add_argument("--max-skeleton", type=int)
    r.add_argument("--split", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--seed", type=int)
    r.add_argument("--grid-delta", type=float, help="per-cell key streams of this side length")
    r.add_argument("--full-sweep", action=argparse.BooleanOptionalAction, default=None,
                   help="re-check every cluster for splits before each point")
    r.add_argument("--split-candidates", type=int, metavar="N",
                   help="breaking points tried per cluster and sweep (0: all; default 1)")
    r.add_argument("--snapshot-out")
    r.add_argument("--resume", metavar="SNAPSHOT")
    r.add_argument("--stop-after", type=int, metavar="N", help="stop once N stream points are consumed")
    r.add_argument("--append", action="store_true", help="append to the assignments file")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score assignments against stream labels")
    e.add_argument("assignments")
    e.add_argument("stream")
    e.add_argument("--report-out")
    e.add_argument("--trajectory-csv")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="engine throughput with and without splits")
    b.add_argument("recipe")
    b.add_argument("--points", type=int, default=10_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeat", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"soc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RecipeError, StreamError) as exc:
        print(f"soc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"soc: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
