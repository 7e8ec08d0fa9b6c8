"""Command line entry point: ``elgraph validate|collapse|run|resume|export-dot``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import trace as trace_mod
from .engine import Engine, EngineConfig, RunResult
from .environment import (
    InteractiveSource,
    LiveEnvironment,
    ScenarioError,
    SimulatedEnvironment,
    load_live_config,
    load_scenario,
)
from .exec_state import read_snapshot, save_snapshot, snapshot_from_dict
from .graph_io import load_graph, save_graph, to_dot
from .graph_model import GraphError, collapse, validate

EXIT_INPUT_ERROR = 4

log = logging.getLogger("elgraph")


class InputError(Exception):
    """Bad command line input or an unreadable/invalid file."""


@dataclass
class RunOptions:
    graph_path: str
    scenario_path: Optional[str] = None
    live_config_path: Optional[str] = None
    trace_path: Optional[str] = None
    trace_format: str = "jsonl"
    max_rounds: Optional[int] = None
    max_time: Optional[int] = None
    interactive: bool = False
    instrument: Optional[str] = None
    snapshot_every: Optional[int] = None
    snapshot_path: Optional[str] = None
    tick_ms: int = 100

    def __post_init__(self):
        if (self.scenario_path is None) == (self.live_config_path is None):
            raise InputError("give exactly one of --scenario and --live-config")
        if self.snapshot_every is not None and not self.snapshot_path:
            raise InputError("--snapshot-every needs --snapshot")


def _setup_logging() -> None:
    level = os.environ.get("EL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_graph(path: str):
    try:
        return load_graph(path)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: no such file") from exc
    except (GraphError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _runnable(path: str):
    g = _load_graph(path)
    rep = validate(g)
    if not rep.ok:
        raise InputError(f"{path}: invalid graph\n{rep}")
    if not g.is_collapsed():
        raise InputError(f"{path}: graph is not in collapsed form; run 'elgraph collapse' first")
    return g


# subcommands


def cmd_validate(args) -> int:
    try:
        g = load_graph(args.graph)
    except FileNotFoundError:
        print(f"{args.graph}: no such file", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (GraphError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"{args.graph}: parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    rep = validate(g)
    for v in rep:
        print(v)
    if rep.ok:
        print(f"{args.graph}: valid ({len(g)} nodes)", file=sys.stderr)
        return 0
    return 1


def cmd_collapse(args) -> int:
    g = _load_graph(args.graph)
    try:
        out = collapse(g)
    except GraphError as exc:
        raise InputError(str(exc)) from exc
    save_graph(out, args.out)
    return 0


def cmd_export_dot(args) -> int:
    g = _load_graph(args.graph)
    rep = validate(g)
    if not rep.ok:
        print(rep, file=sys.stderr)
        return 1
    text = to_dot(g)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _environment(opts: RunOptions, resume_at: Optional[int] = None):
    if opts.scenario_path is not None:
        try:
            scn = load_scenario(opts.scenario_path)
        except FileNotFoundError as exc:
            raise InputError(f"{opts.scenario_path}: no such file") from exc
        except ScenarioError as exc:
            raise InputError(f"{opts.scenario_path}: {exc}") from exc
        start = resume_at or 0
        env = SimulatedEnvironment(scn, start=start, skip_until=resume_at)
    else:
        try:
            cfg = load_live_config(opts.live_config_path)
        except FileNotFoundError as exc:
            raise InputError(f"{opts.live_config_path}: no such file") from exc
        except (ValueError, TypeError) as exc:
            raise InputError(f"{opts.live_config_path}: {exc}") from exc
        env = LiveEnvironment(cfg)
    if opts.interactive:
        env = InteractiveSource(env, sys.stdin)
    return env


def _execute(opts: RunOptions, snapshot=None, env_state=None) -> int:
    g = _runnable(opts.graph_path)
    resume_at = snapshot[2] if snapshot is not None else None
    env = _environment(opts, resume_at)
    if env_state is not None:
        try:
            env.load_state(env_state)
        except (KeyError, TypeError, ValueError) as exc:
            env.close()
            raise InputError(f"snapshot environment state is malformed: {exc}") from exc
    handler = None
    if opts.instrument is not None:
        ilog = logging.getLogger("elgraph.instrument")
        ilog.setLevel(logging.INFO)
        ilog.propagate = False
        handler = logging.FileHandler(opts.instrument, mode="w", encoding="utf-8") if opts.instrument != "-" \
            else logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        ilog.addHandler(handler)
    cfg = EngineConfig(tick_interval=opts.tick_ms, instrument=opts.instrument is not None)
    try:
        engine = Engine(g, env, cfg)
        if snapshot is not None:
            state, counters, _, rounds = snapshot
            engine.restore(state, counters, rounds)
        else:
            engine.init()

        def on_round(eng, report):
            if opts.snapshot_every and eng.rounds % opts.snapshot_every == 0:
                save_snapshot(opts.snapshot_path, eng.state, eng.counters, eng.now, eng.rounds, env.save_state())

        result: RunResult = engine.run(opts.max_rounds, opts.max_time, on_round)
        env_final = env.save_state()
    finally:
        env.close()
        if handler is not None:
            logging.getLogger("elgraph.instrument").removeHandler(handler)
            handler.close()
    if opts.snapshot_path:
        save_snapshot(opts.snapshot_path, result.state, result.counters, result.time, result.rounds, env_final)
    if opts.trace_path and opts.trace_path != "-":
        with open(opts.trace_path, "wb") as fh:
            trace_mod.emit(result.trace, opts.trace_format, fh)
    else:
        trace_mod.emit(result.trace, opts.trace_format, sys.stdout.buffer)
    msg = f"{result.status.name} after {result.rounds} rounds at t={result.time} ms"
    if result.diagnostic:
        msg += f": {result.diagnostic}"
    print(msg, file=sys.stderr)
    return result.exit_code


def _options(args) -> RunOptions:
    return RunOptions(
        graph_path=args.graph,
        scenario_path=args.scenario,
        live_config_path=args.live_config,
        trace_path=args.trace,
        trace_format=args.trace_format,
        max_rounds=args.max_rounds,
        max_time=args.max_time,
        interactive=args.interactive,
        instrument=args.instrument,
        snapshot_every=args.snapshot_every,
        snapshot_path=args.snapshot,
        tick_ms=args.tick_ms,
    )


def cmd_run(args) -> int:
    return _execute(_options(args))


def cmd_resume(args) -> int:
    try:
        doc = read_snapshot(args.from_snapshot)
        snap = snapshot_from_dict(doc)
    except FileNotFoundError as exc:
        raise InputError(f"{args.from_snapshot}: no such file") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.from_snapshot}: malformed snapshot: {exc}") from exc
    return _execute(_options(args), snap, doc.get("environment"))


def _positive(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elgraph", description="Validate and execute EL attack graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check structural rules")
    v.add_argument("graph")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("collapse", help="merge chains of logic nodes")
    c.add_argument("graph")
    c.add_argument("out")
    c.set_defaults(func=cmd_collapse)

    d = sub.add_parser("export-dot", help="write Graphviz DOT")
    d.add_argument("graph")
    d.add_argument("-o", "--out")
    d.set_defaults(func=cmd_export_dot)

    def run_args(sp):
        sp.add_argument("--graph", required=True)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", help="simulated run driven by this scenario file")
        src.add_argument("--live-config", help="live run using this transport config")
        sp.add_argument("--trace", help="trace output file (default: stdout)")
        sp.add_argument("--trace-format", choices=("jsonl", "summary"), default="jsonl")
        sp.add_argument("--max-rounds", type=_positive)
        sp.add_argument("--max-time", type=int, help="stop after this many ms of engine time")
        sp.add_argument("--interactive", action="store_true", help="read operator alerts from stdin")
        sp.add_argument("--instrument", nargs="?", const="-", metavar="PATH",
                        help="write the per-sub-step log (stderr when PATH is omitted)")
        sp.add_argument("--snapshot-every", type=_positive, metavar="N")
        sp.add_argument("--snapshot", metavar="PATH", help="write the final (and periodic) state here")
        sp.add_argument("--tick-ms", type=_positive, default=100, help="live polling period")

    r = sub.add_parser("run", help="execute a graph")
    run_args(r)
    r.set_defaults(func=cmd_run)

    rs = sub.add_parser("resume", help="continue a run from a snapshot")
    rs.add_argument("--from", dest="from_snapshot", required=True, metavar="SNAPSHOT")
    run_args(rs)
    rs.set_defaults(func=cmd_resume)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
