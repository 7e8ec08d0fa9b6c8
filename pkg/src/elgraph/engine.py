"""Round-based interpreter for EL graphs.

Each round drains alerts, reads the clock, then runs the fixed pipeline
activate-delays, get-triggered, fire-triggered, fire-loop-counts,
fire-loop-exits, garbage-collection, and finally checks for a fired goal.
Within a sub-step nodes are handled in ascending id order.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .environment import Environment
from .exec_state import ExecutionState, partition_check, reset_nodes
from .graph_model import INFINITE, Graph, check_runnable, compute_loop_info, eval_expr, expr_str, reset_sets
from .trace import CAUSE_LOGIC, CAUSE_TOP, Cause, CauseKind, DispatchStatus, TraceEntry

log = logging.getLogger(__name__)
instrument_log = logging.getLogger("elgraph.instrument")

SUBSTEPS = (
    "activate_delays",
    "get_triggered",
    "fire_triggered",
    "fire_loop_counts",
    "fire_loop_exits",
    "garbage_collection",
)


class Mode(str, Enum):
    LIVE = "live"
    SIMULATED = "simulated"


class RunStatus(Enum):
    DONE = 0
    QUIESCENT = 2
    ROUND_LIMIT = 3
    ENVIRONMENT_ERROR = 5

    @property
    def exit_code(self) -> int:
        return self.value


@dataclass
class EngineConfig:
    tick_interval: int = 100
    mode: Optional[Mode] = None  # None: follow the environment
    instrument: bool = False

    def __post_init__(self):
        if self.mode is Mode.LIVE and self.tick_interval <= 0:
            raise ValueError("tick interval must be positive in live mode")


@dataclass
class RoundReport:
    round: int
    time: Optional[int]
    alerts: list = field(default_factory=list)
    triggered: tuple = ()
    fired: tuple = ()
    done: bool = False
    changed: bool = False
    error: Optional[str] = None


@dataclass
class RunResult:
    status: RunStatus
    state: ExecutionState
    rounds: int
    time: Optional[int]
    counters: dict
    diagnostic: str = ""

    @property
    def trace(self) -> list:
        return self.state.trace

    @property
    def exit_code(self) -> int:
        return self.status.exit_code


class Engine:
    """Executes one graph against one environment.

    ``hooks`` are called as ``hook(engine, substep_name)`` after ``init`` and
    after every sub-step of every round.
    """

    def __init__(self, graph: Graph, env: Environment, config: Optional[EngineConfig] = None,
                 hooks: tuple = ()):
        check_runnable(graph)
        self.g = graph
        self.env = env
        self.config = config or EngineConfig()
        self.mode = self.config.mode or (Mode.SIMULATED if env.simulated else Mode.LIVE)
        self.hooks: list[Callable] = list(hooks)

        nodes = graph.nodes
        self.B = frozenset(graph.logic_nodes())
        self.L = frozenset(graph.loopcount_nodes())
        self.X = frozenset(graph.exit_nodes())
        self.goals = frozenset(graph.goal_nodes())
        self.loops = compute_loop_info(graph)
        self.R = reset_sets(graph, self.loops)
        self._children = {n: graph.next(n) for n in graph}
        self._delay = {n: graph.delay(n) for n in graph}
        self._timeout = {n: graph.timeout(n) for n in graph}
        self._top = frozenset(n for n in graph.watchpoint_nodes() if nodes[n].watchpoint.is_top)
        self._atom = {n: nodes[n].watchpoint.atom for n in graph.watchpoint_nodes() if not nodes[n].watchpoint.is_top}
        self._watch = frozenset(graph.watchpoint_nodes())
        self._expr = {n: graph.bool_expr(n) for n in self.B}
        self._return = {l: info.first_node for l, info in self.loops.items()}
        self._exit = {l: info.exit_node for l, info in self.loops.items()}
        self._path_weight = _path_weights(graph)

        self.state: Optional[ExecutionState] = None
        self.counters: dict[str, int] = {}
        self.rounds = 0
        self.done = False
        self.now: Optional[int] = None
        self._changed = False
        self._causes: dict[str, Cause] = {}

    # state setup

    def init(self) -> ExecutionState:
        t = self.env.get_time()
        self.now = t
        s = ExecutionState()
        for n in self.g.entry_nodes():
            s.active[n] = t + self._timeout[n]
        self.state = s
        self.counters = {l: self.g.node(l).loop_count for l in sorted(self.L)}
        self.rounds = 0
        self.done = False
        self._after("init")
        return s

    def restore(self, state: ExecutionState, counters: dict, rounds: int = 0) -> None:
        """Resume from a snapshot; timestamps are kept as recorded."""
        self.state = state
        self.counters = {l: self.g.node(l).loop_count for l in sorted(self.L)}
        self.counters.update({k: v for k, v in counters.items() if k in self.L})
        self.rounds = rounds
        self.now = self.env.get_time()
        self.done = bool(state.fired & self.goals)

    # sub-procedures

    def activate_delays(self, t) -> None:
        s = self.state
        due = sorted(n for n, d in s.delayed.items() if d <= t)
        for n in due:
            del s.delayed[n]
            s.active[n] = t + self._timeout[n]
        if due:
            self._changed = True

    def get_triggered(self, alerts) -> set:
        s = self.state
        by_atom: dict[str, object] = {}
        for a in alerts:
            by_atom.setdefault(a.atom, a)
        causes: dict[str, Cause] = {}
        for n in s.active:
            if n in self._top:
                causes[n] = CAUSE_TOP
            elif n in self.B:
                if eval_expr(self._expr[n], s.fired):
                    causes[n] = CAUSE_LOGIC
            else:
                atom = self._atom.get(n)
                if atom is not None and atom in by_atom:
                    a = by_atom[atom]
                    causes[n] = Cause(CauseKind.ALERT, a.atom, a.payload)
        self._causes = causes
        return set(causes)

    def fire_triggered(self, T, t) -> None:
        if not T:
            return
        s = self.state
        kids = set()
        for n in T:
            kids.update(self._children[n])
        for n in sorted(kids):
            if n in s.delayed or n in s.active or n in s.fired:
                continue
            d = self._delay[n]
            if d > 0:
                s.delayed[n] = t + d
            else:
                s.active[n] = t + self._timeout[n]
        for n in T:
            s.active.pop(n, None)
        s.fired.update(T)
        for n in sorted(T):
            if n in self._watch:
                self._dispatch(n, t)
        self._changed = True

    def _dispatch(self, n: str, t) -> None:
        cmd = self.g.eff(n)
        status = None
        if cmd:
            try:
                ok = self.env.execute(cmd, n)
            except Exception as exc:  # executor problems never abort a round
                log.warning("effect dispatch for %s failed: %s", n, exc)
                ok = False
            if ok is not None:
                status = DispatchStatus.DISPATCHED if ok else DispatchStatus.FAILED
        cause = self._causes.get(n, CAUSE_TOP)
        self.state.trace.append(TraceEntry(n, t, cause, cmd or None, status))

    def fire_loop_counts(self, t) -> None:
        s = self.state
        active_counts = sorted(n for n in s.active if n in self.L)
        for l in active_counts:
            reset_nodes(s, self.R[l])
            if self.counters[l] == 0:
                s.active[self._exit[l]] = INFINITE
                s.fired.add(l)
            else:
                if self.counters[l] > 0:
                    self.counters[l] -= 1
                n = self._return[l]
                d = self._delay[n]
                if d > 0:
                    s.delayed[n] = t + d
                else:
                    s.active[n] = t + self._timeout[n]
            s.active.pop(l, None)
        if active_counts:
            self._changed = True

    def fire_loop_exits(self, t) -> None:
        s = self.state
        TX = sorted(n for n in s.active if n in self.X)
        for x in TX:
            reset_nodes(s, self.R[x])
        self._causes = {}
        self.fire_triggered(set(TX), t)

    def garbage_collection(self, t) -> None:
        s = self.state
        expired = [n for n, e in s.active.items() if e <= t]
        for n in expired:
            del s.active[n]
        if expired:
            self._changed = True

    # rounds

    def step(self) -> RoundReport:
        if self.state is None:
            self.init()
        if self.done:
            raise RuntimeError("graph already reached a goal")
        self.rounds += 1
        report = RoundReport(self.rounds, None)
        try:
            alerts = self.env.get_alerts()
            report.alerts = alerts
            t = self.env.get_time()
        except Exception as exc:
            report.error = f"environment failure: {exc}"
            log.error("round %d aborted: %s", self.rounds, exc)
            return report
        self.now = report.time = t
        self._changed = False
        fired_before = len(self.state.trace)

        self.activate_delays(t)
        self._after("activate_delays")
        T = self.get_triggered(alerts)
        self._after("get_triggered")
        self.fire_triggered(T, t)
        self._after("fire_triggered")
        self.fire_loop_counts(t)
        self._after("fire_loop_counts")
        self.fire_loop_exits(t)
        self._after("fire_loop_exits")
        self.garbage_collection(t)
        self._after("garbage_collection")

        self.done = bool(self.state.fired & self.goals)
        report.triggered = tuple(sorted(T))
        report.fired = tuple(e.node for e in self.state.trace[fired_before:])
        report.done = self.done
        report.changed = self._changed
        return report

    def next_event_time(self) -> Optional[int]:
        """Earliest future instant at which anything can happen (simulation only)."""
        s = self.state
        times = [d for d in s.delayed.values()]
        times += [e for e in s.active.values() if e != INFINITE]
        env_t = self.env.next_event_time()
        if env_t is not None:
            times.append(env_t)
        return min(times) if times else None

    def run(self, max_rounds: Optional[int] = None, max_time: Optional[int] = None,
            on_round: Optional[Callable] = None) -> RunResult:
        if self.state is None:
            self.init()
        while True:
            if self.done:
                return self._result(RunStatus.DONE)
            if max_rounds is not None and self.rounds >= max_rounds:
                return self._result(RunStatus.ROUND_LIMIT, f"round limit {max_rounds} reached")
            report = self.step()
            if on_round is not None:
                on_round(self, report)
            if report.error:
                return self._result(RunStatus.ENVIRONMENT_ERROR, report.error)
            if report.done:
                return self._result(RunStatus.DONE)
            if self.mode is Mode.SIMULATED:
                if report.changed:
                    continue
                nxt = self.next_event_time()
                if nxt is None:
                    if self.env.idle():
                        continue
                    return self._result(RunStatus.QUIESCENT, self._quiescent_diagnostic())
                if max_time is not None and nxt > max_time:
                    return self._result(RunStatus.ROUND_LIMIT, f"time limit {max_time} ms reached")
                self.env.advance_to(max(nxt, self.now))
            else:
                if max_time is not None and self.env.get_time() > max_time:
                    return self._result(RunStatus.ROUND_LIMIT, f"time limit {max_time} ms reached")
                if not report.changed:
                    time.sleep(self.config.tick_interval / 1000.0)

    def _result(self, status: RunStatus, diagnostic: str = "") -> RunResult:
        return RunResult(status, self.state, self.rounds, self.now, dict(self.counters), diagnostic)

    def _quiescent_diagnostic(self) -> str:
        waiting = [f"{n} waits for {self.g.wp(n)}" for n in sorted(self.state.active) if n in self._watch]
        waiting += [f"{n} waits for {expr_str(self._expr[n])}" for n in sorted(self.state.active) if n in self.B]
        return "no further events can trigger any node" + ("; " + "; ".join(waiting) if waiting else "")

    # instrumentation

    def measure(self) -> tuple:
        """(c, p, d): remaining loop iterations, summed path weight of the frontier, |D|.

        ``c`` is None when an infinite loop exists.
        """
        s = self.state
        if any(v < 0 for v in self.counters.values()):
            c = None
        else:
            c = sum(self.counters.values())
        w = self._path_weight
        p = sum(w[n] for n in s.delayed) + sum(w[n] for n in s.active)
        return (c, p, len(s.delayed))

    def _after(self, name: str) -> None:
        if self.config.instrument:
            s = self.state
            instrument_log.info(json.dumps({
                "round": self.rounds,
                "substep": name,
                "D": len(s.delayed),
                "A": len(s.active),
                "F": len(s.fired),
                "measure": list(self.measure()),
                "partition": partition_check(s, self.g),
            }))
        for h in self.hooks:
            h(self, name)


def _path_weights(g: Graph) -> dict:
    """Per node: summed node-count length of all forward paths to childless nodes."""
    weight: dict[str, int] = {}
    paths: dict[str, int] = {}

    def visit(n):
        if n in weight:
            return
        kids = g.forward_children(n)
        if not g.next(n):
            weight[n], paths[n] = 1, 1
            return
        w = p = 0
        for c in kids:
            visit(c)
            w += weight[c] + paths[c]
            p += paths[c]
        weight[n], paths[n] = w, p

    for n in g:
        visit(n)
    return weight


def run(g: Graph, env: Environment, max_rounds: Optional[int] = None, max_time: Optional[int] = None,
        config: Optional[EngineConfig] = None) -> RunResult:
    return Engine(g, env, config).run(max_rounds=max_rounds, max_time=max_time)
