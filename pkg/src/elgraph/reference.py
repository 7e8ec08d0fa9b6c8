"""Naive explicit-state interpreter used as a differential oracle.

Nothing here is shared with ``engine``: the inactive set is materialised,
every mutation re-checks that I, D, A, F partition the nodes, reset sets
are found by enumerating paths, and changes are detected by comparing whole
states.  It is slow on purpose and meant for graphs of a dozen nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

from .graph_model import Graph, NodeKind
from .trace import Cause, CauseKind, DispatchStatus, TraceEntry

INF = math.inf


class OracleFailure(AssertionError):
    """The explicit state stopped being a partition of the nodes."""


class ExplicitState:
    def __init__(self, nodes):
        self.nodes = frozenset(nodes)
        self.I = set(nodes)
        self.D: dict = {}
        self.A: dict = {}
        self.F: set = set()
        self.E: list = []

    def check(self):
        d, a = set(self.D), set(self.A)
        parts = [self.I, d, a, self.F]
        total = set().union(*parts)
        if total != self.nodes or sum(len(p) for p in parts) != len(self.nodes):
            raise OracleFailure(f"not a partition: I={sorted(self.I)} D={sorted(d)} A={sorted(a)} F={sorted(self.F)}")

    def where(self, n):
        if n in self.I:
            return "I"
        if n in self.D:
            return "D"
        if n in self.A:
            return "A"
        return "F"

    def _remove(self, n):
        loc = self.where(n)
        if loc == "I":
            self.I.remove(n)
        elif loc == "D":
            del self.D[n]
        elif loc == "A":
            del self.A[n]
        else:
            self.F.remove(n)

    def to_inactive(self, n):
        self._remove(n)
        self.I.add(n)
        self.check()

    def to_delayed(self, n, t):
        self._remove(n)
        self.D[n] = t
        self.check()

    def to_active(self, n, t):
        self._remove(n)
        self.A[n] = t
        self.check()

    def to_fired(self, n):
        self._remove(n)
        self.F.add(n)
        self.check()

    def snapshot(self):
        return (
            tuple(sorted(self.I)),
            tuple(sorted(self.D.items())),
            tuple(sorted(self.A.items())),
            tuple(sorted(self.F)),
            len(self.E),
        )

    def clone(self):
        c = ExplicitState(self.nodes)
        c.I, c.D, c.A, c.F, c.E = set(self.I), dict(self.D), dict(self.A), set(self.F), list(self.E)
        return c


def _all_paths(g: Graph, src, dst, banned_edges):
    """Every simple path src -> dst as a list of nodes."""
    out = []

    def go(n, path):
        if n == dst:
            out.append(list(path))
            return
        for c in g.next(n):
            if (n, c) in banned_edges or c in path:
                continue
            path.append(c)
            go(c, path)
            path.pop()

    go(src, [src])
    return out


class _Machine:
    """The interpreter proper; works on a graph plus an ExplicitState."""

    def __init__(self, g: Graph):
        self.g = g
        kinds = {n: g.node(n).kind for n in g}
        self.logic = {n for n in g if kinds[n] == NodeKind.LOGIC}
        self.counts = {n for n in g if kinds[n] == NodeKind.LOOP_COUNT}
        self.exits = {n for n in g if kinds[n] == NodeKind.LOOP_EXIT}
        self.goal = {n for n in g if g.node(n).goal}
        self.start = [n for n in g if g.node(n).entry]
        loop_edges = set()
        self.first = {}
        self.exit_of = {}
        for l in self.counts:
            for c in g.next(l):
                if kinds[c] == NodeKind.LOOP_EXIT:
                    self.exit_of[l] = c
                else:
                    self.first[l] = c
                    loop_edges.add((l, c))
        self.reset = {}
        for l in self.counts:
            internal = set()
            for path in _all_paths(g, self.first[l], l, loop_edges):
                internal.update(path)
            internal.discard(l)
            self.reset[l] = internal
            x = self.exit_of[l]
            brk = {p for p in g.parents(x) if p != l}
            self.reset[x] = internal | {l} | brk

    # access functions, written out again

    def wp(self, n):
        node = self.g.node(n)
        if node.kind in (NodeKind.ACTIVATION, NodeKind.GUARDED_EFFECT):
            return node.watchpoint.atom if node.watchpoint.atom is not None else True
        return None

    def timeout(self, n):
        node = self.g.node(n)
        if node.kind in (NodeKind.ACTIVATION, NodeKind.GUARDED_EFFECT):
            return node.timeout
        return INF

    def delay(self, n):
        node = self.g.node(n)
        if node.kind in (NodeKind.ACTIVATION, NodeKind.GUARDED_EFFECT):
            return node.delay
        return 0

    def evaluate(self, e, F):
        if isinstance(e, str):
            return e in F
        vals = [self.evaluate(a, F) for a in e.args]
        return all(vals) if e.op == "and" else any(vals)

    # one round

    def init(self, s: ExplicitState, t, counters):
        for n in sorted(self.start):
            s.to_active(n, t + self.timeout(n))
        for l in self.counts:
            counters[l] = self.g.node(l).loop_count

    def do_round(self, s: ExplicitState, counters, alerts, t):
        # activate delays
        for n, d in sorted(s.D.items()):
            if d <= t:
                s.to_active(n, t + self.timeout(n))
        # triggered
        T = set()
        cause = {}
        for n in sorted(s.A):
            if self.wp(n) is True:
                T.add(n)
                cause[n] = Cause(CauseKind.TOP)
        for n in sorted(s.A):
            if n in self.logic and self.evaluate(self.g.node(n).expr, s.F):
                T.add(n)
        self.matched_atoms = set()
        for a in alerts:
            for n in sorted(s.A):
                if self.wp(n) == a.atom:
                    self.matched_atoms.add(a.atom)
                    if n not in cause:
                        T.add(n)
                        cause[n] = Cause(CauseKind.ALERT, a.atom, a.payload)
        self.fire(s, T, t, cause)
        # loop counts
        for l in sorted(n for n in s.A if n in self.counts):
            for n in sorted(self.reset[l]):
                if n not in s.I:
                    s.to_inactive(n)
            if counters[l] == 0:
                s.to_active(self.exit_of[l], INF)
                s.to_fired(l)
            else:
                if counters[l] > 0:
                    counters[l] = counters[l] - 1
                n = self.first[l]
                if self.delay(n) > 0:
                    s.to_delayed(n, t + self.delay(n))
                else:
                    s.to_active(n, t + self.timeout(n))
                s.to_inactive(l)
        # loop exits
        tx = sorted(n for n in s.A if n in self.exits)
        for x in tx:
            for n in sorted(self.reset[x]):
                if n not in s.I:
                    s.to_inactive(n)
        self.fire(s, set(tx), t, {})
        # timeouts
        for n, e in sorted(s.A.items()):
            if e <= t:
                s.to_inactive(n)
        return bool(s.F & self.goal)

    def fire(self, s, T, t, cause):
        inactive_kids = []
        for p in sorted(T):
            for c in self.g.next(p):
                if c in s.I and c not in inactive_kids:
                    inactive_kids.append(c)
        for c in sorted(inactive_kids):
            if self.delay(c) > 0:
                s.to_delayed(c, t + self.delay(c))
            else:
                s.to_active(c, t + self.timeout(c))
        for n in sorted(T):
            s.to_fired(n)
        for n in sorted(T):
            if n in self.logic or n in self.counts or n in self.exits:
                continue
            node = self.g.node(n)
            cmd = node.effect if node.kind == NodeKind.GUARDED_EFFECT else ""
            s.E.append(TraceEntry(
                n, t, cause.get(n, Cause(CauseKind.TOP)),
                cmd if cmd else None,
                DispatchStatus.DISPATCHED if cmd else None,
            ))


@dataclass
class ReferenceResult:
    status: str  # "DONE", "QUIESCENT" or "ROUND_LIMIT"
    trace: list
    D: dict
    A: dict
    F: set
    counters: dict
    rounds: int


def reference_run(g: Graph, alert_sequence, max_rounds: Optional[int] = None,
                  max_time: Optional[int] = None) -> ReferenceResult:
    """Run ``g`` against a fixed list of ``(time, Alert)`` pairs on a discrete clock."""
    m = _Machine(g)
    s = ExplicitState(g.node_ids())
    counters: dict = {}
    queue = sorted(((at, i, a) for i, (at, a) in enumerate(alert_sequence)), key=lambda x: (x[0], x[1]))
    t = 0
    m.init(s, t, counters)
    rounds = 0
    done = False
    while True:
        if done:
            status = "DONE"
            break
        if max_rounds is not None and rounds >= max_rounds:
            status = "ROUND_LIMIT"
            break
        rounds += 1
        alerts = [a for at, _, a in queue if at <= t]
        queue = [q for q in queue if q[0] > t]
        before = (s.snapshot(), tuple(sorted(counters.items())))
        done = m.do_round(s, counters, alerts, t)
        if done:
            continue
        if (s.snapshot(), tuple(sorted(counters.items()))) != before:
            continue
        upcoming = list(s.D.values()) + [e for e in s.A.values() if e != INF] + [q[0] for q in queue]
        if not upcoming:
            status = "QUIESCENT"
            break
        nxt = min(upcoming)
        if max_time is not None and nxt > max_time:
            status = "ROUND_LIMIT"
            break
        t = max(t, nxt)
    return ReferenceResult(status, s.E, dict(s.D), dict(s.A), set(s.F), counters, rounds)


# exhaustive enumeration


@dataclass
class Outcomes:
    traces: set = field(default_factory=set)
    done_traces: set = field(default_factory=set)
    fair_traces: set = field(default_factory=set)  # every delivered alert triggered some node
    partial: bool = False
    states_explored: int = 0


def _sub_multisets(items: tuple):
    seen = set()
    idx = range(len(items))
    for k in range(len(items) + 1):
        for chosen in combinations(idx, k):
            pick = tuple(items[i] for i in chosen)
            if pick in seen:
                continue
            seen.add(pick)
            rest = list(items)
            for i in sorted(chosen, reverse=True):
                del rest[i]
            yield pick, tuple(rest)


def enumerate_outcomes(g: Graph, alerts, max_nodes: int = 7, max_alerts: int = 5, max_rounds: int = 20,
                       max_states: int = 200_000) -> Outcomes:
    """Every trace reachable when the given alerts are delivered in any order and any rounds.

    Round ``k`` runs at time ``k``.  A trace is recorded when a goal fires or
    when every alert has been delivered and nothing further can happen.
    Alerts delivered while no node waits for them are discarded, as in the
    engine; ``fair_traces`` keeps only runs where that never happened.
    Exceeding a bound sets ``partial``.
    """
    if len(g) > max_nodes:
        raise ValueError(f"graph has {len(g)} nodes; enumeration is limited to {max_nodes}")
    alerts = tuple(sorted(alerts, key=lambda a: (a.atom, a.payload)))
    if len(alerts) > max_alerts:
        raise ValueError(f"{len(alerts)} alerts; enumeration is limited to {max_alerts}")
    m = _Machine(g)
    s0 = ExplicitState(g.node_ids())
    counters0: dict = {}
    m.init(s0, 0, counters0)
    out = Outcomes()
    seen = set()

    def key(s, counters, rest, k):
        return (s.snapshot()[:4], tuple(e.node for e in s.E), tuple(sorted(counters.items())), rest, k)

    def record(trace, fair, done=False):
        out.traces.add(trace)
        if fair:
            out.fair_traces.add(trace)
        if done:
            out.done_traces.add(trace)

    stack = [(s0, counters0, alerts, 0, True)]
    while stack:
        s, counters, rest, k, fair = stack.pop()
        kk = key(s, counters, rest, k) + (fair,)
        if kk in seen:
            continue
        seen.add(kk)
        out.states_explored += 1
        if out.states_explored > max_states:
            out.partial = True
            break
        if k >= max_rounds:
            out.partial = True
            record(tuple(e.node for e in s.E), fair)
            continue
        for pick, left in _sub_multisets(rest):
            s2 = s.clone()
            c2 = dict(counters)
            before = (s2.snapshot(), tuple(sorted(c2.items())))
            done = m.do_round(s2, c2, list(pick), k)
            fair2 = fair and all(a.atom in m.matched_atoms for a in pick)
            trace = tuple(e.node for e in s2.E)
            if done:
                record(trace, fair2, done=True)
                continue
            changed = (s2.snapshot(), tuple(sorted(c2.items()))) != before
            timed = bool(s2.D) or any(e != INF for e in s2.A.values())
            if not changed and not timed:
                if not left:
                    record(trace, fair2)
                    continue
                if not pick:
                    continue
            stack.append((s2, c2, left, k + 1, fair2))
    return out
