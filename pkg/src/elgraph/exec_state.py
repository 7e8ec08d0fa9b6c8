"""Mutable execution state: delayed, active and fired sets plus the trace.

Inactive nodes are never stored; a node is inactive iff it is in none of
the three sets.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .graph_io import timeout_from_json, timeout_to_json
from .graph_model import Graph
from .trace import TraceEntry


def hat(pairs: Iterable[tuple]) -> set:
    """Project a set of (node, time) pairs onto its nodes."""
    return {n for n, _ in pairs}


@dataclass
class ExecutionState:
    """Delayed nodes map to their activation time, active nodes to their expiry."""

    delayed: dict = field(default_factory=dict)
    active: dict = field(default_factory=dict)
    fired: set = field(default_factory=set)
    trace: list = field(default_factory=list)

    @classmethod
    def from_pairs(cls, D=(), A=(), F=(), E=()) -> "ExecutionState":
        """Build from pair sets; a node may appear at most once in D and once in A."""
        s = cls(fired=set(F), trace=list(E))
        for name, pairs, target in (("D", D, s.delayed), ("A", A, s.active)):
            for n, t in pairs:
                if n in target:
                    raise ValueError(f"{n!r} appears twice in {name}")
                target[n] = t
        return s

    @property
    def D(self) -> frozenset:
        return frozenset(self.delayed.items())

    @property
    def A(self) -> frozenset:
        return frozenset(self.active.items())

    @property
    def F(self) -> frozenset:
        return frozenset(self.fired)

    @property
    def E(self) -> list:
        return self.trace

    def inactive(self, g: Graph) -> set:
        return {n for n in g if n not in self.delayed and n not in self.active and n not in self.fired}

    def is_inactive(self, n: str) -> bool:
        return n not in self.delayed and n not in self.active and n not in self.fired

    def copy(self) -> "ExecutionState":
        return ExecutionState(dict(self.delayed), dict(self.active), set(self.fired), list(self.trace))

    def key(self) -> tuple:
        """Hashable view of (D, A, F) for change detection."""
        return (
            tuple(sorted(self.delayed.items())),
            tuple(sorted(self.active.items())),
            tuple(sorted(self.fired)),
        )


def reset_nodes(s: ExecutionState, nodes) -> ExecutionState:
    """Return every node of ``nodes`` to the inactive state.  Mutates and returns ``s``."""
    for n in nodes:
        s.delayed.pop(n, None)
        s.active.pop(n, None)
        s.fired.discard(n)
    return s


def partition_check(s: ExecutionState, g: Optional[Graph] = None) -> bool:
    """True iff delayed, active and fired nodes are pairwise disjoint (and known to ``g``)."""
    d, a, f = s.delayed.keys(), s.active.keys(), s.fired
    if d & a or d & f or a & f:
        return False
    if g is not None:
        nodes = g.nodes
        return all(n in nodes for n in d) and all(n in nodes for n in a) and all(n in nodes for n in f)
    return True


# snapshots


def snapshot_to_dict(s: ExecutionState, counters: Optional[dict] = None, now: Optional[int] = None,
                     rounds: int = 0, environment: Optional[dict] = None) -> dict:
    doc = {
        "delayed": [[n, timeout_to_json(t)] for n, t in sorted(s.delayed.items())],
        "active": [[n, timeout_to_json(t)] for n, t in sorted(s.active.items())],
        "fired": sorted(s.fired),
        "trace": [e.to_json() for e in s.trace],
        "counters": dict(sorted((counters or {}).items())),
        "rounds": rounds,
    }
    if now is not None:
        doc["now_ms"] = now
    if environment is not None:
        doc["environment"] = environment
    return doc


SNAPSHOT_KEYS = ("delayed", "active", "fired", "trace", "counters", "rounds")


def snapshot_from_dict(doc: dict) -> tuple[ExecutionState, dict, Optional[int], int]:
    """Inverse of :func:`snapshot_to_dict`; raises ValueError on a malformed document."""
    if not isinstance(doc, dict):
        raise ValueError("snapshot must be a JSON object")
    missing = [k for k in SNAPSHOT_KEYS if k not in doc]
    if missing:
        raise ValueError(f"snapshot lacks {', '.join(missing)}")
    s = ExecutionState.from_pairs(
        D=[(n, timeout_from_json(t)) for n, t in doc["delayed"]],
        A=[(n, timeout_from_json(t)) for n, t in doc["active"]],
        F=doc["fired"],
        E=[TraceEntry.from_json(e) for e in doc["trace"]],
    )
    if not partition_check(s):
        raise ValueError("snapshot state does not partition the nodes")
    return s, dict(doc["counters"]), doc.get("now_ms"), int(doc["rounds"])


def save_snapshot(path: Union[str, Path], s: ExecutionState, counters=None, now=None, rounds=0,
                  environment: Optional[dict] = None) -> None:
    text = json.dumps(snapshot_to_dict(s, counters, now, rounds, environment), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_snapshot(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_snapshot(path: Union[str, Path]):
    return snapshot_from_dict(read_snapshot(path))
