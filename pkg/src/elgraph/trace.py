"""Proof-of-attack trace: fired watchpoint nodes with the evidence that fired them."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Optional


class CauseKind(str, Enum):
    TOP = "TOP"
    LOGIC_SATISFIED = "LOGIC_SATISFIED"
    ALERT = "ALERT"


class DispatchStatus(str, Enum):
    DISPATCHED = "DISPATCHED"
    FAILED = "FAILED"


@dataclass(frozen=True)
class Cause:
    kind: CauseKind
    atom: Optional[str] = None
    payload: Optional[str] = None

    def to_json(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is CauseKind.ALERT:
            d["atom"] = self.atom
            d["payload"] = self.payload
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Cause":
        return cls(CauseKind(d["kind"]), d.get("atom"), d.get("payload"))


CAUSE_TOP = Cause(CauseKind.TOP)
CAUSE_LOGIC = Cause(CauseKind.LOGIC_SATISFIED)


@dataclass(frozen=True)
class TraceEntry:
    node: str
    fired_at: int
    cause: Cause
    effect_command: Optional[str] = None
    dispatch_status: Optional[DispatchStatus] = None

    def to_json(self) -> dict:
        d = {"node": self.node, "fired_at_ms": self.fired_at, "cause": self.cause.to_json()}
        if self.effect_command is not None:
            d["effect_command"] = self.effect_command
        if self.dispatch_status is not None:
            d["dispatch_status"] = self.dispatch_status.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TraceEntry":
        status = d.get("dispatch_status")
        return cls(
            node=d["node"],
            fired_at=d["fired_at_ms"],
            cause=Cause.from_json(d["cause"]),
            effect_command=d.get("effect_command"),
            dispatch_status=None if status is None else DispatchStatus(status),
        )

    @property
    def evidence(self) -> str:
        if self.cause.kind is CauseKind.ALERT:
            return f"{self.cause.atom}[{self.cause.payload or ''}]"
        return self.cause.kind.value


def append(trace: list, entry: TraceEntry) -> None:
    trace.append(entry)


def to_jsonl(trace: Iterable[TraceEntry]) -> str:
    return "".join(json.dumps(e.to_json(), ensure_ascii=False) + "\n" for e in trace)


def from_jsonl(text: str) -> list[TraceEntry]:
    return [TraceEntry.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def to_summary(trace: Iterable[TraceEntry]) -> str:
    """One line per entry: time, then ``"node": "evidence"``."""
    lines = []
    for e in trace:
        line = f"{e.fired_at:>10}  {json.dumps(e.node, ensure_ascii=False)}: {json.dumps(e.evidence, ensure_ascii=False)}"
        if e.effect_command is not None:
            line += f"  -> {e.dispatch_status.value if e.dispatch_status else '?'}: {e.effect_command}"
        lines.append(line)
    return "".join(line + "\n" for line in lines)


def emit(trace: Iterable[TraceEntry], fmt: str = "jsonl", sink: Optional[IO[bytes]] = None) -> bytes:
    """Render the trace as JSONL or SUMMARY bytes, writing them to ``sink`` if given."""
    fmt = fmt.lower()
    if fmt == "jsonl":
        data = to_jsonl(trace).encode("utf-8")
    elif fmt == "summary":
        data = to_summary(trace).encode("utf-8")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    if sink is not None:
        sink.write(data)
        sink.flush()
    return data
