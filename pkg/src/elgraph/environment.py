"""The world the engine talks to: a clock, an alert source and an effect executor.

Two implementations are provided.  ``SimulatedEnvironment`` replays a
scenario on a discrete-event clock and answers effects with scripted
reactions.  ``LiveEnvironment`` runs effect commands through a shell
transport and turns their output into alerts.  ``InteractiveSource`` wraps
either one and lets an operator inject alerts from a text stream.
"""
from __future__ import annotations

import heapq
import json
import queue
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Union

EXEC_RESP = "_EL_EXEC_RESP"
EXEC_FAIL = "_EL_EXEC_FAIL"


class EnvironmentFailure(RuntimeError):
    """The environment could not produce alerts or the time for a round."""


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Alert:
    atom: str
    payload: str = ""
    emitted_at: int = 0

    def __post_init__(self):
        if not isinstance(self.atom, str) or not self.atom:
            raise ValueError("alert atom must be a nonempty string")


@dataclass(frozen=True)
class Reaction:
    """When a dispatched effect command contains ``pattern``, emit ``alert`` after ``delay`` ms."""

    pattern: str
    delay: int
    alert: Alert
    repeatable: bool = False


@dataclass
class Scenario:
    scheduled: list = field(default_factory=list)
    reactions: list = field(default_factory=list)

    def __post_init__(self):
        for at, alert in self.scheduled:
            if not isinstance(at, int) or at < 0:
                raise ScenarioError(f"scheduled time must be a non-negative integer, got {at!r}")
        for r in self.reactions:
            if not isinstance(r.delay, int) or r.delay < 0:
                raise ScenarioError(f"reaction delay must be a non-negative integer, got {r.delay!r}")
        # stable: ties keep list order
        self.scheduled = sorted(self.scheduled, key=lambda p: p[0])

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be an object")
        try:
            scheduled = [
                (int(s["at_ms"]), Alert(s["atom"], s.get("payload", ""), int(s["at_ms"])))
                for s in doc.get("scheduled", [])
            ]
            reactions = [
                Reaction(r["pattern"], int(r.get("delay_ms", 0)), Alert(r["atom"], r.get("payload", "")),
                         bool(r.get("repeatable", False)))
                for r in doc.get("reactions", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        return cls(scheduled, reactions)

    def to_dict(self) -> dict:
        return {
            "scheduled": [{"at_ms": at, "atom": a.atom, "payload": a.payload} for at, a in self.scheduled],
            "reactions": [
                {"pattern": r.pattern, "delay_ms": r.delay, "atom": r.alert.atom,
                 "payload": r.alert.payload, "repeatable": r.repeatable}
                for r in self.reactions
            ],
        }


def load_scenario(path: Union[str, Path]) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    return Scenario.from_dict(doc)


class Environment:
    """Contract used by the engine.  Subclasses override what they support."""

    simulated = False

    def get_alerts(self) -> list:
        raise NotImplementedError

    def get_time(self) -> int:
        raise NotImplementedError

    def execute(self, effect: str, node: str) -> Optional[bool]:
        """Hand ``effect`` off for execution.  None = nothing dispatched, else success of the hand-off."""
        raise NotImplementedError

    def next_event_time(self) -> Optional[int]:
        return None

    def advance_to(self, t: int) -> None:
        raise NotImplementedError("only simulated environments can be advanced")

    def idle(self) -> bool:
        """Called when a simulation has nothing left to do.  True if new alerts became available."""
        return False

    def save_state(self) -> Optional[dict]:
        """JSON-ready internal state needed to resume, or None if there is none."""
        return None

    def load_state(self, doc: dict) -> None:
        pass

    def close(self) -> None:
        pass


class SimulatedEnvironment(Environment):
    """Discrete-event world driven by a :class:`Scenario`."""

    simulated = True

    def __init__(self, scenario: Scenario, start: int = 0, skip_until: Optional[int] = None):
        self.now = start
        self._seq = 0
        self._pending: list = []
        self._reactions = list(scenario.reactions)
        self._used: set[int] = set()
        self.delivered: list[Alert] = []
        self.dispatched: list[tuple[int, str, str]] = []
        self.reaction_firings = 0
        for at, alert in scenario.scheduled:
            if skip_until is not None and at <= skip_until:
                continue
            self._push(at, alert)

    def _push(self, at: int, alert: Alert) -> None:
        heapq.heappush(self._pending, (at, self._seq, Alert(alert.atom, alert.payload, at)))
        self._seq += 1

    def get_alerts(self) -> list:
        out = []
        while self._pending and self._pending[0][0] <= self.now:
            out.append(heapq.heappop(self._pending)[2])
        self.delivered.extend(out)
        return out

    def get_time(self) -> int:
        return self.now

    def execute(self, effect: str, node: str) -> Optional[bool]:
        if not effect:
            return None
        self.dispatched.append((self.now, node, effect))
        for i, r in enumerate(self._reactions):
            if r.pattern in effect and (r.repeatable or i not in self._used):
                self._used.add(i)
                self.reaction_firings += 1
                self._push(self.now + r.delay, r.alert)
        return True

    def next_event_time(self) -> Optional[int]:
        return self._pending[0][0] if self._pending else None

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise ValueError(f"cannot move the clock back from {self.now} to {t}")
        self.now = t

    def save_state(self) -> dict:
        return {
            "pending": [[at, a.atom, a.payload] for at, _, a in sorted(self._pending)],
            "used_reactions": sorted(self._used),
        }

    def load_state(self, doc: dict) -> None:
        """Replace queued alerts and spent reactions with a saved state."""
        self._pending = []
        self._seq = 0
        for at, atom, payload in doc["pending"]:
            self._push(int(at), Alert(atom, payload))
        self._used = {int(i) for i in doc["used_reactions"]}


def simulated_environment(scn: Scenario) -> SimulatedEnvironment:
    return SimulatedEnvironment(scn)


# live execution


@dataclass
class LiveConfig:
    transport: str = "local"
    host: Optional[str] = None
    port: int = 22
    user: Optional[str] = None
    identity_file: Optional[str] = None
    command_timeout_s: float = 60.0
    ssh_options: list = field(default_factory=lambda: ["-o", "BatchMode=yes", "-o", "ConnectTimeout=5"])

    def __post_init__(self):
        if self.transport not in ("local", "ssh"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.transport == "ssh" and not self.host:
            raise ValueError("ssh transport needs a host")

    @classmethod
    def from_dict(cls, doc: dict) -> "LiveConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown live config fields {sorted(unknown)}")
        return cls(**doc)


def load_live_config(path: Union[str, Path]) -> LiveConfig:
    return LiveConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def format_payload(command: str, stdout: str, stderr: str) -> str:
    return f"command={command};stdout={stdout};stderr={stderr}"


class LiveEnvironment(Environment):
    """Runs effects through a shell transport; each completion becomes an alert."""

    def __init__(self, cfg: LiveConfig, max_workers: int = 4):
        self.cfg = cfg
        self._t0 = time.monotonic()
        self._alerts: "queue.Queue[Alert]" = queue.Queue()
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="el-effect")
        self._futures: list = []
        self._lock = threading.Lock()

    def get_time(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def get_alerts(self) -> list:
        out = []
        while True:
            try:
                out.append(self._alerts.get_nowait())
            except queue.Empty:
                return out

    def push(self, alert: Alert) -> None:
        """Enqueue an alert from any thread."""
        self._alerts.put(alert)

    def argv(self, command: str) -> list:
        if self.cfg.transport == "local":
            return ["/bin/sh", "-c", command]
        target = f"{self.cfg.user}@{self.cfg.host}" if self.cfg.user else self.cfg.host
        args = ["ssh", "-p", str(self.cfg.port), *self.cfg.ssh_options]
        if self.cfg.identity_file:
            args += ["-i", self.cfg.identity_file]
        return args + [target, "--", command]

    def _run(self, command: str, node: str) -> None:
        try:
            proc = subprocess.run(self.argv(command), capture_output=True, text=True,
                                  timeout=self.cfg.command_timeout_s)
        except subprocess.TimeoutExpired:
            self.push(Alert(EXEC_FAIL, format_payload(command, "", "timed out"), self.get_time()))
            return
        except OSError as exc:
            self.push(Alert(EXEC_FAIL, format_payload(command, "", f"transport error: {exc}"), self.get_time()))
            return
        # ssh reserves 255 for its own connection failures
        if self.cfg.transport == "ssh" and proc.returncode == 255:
            self.push(Alert(EXEC_FAIL, format_payload(command, proc.stdout, proc.stderr), self.get_time()))
            return
        self.push(Alert(EXEC_RESP, format_payload(command, proc.stdout, proc.stderr), self.get_time()))

    def execute(self, effect: str, node: str) -> Optional[bool]:
        if not effect:
            return None
        try:
            fut = self._pool.submit(self._run, effect, node)
        except RuntimeError:
            return False
        with self._lock:
            self._futures.append(fut)
        return True

    def wait_idle(self, timeout: Optional[float] = None) -> None:
        """Block until every dispatched effect has produced its alert."""
        with self._lock:
            futs = list(self._futures)
        for f in futs:
            f.result(timeout=timeout)

    def close(self) -> None:
        self._pool.shutdown(wait=True)


def live_environment(cfg: LiveConfig) -> LiveEnvironment:
    return LiveEnvironment(cfg)


class InteractiveSource(Environment):
    """Operator input decorator: every nonblank input line becomes an alert.

    With ``threaded=True`` a reader thread feeds lines as they arrive (live
    runs).  Otherwise a line is read only when the wrapped simulation has
    run out of events, so the run pauses until the operator answers.
    """

    def __init__(self, inner: Environment, stream: IO[str], threaded: Optional[bool] = None):
        self.inner = inner
        self.simulated = inner.simulated
        self.stream = stream
        self.threaded = (not inner.simulated) if threaded is None else threaded
        self.closed = False
        self._lines: "queue.Queue[str]" = queue.Queue()
        if self.threaded:
            threading.Thread(target=self._reader, name="el-operator", daemon=True).start()

    def _reader(self) -> None:
        for line in self.stream:
            line = line.strip()
            if line:
                self._lines.put(line)
        self.closed = True

    def _operator_alerts(self) -> list:
        out = []
        while True:
            try:
                line = self._lines.get_nowait()
            except queue.Empty:
                return out
            out.append(Alert(line, "operator", self.inner.get_time()))

    def get_alerts(self) -> list:
        return self.inner.get_alerts() + self._operator_alerts()

    def get_time(self) -> int:
        return self.inner.get_time()

    def execute(self, effect: str, node: str) -> Optional[bool]:
        return self.inner.execute(effect, node)

    def next_event_time(self) -> Optional[int]:
        return self.inner.next_event_time()

    def advance_to(self, t: int) -> None:
        self.inner.advance_to(t)

    def save_state(self) -> Optional[dict]:
        return self.inner.save_state()

    def load_state(self, doc: dict) -> None:
        self.inner.load_state(doc)

    def idle(self) -> bool:
        if self.inner.idle():
            return True
        if self.threaded or self.closed:
            return not self._lines.empty()
        while True:
            try:
                line = self.stream.readline()
            except (OSError, ValueError):
                line = ""
            if not line:
                self.closed = True
                return False
            line = line.strip()
            if line:
                self._lines.put(line)
                return True

    def close(self) -> None:
        self.inner.close()


def interactive_source(inner: Environment, stream: IO[str], threaded: Optional[bool] = None) -> InteractiveSource:
    return InteractiveSource(inner, stream, threaded)
