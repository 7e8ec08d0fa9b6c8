import json
import logging

import pytest

from elgraph.engine import Engine, EngineConfig, RunStatus, run
from elgraph.environment import Alert, Reaction, Scenario, SimulatedEnvironment
from elgraph.graph_model import INFINITE, And, Graph, GraphError, Or, activation, guarded_effect, logic, loop_count, loop_exit
from elgraph.trace import CauseKind, DispatchStatus

from conftest import simple_loop


def sim(*scheduled, reactions=()):
    return SimulatedEnvironment(Scenario([(t, Alert(a, p)) for t, a, p in scheduled], list(reactions)))


def engine_for(g, env=None):
    e = Engine(g, env or sim())
    e.init()
    return e


def two_node():
    return Graph([activation("e", entry=True), activation("g", goal=True)], [("e", "g")])


# init

def test_init_two_entries():
    g = Graph([activation("a", entry=True), activation("b", entry=True, timeout=100), activation("z", goal=True)],
              [("a", "z"), ("b", "z")])
    e = engine_for(g)
    assert e.state.A == {("a", INFINITE), ("b", 100)}
    assert not e.state.delayed and not e.state.fired and e.state.trace == []


def test_init_refuses_invalid_or_uncollapsed():
    with pytest.raises(GraphError):
        Engine(Graph([activation("a")]), sim())
    g = Graph([activation("a", entry=True), activation("b", entry=True), logic("n1", Or("a", "b")),
               logic("n2", Or("n1")), activation("z", goal=True)],
              [("a", "n1"), ("b", "n1"), ("n1", "n2"), ("n2", "z")])
    with pytest.raises(GraphError):
        Engine(g, sim())


def test_init_sets_counters(loop_graph):
    assert engine_for(loop_graph).counters == {"l": 2}


# sub-steps

def test_activate_delays_boundary():
    e = engine_for(two_node())
    e.state.delayed["g"] = 10
    e.activate_delays(9)
    assert e.state.delayed == {"g": 10}
    e.activate_delays(10)
    assert e.state.active["g"] == INFINITE and "g" not in e.state.delayed


def test_activate_delays_only_elapsed():
    g = Graph([activation("s", entry=True), activation("p", timeout=5), activation("q"), activation("z", goal=True)],
              [("s", "p"), ("s", "q"), ("p", "z"), ("q", "z")])
    e = engine_for(g)
    e.state.delayed.update(p=3, q=30)
    e.activate_delays(4)
    assert e.state.active["p"] == 9
    assert e.state.delayed == {"q": 30}


def test_get_triggered_top_and_logic():
    g = Graph([activation("n1", entry=True), activation("n2", "b", entry=True), logic("o", Or("n1", "n2")),
               logic("a", And("n1", "n2")), activation("z", goal=True)],
              [("n1", "o"), ("n2", "o"), ("n1", "a"), ("n2", "a"), ("o", "z"), ("a", "z")])
    e = engine_for(g)
    assert e.get_triggered([]) == {"n1"}
    e.state.active.pop("n1")
    e.state.fired.add("n1")
    e.state.active.update(o=INFINITE, a=INFINITE)
    assert e.get_triggered([]) == {"o"}


def test_get_triggered_shared_watchpoint():
    g = Graph([activation("s", entry=True), activation("p", "a"), activation("q", "a"), activation("z", goal=True)],
              [("s", "p"), ("s", "q"), ("p", "z"), ("q", "z")])
    e = engine_for(g)
    e.state.active.clear()
    assert e.get_triggered([Alert("a")]) == set()
    e.state.active.update(p=INFINITE, q=INFINITE)
    assert e.get_triggered([Alert("a")]) == {"p", "q"}
    assert e.get_triggered([Alert("zzz")]) == set()


def test_get_triggered_uses_first_matching_alert_as_evidence():
    g = Graph([activation("s", "a", entry=True, goal=True)])
    e = engine_for(g)
    e.get_triggered([Alert("b", "x"), Alert("a", "first"), Alert("a", "second")])
    assert e._causes["s"].payload == "first"


def test_fire_triggered_delays_child():
    g = Graph([activation("p", entry=True), activation("c", delay=5), activation("z", goal=True)],
              [("p", "c"), ("c", "z")])
    e = engine_for(g)
    e.fire_triggered({"p"}, 100)
    assert e.state.delayed == {"c": 105}
    assert e.state.fired == {"p"}
    assert [t.node for t in e.state.trace] == ["p"]


def test_fire_triggered_skips_fired_child():
    g = Graph([activation("p", entry=True), activation("q", entry=True), activation("c"), activation("z", goal=True)],
              [("p", "c"), ("q", "c"), ("c", "z")])
    e = engine_for(g)
    e.state.fired.add("c")
    e.fire_triggered({"p"}, 0)
    assert "c" not in e.state.active and "c" in e.state.fired


def test_fire_triggered_logic_has_no_trace_or_effect():
    g = Graph([activation("p", entry=True), logic("n", Or("p")), activation("z", goal=True)],
              [("p", "n"), ("n", "z")])
    env = sim()
    e = engine_for(g, env)
    e.state.active["n"] = INFINITE
    e.fire_triggered({"n"}, 0)
    assert "n" in e.state.fired and e.state.trace == [] and env.dispatched == []


def test_fire_loop_counts_zero_activates_exit(loop_graph):
    e = engine_for(loop_graph)
    e.counters["l"] = 0
    e.state.active.clear()
    e.state.fired.update({"s", "a1", "a2"})
    e.state.active["l"] = INFINITE
    e.fire_loop_counts(7)
    assert e.state.active == {"x": INFINITE}
    assert "l" in e.state.fired
    assert e.state.fired == {"s", "l"}


def test_fire_loop_counts_decrements():
    g = simple_loop(count=4)
    e = engine_for(g)
    e.state.active.clear()
    e.state.fired.update({"s", "a1", "a2"})
    e.state.active["l"] = INFINITE
    e.fire_loop_counts(3)
    assert e.counters["l"] == 3
    assert e.state.active == {"a1": INFINITE}
    assert "l" not in e.state.fired and "a2" not in e.state.fired


def test_fire_loop_counts_infinite_stays():
    e = engine_for(simple_loop(count=-1))
    e.state.active["l"] = INFINITE
    e.fire_loop_counts(0)
    assert e.counters["l"] == -1 and "a1" in e.state.active


def test_fire_loop_counts_delayed_first_node_uses_timeout_for_expiry():

    g = Graph([activation("s", entry=True), activation("a", delay=4, timeout=10), loop_count("l", 2),
               loop_exit("x"), activation("z", goal=True)],
              [("s", "a"), ("a", "l"), ("l", "a"), ("l", "x"), ("x", "z")])
    e = engine_for(g)
    e.state.active["l"] = INFINITE
    e.fire_loop_counts(20)
    assert e.state.delayed == {"a": 24}
    e.activate_delays(24)
    assert e.state.active["a"] == 34


def test_fire_loop_exits_resets_break_path():
    g = simple_loop(brk="stop")
    e = engine_for(g)
    # mid-iteration: a1 fired, a2 active, break fired, exit now active
    e.state.active.clear()
    e.state.fired.update({"s", "a1", "brk"})
    e.state.active.update(a2=INFINITE, x=INFINITE)
    e.fire_loop_exits(5)
    assert e.state.fired == {"s", "x"}
    assert e.state.active == {"goal": INFINITE}
    assert e.state.trace == []


def test_fire_loop_exits_noop():
    e = engine_for(two_node())
    before = e.state.copy()
    e.fire_loop_exits(0)
    assert e.state == before


def test_garbage_collection():
    e = engine_for(two_node())
    e.state.active.update(g=50)
    e.garbage_collection(49)
    assert "g" in e.state.active
    e.garbage_collection(50)
    assert "g" not in e.state.active and "e" in e.state.active


# rounds and runs

def test_two_node_graph_done_after_two_rounds():
    e = engine_for(two_node())
    r1 = e.step()
    assert r1.fired == ("e",) and not r1.done
    r2 = e.step()
    assert r2.done and r2.fired == ("g",)
    assert e.rounds == 2


def test_quiescent_round_changes_nothing():
    g = Graph([activation("e", "never", entry=True), activation("g", goal=True)], [("e", "g")])
    e = engine_for(g)
    before = e.state.copy()
    rep = e.step()
    assert not rep.changed and e.state == before


def test_step_after_done_raises():
    e = engine_for(two_node())
    e.run()
    with pytest.raises(RuntimeError):
        e.step()


def test_atom_entry_with_empty_scenario_is_quiescent():
    g = Graph([activation("e", "GO", entry=True), activation("g", goal=True)], [("e", "g")])
    res = run(g, sim(), max_rounds=10)
    assert res.status is RunStatus.QUIESCENT and res.exit_code == 2
    assert res.trace == []
    assert "GO" in res.diagnostic


def test_round_limit():
    res = run(simple_loop(count=-1), sim(), max_rounds=10)
    assert res.status is RunStatus.ROUND_LIMIT and res.exit_code == 3 and res.rounds == 10


def test_time_limit():
    g = Graph([activation("e", entry=True), activation("g", "late", goal=True)], [("e", "g")])
    res = run(g, sim((5000, "late", "")), max_time=1000)
    assert res.status is RunStatus.ROUND_LIMIT


def test_unsatisfiable_watchpoint_quiescent():
    g = Graph([activation("e", entry=True), activation("m", "impossible"), activation("g", goal=True)],
              [("e", "m"), ("m", "g")])
    res = run(g, sim((0, "other", "")))
    assert res.status is RunStatus.QUIESCENT
    assert [t.node for t in res.trace] == ["e"]


def test_goal_and_others_fire_in_same_round():
    g = Graph([activation("e", entry=True), activation("g", goal=True), activation("side")],
              [("e", "g"), ("e", "side")])
    res = run(g, sim())
    assert res.status is RunStatus.DONE
    assert [t.node for t in res.trace] == ["e", "g", "side"]


def test_loop_trace_counts():
    res = run(simple_loop(count=2), sim())
    nodes = [t.node for t in res.trace]
    assert nodes.count("a1") == 3 and nodes.count("a2") == 3
    assert "l" not in nodes and "x" not in nodes


def test_loop_count_four_fires_body_five_times():
    nodes = [t.node for t in run(simple_loop(count=4, body=("a1",)), sim()).trace]
    assert nodes.count("a1") == 5


def test_alert_evidence_in_trace():
    g = Graph([activation("e", "boot", entry=True), activation("g", goal=True)], [("e", "g")])
    res = run(g, sim((0, "boot", "payload!")))
    assert res.trace[0].cause.kind is CauseKind.ALERT
    assert res.trace[0].cause.payload == "payload!"


def test_reaction_drives_progress_across_minutes():
    g = Graph([guarded_effect("e", None, "vssadmin.exe create shadow /for=C:", entry=False),
               activation("s", entry=True),
               activation("g", "shadow-ok", goal=True)],
              [("s", "e"), ("e", "g")])
    env = sim(reactions=[Reaction("vssadmin.exe create shadow", 180_000, Alert("shadow-ok", "done"))])
    res = run(g, env)
    assert res.status is RunStatus.DONE
    assert res.time == 180_000
    assert res.trace[1].dispatch_status is DispatchStatus.DISPATCHED


class _Broken(SimulatedEnvironment):
    def __init__(self, fail_execute=False, fail_alerts=False):
        super().__init__(Scenario())
        self.fail_execute, self.fail_alerts = fail_execute, fail_alerts

    def execute(self, effect, node):
        if self.fail_execute:
            raise OSError("no route")
        return super().execute(effect, node)

    def get_alerts(self):
        if self.fail_alerts:
            raise OSError("feed down")
        return super().get_alerts()


def test_dispatch_failure_recorded_not_fatal():
    g = Graph([activation("s", entry=True), guarded_effect("e", None, "boom"), activation("g", goal=True)],
              [("s", "e"), ("s", "g")])
    res = run(g, _Broken(fail_execute=True))
    assert res.status is RunStatus.DONE
    assert [t.dispatch_status for t in res.trace if t.node == "e"] == [DispatchStatus.FAILED]


def test_environment_failure_aborts_round():
    res = run(two_node(), _Broken(fail_alerts=True))
    assert res.status is RunStatus.ENVIRONMENT_ERROR and res.exit_code == 5
    assert res.state.active == {"e": INFINITE}


def test_instrumentation_log(caplog):
    with caplog.at_level(logging.INFO, logger="elgraph.instrument"):
        Engine(two_node(), sim(), EngineConfig(instrument=True)).run()
    recs = [json.loads(r.getMessage()) for r in caplog.records if r.name == "elgraph.instrument"]
    assert recs[0]["substep"] == "init"
    assert {r["substep"] for r in recs[1:]} == {"activate_delays", "get_triggered", "fire_triggered",
                                                 "fire_loop_counts", "fire_loop_exits", "garbage_collection"}
    assert all(r["partition"] for r in recs)
    assert all(len(r["measure"]) == 3 for r in recs)


def test_measure_values(loop_graph):
    e = engine_for(loop_graph)
    # one forward path s, a1, a2, l, x, goal: six nodes
    assert e.measure() == (2, 6, 0)
    e.step()
    assert e.measure() == (2, 5, 0)
    assert engine_for(simple_loop(count=-1)).measure()[0] is None


def test_restore_continues(loop_graph):
    e = engine_for(loop_graph)
    e.step()
    saved = (e.state.copy(), dict(e.counters), e.rounds)
    e2 = Engine(loop_graph, sim())
    e2.restore(*saved)
    res = e2.run()
    full = run(loop_graph, sim())
    assert [t.node for t in res.trace] == [t.node for t in full.trace]


class _IdleOnce(SimulatedEnvironment):
    def __init__(self):
        super().__init__(Scenario())
        self.calls = 0

    def idle(self):
        self.calls += 1
        if self.calls == 1:
            self._push(self.now, Alert("GO"))
            return True
        return False


def test_idle_hook_can_supply_alerts():
    g = Graph([activation("e", "GO", entry=True), activation("g", goal=True)], [("e", "g")])
    env = _IdleOnce()
    assert run(g, env).status is RunStatus.DONE and env.calls == 1
