from pathlib import Path

import pytest

from elgraph.graph_model import Graph, activation, guarded_effect, loop_count, loop_exit

DATA = Path(__file__).resolve().parent.parent / "src" / "elgraph" / "data"
WS_GRAPH = DATA / "ws78.el.json"
WS_SCENARIO = DATA / "ws78.scn.json"


def simple_loop(count=2, body=("a1", "a2"), brk=None, atoms=None, entry_atom=None):
    """s -> body... -> l -> x -> goal, with l -> body[0] looping back."""
    atoms = atoms or {}
    nodes = [activation("s", entry_atom, entry=True)]
    nodes += [activation(b, atoms.get(b)) for b in body]
    nodes += [loop_count("l", count), loop_exit("x"), activation("goal", goal=True)]
    edges = [("s", body[0]), *zip(body, body[1:]), (body[-1], "l"), ("l", body[0]), ("l", "x"), ("x", "goal")]
    if brk is not None:
        nodes.append(activation("brk", brk, is_break=True))
        edges += [("s", "brk"), ("brk", "x")]
    return Graph(nodes, edges)


@pytest.fixture
def loop_graph():
    return simple_loop()


@pytest.fixture
def chain():
    return Graph(
        [activation("e", entry=True), guarded_effect("g1", "x", "do it"), activation("z", goal=True)],
        [("e", "g1"), ("g1", "z")],
    )


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
