"""Graph file format (JSON) and Graphviz DOT export."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Union

from .graph_model import (
    INFINITE,
    Graph,
    GraphError,
    Node,
    NodeKind,
    Watchpoint,
    expr_from_json,
    expr_str,
    expr_to_json,
)

_NODE_KEYS = {
    "id", "type", "watchpoint", "effect", "delay_ms", "timeout_ms",
    "entry", "goal", "break", "logic_expr", "loop_count",
}


def timeout_to_json(t):
    return "inf" if t == INFINITE else int(t)


def timeout_from_json(v):
    if v is None or v == "inf":
        return INFINITE
    if isinstance(v, bool) or not isinstance(v, int):
        raise GraphError(f"timeout must be an integer or \"inf\", got {v!r}")
    return v


def node_from_dict(d: dict) -> Node:
    if not isinstance(d, dict):
        raise GraphError(f"node entry must be an object, got {d!r}")
    unknown = set(d) - _NODE_KEYS
    if unknown:
        raise GraphError(f"node {d.get('id')!r}: unknown fields {sorted(unknown)}")
    try:
        kind = NodeKind(d.get("type"))
    except ValueError:
        raise GraphError(f"node {d.get('id')!r}: unknown type {d.get('type')!r}") from None
    expr = d.get("logic_expr")
    return Node(
        id=d.get("id"),
        kind=kind,
        watchpoint=Watchpoint(d.get("watchpoint")),
        effect=d.get("effect", "") or "",
        delay=d.get("delay_ms", 0),
        timeout=timeout_from_json(d.get("timeout_ms")),
        entry=bool(d.get("entry", False)),
        goal=bool(d.get("goal", False)),
        is_break=bool(d.get("break", False)),
        expr=None if expr is None else expr_from_json(expr),
        loop_count=d.get("loop_count"),
    )


def node_to_dict(n: Node) -> dict:
    d: dict[str, Any] = {"id": n.id, "type": n.kind.value}
    if n.is_watchpoint_node:
        if n.watchpoint.atom is not None:
            d["watchpoint"] = n.watchpoint.atom
        if n.effect:
            d["effect"] = n.effect
        if n.delay:
            d["delay_ms"] = n.delay
        if n.timeout != INFINITE:
            d["timeout_ms"] = n.timeout
    for key, flag in (("entry", n.entry), ("goal", n.goal), ("break", n.is_break)):
        if flag:
            d[key] = True
    if n.expr is not None:
        d["logic_expr"] = expr_to_json(n.expr)
    if n.loop_count is not None:
        d["loop_count"] = n.loop_count
    return d


def graph_from_dict(doc: dict) -> Graph:
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise GraphError("graph document must be an object with a 'nodes' list")
    edges = doc.get("edges", [])
    if not isinstance(doc["nodes"], list) or not isinstance(edges, list):
        raise GraphError("'nodes' and 'edges' must be lists")
    for e in edges:
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, str) for x in e)):
            raise GraphError(f"edge must be a [parent, child] pair, got {e!r}")
    return Graph([node_from_dict(d) for d in doc["nodes"]], [tuple(e) for e in edges])


def graph_to_dict(g: Graph) -> dict:
    return {
        "nodes": [node_to_dict(n) for n in g.nodes.values()],
        "edges": [list(e) for e in sorted(g.edges)],
    }


def loads_graph(text: str) -> Graph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"not valid JSON: {exc}") from exc
    return graph_from_dict(doc)


def dumps_graph(g: Graph) -> str:
    return json.dumps(graph_to_dict(g), indent=2, ensure_ascii=False) + "\n"


def load_graph(path: Union[str, Path]) -> Graph:
    return loads_graph(Path(path).read_text(encoding="utf-8"))


def save_graph(g: Graph, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_graph(g), encoding="utf-8")


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def to_dot(g: Graph, name: str = "el") -> str:
    """Deterministic DOT text.

    house = entry, octagon = goal, box = logic / loop count, oval = loop exit,
    rounded box = other watchpoint nodes.  Loop-back edges end in a dot.
    """
    lines = [f"digraph {_q(name)} {{", "  rankdir=TB;"]
    for n in g.nodes.values():
        attrs: dict[str, str] = {}
        if n.kind is NodeKind.LOGIC:
            attrs.update(shape="box", color="orange", label=f"{n.id}: {expr_str(n.expr)}")
        elif n.kind is NodeKind.LOOP_COUNT:
            attrs.update(shape="box", label=f"{n.id} count={n.loop_count}")
        elif n.kind is NodeKind.LOOP_EXIT:
            attrs.update(shape="oval")
        elif n.entry:
            attrs.update(shape="house")
        elif n.goal:
            attrs.update(shape="octagon")
        else:
            attrs.update(shape="box", style="rounded")
            if n.is_break:
                attrs["style"] = "rounded,dashed"
        if n.is_watchpoint_node:
            attrs["tooltip"] = str(n.watchpoint)
        body = ", ".join(f"{k}={_q(v)}" for k, v in attrs.items())
        lines.append(f"  {_q(n.id)} [{body}];")
    back = g.loop_edges()
    for p, c in sorted(g.edges):
        suffix = " [arrowhead=dot, style=bold]" if (p, c) in back else ""
        lines.append(f"  {_q(p)} -> {_q(c)}{suffix};")
    lines.append("}")
    return "\n".join(lines) + "\n"
