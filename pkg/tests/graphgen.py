"""Random valid EL graphs and scenarios for property and acceptance tests.

Graphs are grown in topological order from one entry node.  Each step adds
a plain watchpoint node, a logic node over earlier nodes, or a complete
loop gadget (entrance -> body chain -> loop count -> exit, optionally with a
break node), so every generated graph passes ``validate`` and is already in
collapsed form.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from elgraph.environment import Alert, Reaction, Scenario
from elgraph.graph_model import INFINITE, Graph, Op, activation, eval_expr, guarded_effect, logic, loop_count, loop_exit

ATOMS = ("a", "b", "c", "d")


@dataclass
class GenOptions:
    min_nodes: int = 3
    max_nodes: int = 40
    loops: bool = True
    infinite_loops: bool = True
    timeouts: bool = True
    delays: bool = True
    logic: bool = True
    breaks: bool = True
    extra_entries: bool = True
    top_prob: float = 0.35


def _expr(rng: random.Random, leaves: list):
    if len(leaves) == 1:
        return leaves[0]
    op = rng.choice(("and", "or"))
    if len(leaves) > 2 and rng.random() < 0.5:
        cut = rng.randint(1, len(leaves) - 1)
        return Op(op, (_expr(rng, leaves[:cut]), _expr(rng, leaves[cut:])))
    return Op(op, tuple(leaves))


def random_graph(rng: random.Random, opts: GenOptions = GenOptions()) -> Graph:
    target = rng.randint(opts.min_nodes, opts.max_nodes)
    nodes = []
    edges = []
    avail: list[str] = []        # may be used as parents of later nodes
    logic_ids: set[str] = set()
    counter = [0]

    def fresh(prefix="n"):
        counter[0] += 1
        return f"{prefix}{counter[0]:02d}"

    def wp_node(nid, **flags):
        atom = None if rng.random() < opts.top_prob else rng.choice(ATOMS)
        kw = dict(flags)
        if opts.delays and rng.random() < 0.2:
            kw["delay"] = rng.randint(1, 30)
        if opts.timeouts and rng.random() < 0.2:
            kw["timeout"] = rng.randint(0, 60)
        if not flags and rng.random() < 0.5:
            effect = f"cmd-{nid}" if rng.random() < 0.8 else ""
            return guarded_effect(nid, atom, effect, **kw)
        return activation(nid, atom, **kw)

    entry = fresh()
    nodes.append(wp_node(entry, entry=True))
    avail.append(entry)

    while len(nodes) < target - 1:
        room = target - 1 - len(nodes)
        r = rng.random()
        if opts.loops and room >= 3 and r < 0.25:
            entrance = rng.choice(avail)
            k = rng.randint(1, min(3, room - 2))
            body = [fresh() for _ in range(k)]
            for b in body:
                nodes.append(wp_node(b))
            edges.append((entrance, body[0]))
            edges.extend(zip(body, body[1:]))
            lc, x = fresh("l"), fresh("x")
            count = -1 if opts.infinite_loops and rng.random() < 0.2 else rng.randint(1, 3)
            nodes += [loop_count(lc, count), loop_exit(x)]
            edges += [(body[-1], lc), (lc, body[0]), (lc, x)]
            if opts.breaks and (count == -1 or rng.random() < 0.3) and len(nodes) < target - 1:
                b = fresh("b")
                nodes.append(activation(b, rng.choice(ATOMS), is_break=True))
                edges += [(entrance, b), (b, x)]
            avail.append(x)
        elif opts.logic and r < 0.45 and len([a for a in avail if a not in logic_ids]) >= 2:
            cands = [a for a in avail if a not in logic_ids]
            ps = rng.sample(cands, rng.randint(2, min(3, len(cands))))
            nid = fresh("g")
            nodes.append(logic(nid, _expr(rng, ps)))
            edges += [(p, nid) for p in ps]
            logic_ids.add(nid)
            avail.append(nid)
        elif opts.extra_entries and r < 0.5:
            nid = fresh()
            nodes.append(wp_node(nid, entry=True))
            avail.append(nid)
        else:
            nid = fresh()
            nodes.append(wp_node(nid))
            for p in rng.sample(avail, min(len(avail), rng.choice((1, 1, 2)))):
                edges.append((p, nid))
            avail.append(nid)

    goal = fresh("z")
    nodes.append(wp_node(goal, goal=True))
    for p in rng.sample(avail, min(len(avail), rng.choice((1, 1, 2)))):
        edges.append((p, goal))
    return Graph(nodes, edges)


def graph_atoms(g: Graph) -> list[str]:
    return sorted({g.node(n).watchpoint.atom for n in g.watchpoint_nodes() if not g.node(n).watchpoint.is_top})


def random_schedule(rng: random.Random, g: Graph, n_alerts=None, horizon=200) -> list:
    """List of (time, Alert); mostly the graph's atoms, occasionally noise."""
    atoms = graph_atoms(g) or ["a"]
    n = rng.randint(0, 2 * len(g)) if n_alerts is None else n_alerts
    out = []
    for _ in range(n):
        atom = rng.choice(atoms) if rng.random() < 0.9 else "noise"
        at = rng.randint(0, horizon)
        out.append((at, Alert(atom, f"p{rng.randint(0, 9)}", at)))
    return out


def random_scenario(rng: random.Random, g: Graph, reactions=True, horizon=200) -> Scenario:
    scheduled = random_schedule(rng, g, horizon=horizon)
    rs = []
    if reactions:
        atoms = graph_atoms(g) or ["a"]
        effects = [g.eff(n) for n in g.watchpoint_nodes() if g.eff(n)]
        for eff in rng.sample(effects, min(len(effects), rng.randint(0, 4))):
            rs.append(Reaction(eff, rng.randint(0, 50), Alert(rng.choice(atoms), "r"), rng.random() < 0.3))
    return Scenario(scheduled, rs)


def all_timeouts_infinite(g: Graph) -> bool:
    return all(g.timeout(n) == INFINITE for n in g)


def respects_dependencies(g: Graph, trace) -> bool:
    """Every traced node has a satisfied parent set among the nodes traced before it.

    Logic and loop nodes do not appear in traces: a logic node counts as fired
    once its expression holds, a loop node once any of its parents has.
    """
    fired = set()

    def satisfied(p, seen=frozenset()):
        if p in seen:
            return False
        n = g.node(p)
        if n.expr is not None:
            return eval_expr(n.expr, {q for q in g.parents(p) if satisfied(q, seen | {p})})
        if not n.is_watchpoint_node:
            return any(satisfied(q, seen | {p}) for q in g.parents(p))
        return p in fired

    for e in trace:
        if not g.node(e.node).entry and not any(satisfied(p) for p in g.parents(e.node)):
            return False
        fired.add(e.node)
    return True
