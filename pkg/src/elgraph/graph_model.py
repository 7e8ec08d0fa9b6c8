"""Typed EL attack graphs: node labels, structural validation, collapse and
loop metadata.

A graph is immutable once built.  All iteration over node sets happens in
ascending node-id order so that everything downstream is reproducible.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Union

INFINITE = math.inf


class GraphError(ValueError):
    """The input is not a well-formed graph (bad ids, edges or labels)."""


class CollapseError(GraphError):
    pass


class NodeKind(str, Enum):
    ACTIVATION = "activation"
    GUARDED_EFFECT = "guarded_effect"
    LOGIC = "logic"
    LOOP_COUNT = "loop_count"
    LOOP_EXIT = "loop_exit"


WATCHPOINT_KINDS = (NodeKind.ACTIVATION, NodeKind.GUARDED_EFFECT)


@dataclass(frozen=True)
class Watchpoint:
    """Opaque watchpoint atom.  ``atom is None`` is the always-true watchpoint."""

    atom: Optional[str] = None

    @property
    def is_top(self) -> bool:
        return self.atom is None

    def matches(self, alert_atom: str) -> bool:
        return self.atom is not None and self.atom == alert_atom

    def __str__(self) -> str:
        return "TOP" if self.atom is None else self.atom


TOP = Watchpoint()


# Boolean expressions over parent ids: a leaf is a node id, an inner node an
# Op with "and"/"or" and at least one argument.
@dataclass(frozen=True)
class Op:
    op: str
    args: tuple

    def __post_init__(self):
        if self.op not in ("and", "or"):
            raise GraphError(f"unknown boolean operator {self.op!r}")
        if not self.args:
            raise GraphError("boolean operator with no operands")


Expr = Union[str, Op]


def And(*args: Expr) -> Op:
    return Op("and", tuple(args))


def Or(*args: Expr) -> Op:
    return Op("or", tuple(args))


def expr_leaves(expr: Expr) -> set[str]:
    if isinstance(expr, str):
        return {expr}
    out: set[str] = set()
    for a in expr.args:
        out |= expr_leaves(a)
    return out


def eval_expr(expr: Expr, fired) -> bool:
    """Evaluate with every leaf in ``fired`` true and every other leaf false."""
    if isinstance(expr, str):
        return expr in fired
    if expr.op == "and":
        return all(eval_expr(a, fired) for a in expr.args)
    return any(eval_expr(a, fired) for a in expr.args)


def substitute(expr: Expr, leaf: str, repl: Expr) -> Expr:
    if isinstance(expr, str):
        return repl if expr == leaf else expr
    return Op(expr.op, tuple(substitute(a, leaf, repl) for a in expr.args))


def flatten(expr: Expr) -> Expr:
    """Merge directly nested operators of the same kind: or(or(a,b),c) -> or(a,b,c)."""
    if isinstance(expr, str):
        return expr
    args: list[Expr] = []
    for a in expr.args:
        a = flatten(a)
        if isinstance(a, Op) and a.op == expr.op:
            args.extend(a.args)
        else:
            args.append(a)
    return Op(expr.op, tuple(args))


def expr_to_json(expr: Expr):
    if isinstance(expr, str):
        return expr
    return [expr.op, *(expr_to_json(a) for a in expr.args)]


def expr_from_json(obj) -> Expr:
    if isinstance(obj, str):
        if not obj:
            raise GraphError("empty leaf in logic expression")
        return obj
    if isinstance(obj, list) and obj and obj[0] in ("and", "or"):
        return Op(obj[0], tuple(expr_from_json(a) for a in obj[1:]))
    raise GraphError(f"malformed logic expression: {obj!r}")


def expr_str(expr: Expr) -> str:
    if isinstance(expr, str):
        return expr
    sep = " & " if expr.op == "and" else " | "
    return "(" + sep.join(expr_str(a) for a in expr.args) + ")"


@dataclass(frozen=True)
class Node:
    """One labelled node.  Which fields are meaningful depends on ``kind``."""

    id: str
    kind: NodeKind
    watchpoint: Watchpoint = TOP
    effect: str = ""
    delay: int = 0
    timeout: float = INFINITE
    entry: bool = False
    goal: bool = False
    is_break: bool = False
    expr: Optional[Expr] = None
    loop_count: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise GraphError(f"node id must be a nonempty string, got {self.id!r}")
        kind = NodeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (self.entry or self.goal or self.is_break) and kind is not NodeKind.ACTIVATION:
            raise GraphError(f"{self.id}: entry/goal/break flags are only allowed on activation nodes")
        if kind not in WATCHPOINT_KINDS:
            if self.delay or self.timeout != INFINITE or self.effect or not self.watchpoint.is_top:
                raise GraphError(f"{self.id}: {kind.value} node cannot carry watchpoint, effect, delay or timeout")
        if kind is NodeKind.ACTIVATION and self.effect:
            raise GraphError(f"{self.id}: activation nodes have no effect")
        if not isinstance(self.delay, int) or self.delay < 0:
            raise GraphError(f"{self.id}: delay must be a non-negative integer")
        if self.timeout != INFINITE and (not isinstance(self.timeout, int) or self.timeout < 0):
            raise GraphError(f"{self.id}: timeout must be a non-negative integer or infinite")
        if kind is NodeKind.LOGIC:
            if self.expr is None:
                raise GraphError(f"{self.id}: logic node needs an expression")
        elif self.expr is not None:
            raise GraphError(f"{self.id}: only logic nodes carry an expression")
        if kind is NodeKind.LOOP_COUNT:
            if not isinstance(self.loop_count, int) or isinstance(self.loop_count, bool) or not (
                self.loop_count >= 1 or self.loop_count == -1
            ):
                raise GraphError(f"{self.id}: loop count must be positive or -1, got {self.loop_count!r}")
        elif self.loop_count is not None:
            raise GraphError(f"{self.id}: only loop count nodes carry a count")

    @property
    def is_watchpoint_node(self) -> bool:
        return self.kind in WATCHPOINT_KINDS


def activation(id: str, atom: Optional[str] = None, **kw) -> Node:
    return Node(id, NodeKind.ACTIVATION, watchpoint=Watchpoint(atom), **kw)


def guarded_effect(id: str, atom: Optional[str] = None, effect: str = "", **kw) -> Node:
    return Node(id, NodeKind.GUARDED_EFFECT, watchpoint=Watchpoint(atom), effect=effect, **kw)


def logic(id: str, expr: Expr) -> Node:
    return Node(id, NodeKind.LOGIC, expr=expr)


def loop_count(id: str, count: int) -> Node:
    return Node(id, NodeKind.LOOP_COUNT, loop_count=count)


def loop_exit(id: str) -> Node:
    return Node(id, NodeKind.LOOP_EXIT)


@dataclass(frozen=True)
class LoopInfo:
    loop_count: str
    first_node: str
    exit_node: str
    entrance: Optional[str]
    break_node: Optional[str]
    internal_nodes: frozenset
    exit_reset_nodes: frozenset

    @property
    def members(self) -> frozenset:
        """Every node owned by the loop, including exit and break."""
        extra = {self.loop_count, self.exit_node}
        if self.break_node is not None:
            extra.add(self.break_node)
        return self.internal_nodes | extra


class Graph:
    """Finite labelled directed graph ``(nodes, edges, labels)``."""

    def __init__(self, nodes: Iterable[Node], edges: Iterable[tuple[str, str]] = ()):
        table: dict[str, Node] = {}
        for n in nodes:
            if n.id in table:
                raise GraphError(f"duplicate node id {n.id!r}")
            table[n.id] = n
        self._nodes: dict[str, Node] = {k: table[k] for k in sorted(table)}
        seen: set[tuple[str, str]] = set()
        children: dict[str, list[str]] = {k: [] for k in self._nodes}
        parents: dict[str, list[str]] = {k: [] for k in self._nodes}
        for e in edges:
            p, c = tuple(e)
            if p not in self._nodes or c not in self._nodes:
                raise GraphError(f"edge ({p}, {c}) references an unknown node")
            if p == c:
                raise GraphError(f"self edge on {p}")
            if (p, c) in seen:
                raise GraphError(f"duplicate edge ({p}, {c})")
            seen.add((p, c))
            children[p].append(c)
            parents[c].append(p)
        self._edges = frozenset(seen)
        self._children = {k: tuple(sorted(v)) for k, v in children.items()}
        self._parents = {k: tuple(sorted(v)) for k, v in parents.items()}

    # basic structure

    @property
    def nodes(self) -> Mapping[str, Node]:
        return self._nodes

    @property
    def edges(self) -> frozenset:
        return self._edges

    def node_ids(self) -> tuple[str, ...]:
        return tuple(self._nodes)

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[str]:
        return iter(self._nodes)

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self._nodes == other._nodes and self._edges == other._edges

    def __hash__(self):
        return hash((tuple(self._nodes.values()), self._edges))

    def __repr__(self) -> str:
        return f"Graph({len(self._nodes)} nodes, {len(self._edges)} edges)"

    def node(self, n: str) -> Node:
        try:
            return self._nodes[n]
        except KeyError:
            raise KeyError(f"unknown node {n!r}") from None

    def kind(self, n: str) -> NodeKind:
        return self.node(n).kind

    def next(self, n: str) -> tuple[str, ...]:
        self.node(n)
        return self._children[n]

    children = next

    def parents(self, n: str) -> tuple[str, ...]:
        self.node(n)
        return self._parents[n]

    # access functions with the semantic defaults

    def wp(self, n: str) -> Optional[Watchpoint]:
        node = self.node(n)
        return node.watchpoint if node.is_watchpoint_node else None

    def timeout(self, n: str) -> float:
        node = self.node(n)
        return node.timeout if node.is_watchpoint_node else INFINITE

    def delay(self, n: str) -> int:
        node = self.node(n)
        return node.delay if node.is_watchpoint_node else 0

    def bool_expr(self, n: str) -> Optional[Expr]:
        return self.node(n).expr

    def eff(self, n: str) -> str:
        node = self.node(n)
        return node.effect if node.kind is NodeKind.GUARDED_EFFECT else ""

    def _of_kind(self, kind: NodeKind) -> tuple[str, ...]:
        return tuple(k for k, v in self._nodes.items() if v.kind is kind)

    def logic_nodes(self) -> tuple[str, ...]:
        return self._of_kind(NodeKind.LOGIC)

    def loopcount_nodes(self) -> tuple[str, ...]:
        return self._of_kind(NodeKind.LOOP_COUNT)

    def exit_nodes(self) -> tuple[str, ...]:
        return self._of_kind(NodeKind.LOOP_EXIT)

    def entry_nodes(self) -> tuple[str, ...]:
        return tuple(k for k, v in self._nodes.items() if v.entry)

    def goal_nodes(self) -> tuple[str, ...]:
        return tuple(k for k, v in self._nodes.items() if v.goal)

    def watchpoint_nodes(self) -> tuple[str, ...]:
        return tuple(k for k, v in self._nodes.items() if v.is_watchpoint_node)

    def loop_return(self, l: str) -> str:
        """The child of loop count ``l`` that is the first node of the loop."""
        kids = [c for c in self.next(l) if self.kind(c) is not NodeKind.LOOP_EXIT]
        if len(kids) != 1:
            raise GraphError(f"{l}: loop count node has no unique first node")
        return kids[0]

    def loop_exit(self, l: str) -> str:
        kids = [c for c in self.next(l) if self.kind(c) is NodeKind.LOOP_EXIT]
        if len(kids) != 1:
            raise GraphError(f"{l}: loop count node has no unique loop exit")
        return kids[0]

    def loop_edges(self) -> frozenset:
        """Loop-back edges: loop count node -> first node of its loop."""
        out = set()
        for l in self.loopcount_nodes():
            for c in self._children[l]:
                if self._nodes[c].kind is not NodeKind.LOOP_EXIT:
                    out.add((l, c))
        return frozenset(out)

    def forward_children(self, n: str) -> tuple[str, ...]:
        """Children of ``n`` not reached through a loop-back edge."""
        if self._nodes[n].kind is NodeKind.LOOP_COUNT:
            return tuple(c for c in self._children[n] if self._nodes[c].kind is NodeKind.LOOP_EXIT)
        return self._children[n]

    def is_collapsed(self) -> bool:
        return all(
            self._nodes[p].kind is not NodeKind.LOGIC
            for n in self.logic_nodes()
            for p in self._parents[n]
        )

    def with_nodes(self, nodes: Iterable[Node]) -> "Graph":
        """Copy with some node labels replaced (same ids, same edges)."""
        table = dict(self._nodes)
        for n in nodes:
            if n.id not in table:
                raise GraphError(f"unknown node {n.id!r}")
            table[n.id] = n
        return Graph(table.values(), self._edges)


def _descendants(g: Graph, start: str, succ) -> set[str]:
    seen = {start}
    todo = deque([start])
    while todo:
        n = todo.popleft()
        for c in succ(n):
            if c not in seen:
                seen.add(c)
                todo.append(c)
    return seen


def _ancestors(g: Graph, start: str, skip_edges: frozenset) -> set[str]:
    seen = {start}
    todo = deque([start])
    while todo:
        n = todo.popleft()
        for p in g.parents(n):
            if (p, n) not in skip_edges and p not in seen:
                seen.add(p)
                todo.append(p)
    return seen


def _loop_info(g: Graph, l: str, loop_edges: frozenset) -> Optional[LoopInfo]:
    """Loop metadata for ``l``, or None when the loop shape is too broken to tell."""
    kids = g.next(l)
    exits = [c for c in kids if g.kind(c) is NodeKind.LOOP_EXIT]
    firsts = [c for c in kids if g.kind(c) is not NodeKind.LOOP_EXIT]
    if len(exits) != 1 or len(firsts) != 1:
        return None
    first, x = firsts[0], exits[0]
    entrances = [p for p in g.parents(first) if p != l]
    entrance = entrances[0] if len(entrances) == 1 else None
    reach = _descendants(g, first, g.forward_children)
    if l not in reach:
        return None
    internal = (reach & _ancestors(g, l, loop_edges)) - {l}
    breaks = [p for p in g.parents(x) if p != l and g.node(p).is_break]
    brk = breaks[0] if len(breaks) == 1 else None
    reset = set(internal) | {l}
    if brk is not None:
        reset.add(brk)
    return LoopInfo(l, first, x, entrance, brk, frozenset(internal), frozenset(reset))


def compute_loop_info(g: Graph) -> dict[str, LoopInfo]:
    """Loop metadata for every loop count node, keyed by loop count id.

    Internal nodes are those on a forward path from the first node to the
    loop count node; the exit reset set adds the loop count and break node.
    """
    loop_edges = g.loop_edges()
    out = {}
    for l in g.loopcount_nodes():
        info = _loop_info(g, l, loop_edges)
        if info is None:
            raise GraphError(f"{l}: malformed loop; run validate() first")
        out[l] = info
    return out


def reset_sets(g: Graph, loops: Optional[Mapping[str, LoopInfo]] = None) -> dict[str, frozenset]:
    """R(x) for every loop count and loop exit node."""
    loops = compute_loop_info(g) if loops is None else loops
    out: dict[str, frozenset] = {}
    for l, info in loops.items():
        out[l] = info.internal_nodes
        out[info.exit_node] = info.exit_reset_nodes
    return out


# validation


@dataclass(frozen=True)
class Violation:
    rule: int
    message: str
    nodes: tuple = ()
    warning: bool = False

    def __str__(self) -> str:
        level = "warning" if self.warning else "error"
        where = f" [{', '.join(self.nodes)}]" if self.nodes else ""
        return f"{level} rule {self.rule}: {self.message}{where}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def errors(self) -> list:
        return [v for v in self.violations if not v.warning]

    @property
    def warnings(self) -> list:
        return [v for v in self.violations if v.warning]

    @property
    def ok(self) -> bool:
        return not self.errors

    def rules(self) -> set[int]:
        return {v.rule for v in self.errors}

    def __bool__(self) -> bool:
        return bool(self.errors)

    def __iter__(self):
        return iter(self.violations)

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.violations)


# Rule numbers: 1-8 as documented; 9 = only loop-back edges may close a
# cycle; 10 = lints (never errors).
RULE_ENTRY_GOAL = 1
RULE_LOOP_FLAGS = 2
RULE_LOOP_SHAPE = 3
RULE_BREAK = 4
RULE_ENTRANCE = 5
RULE_LOGIC = 6
RULE_EXIT = 7
RULE_NESTING = 8
RULE_ACYCLIC = 9
RULE_LINT = 10


def _forward_cycle(g: Graph) -> Optional[list[str]]:
    indeg = {n: 0 for n in g}
    for n in g:
        for c in g.forward_children(n):
            indeg[c] += 1
    todo = deque(n for n in g if indeg[n] == 0)
    done = 0
    while todo:
        n = todo.popleft()
        done += 1
        for c in g.forward_children(n):
            indeg[c] -= 1
            if indeg[c] == 0:
                todo.append(c)
    if done == len(g):
        return None
    return sorted(n for n, d in indeg.items() if d > 0)


def validate(g: Graph) -> ValidationReport:
    """Check every structural rule; never raises for rule violations."""
    rep = ValidationReport()

    def err(rule, msg, *nodes):
        rep.violations.append(Violation(rule, msg, tuple(nodes)))

    def warn(rule, msg, *nodes):
        rep.violations.append(Violation(rule, msg, tuple(nodes), warning=True))

    if not g.entry_nodes():
        err(RULE_ENTRY_GOAL, "graph has no entry node")
    if not g.goal_nodes():
        err(RULE_ENTRY_GOAL, "graph has no goal node")
    for n in g.entry_nodes():
        if g.parents(n):
            warn(RULE_LINT, "entry node has parents; later activations are suppressed once it has fired", n)

    cycle = _forward_cycle(g)
    if cycle is not None:
        err(RULE_ACYCLIC, "cycle not closed by a loop count node", *cycle)

    # logic nodes
    for n in g.logic_nodes():
        leaves = expr_leaves(g.bool_expr(n))
        stray = sorted(leaves - set(g.parents(n)))
        if stray:
            err(RULE_LOGIC, "logic expression refers to non-parents", n, *stray)

    # loop exits
    for x in g.exit_nodes():
        counts = [p for p in g.parents(x) if g.kind(p) is NodeKind.LOOP_COUNT]
        if not counts:
            err(RULE_EXIT, "loop exit node has no loop count parent", x)
        elif len(counts) > 1:
            err(RULE_NESTING, "loop exit node shared by several loops", x, *counts)
        others = [p for p in g.parents(x) if g.kind(p) is not NodeKind.LOOP_COUNT]
        if any(not g.node(p).is_break for p in others):
            err(RULE_EXIT, "loop exit node may only have its loop count and a break node as parents", x, *others)
        if len(others) > 1:
            err(RULE_BREAK, "loop exit node has more than one break node", x, *others)

    loops: dict[str, LoopInfo] = {}
    loop_edges = g.loop_edges() if cycle is None else frozenset()
    for l in g.loopcount_nodes():
        kids = g.next(l)
        exits = [c for c in kids if g.kind(c) is NodeKind.LOOP_EXIT]
        if len(kids) != 2 or len(exits) != 1:
            err(RULE_LOOP_SHAPE, "loop count node needs exactly two children: a first node and a loop exit", l, *kids)
            continue
        first = g.loop_return(l)
        if g.kind(first) is NodeKind.LOOP_COUNT:
            err(RULE_LOOP_SHAPE, "first node of a loop cannot be a loop count node", l, first)
            continue
        entrances = [p for p in g.parents(first) if p != l]
        if len(entrances) != 1:
            err(RULE_LOOP_SHAPE, "first node of a loop must have exactly one parent", l, first, *entrances)
        if cycle is not None:
            continue
        info = _loop_info(g, l, loop_edges)
        if info is None:
            err(RULE_LOOP_SHAPE, "loop count node is not reachable from the first node of its loop", l, first)
            continue
        loops[l] = info

    for l, info in loops.items():
        for n in sorted(info.internal_nodes | {l}):
            if g.kind(n) in (NodeKind.LOOP_COUNT, NodeKind.LOOP_EXIT) and n != l:
                err(RULE_NESTING, "loop body contains another loop's count or exit node", l, n)
            node = g.node(n)
            if node.entry or node.goal:
                err(RULE_LOOP_FLAGS, "loop nodes cannot be entry or goal nodes", n)
        entrance = info.entrance
        if entrance is not None and entrance in info.internal_nodes:
            err(RULE_LOOP_SHAPE, "loop entrance lies inside its own loop", l, entrance)
        for b in g.parents(info.exit_node):
            if b == l or not g.node(b).is_break:
                continue
            if entrance is None or g.parents(b) != (entrance,):
                err(RULE_BREAK, "break node must have exactly one parent, the loop entrance", b, *g.parents(b))
            if g.next(b) != (info.exit_node,):
                err(RULE_BREAK, "break node must have exactly one child, the loop exit", b, *g.next(b))
        if entrance is not None:
            for c in g.next(entrance):
                if c in (info.first_node, info.break_node):
                    continue
                if info.exit_node in _descendants(g, c, g.forward_children):
                    err(RULE_ENTRANCE, "another child of the loop entrance reaches the loop exit", entrance, c, info.exit_node)

    # break-flagged nodes must belong to some loop
    break_owner = {info.break_node: l for l, info in loops.items() if info.break_node}
    for n, node in g.nodes.items():
        if node.is_break:
            if node.entry or node.goal:
                err(RULE_LOOP_FLAGS, "break nodes cannot be entry or goal nodes", n)
            if n not in break_owner and not any(g.kind(c) is NodeKind.LOOP_EXIT for c in g.next(n)):
                err(RULE_BREAK, "break node is not attached to a loop exit", n)
            elif len(g.next(n)) != 1:
                err(RULE_BREAK, "break node must have exactly one child, the loop exit", n, *g.next(n))

    # loops may not nest or overlap
    owner: dict[str, str] = {}
    for l, info in sorted(loops.items()):
        for n in sorted(info.members):
            if n in owner and owner[n] != l:
                err(RULE_NESTING, "loops overlap or nest", owner[n], l, n)
            owner.setdefault(n, l)

    # AGE pairing lint
    for n, node in g.nodes.items():
        if node.kind is not NodeKind.GUARDED_EFFECT:
            continue
        ps = g.parents(n)
        if len(ps) != 1 or g.kind(ps[0]) is not NodeKind.ACTIVATION or g.next(n):
            warn(RULE_LINT, "guarded effect node is not paired with a single activation parent", n)
        elif sum(1 for c in g.next(ps[0]) if g.kind(c) is NodeKind.GUARDED_EFFECT) > 1:
            warn(RULE_LINT, "activation node is shared by several guarded effect nodes", ps[0])
    return rep


def check_runnable(g: Graph) -> None:
    """Raise GraphError unless ``g`` is valid and in collapsed form."""
    rep = validate(g)
    if not rep.ok:
        raise GraphError("invalid graph:\n" + "\n".join(str(v) for v in rep.errors))
    if not g.is_collapsed():
        raise GraphError("graph is not in collapsed form; run collapse() first")


# collapse


def collapse(g: Graph) -> Graph:
    """Merge logic nodes whose parents are logic nodes until none remain.

    The parent's expression is substituted for its leaf and the parent's own
    parents are wired to the merged node.  A logic parent left without
    children is dropped.
    """
    nodes = dict(g.nodes)
    parents = {n: set(g.parents(n)) for n in g}
    children = {n: set(g.next(n)) for n in g}

    def is_logic(n):
        return nodes[n].kind is NodeKind.LOGIC

    # logic-only chains must be acyclic
    state: dict[str, int] = {}

    def visit(n):
        state[n] = 1
        for p in sorted(parents[n]):
            if not is_logic(p):
                continue
            if state.get(p) == 1:
                raise CollapseError(f"cyclic logic-node chain through {p}")
            if p not in state:
                visit(p)
        state[n] = 2

    for n in sorted(nodes):
        if is_logic(n) and n not in state:
            visit(n)

    changed = True
    while changed:
        changed = False
        for n in sorted(nodes):
            if n not in nodes or not is_logic(n):
                continue
            logic_parents = sorted(p for p in parents[n] if is_logic(p) and not any(is_logic(q) for q in parents[p]))
            for p in logic_parents:
                expr = substitute(nodes[n].expr, p, nodes[p].expr)
                nodes[n] = replace(nodes[n], expr=flatten(expr))
                parents[n].discard(p)
                children[p].discard(n)
                for q in parents[p]:
                    parents[n].add(q)
                    children[q].add(n)
                if not children[p]:
                    for q in parents[p]:
                        children[q].discard(p)
                    del nodes[p], parents[p], children[p]
                changed = True
    edges = [(p, c) for p in nodes for c in children[p]]
    return Graph(nodes.values(), edges)
