"""Control-flow graphs, code paths and equivalence-class partitions.

A graph has one entry and one exit node.  Statement nodes fall through to a
single successor and branch nodes choose between exactly two.  The entry node
may fan out to several successors; that fan-out is treated as a chain of
binary choices, which is how independent features hang off a program without
sharing any interior node.

Every distinct entry-to-exit path is one equivalence class.  Class identity
is the exact node-id sequence of the path, so a class survives a graph edit
exactly when its sequence is still a walkable path.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import CfgFormatError, ExplosionError, InvalidGraphError, PathUnlabeled

OutputVector = str
Fingerprint = tuple  # tuple[int, ...]: the node-id sequence of a path


class NodeKind(str, enum.Enum):
    ENTRY = "entry"
    EXIT = "exit"
    STATEMENT = "statement"
    BRANCH = "branch"


@dataclass(frozen=True, order=True)
class Node:
    id: int
    kind: NodeKind


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    back: bool = False


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def __str__(self):
        return f"{self.code}: {self.detail}"


class ControlFlowGraph:
    """Immutable control-flow graph.

    Successor order is the order in which edges are listed; it fixes which
    arm of a branch is decision 0 and which is decision 1.  ``next_id`` is
    the first id never handed out, so ids are not reused across edits.
    """

    __slots__ = ("_kinds", "_edges", "_succ", "_pred", "_entry", "_exit", "_next_id")

    def __init__(self, nodes, edges, entry, exit, next_id=None):
        kinds = {}
        for node in nodes:
            if node.id in kinds:
                raise CfgFormatError(f"duplicate node id {node.id}")
            if node.id < 0:
                raise CfgFormatError(f"negative node id {node.id}")
            kinds[node.id] = NodeKind(node.kind)
        self._kinds = dict(sorted(kinds.items()))
        self._edges = tuple(edges)
        succ = {nid: [] for nid in self._kinds}
        pred = {nid: [] for nid in self._kinds}
        for e in self._edges:
            succ.setdefault(e.src, []).append(e.dst)
            pred.setdefault(e.dst, []).append(e.src)
        self._succ = {k: tuple(v) for k, v in succ.items()}
        self._pred = {k: tuple(v) for k, v in pred.items()}
        self._entry = entry
        self._exit = exit
        floor = max(self._kinds, default=-1) + 1
        self._next_id = floor if next_id is None else max(next_id, floor)

    @property
    def entry(self) -> int:
        return self._entry

    @property
    def exit(self) -> int:
        return self._exit

    @property
    def next_id(self) -> int:
        return self._next_id

    @property
    def nodes(self) -> tuple:
        return tuple(Node(i, k) for i, k in self._kinds.items())

    @property
    def node_ids(self) -> tuple:
        return tuple(self._kinds)

    @property
    def edges(self) -> tuple:
        return self._edges

    def kind(self, node_id) -> NodeKind:
        return self._kinds[node_id]

    def successors(self, node_id) -> tuple:
        return self._succ.get(node_id, ())

    def predecessors(self, node_id) -> tuple:
        return self._pred.get(node_id, ())

    def has_node(self, node_id) -> bool:
        return node_id in self._kinds

    @property
    def back_edges(self) -> frozenset:
        return frozenset((e.src, e.dst) for e in self._edges if e.back)

    @property
    def branch_count(self) -> int:
        """Number of branch nodes."""
        return sum(1 for k in self._kinds.values() if k is NodeKind.BRANCH)

    @property
    def decision_count(self) -> int:
        """Binary decisions available: branch nodes plus the entry fan-out chain."""
        fan_out = len(self.successors(self._entry))
        return self.branch_count + max(0, fan_out - 1)

    def _key(self):
        return (tuple(self._kinds.items()), self._edges, self._entry, self._exit)

    def __eq__(self, other):
        if not isinstance(other, ControlFlowGraph):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"ControlFlowGraph(nodes={len(self._kinds)}, edges={len(self._edges)}, "
            f"entry={self._entry}, exit={self._exit})"
        )


def compute_back_edges(graph: ControlFlowGraph) -> frozenset:
    """Cycle-closing edges of a depth-first search from the entry.

    Successors are explored in their listed order, so the result is
    deterministic for a given graph.
    """
    back = set()
    if not graph.has_node(graph.entry):
        return frozenset()
    state = {graph.entry: 1}  # 1 = on stack, 2 = finished
    stack = [(graph.entry, iter(graph.successors(graph.entry)))]
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            state[node] = 2
            stack.pop()
            continue
        if not graph.has_node(nxt):
            continue
        seen = state.get(nxt)
        if seen == 1:
            back.add((node, nxt))
        elif seen is None:
            state[nxt] = 1
            stack.append((nxt, iter(graph.successors(nxt))))
    return frozenset(back)


class GraphBuilder:
    """Mutable scratch space for graph surgery; ``build`` tags back-edges."""

    def __init__(self, graph: ControlFlowGraph | None = None):
        if graph is None:
            self.kinds = {}
            self.edges = []
            self.entry = None
            self.exit = None
            self.next_id = 0
        else:
            self.kinds = {n.id: n.kind for n in graph.nodes}
            self.edges = [(e.src, e.dst) for e in graph.edges]
            self.entry = graph.entry
            self.exit = graph.exit
            self.next_id = graph.next_id

    def add_node(self, kind) -> int:
        kind = NodeKind(kind)
        nid = self.next_id
        self.next_id += 1
        self.kinds[nid] = kind
        if kind is NodeKind.ENTRY:
            self.entry = nid
        elif kind is NodeKind.EXIT:
            self.exit = nid
        return nid

    def add_edge(self, src, dst):
        self.edges.append((src, dst))

    def redirect_edge(self, src, old_dst, new_dst):
        """Point ``src -> old_dst`` at ``new_dst`` without moving it in successor order."""
        idx = self.edges.index((src, old_dst))
        self.edges[idx] = (src, new_dst)

    def add_diamonds(self, count, target) -> tuple:
        """Append ``count`` sequential diamonds whose last arms join at ``target``.

        Returns ``(head, branch_ids)``; the caller wires something into ``head``.
        """
        if count < 1:
            raise ValueError("need at least one diamond")
        branches = [self.add_node(NodeKind.BRANCH) for _ in range(count)]
        for i, b in enumerate(branches):
            join = branches[i + 1] if i + 1 < count else target
            for _ in range(2):
                arm = self.add_node(NodeKind.STATEMENT)
                self.add_edge(b, arm)
                self.add_edge(arm, join)
        return branches[0], tuple(branches)

    def build(self) -> ControlFlowGraph:
        nodes = [Node(i, k) for i, k in self.kinds.items()]
        raw = ControlFlowGraph(nodes, [Edge(s, d) for s, d in self.edges], self.entry, self.exit, self.next_id)
        back = compute_back_edges(raw)
        edges = [Edge(s, d, (s, d) in back) for s, d in self.edges]
        return ControlFlowGraph(nodes, edges, self.entry, self.exit, self.next_id)


def linear_chain(statements=1) -> ControlFlowGraph:
    """entry -> s1 -> ... -> sN -> exit."""
    b = GraphBuilder()
    prev = b.add_node(NodeKind.ENTRY)
    ex = b.add_node(NodeKind.EXIT)
    for _ in range(statements):
        s = b.add_node(NodeKind.STATEMENT)
        b.add_edge(prev, s)
        prev = s
    b.add_edge(prev, ex)
    return b.build()


def sequential_diamonds(count) -> ControlFlowGraph:
    """entry -> diamond_1 -> ... -> diamond_count -> exit; has 2**count paths."""
    b = GraphBuilder()
    entry = b.add_node(NodeKind.ENTRY)
    ex = b.add_node(NodeKind.EXIT)
    if count == 0:
        b.add_edge(entry, ex)
    else:
        head, _ = b.add_diamonds(count, ex)
        b.add_edge(entry, head)
    return b.build()


def diamond() -> ControlFlowGraph:
    return sequential_diamonds(1)


# -- validation ---------------------------------------------------------------


def validate_cfg(graph: ControlFlowGraph) -> list:
    """Return every structural violation; an empty list means the graph is valid."""
    out = []
    entries = [n.id for n in graph.nodes if n.kind is NodeKind.ENTRY]
    exits = [n.id for n in graph.nodes if n.kind is NodeKind.EXIT]
    if entries != [graph.entry]:
        out.append(Violation("entry", f"expected exactly one entry node {graph.entry}, found {entries}"))
    if exits != [graph.exit]:
        out.append(Violation("exit", f"expected exactly one exit node {graph.exit}, found {exits}"))

    seen = set()
    for e in graph.edges:
        if not (graph.has_node(e.src) and graph.has_node(e.dst)):
            out.append(Violation("dangling edge", f"{e.src}->{e.dst}"))
        pair = (e.src, e.dst)
        if pair in seen:
            out.append(Violation("duplicate edge", f"{e.src}->{e.dst}"))
        seen.add(pair)

    for node in graph.nodes:
        n_out = len(graph.successors(node.id))
        n_in = len(graph.predecessors(node.id))
        if node.kind is NodeKind.ENTRY:
            if n_in:
                out.append(Violation("entry in-degree", f"entry {node.id} has in-degree {n_in}"))
            if n_out < 1:
                out.append(Violation("entry out-degree", f"entry {node.id} has no successor"))
        elif node.kind is NodeKind.EXIT:
            if n_out:
                out.append(Violation("exit out-degree", f"exit {node.id} has out-degree {n_out}"))
        elif node.kind is NodeKind.STATEMENT and n_out != 1:
            out.append(Violation("statement arity", f"statement {node.id} has out-degree {n_out}"))
        elif node.kind is NodeKind.BRANCH and n_out != 2:
            out.append(Violation("branch arity", f"branch {node.id} has out-degree {n_out}"))

    if graph.has_node(graph.entry):
        reach = _reachable(graph.entry, graph.successors)
        for nid in graph.node_ids:
            if nid not in reach:
                out.append(Violation("unreachable", f"node {nid} is not reachable from entry"))
    if graph.has_node(graph.exit):
        coreach = _reachable(graph.exit, graph.predecessors)
        for nid in graph.node_ids:
            if nid not in coreach:
                out.append(Violation("dead end", f"node {nid} cannot reach exit"))

    expected = compute_back_edges(graph)
    if graph.back_edges != expected:
        missing = sorted(expected - graph.back_edges)
        extra = sorted(graph.back_edges - expected)
        out.append(Violation("back-edge tag", f"untagged {missing}, wrongly tagged {extra}"))
    return out


def _reachable(start, step) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in step(cur):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def require_valid(graph):
    violations = validate_cfg(graph)
    if violations:
        raise InvalidGraphError(violations)


# -- paths ----------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class CodePath:
    sequence: tuple

    @property
    def interior(self) -> frozenset:
        # entry has no predecessors and exit no successors, so they only
        # ever appear at the two ends
        return frozenset(self.sequence[1:-1])

    def __len__(self):
        return len(self.sequence)


def enumerate_paths(graph: ControlFlowGraph, cap: int) -> list:
    """All entry-to-exit paths, each back-edge used at most once, sorted by sequence.

    Raises ExplosionError as soon as more than ``cap`` paths are found.
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    require_valid(graph)
    back = graph.back_edges
    ex = graph.exit
    found = []
    path = [graph.entry]
    used = set()
    stack = [iter(graph.successors(graph.entry))]
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            node = path.pop()
            if path and (path[-1], node) in used:
                used.discard((path[-1], node))
            continue
        edge = (path[-1], nxt)
        if edge in back:
            if edge in used:
                continue
            used.add(edge)
        if nxt == ex:
            found.append(tuple(path) + (ex,))
            if len(found) > cap:
                raise ExplosionError(len(found), cap)
            used.discard(edge)
            continue
        path.append(nxt)
        stack.append(iter(graph.successors(nxt)))
    found.sort()
    return [CodePath(seq) for seq in found]


def topological_order(graph: ControlFlowGraph) -> list:
    """Topological order of the graph with back-edges removed."""
    back = graph.back_edges
    indeg = {nid: 0 for nid in graph.node_ids}
    for e in graph.edges:
        if (e.src, e.dst) not in back:
            indeg[e.dst] += 1
    ready = deque(sorted(n for n, d in indeg.items() if d == 0))
    order = []
    while ready:
        cur = ready.popleft()
        order.append(cur)
        for nxt in graph.successors(cur):
            if (cur, nxt) in back:
                continue
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    return order


def path_flow(graph: ControlFlowGraph) -> tuple:
    """Forward and backward path counts per node of an acyclic graph.

    ``forward[v] * backward[v]`` is the number of entry-to-exit paths through
    ``v``; ``forward[exit]`` is the total path count.
    """
    if graph.back_edges:
        raise ValueError("path_flow needs an acyclic graph")
    order = topological_order(graph)
    forward = dict.fromkeys(graph.node_ids, 0)
    forward[graph.entry] = 1
    for nid in order:
        for nxt in graph.successors(nid):
            forward[nxt] += forward[nid]
    backward = dict.fromkeys(graph.node_ids, 0)
    backward[graph.exit] = 1
    for nid in reversed(order):
        for nxt in graph.successors(nid):
            backward[nid] += backward[nxt]
    return forward, backward


def count_paths(graph: ControlFlowGraph, cap: int | None = None) -> int:
    """Exact path count; uses dynamic programming when the graph is acyclic."""
    if not graph.back_edges:
        require_valid(graph)
        forward, _ = path_flow(graph)
        return forward[graph.exit]
    return len(enumerate_paths(graph, cap if cap is not None else 2**62))


def canonical_decisions(graph: ControlFlowGraph, sequence: Sequence[int]) -> tuple:
    """Decision sequence that drives ``execute`` along ``sequence``.

    A branch contributes the index of the arm taken.  An entry with ``d > 1``
    successors behaves like a chain of ``d - 1`` binary branches: successor
    ``i`` is selected by ``i`` ones followed by a zero, the last one by
    ``d - 1`` ones.
    """
    out = []
    for cur, nxt in zip(sequence, sequence[1:]):
        succs = graph.successors(cur)
        if graph.kind(cur) is NodeKind.BRANCH:
            out.append(succs.index(nxt))
        elif len(succs) > 1:
            idx = succs.index(nxt)
            out.extend([1] * idx)
            if idx < len(succs) - 1:
                out.append(0)
    return tuple(out)


# -- equivalence classes ----------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceClass:
    key: tuple
    path: CodePath
    output_label: OutputVector
    decisions: tuple = ()

    @property
    def interior(self) -> frozenset:
        return self.path.interior


@dataclass(frozen=True)
class EqcpSet:
    """Equivalence classes keyed by path fingerprint."""

    _classes: Mapping = field(default_factory=dict)

    @classmethod
    def of(cls, classes: Iterable[EquivalenceClass]) -> "EqcpSet":
        table = {}
        for c in classes:
            if c.key in table:
                raise ValueError(f"duplicate class key {c.key}")
            table[c.key] = c
        return cls(dict(sorted(table.items())))

    def __len__(self):
        return len(self._classes)

    def __iter__(self) -> Iterator[EquivalenceClass]:
        return iter(self._classes.values())

    def __contains__(self, key):
        return key in self._classes

    def __getitem__(self, key) -> EquivalenceClass:
        return self._classes[key]

    @property
    def keys(self) -> frozenset:
        return frozenset(self._classes)

    @property
    def classes(self) -> tuple:
        return tuple(self._classes.values())

    def labeler(self) -> dict:
        return {k: c.output_label for k, c in self._classes.items()}


Labeler = Union[Mapping, Callable]


def _lookup(labeler, key):
    if callable(labeler) and not isinstance(labeler, Mapping):
        label = labeler(key)
        if label is None:
            raise PathUnlabeled(key)
        return label
    try:
        return labeler[key]
    except KeyError:
        raise PathUnlabeled(key) from None


def derive_eqcp(graph: ControlFlowGraph, labeler: Labeler, cap: int) -> EqcpSet:
    """One equivalence class per distinct path of ``graph``."""
    classes = []
    for p in enumerate_paths(graph, cap):
        classes.append(
            EquivalenceClass(
                key=p.sequence,
                path=p,
                output_label=_lookup(labeler, p.sequence),
                decisions=canonical_decisions(graph, p.sequence),
            )
        )
    return EqcpSet.of(classes)


def _interior(x):
    if isinstance(x, (EquivalenceClass, CodePath)):
        return x.interior
    return frozenset(x)


def coupling(ex, ey) -> Fraction:
    """Shared interior nodes over all interior nodes of two classes.

    Two classes with empty interiors share no code, so 0/0 is taken as 0.
    """
    a, b = _interior(ex), _interior(ey)
    union = len(a | b)
    if union == 0:
        return Fraction(0)
    return Fraction(len(a & b), union)


def total_coupling(eqcp: EqcpSet | Iterable) -> Fraction:
    """Sum of ``coupling`` over unordered pairs of distinct classes."""
    interiors = [_interior(c) for c in eqcp]
    n = len(interiors)
    if n < 2:
        return Fraction(0)
    if n <= 64:
        total = Fraction(0)
        for i in range(n):
            for j in range(i + 1, n):
                total += coupling(interiors[i], interiors[j])
        return total
    return _total_coupling_dense(interiors)


def _total_coupling_dense(interiors, chunk=1024) -> Fraction:
    # intersection sizes via a 0/1 matrix product; the resulting ratios are
    # bucketed by (intersection, union) and summed exactly
    ids = sorted(set().union(*interiors))
    col = {nid: i for i, nid in enumerate(ids)}
    n = len(interiors)
    mat = np.zeros((n, len(ids)), dtype=np.float32)
    for r, s in enumerate(interiors):
        mat[r, [col[x] for x in s]] = 1.0
    sizes = mat.sum(axis=1).astype(np.int64)
    width = int(sizes.max()) * 2 + 1
    buckets = np.zeros(width * width, dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        inter = np.rint(mat[start:stop] @ mat[start:].T).astype(np.int64)
        rows = np.arange(start, stop)[:, None]
        cols = np.arange(start, n)[None, :]
        union = sizes[start:stop, None] + sizes[None, start:] - inter
        keys = (inter * width + union)[cols > rows]
        buckets += np.bincount(keys, minlength=width * width)
    total = Fraction(0)
    for key in np.flatnonzero(buckets).tolist():
        inter, union = divmod(key, width)
        if union:
            total += Fraction(inter * int(buckets[key]), union)
    return total


def code_size_proxy(graph: ControlFlowGraph) -> int:
    """Node count plus edge count, standing in for the uncomputable minimal size."""
    return len(graph.node_ids) + len(graph.edges)


# -- text format ------------------------------------------------------------------


def format_cfg(graph: ControlFlowGraph) -> str:
    lines = [f"cfg {len(graph.node_ids)} {len(graph.edges)} {graph.entry} {graph.exit}"]
    lines += [f"node {n.id} {n.kind.value}" for n in graph.nodes]
    for e in graph.edges:
        lines.append(f"edge {e.src} {e.dst}" + (" back" if e.back else ""))
    return "\n".join(lines) + "\n"


def parse_cfg(text: str) -> ControlFlowGraph:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise CfgFormatError("empty graph text")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "cfg":
        raise CfgFormatError(f"bad header: {lines[0]!r}")
    try:
        n_nodes, n_edges, entry, ex = (int(x) for x in head[1:])
    except ValueError:
        raise CfgFormatError(f"bad header: {lines[0]!r}") from None
    nodes, edges = [], []
    for ln in lines[1:]:
        parts = ln.split()
        try:
            if parts[0] == "node" and len(parts) == 3:
                nodes.append(Node(int(parts[1]), NodeKind(parts[2])))
            elif parts[0] == "edge" and len(parts) in (3, 4):
                if len(parts) == 4 and parts[3] != "back":
                    raise ValueError(parts[3])
                edges.append(Edge(int(parts[1]), int(parts[2]), len(parts) == 4))
            else:
                raise ValueError(parts[0])
        except ValueError:
            raise CfgFormatError(f"bad line: {ln!r}") from None
    if len(nodes) != n_nodes or len(edges) != n_edges:
        raise CfgFormatError(
            f"header declares {n_nodes} nodes/{n_edges} edges, found {len(nodes)}/{len(edges)}"
        )
    return ControlFlowGraph(nodes, edges, entry, ex)
