"""Shared graph generators and brute-force oracles."""

import random
from fractions import Fraction

from tdd_dynamics.cfg import GraphBuilder, NodeKind


def random_graph(seed, branches, loops=False):
    """Random valid CFG with exactly ``branches`` branch nodes.

    Each branch is inserted on an existing edge ``u -> v``: one arm rejoins
    ``v``, the other jumps to a descendant of ``v`` (or, with ``loops``,
    sometimes back to an ancestor of ``u``).
    """
    rng = random.Random(seed)
    b = GraphBuilder()
    entry = b.add_node(NodeKind.ENTRY)
    ex = b.add_node(NodeKind.EXIT)
    s = b.add_node(NodeKind.STATEMENT)
    b.add_edge(entry, s)
    b.add_edge(s, ex)
    for _ in range(branches):
        u, v = rng.choice(b.edges)
        br = b.add_node(NodeKind.BRANCH)
        a1 = b.add_node(NodeKind.STATEMENT)
        a2 = b.add_node(NodeKind.STATEMENT)
        b.redirect_edge(u, v, br)
        b.add_edge(br, a1)
        b.add_edge(br, a2)
        b.add_edge(a1, v)
        if loops and rng.random() < 0.3:
            targets = sorted(_reach(b, u, backward=True) - {entry, a2})
        else:
            targets = sorted(_reach(b, v) - {a2})
        b.add_edge(a2, rng.choice(targets) if targets else v)
    return b.build()


def _reach(b, start, backward=False):
    adj = {}
    for s, d in b.edges:
        if backward:
            s, d = d, s
        adj.setdefault(s, []).append(d)
    seen, todo = {start}, [start]
    while todo:
        for nxt in adj.get(todo.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def brute_force_paths(graph):
    """Recursive DFS over edges, each back edge at most once; independent of the library."""
    succ = {}
    for e in graph.edges:
        succ.setdefault(e.src, []).append((e.dst, e.back))
    out = []

    def walk(node, path, used):
        if node == graph.exit:
            out.append(tuple(path))
            return
        for dst, back in succ.get(node, ()):
            if back and (node, dst) in used:
                continue
            walk(dst, path + [dst], used | ({(node, dst)} if back else set()))

    walk(graph.entry, [graph.entry], frozenset())
    return sorted(out)


def jaccard(a, b):
    """Set-arithmetic Jaccard with 0/0 = 0."""
    a, b = set(a), set(b)
    return Fraction(len(a & b), len(a | b)) if a | b else Fraction(0)

