from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_paths, jaccard, random_graph
from tdd_dynamics.cfg import (
    ControlFlowGraph,
    Edge,
    GraphBuilder,
    Node,
    NodeKind,
    code_size_proxy,
    count_paths,
    coupling,
    derive_eqcp,
    diamond,
    enumerate_paths,
    format_cfg,
    linear_chain,
    parse_cfg,
    sequential_diamonds,
    total_coupling,
    validate_cfg,
)
from tdd_dynamics.errors import CfgFormatError, ExplosionError, InvalidGraphError


def codes(graph):
    return {v.code for v in validate_cfg(graph)}


def labeler(graph):
    return {p.sequence: f"o{i}" for i, p in enumerate(enumerate_paths(graph, 10**6))}


# -- validation ---------------------------------------------------------------


def test_minimal_chain_is_valid():
    assert validate_cfg(linear_chain(1)) == []


def test_unreachable_node_reported():
    b = GraphBuilder(linear_chain(1))
    orphan = b.add_node(NodeKind.STATEMENT)
    b.add_edge(orphan, 1)
    assert "unreachable" in codes(b.build())


def test_branch_with_three_successors_reported():
    b = GraphBuilder()
    entry = b.add_node(NodeKind.ENTRY)
    ex = b.add_node(NodeKind.EXIT)
    br = b.add_node(NodeKind.BRANCH)
    b.add_edge(entry, br)
    for _ in range(3):
        s = b.add_node(NodeKind.STATEMENT)
        b.add_edge(br, s)
        b.add_edge(s, ex)
    assert "branch arity" in codes(b.build())


def test_structural_violations_listed():
    nodes = [Node(0, NodeKind.ENTRY), Node(1, NodeKind.EXIT), Node(2, NodeKind.STATEMENT)]
    g = ControlFlowGraph(nodes, [Edge(0, 2), Edge(2, 1), Edge(2, 0), Edge(1, 7)], 0, 1)
    found = codes(g)
    assert {"entry in-degree", "statement arity", "exit out-degree", "dangling edge"} <= found


def test_dead_end_reported():
    b = GraphBuilder()
    entry = b.add_node(NodeKind.ENTRY)
    ex = b.add_node(NodeKind.EXIT)
    br = b.add_node(NodeKind.BRANCH)
    s1, s2 = b.add_node(NodeKind.STATEMENT), b.add_node(NodeKind.STATEMENT)
    b.add_edge(entry, br)
    b.add_edge(br, s1)
    b.add_edge(br, s2)
    b.add_edge(s1, ex)
    b.add_edge(s2, s2)
    assert "dead end" in codes(b.build())


def test_invalid_graph_rejected_by_enumeration():
    b = GraphBuilder(linear_chain(1))
    b.add_node(NodeKind.STATEMENT)
    with pytest.raises(InvalidGraphError):
        enumerate_paths(b.build(), 10)


@given(st.integers(0, 10**6), st.integers(0, 8), st.booleans())
@settings(max_examples=60, deadline=None)
def test_generated_graphs_are_valid(seed, branches, loops):
    assert validate_cfg(random_graph(seed, branches, loops)) == []


# -- paths ----------------------------------------------------------------------


def test_path_counts_of_small_graphs():
    assert len(enumerate_paths(linear_chain(3), 10)) == 1
    assert len(enumerate_paths(diamond(), 10)) == 2
    g = sequential_diamonds(3)
    paths = enumerate_paths(g, 100)
    assert len(paths) == 8
    assert [p.sequence for p in paths] == brute_force_paths(g)


def test_paths_are_sorted_and_end_to_end():
    g = random_graph(11, 6)
    paths = enumerate_paths(g, 10**4)
    seqs = [p.sequence for p in paths]
    assert seqs == sorted(seqs)
    edges = {(e.src, e.dst) for e in g.edges}
    for s in seqs:
        assert s[0] == g.entry and s[-1] == g.exit
        assert all(pair in edges for pair in zip(s, s[1:]))


def test_explosion_cap():
    with pytest.raises(ExplosionError):
        enumerate_paths(sequential_diamonds(5), 31)
    assert len(enumerate_paths(sequential_diamonds(5), 32)) == 32


def test_loop_traversed_once():
    # entry -> s -> br -> (a1 -> exit | a2 -> s)
    b = GraphBuilder()
    entry, ex = b.add_node(NodeKind.ENTRY), b.add_node(NodeKind.EXIT)
    s, br = b.add_node(NodeKind.STATEMENT), b.add_node(NodeKind.BRANCH)
    a1, a2 = b.add_node(NodeKind.STATEMENT), b.add_node(NodeKind.STATEMENT)
    for e in [(entry, s), (s, br), (br, a1), (br, a2), (a1, ex), (a2, s)]:
        b.add_edge(*e)
    g = b.build()
    assert g.back_edges == frozenset({(a2, s)})
    seqs = [p.sequence for p in enumerate_paths(g, 10)]
    assert seqs == sorted([(entry, s, br, a1, ex), (entry, s, br, a2, s, br, a1, ex)])


@given(st.integers(0, 10**6), st.integers(0, 6), st.booleans())
@settings(max_examples=80, deadline=None)
def test_enumeration_matches_brute_force(seed, branches, loops):
    g = random_graph(seed, branches, loops)
    got = [p.sequence for p in enumerate_paths(g, 10**5)]
    assert got == brute_force_paths(g)
    assert got == [p.sequence for p in enumerate_paths(g, 10**5)]


@given(st.integers(0, 10**6), st.integers(0, 12))
@settings(max_examples=60, deadline=None)
def test_class_count_bounded_by_two_to_b(seed, branches):
    g = random_graph(seed, branches)
    assert g.branch_count == branches
    eq = derive_eqcp(g, labeler(g), 10**5)
    assert len(eq) <= 2**branches
    assert len(eq) == count_paths(g)


@pytest.mark.parametrize("b", range(1, 11))
def test_sequential_diamonds_reach_bound(b):
    g = sequential_diamonds(b)
    assert len(brute_force_paths(g)) == 2**b
    assert len(derive_eqcp(g, labeler(g), 2**b)) == 2**b


# -- classes and coupling ------------------------------------------------------


def test_eqcp_sizes():
    for g, n in [(diamond(), 2), (linear_chain(2), 1), (sequential_diamonds(3), 8)]:
        eq = derive_eqcp(g, labeler(g), 100)
        assert len(eq) == n
        assert all(c.key == c.path.sequence for c in eq)


def test_derive_is_deterministic():
    g = random_graph(5, 7, loops=True)
    assert derive_eqcp(g, labeler(g), 10**5) == derive_eqcp(g, labeler(g), 10**5)


def test_coupling_examples():
    assert coupling({1, 2}, {1, 2}) == 1
    assert coupling({1, 2}, {3}) == 0
    assert coupling({"a", "b", "c"}, {"b", "c", "d"}) == Fraction(1, 2)
    assert coupling(set(), set()) == 0


def test_total_coupling_examples():
    assert total_coupling([{1}, {2}, {3}]) == 0
    assert total_coupling([{1, 2}, {1, 2}]) == 1
    # pairwise J = 1/2: {a,b,c}, {b,c,d}, {b,c,e} -> |∩|=2, |∪|=4
    assert total_coupling([set("abc"), set("bcd"), set("bce")]) == Fraction(3, 2)


@given(st.lists(st.frozensets(st.integers(0, 30), max_size=12), min_size=65, max_size=120))
@settings(max_examples=30, deadline=None)
def test_dense_total_coupling_matches_pairwise(sets):
    expected = sum(
        (jaccard(sets[i], sets[j]) for i in range(len(sets)) for j in range(i + 1, len(sets))),
        Fraction(0),
    )
    assert total_coupling(sets) == expected


small_sets = st.frozensets(st.integers(0, 12), max_size=8)


@given(small_sets, small_sets)
def test_coupling_symmetric_and_bounded(a, b):
    assert coupling(a, b) == coupling(b, a)
    assert 0 <= coupling(a, b) <= 1
    if a:
        assert coupling(a, a) == 1


@given(small_sets, small_sets, small_sets)
@settings(max_examples=1000)
def test_jaccard_distance_triangle(a, b, c):
    d = lambda x, y: 1 - coupling(x, y)
    # the 0/0 convention puts two empty sets at distance 1; the metric holds on non-empty sets
    if a and b and c:
        assert d(a, c) <= d(a, b) + d(b, c)


@given(st.integers(0, 10**6), st.integers(1, 6), st.booleans())
@settings(max_examples=50, deadline=None)
def test_pairwise_coupling_matches_set_oracle(seed, branches, loops):
    g = random_graph(seed, branches, loops)
    classes = list(derive_eqcp(g, labeler(g), 10**5))
    for x in classes:
        for y in classes:
            assert coupling(x, y) == jaccard(x.key[1:-1], y.key[1:-1])


# -- size proxy and text format ------------------------------------------------


def test_size_proxy_examples():
    assert code_size_proxy(linear_chain(0)) == 3
    assert code_size_proxy(diamond()) == 10


@given(st.integers(0, 10**6), st.integers(0, 6))
@settings(max_examples=40, deadline=None)
def test_inserting_statement_adds_two(seed, branches):
    g = random_graph(seed, branches)
    b = GraphBuilder(g)
    e = g.edges[seed % len(g.edges)]
    s = b.add_node(NodeKind.STATEMENT)
    b.redirect_edge(e.src, e.dst, s)
    b.add_edge(s, e.dst)
    assert code_size_proxy(b.build()) == code_size_proxy(g) + 2


@given(st.integers(0, 10**6), st.integers(0, 8), st.booleans())
@settings(max_examples=40, deadline=None)
def test_text_round_trip(seed, branches, loops):
    g = random_graph(seed, branches, loops)
    text = format_cfg(g)
    assert parse_cfg(text) == g
    assert format_cfg(parse_cfg(text)) == text


def test_text_format_shape():
    text = format_cfg(diamond())
    lines = text.splitlines()
    assert lines[0] == "cfg 5 5 0 1"
    assert "node 0 entry" in lines
    assert sum(ln.startswith("edge ") for ln in lines) == 5


@pytest.mark.parametrize("bad", ["", "graph 1 2 3 4", "cfg 2 1 0 1\nnode 0 entry\n", "cfg x 0 0 1"])
def test_malformed_text_rejected(bad):
    with pytest.raises(CfgFormatError):
        parse_cfg(bad)
