import itertools
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurotree.brain_tree import (AlphaBracketError, DegenerateBracketWarning, EmptyGraphError,
                                  PathWeightConfig, PrunedTree, TreeError, WeightedGraph,
                                  alpha_bracket, alpha_sweep, dot_from_dict, export_tree,
                                  extract_trunks, graph_from_fc, high_order_fc, kruskal,
                                  optimal_path_terms, optimal_weight, path_weight, tree_diameter)
from neurotree.cmfc_loss import FcStrength
from neurotree.node_scoring import NodeScores, rank_descending
from oracles import (enumerated_high_order, min_spanning_forest_cost, n_components,
                     random_tree_edges)


def scores_of(s):
    s = np.asarray(s, dtype=float)
    return NodeScores(s, rank_descending(s))


def tree_from(edges, v, f=None, costs=None):
    costs = costs or [1.0] * len(edges)
    f = np.arange(1.0, v + 1) if f is None else np.asarray(f, dtype=float)
    return PrunedTree(v, [(i, j, c) for (i, j), c in zip(edges, costs)],
                      float(sum(costs)), f)


def adjacency(edges, v):
    adj = {u: [] for u in range(v)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return adj


# graph construction and MST

def test_uniform_fc_single_cost():
    g = graph_from_fc(FcStrength(np.ones(4), 1.0), np.ones((4, 4)), 0.5)
    assert len({c for *_, c in g.edges}) == 1 and len(g.edges) == 6
    t = kruskal(g)
    assert [(i, j) for i, j, _ in t.edges] == [(0, 1), (0, 2), (0, 3)]


def test_extreme_quantile_keeps_strongest(rng):
    a = rng.uniform(0, 1, (5, 5))
    g = graph_from_fc(FcStrength(np.ones(5), 1.0), a, 0.999999)
    sym = (a + a.T) / 2
    iu = np.triu_indices(5, 1)
    k = np.argmax(sym[iu])
    assert [(i, j) for i, j, _ in g.edges] == [(int(iu[0][k]), int(iu[1][k]))]


def test_graph_filter_oracle(rng):
    a = rng.standard_normal((6, 6))
    g = graph_from_fc(FcStrength(np.ones(6), 1.0), a, 0.4)
    sym = (np.abs(a) + np.abs(a.T)) / 2
    vals = [sym[i, j] for i in range(6) for j in range(i + 1, 6)]
    cut = np.quantile(vals, 0.4)
    expect = [(i, j) for i in range(6) for j in range(i + 1, 6) if sym[i, j] >= cut]
    assert [(i, j) for i, j, _ in g.edges] == expect
    top = max(vals)
    for i, j, c in g.edges:
        assert c == pytest.approx(1 - sym[i, j] / top, abs=1e-15)


def test_graph_errors():
    with pytest.raises(EmptyGraphError):
        graph_from_fc(FcStrength(np.zeros(3), 0.0), np.zeros((3, 3)), 0.5)
    with pytest.raises(TreeError):
        graph_from_fc(FcStrength(np.ones(3), 1.0), np.ones((3, 3)), 1.0)
    with pytest.raises(TreeError):
        WeightedGraph(3, [(1, 0, 1.0)])
    with pytest.raises(TreeError):
        WeightedGraph(3, [(0, 1, 1.0), (0, 1, 2.0)])
    with pytest.raises(TreeError):
        WeightedGraph(3, [(0, 1, np.inf)])


def test_four_cycle():
    g = WeightedGraph(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0), (0, 3, 4.0)])
    t = kruskal(g)
    assert sorted(c for *_, c in t.edges) == [1.0, 2.0, 3.0] and t.total_cost == 6.0


def test_complete_five_cayley(rng):
    edges = [(i, j, float(rng.uniform(0.1, 1))) for i, j in itertools.combinations(range(5), 2)]
    count = 0
    best = np.inf
    for subset in itertools.combinations(edges, 4):
        if n_components(5, subset) == 1:
            count += 1
            best = min(best, sum(c for *_, c in subset))
    assert count == 125
    assert kruskal(WeightedGraph(5, edges)).total_cost == pytest.approx(best, abs=1e-12)


def test_tree_input_unchanged():
    edges = [(0, 1, 0.3), (1, 2, 0.1), (1, 3, 0.7)]
    assert kruskal(WeightedGraph(4, edges)).edges == edges


def test_forest_and_parents():
    t = kruskal(WeightedGraph(5, [(0, 1, 0.2), (3, 4, 0.5)]))
    assert len(t.edges) == 5 - 3
    assert list(t.parents()) == [-1, 0, -1, -1, 3]


@settings(max_examples=60, deadline=None)
@given(v=st.integers(2, 6), seed=st.integers(0, 2**32 - 1), p=st.floats(0.2, 1.0))
def test_kruskal_matches_exhaustive(v, seed, p):
    rng = np.random.default_rng(seed)
    edges = [(i, j, float(rng.integers(1, 5))) for i, j in itertools.combinations(range(v), 2)
             if rng.random() < p]
    t = kruskal(WeightedGraph(v, edges))
    assert t.total_cost == pytest.approx(min_spanning_forest_cost(v, edges), abs=1e-12)
    assert len(t.edges) == v - n_components(v, edges)
    if v >= 4:
        assert tree_diameter(t) <= (v - 1) * (v - 2) / 2


def test_diameter():
    assert tree_diameter(tree_from([(0, 1), (1, 2), (2, 3)], 4)) == 3
    assert tree_diameter(tree_from([(0, 1), (0, 2), (0, 3)], 4)) == 2


# high-order aggregation

def test_order_zero_base(rng):
    t = tree_from([(0, 1), (1, 2)], 3, [0.5, 2.0, 4.0])
    assert high_order_fc(t, 0, 2, 0) == 4.5


def test_chain_order_one():
    f = [0.5, 2.0, 4.0]
    t = tree_from([(0, 1), (1, 2)], 3, f)
    assert high_order_fc(t, 0, 2, 1) == pytest.approx(4.5 + 6.5, abs=1e-15)
    assert high_order_fc(t, 0, 2, 1) == enumerated_high_order(adjacency([(0, 1), (1, 2)], 3), f, 0, 2, 1)


def test_star_common_neighbour():
    f = [3.0, 1.0, 2.0]  # centre 0, leaves 1 and 2
    edges = [(0, 1), (0, 2)]
    t = tree_from(edges, 3, f)
    assert high_order_fc(t, 1, 2, 1) == enumerated_high_order(adjacency(edges, 3), f, 1, 2, 1)


def test_high_order_errors():
    t = tree_from([(0, 1)], 2)
    with pytest.raises(TreeError):
        high_order_fc(t, 0, 0, 1)
    with pytest.raises(TreeError):
        high_order_fc(t, 0, 1, 3, max_order=2)
    with pytest.raises(TreeError):
        high_order_fc(PrunedTree(2, [(0, 1, 1.0)], 1.0), 0, 1, 0)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 2**32 - 1))
def test_high_order_matches_enumeration(n, seed):
    rng = np.random.default_rng(seed)
    edges = random_tree_edges(n, rng)
    f = rng.uniform(0, 1, n)
    t = tree_from(edges, n, f)
    adj = adjacency(edges, n)
    for i, j in itertools.permutations(range(n), 2):
        for s in range(4):
            assert abs(high_order_fc(t, i, j, s) - enumerated_high_order(adj, f, i, j, s)) < 1e-12


# path weights

def test_path_weight_endpoints():
    t = tree_from([(0, 1), (1, 2)], 3, [0.5, 2.0, 4.0])
    sc = scores_of([1.0, 2.0, 3.0])
    p = [0, 1, 2]
    w1 = path_weight(p, sc, t, PathWeightConfig(1.0, 2))
    w0 = path_weight(p, sc, t, PathWeightConfig(0.0, 2))
    assert w1 == 6.0
    # tree edges have no s >= 1 paths, so each order contributes F_i + F_j
    assert w0 == pytest.approx(2 * ((0.5 + 2.0) + (2.0 + 4.0)), abs=1e-15)
    assert path_weight(p, sc, t, PathWeightConfig(0.5, 2)) == pytest.approx((w0 + w1) / 2, abs=1e-14)


def test_path_weight_non_adjacent():
    t = tree_from([(0, 1), (1, 2)], 3)
    with pytest.raises(TreeError):
        path_weight([0, 2], scores_of([1, 1, 1]), t, PathWeightConfig())


def test_config_validation():
    with pytest.raises(TreeError):
        PathWeightConfig(alpha=1.5)
    with pytest.raises(TreeError):
        PathWeightConfig(max_order=-1)


# trunk extraction

def test_chain_exhausted_in_one_level():
    t = tree_from([(0, 1), (1, 2), (2, 3)], 4)
    h = extract_trunks(t, scores_of([5.0, 1.0, 1.0, 1.0]), PathWeightConfig(), l_max=2)
    assert [p.nodes for p in h.levels[0]] == [[0, 1, 2, 3]]
    assert h.levels[1] == []


def test_two_components_two_trunks():
    t = tree_from([(0, 1), (2, 3), (3, 4)], 5)
    h = extract_trunks(t, scores_of([1, 2, 3, 1, 1]), PathWeightConfig(), l_max=1)
    assert len(h.levels[0]) == 2


def _check_hierarchy(h, tree):
    seen = set()
    for paths in h.levels:
        for p in paths:
            for e in p.edges():
                assert e not in seen
                seen.add(e)
    assert len(seen) <= len(tree.edges)
    assert all(a >= b for a, b in zip(h.level_nodes, h.level_nodes[1:]))
    assert all(a >= b for a, b in zip(h.level_edges, h.level_edges[1:]))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 2**32 - 1), alpha=st.floats(0, 1))
def test_random_tree_hierarchy(n, seed, alpha):
    rng = np.random.default_rng(seed)
    edges = random_tree_edges(n, rng)
    t = tree_from(edges, n, rng.uniform(0, 1, n), list(rng.uniform(0, 1, len(edges))))
    sc = scores_of(rng.uniform(0, 1, n))
    cfg = PathWeightConfig(alpha, 2)
    h1 = extract_trunks(t, sc, cfg, 3)
    _check_hierarchy(h1, t)
    h2 = extract_trunks(tree_from(edges, n, t.node_strength, [c for *_, c in t.edges]), sc, cfg, 3)
    assert [[(p.nodes, p.weight) for p in ps] for ps in h1.levels] == \
        [[(p.nodes, p.weight) for p in ps] for ps in h2.levels]


# alpha analysis

def test_single_edge_bracket():
    t = tree_from([(0, 1)], 2, [1.0, 3.0])
    sc = scores_of([2.0, 0.5])
    ws, wc = 2.5, 2 * 4.0  # node term, fc term with S = 2
    target = 5.0
    lo, hi, a = alpha_bracket(t, sc, PathWeightConfig(0.5, 2), target)
    assert hi - lo < 1e-6
    exact = (wc - target) / (wc - ws)
    assert abs(a - exact) < 1e-6


def test_bracket_target_outside():
    t = tree_from([(0, 1)], 2, [1.0, 3.0])
    with pytest.raises(AlphaBracketError):
        alpha_bracket(t, scores_of([2.0, 0.5]), PathWeightConfig(0.5, 2), 100.0)


def test_bracket_degenerate():
    t = tree_from([(0, 1)], 2, [1.0, 1.0])
    with pytest.warns(DegenerateBracketWarning):
        assert alpha_bracket(t, scores_of([2.0, 2.0]), PathWeightConfig(0.5, 2), 4.0)[:2] == (0.0, 1.0)


def test_bracket_matches_grid(rng):
    n = 9
    edges = random_tree_edges(n, rng)
    t = tree_from(edges, n, rng.uniform(0, 1, n), list(rng.uniform(0, 1, len(edges))))
    sc = scores_of(rng.uniform(0, 3, n))
    cfg = PathWeightConfig(0.5, 2)
    ws, wc, _ = optimal_path_terms(t, sc, 2)
    g0, g1 = float(optimal_weight(ws, wc, 0.0)), float(optimal_weight(ws, wc, 1.0))
    target = 0.3 * g0 + 0.7 * g1
    lo, hi, a = alpha_bracket(t, sc, cfg, target)
    grid = np.linspace(0, 1, 10**6)
    vals = optimal_weight(ws, wc, grid) - target
    k = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    assert abs(a - grid[k]) < 1e-5
    # continuity and convexity of the optimal-path weight on the grid
    coarse = optimal_weight(ws, wc, np.linspace(0, 1, 1001))
    assert np.max(np.abs(np.diff(coarse))) < 1e-2 * (abs(g0) + abs(g1) + 1)
    assert np.all(np.diff(coarse, 2) >= -1e-9)


def test_alpha_sweep_rows():
    t = tree_from([(0, 1), (1, 2)], 3, [0.5, 2.0, 4.0])
    sc = scores_of([3.0, 1.0, 1.0])
    rows = alpha_sweep([(t, sc, 0)], [0.0, 0.5, 1.0], 2)
    assert [r[0] for r in rows] == [0.0, 0.5, 1.0]
    assert rows[0][2] == max(path_weight(p, sc, t, PathWeightConfig(0.0, 2)) for p in ([0, 1], [0, 1, 2]))
    assert rows[2][2] == max(path_weight(p, sc, t, PathWeightConfig(1.0, 2)) for p in ([0, 1], [0, 1, 2]))
    twin = alpha_sweep([(t, sc, 0), (t, sc, 1)], [0.0, 1.0], 2)
    assert twin[0][2] == twin[1][2] and twin[2][2] == twin[3][2]


# export

def test_empty_export():
    obj = {"nodes": [], "edges": []}
    assert dot_from_dict(obj) == "graph {}\n"


def test_three_node_chain_export():
    t = tree_from([(0, 1), (1, 2)], 3)
    h = extract_trunks(t, scores_of([3.0, 1.0, 2.0]), PathWeightConfig(), 1)
    dot, js = export_tree(h, ["a", "b"], {0: "VN", 1: "DMN"})
    assert sum(" -- " in line for line in dot.splitlines()) == 2
    assert 'label="a [VN]"' in dot and 'label="2"' in dot
    assert 'color="red"' in dot
    assert dot_from_dict(json.loads(js)) == dot


def test_level_colours_distinct(rng):
    n = 10
    edges = random_tree_edges(n, rng)
    t = tree_from(edges, n, rng.uniform(0, 1, n), list(rng.uniform(0, 1, len(edges))))
    h = extract_trunks(t, scores_of(rng.uniform(0, 1, n)), PathWeightConfig(), 3)
    dot, js = export_tree(h)
    levels = {e["level"] for e in json.loads(js)["edges"]}
    colours = {lvl: {line.split('color="')[1].split('"')[0] for line in dot.splitlines()
                     if f"level={lvl}]" in line} for lvl in levels if lvl}
    assert all(len(c) == 1 for c in colours.values())
    assert len({next(iter(c)) for c in colours.values()}) == len(colours)
    assert dot_from_dict(json.loads(js)) == dot
