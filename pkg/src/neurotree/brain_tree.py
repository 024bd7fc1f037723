"""MST pruning, high-order tree path weights and hierarchical trunk extraction."""
from __future__ import annotations

import heapq
import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .cmfc_loss import FcStrength
from .node_scoring import NodeScores

LEVEL_COLORS = {1: "red", 2: "hotpink", 3: "gold"}
EXTRA_LEVEL_COLOR = "orange"
BASE_EDGE_COLOR = "gray70"


class TreeError(ValueError):
    pass


class EmptyGraphError(TreeError):
    pass


class AlphaBracketError(TreeError):
    pass


class DegenerateBracketWarning(UserWarning):
    pass


@dataclass
class WeightedGraph:
    """Simple undirected graph; edges are (i, j, cost) with i < j and cost >= 0."""

    v: int
    edges: list[tuple[int, int, float]]
    node_strength: np.ndarray | None = None

    def __post_init__(self):
        seen = set()
        for i, j, c in self.edges:
            if not (0 <= i < j < self.v):
                raise TreeError(f"edge ({i}, {j}) must satisfy 0 <= i < j < v")
            if (i, j) in seen:
                raise TreeError(f"duplicate edge ({i}, {j})")
            if not np.isfinite(c) or c < 0:
                raise TreeError(f"edge ({i}, {j}) has invalid cost {c}")
            seen.add((i, j))


@dataclass
class PrunedTree:
    v: int
    edges: list[tuple[int, int, float]]
    total_cost: float
    node_strength: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(self.v)}
        for i, j, _ in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def edge_cost(self) -> dict[tuple[int, int], float]:
        return {(i, j): c for i, j, c in self.edges}

    def parents(self) -> np.ndarray:
        """Parent of each node with the lowest index of its component as root (-1)."""
        adj = self.adjacency()
        parent = np.full(self.v, -2, dtype=int)
        for root in range(self.v):
            if parent[root] != -2:
                continue
            parent[root] = -1
            stack = [root]
            while stack:
                u = stack.pop()
                for w in adj[u]:
                    if parent[w] == -2:
                        parent[w] = u
                        stack.append(w)
        return parent

    def strength(self) -> np.ndarray:
        if self.node_strength is None:
            raise TreeError("tree carries no node strengths")
        return self.node_strength


@dataclass
class PathWeightConfig:
    alpha: float = 0.5
    max_order: int = 2

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise TreeError("alpha must lie in [0, 1]")
        if self.max_order < 0:
            raise TreeError("max_order must be >= 0")


@dataclass
class TrunkPath:
    nodes: list[int]
    weight: float

    def edges(self) -> list[tuple[int, int]]:
        return [tuple(sorted(e)) for e in zip(self.nodes[:-1], self.nodes[1:])]


@dataclass
class TrunkHierarchy:
    levels: list[list[TrunkPath]]
    level_nodes: list[int]
    level_edges: list[int]
    tree: PrunedTree
    scores: NodeScores
    alpha: float

    def trunk_edges(self) -> dict[tuple[int, int], int]:
        out = {}
        for level, paths in enumerate(self.levels, start=1):
            for p in paths:
                for e in p.edges():
                    out[e] = level
        return out


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def graph_from_fc(strength: FcStrength, a_dyn: np.ndarray,
                  threshold_quantile: float = 0.5) -> WeightedGraph:
    """Keep pairs whose symmetrized |FC| is at or above the quantile.

    Cost is 1 - |FC| / max|FC| so strong connections are cheap and survive the
    minimum spanning tree.
    """
    if not 0 < threshold_quantile < 1:
        raise TreeError("threshold_quantile must lie in (0, 1)")
    a = np.abs(np.asarray(a_dyn, dtype=float))
    sym = 0.5 * (a + a.T)
    v = sym.shape[0]
    iu, ju = np.triu_indices(v, k=1)
    vals = sym[iu, ju]
    if vals.size == 0 or vals.max() <= 0:
        raise EmptyGraphError("no nonzero connectivity to threshold")
    cut = np.quantile(vals, threshold_quantile)
    top = vals.max()
    edges = [(int(i), int(j), float(1.0 - w / top))
             for i, j, w in zip(iu, ju, vals) if w >= cut and w > 0]
    if not edges:
        raise EmptyGraphError("edge set empty after thresholding")
    return WeightedGraph(v, edges, np.asarray(strength.c, dtype=float))


def kruskal(g: WeightedGraph) -> PrunedTree:
    """Minimum spanning forest; ties broken by (cost, i, j)."""
    uf = UnionFind(g.v)
    kept = []
    for i, j, c in sorted(g.edges, key=lambda e: (e[2], e[0], e[1])):
        if uf.union(i, j):
            kept.append((i, j, c))
    kept.sort(key=lambda e: (e[0], e[1]))
    return PrunedTree(g.v, kept, float(sum(c for _, _, c in kept)), g.node_strength)


def tree_diameter(tree: PrunedTree) -> int:
    """Longest shortest path in hops over all components (double BFS per component)."""
    adj = tree.adjacency()

    def far(src):
        dist = {src: 0}
        queue = [src]
        for u in queue:
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        node = max(dist, key=lambda n: (dist[n], -n))
        return node, dist[node], dist

    best = 0
    seen = set()
    for u in range(tree.v):
        if u in seen:
            continue
        a, _, comp = far(u)
        seen.update(comp)
        _, d, _ = far(a)
        best = max(best, d)
    return best


def high_order_table(tree: PrunedTree, start: int, max_order: int) -> list[dict[int, float]]:
    """Path-sum totals from ``start`` per order.

    Entry ``[s][j]`` is the sum over s-order paths start -> j (s distinct
    intermediate nodes) of the node strengths along the path. Paths are grown
    one neighbour at a time without stepping back, which on a tree visits
    exactly the simple paths.
    """
    f = tree.strength()
    adj = tree.adjacency()
    # state: (end, previous) -> (path count, accumulated node-strength sum)
    states = {(start, -1): (1, float(f[start]))}
    table = []
    for _order in range(max_order + 1):
        grown: dict[tuple[int, int], tuple[int, float]] = defaultdict(lambda: (0, 0.0))
        for (end, prev), (cnt, total) in states.items():
            for nb in adj[end]:
                if nb == prev:
                    continue
                c0, t0 = grown[(nb, end)]
                grown[(nb, end)] = (c0 + cnt, t0 + total + cnt * float(f[nb]))
        states = dict(grown)
        row: dict[int, float] = defaultdict(float)
        for (end, _prev), (_cnt, total) in states.items():
            if end != start:
                row[end] += total
        table.append(dict(row))
    # table[m] holds paths with m + 1 edges, i.e. m intermediate nodes
    return table


def high_order_fc(tree: PrunedTree, i: int, j: int, order: int, max_order: int | None = None) -> float:
    """F^(s)_ij = F_i + F_j + sum over s-order tree paths p of sum_{u in p} F_u."""
    if i == j:
        raise TreeError("high_order_fc needs distinct nodes")
    if max_order is not None and order > max_order:
        raise TreeError(f"order {order} exceeds max_order {max_order}")
    f = tree.strength()
    base = float(f[i] + f[j])
    if order == 0:
        return base
    key = ("ho", i, order)
    if key not in tree._cache:
        tree._cache[key] = high_order_table(tree, i, order)[order]
    return base + tree._cache[key].get(j, 0.0)


def _edge_fc_term(tree: PrunedTree, i: int, j: int, max_order: int) -> float:
    key = ("edge", min(i, j), max(i, j), max_order)
    if key not in tree._cache:
        tree._cache[key] = sum(high_order_fc(tree, i, j, s) for s in range(1, max_order + 1))
    return tree._cache[key]


def path_terms(path: list[int], scores: NodeScores, tree: PrunedTree,
               max_order: int) -> tuple[float, float]:
    """(node-score sum, high-order FC sum) for a tree path."""
    adj = tree.adjacency() if "adj" not in tree._cache else tree._cache["adj"]
    tree._cache["adj"] = adj
    node_term = float(sum(scores.s[u] for u in path))
    fc_term = 0.0
    for a, b in zip(path[:-1], path[1:]):
        if b not in adj[a]:
            raise TreeError(f"nodes {a} and {b} are not adjacent in the tree")
        fc_term += _edge_fc_term(tree, a, b, max_order)
    return node_term, fc_term


def path_weight(path: list[int], scores: NodeScores, tree: PrunedTree,
                cfg: PathWeightConfig) -> float:
    node_term, fc_term = path_terms(path, scores, tree, cfg.max_order)
    return cfg.alpha * node_term + (1.0 - cfg.alpha) * fc_term


def shortest_paths(adj: dict[int, dict[int, float]], start: int) -> dict[int, list[int]]:
    """Dijkstra by cumulative edge cost; returns the node list to every reachable node."""
    dist = {start: 0.0}
    pred: dict[int, int] = {}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for w in sorted(adj[u]):
            nd = d + adj[u][w]
            if w not in dist or nd < dist[w]:
                dist[w] = nd
                pred[w] = u
                heapq.heappush(heap, (nd, w))
    paths = {}
    for u in sorted(dist):
        p = [u]
        while p[-1] != start:
            p.append(pred[p[-1]])
        paths[u] = p[::-1]
    return paths


def _components(adj: dict[int, dict[int, float]]) -> list[list[int]]:
    seen = set()
    comps = []
    for u in sorted(adj):
        if u in seen:
            continue
        comp = [u]
        seen.add(u)
        for x in comp:
            for w in adj[x]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
        comps.append(sorted(comp))
    return comps


def _argmax_score(nodes, scores: NodeScores) -> int:
    return max(nodes, key=lambda u: (scores.s[u], -u))


def candidate_paths(tree_adj, start) -> dict[int, list[int]]:
    return {u: p for u, p in shortest_paths(tree_adj, start).items() if u != start}


def _weighted_adj(edges) -> dict[int, dict[int, float]]:
    adj: dict[int, dict[int, float]] = defaultdict(dict)
    for (i, j), c in edges.items():
        adj[i][j] = c
        adj[j][i] = c
    return adj


def extract_trunks(tree: PrunedTree, scores: NodeScores, cfg: PathWeightConfig,
                   l_max: int = 3) -> TrunkHierarchy:
    """Level-wise trunk extraction on the pruned tree.

    Per level and connected component: start at the highest-scoring node, take
    the shortest path to the node maximizing the composite weight, then remove
    that level's trunk edges and drop isolated nodes.
    """
    remaining = tree.edge_cost()
    levels: list[list[TrunkPath]] = []
    level_nodes: list[int] = []
    level_edges: list[int] = []
    for _level in range(l_max):
        adj = _weighted_adj(remaining)
        level_nodes.append(len(adj))
        level_edges.append(len(remaining))
        paths: list[TrunkPath] = []
        for comp in _components(adj):
            start = _argmax_score(comp, scores)
            best = None
            for end, p in candidate_paths(adj, start).items():
                w = path_weight(p, scores, tree, cfg)
                if best is None or w > best.weight:
                    best = TrunkPath(p, w)
            paths.append(best)
        levels.append(paths)
        for p in paths:
            for e in p.edges():
                remaining.pop(e, None)
    return TrunkHierarchy(levels, level_nodes, level_edges, tree, scores, cfg.alpha)


def optimal_path_terms(tree: PrunedTree, scores: NodeScores, max_order: int,
                       start: int | None = None) -> tuple[np.ndarray, np.ndarray, list[list[int]]]:
    """Node and FC terms of every candidate path from ``start`` (default: top-scored node)."""
    adj = _weighted_adj(tree.edge_cost())
    if start is None:
        start = _argmax_score([u for u in adj], scores) if adj else 0
    paths = list(candidate_paths(adj, start).values()) if start in adj else []
    if not paths:
        raise TreeError("start node has no incident tree edges")
    terms = np.array([path_terms(p, scores, tree, max_order) for p in paths])
    return terms[:, 0], terms[:, 1], paths


def optimal_weight(ws: np.ndarray, wc: np.ndarray, alpha) -> np.ndarray:
    """max over candidate paths of alpha * W_S + (1 - alpha) * W_C, vectorized in alpha."""
    alpha = np.asarray(alpha, dtype=float)
    return np.max(alpha[..., None] * ws + (1.0 - alpha[..., None]) * wc, axis=-1)


def alpha_bracket(tree: PrunedTree, scores: NodeScores, cfg: PathWeightConfig, target: float,
                  start: int | None = None, tol: float = 1e-6):
    """Bisection for the alpha at which the optimal path weight crosses ``target``.

    W(S) and W(C) are the optimal weights at alpha = 1 (node scores only) and
    alpha = 0 (connectivity only). Returns (alpha_L, alpha_U, alpha_star).
    """
    ws, wc, _ = optimal_path_terms(tree, scores, cfg.max_order, start)
    w_s = float(optimal_weight(ws, wc, 1.0))
    w_c = float(optimal_weight(ws, wc, 0.0))
    if w_s == w_c:
        warnings.warn("W(S) equals W(C); bracket is the full interval",
                      DegenerateBracketWarning, stacklevel=2)
        return 0.0, 1.0, 0.5
    if not min(w_s, w_c) <= target <= max(w_s, w_c):
        raise AlphaBracketError(
            f"target {target} outside [{min(w_s, w_c)}, {max(w_s, w_c)}]")
    lo, hi = 0.0, 1.0
    f_lo = w_c - target
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        f_mid = float(optimal_weight(ws, wc, mid)) - target
        if f_mid == 0:
            lo = hi = mid
            break
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return lo, hi, 0.5 * (lo + hi)


def alpha_sweep(entries, alphas, max_order: int = 2) -> list[tuple[float, int, float]]:
    """Mean optimal-path weight per (alpha, label).

    ``entries`` is an iterable of (tree, scores, label).
    """
    by_label: dict[int, list[np.ndarray]] = defaultdict(list)
    alphas = np.asarray(alphas, dtype=float)
    for tree, scores, label in entries:
        ws, wc, _ = optimal_path_terms(tree, scores, max_order)
        by_label[int(label)].append(optimal_weight(ws, wc, alphas))
    rows = []
    for a_idx, a in enumerate(alphas):
        for label in sorted(by_label):
            vals = [w[a_idx] for w in by_label[label]]
            rows.append((float(a), label, float(np.mean(vals))))
    return rows


def hierarchy_to_dict(h: TrunkHierarchy, region_names: list[str] | None = None,
                      network_map: dict[int, str] | None = None) -> dict:
    trunk = h.trunk_edges()
    used = sorted({u for i, j, _ in h.tree.edges for u in (i, j)})

    def label(u):
        if region_names is None or u >= len(region_names):
            return str(u)
        name = region_names[u]
        net = (network_map or {}).get(u)
        return f"{name} [{net}]" if net else name

    return {
        "alpha": float(h.alpha),
        "nodes": [{"index": int(u), "label": label(u), "score": float(h.scores.s[u])}
                  for u in used],
        "edges": [{"i": int(i), "j": int(j), "cost": float(c), "level": trunk.get((i, j), 0)}
                  for i, j, c in sorted(h.tree.edges)],
        "levels": [[{"nodes": [int(u) for u in p.nodes], "weight": float(p.weight)}
                    for p in paths] for paths in h.levels],
        "level_nodes": [int(n) for n in h.level_nodes],
        "level_edges": [int(n) for n in h.level_edges],
    }


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def dot_from_dict(obj: dict) -> str:
    """Render the JSON mirror as an undirected DOT graph, canonical ordering."""
    if not obj.get("edges"):
        return "graph {}\n"
    lines = ["graph brain_tree {", "  node [shape=ellipse];"]
    for n in sorted(obj["nodes"], key=lambda n: n["index"]):
        lines.append(f'  n{n["index"]} [label="{_dot_escape(n["label"])}"];')
    for e in sorted(obj["edges"], key=lambda e: (e["i"], e["j"])):
        level = e["level"]
        if level:
            color = LEVEL_COLORS.get(level, EXTRA_LEVEL_COLOR)
            attrs = f'color="{color}", penwidth={max(1, 4 - level)}, level={level}'
        else:
            attrs = f'color="{BASE_EDGE_COLOR}", style=dashed'
        lines.append(f'  n{e["i"]} -- n{e["j"]} [{attrs}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_tree(h: TrunkHierarchy, region_names: list[str] | None = None,
                network_map: dict[int, str] | None = None) -> tuple[str, str]:
    """Return (DOT text, JSON text) for a trunk hierarchy."""
    obj = hierarchy_to_dict(h, region_names, network_map)
    return dot_from_dict(obj), json.dumps(obj, indent=1, sort_keys=True) + "\n"
