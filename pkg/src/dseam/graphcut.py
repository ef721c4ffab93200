"""Graph-cut seam finder backed by an exact Dinic max-flow solver."""
from __future__ import annotations

from collections import deque

import numpy as np

from .imgcore import MaskPair, PartitionError, RegionPartition

EPSILON = 1e-6
INF_CAP = 1e30
_RESIDUAL_TOL = 1e-12


class FlowGraph:
    """Directed graph in paired-arc form: arc ``e`` and ``e ^ 1`` are mutual reverses."""

    def __init__(self, n_nodes: int, source: int, sink: int):
        self.n = n_nodes
        self.source = source
        self.sink = sink
        self.head: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.node_of_pixel: dict[tuple[int, int], int] = {}
        self.n_links = 0
        self.t_links = 0

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> int:
        if cap < 0 or rev_cap < 0:
            raise ValueError("capacities must be nonnegative")
        e = len(self.head)
        self.head += [v, u]
        self.cap += [float(cap), float(rev_cap)]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    @property
    def n_arcs(self) -> int:
        return len(self.head)

    def cut_capacity(self, source_side) -> float:
        """Capacity of arcs leaving ``source_side`` (original capacities)."""
        side = np.asarray(source_side, bool)
        total = 0.0
        for u in range(self.n):
            if not side[u]:
                continue
            for e in self.adj[u]:
                if not side[self.head[e]]:
                    total += self.cap[e]
        return total


def max_flow(g: FlowGraph) -> tuple[float, np.ndarray]:
    """Maximum s-t flow and the source side of a minimum cut.

    The graph is left untouched; the solver works on a private residual copy.
    """
    head = g.head
    adj = g.adj
    res = list(g.cap)
    s, t, n = g.source, g.sink, g.n
    flow = 0.0
    while True:
        level = [-1] * n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            lu = level[u] + 1
            for e in adj[u]:
                v = head[e]
                if level[v] < 0 and res[e] > _RESIDUAL_TOL:
                    level[v] = lu
                    q.append(v)
        if level[t] < 0:
            break
        it = [0] * n
        while True:
            pushed = _blocking_push(s, t, head, adj, res, level, it)
            if pushed <= 0.0:
                break
            flow += pushed
    source_side = np.zeros(n, dtype=bool)
    source_side[s] = True
    q = deque([s])
    while q:
        u = q.popleft()
        for e in adj[u]:
            v = head[e]
            if not source_side[v] and res[e] > _RESIDUAL_TOL:
                source_side[v] = True
                q.append(v)
    return flow, source_side


def _blocking_push(s, t, head, adj, res, level, it) -> float:
    # one augmenting path in the level graph, iterative DFS with current-arc pointers
    path: list[int] = []
    u = s
    while True:
        if u == t:
            bottleneck = min(res[e] for e in path)
            for e in path:
                res[e] -= bottleneck
                res[e ^ 1] += bottleneck
            return bottleneck
        arcs = adj[u]
        advanced = False
        while it[u] < len(arcs):
            e = arcs[it[u]]
            v = head[e]
            if res[e] > _RESIDUAL_TOL and level[v] == level[u] + 1:
                path.append(e)
                u = v
                advanced = True
                break
            it[u] += 1
        if advanced:
            continue
        # dead end: retreat and make u unreachable in this phase
        level[u] = -1
        if not path:
            return 0.0
        e = path.pop()
        u = head[e ^ 1]
        it[u] += 1


def pixel_difference(img_a, img_b) -> np.ndarray:
    d = np.abs(np.asarray(img_a, float) - np.asarray(img_b, float))
    return d.sum(axis=2) if d.ndim == 3 else d


def _neighbours(mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mask)
    out[1:] |= mask[:-1]
    out[:-1] |= mask[1:]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def build_seam_graph(img_a, img_b, part: RegionPartition, eps: float = EPSILON) -> FlowGraph:
    """One node per overlap pixel, 4-connected n-links ``D(p) + D(q) + eps``.

    Overlap pixels next to r11 get an infinite source arc, next to r22 an
    infinite sink arc. A pixel touching both regions (at a demarcation
    corner) gets neither, so that a finite cut always exists.
    """
    r12 = part.r12
    if not r12.any():
        raise PartitionError("empty overlap")
    near_a = r12 & _neighbours(part.r11)
    near_b = r12 & _neighbours(part.r22)
    both = near_a & near_b
    near_a, near_b = near_a & ~both, near_b & ~both
    if not near_a.any() or not near_b.any():
        raise PartitionError("overlap is not bordered by both r11 and r22; no seam exists")

    d = pixel_difference(img_a, img_b)
    pix = np.argwhere(r12)
    index = -np.ones(r12.shape, dtype=int)
    index[r12] = np.arange(len(pix))
    n = len(pix)
    g = FlowGraph(n + 2, source=n, sink=n + 1)
    g.node_of_pixel = {(int(y), int(x)): i for i, (y, x) in enumerate(pix)}
    h, w = r12.shape
    for i, (y, x) in enumerate(pix):
        for yy, xx in ((y, x + 1), (y + 1, x)):
            if yy < h and xx < w and r12[yy, xx]:
                cap = d[y, x] + d[yy, xx] + eps
                g.add_edge(i, int(index[yy, xx]), cap, cap)
                g.n_links += 1
        if near_a[y, x]:
            g.add_edge(g.source, i, INF_CAP)
            g.t_links += 1
        if near_b[y, x]:
            g.add_edge(i, g.sink, INF_CAP)
            g.t_links += 1
    return g


def gc_labels(img_a, img_b, part: RegionPartition, eps: float = EPSILON):
    """Source-side overlap mask and the min-cut capacity."""
    g = build_seam_graph(img_a, img_b, part, eps)
    flow, side = max_flow(g)
    label = np.zeros(part.shape, dtype=bool)
    for (y, x), i in g.node_of_pixel.items():
        label[y, x] = side[i]
    return label, flow


def gc_seam(img_a, img_b, part: RegionPartition, eps: float = EPSILON) -> MaskPair:
    label, _ = gc_labels(img_a, img_b, part, eps)
    mask_a = part.r11 | (part.r12 & label)
    return MaskPair(mask_a, part.union & ~mask_a)
