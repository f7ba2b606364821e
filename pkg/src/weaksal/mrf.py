"""Region graph construction and exact binary MRF inference.

The hidden saliency labeling is the argmax of a sum of per-region benefits
minus nonnegative disagreement penalties on neighboring regions.  That
objective is submodular, so a single s/t min-cut solves it exactly; a
brute-force enumerator is kept alongside as the verification oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonSubmodularError, TooLargeError


@dataclass
class RegionGraph:
    """Undirected region adjacency graph with similarity weights.

    Edges are stored once with j < k.  Weights live in (0, 1]: 1 for
    identical mean color, decaying with squared color distance.
    """

    n_regions: int
    edges: np.ndarray      # (E, 2) int, each row (j, k) with j < k
    weights: np.ndarray    # (E,) float in (0, 1]

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(self.edges) != len(self.weights):
            raise ValueError("edge/weight count mismatch")
        if len(self.edges):
            j, k = self.edges[:, 0], self.edges[:, 1]
            if np.any(j == k):
                raise ValueError("self-loop in region graph")
            if np.any(j >= k):
                raise ValueError("edges must be stored with j < k")
            if np.any(k >= self.n_regions) or np.any(j < 0):
                raise ValueError("edge endpoint out of range")
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise ValueError("duplicate edge")
            if np.any(self.weights <= 0) or np.any(self.weights > 1):
                raise ValueError("edge weights must lie in (0, 1]")

    def neighbor_weights(self, j):
        """Return (neighbors, weights) of region j."""
        mask_j = self.edges[:, 0] == j
        mask_k = self.edges[:, 1] == j
        nbrs = np.concatenate([self.edges[mask_j, 1], self.edges[mask_k, 0]])
        w = np.concatenate([self.weights[mask_j], self.weights[mask_k]])
        return nbrs, w


@dataclass
class EnergyProblem:
    """Binary labeling problem: per-region benefits plus smoothness penalties.

    `unary1[j]` / `unary0[j]` are the benefits of assigning region j label
    1 / 0; `penalties[e]` is charged whenever the endpoints of edge e
    disagree.  All penalties must be >= 0 (submodularity).
    """

    unary0: np.ndarray
    unary1: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.intp))
    penalties: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.unary0 = np.asarray(self.unary0, dtype=np.float64).reshape(-1)
        self.unary1 = np.asarray(self.unary1, dtype=np.float64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        self.penalties = np.asarray(self.penalties, dtype=np.float64).reshape(-1)
        if len(self.unary0) != len(self.unary1):
            raise ValueError("unary vectors differ in length")
        if len(self.edges) != len(self.penalties):
            raise ValueError("edge/penalty count mismatch")
        if not (np.all(np.isfinite(self.unary0)) and np.all(np.isfinite(self.unary1))
                and np.all(np.isfinite(self.penalties))):
            raise ValueError("energy terms must be finite")

    @property
    def n(self):
        return len(self.unary0)

    def to_text(self):
        """One line per node and edge; used for test fixtures."""
        lines = [f"node {i} {float(self.unary0[i])!r} {float(self.unary1[i])!r}"
                 for i in range(self.n)]
        lines += [f"edge {j} {k} {float(p)!r}" for (j, k), p in zip(self.edges, self.penalties)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        u0, u1, edges, pen = [], [], [], []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "node":
                u0.append(float(parts[2]))
                u1.append(float(parts[3]))
            elif parts[0] == "edge":
                edges.append((int(parts[1]), int(parts[2])))
                pen.append(float(parts[3]))
            else:
                raise ValueError(f"unrecognized line: {line!r}")
        return cls(np.array(u0), np.array(u1),
                   np.array(edges, dtype=np.intp).reshape(-1, 2), np.array(pen))


def build_graph(seg, app, sigma_c=0.25):
    """Region adjacency graph weighted by mean-Lab similarity.

    One edge per pixel-adjacent (4-connected) region pair; the weight is
    exp(-||c_j - c_k||^2 / (2 sigma_c^2)) with c the normalized mean Lab
    vector of each region.
    """
    if sigma_c <= 0:
        raise ValueError("sigma_c must be positive")
    edges = adjacency_pairs(seg.labels)
    c = app.mean_lab
    d2 = np.sum((c[edges[:, 0]] - c[edges[:, 1]]) ** 2, axis=1)
    weights = np.exp(-d2 / (2.0 * sigma_c ** 2))
    return RegionGraph(seg.n_regions, edges, weights)


def adjacency_pairs(labels):
    """Unique 4-connected region label pairs (j < k) of a label map."""
    a = np.concatenate([
        np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1),
        np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1),
    ])
    a = a[a[:, 0] != a[:, 1]]
    a = np.sort(a, axis=1)
    if len(a) == 0:
        return np.empty((0, 2), dtype=np.intp)
    return np.unique(a, axis=0).astype(np.intp)


def objective_value(prob, h):
    """Benefit of labeling h: sum of chosen unaries minus disagreement cost."""
    h = np.asarray(h, dtype=bool)
    val = float(np.sum(np.where(h, prob.unary1, prob.unary0)))
    if len(prob.edges):
        cut = h[prob.edges[:, 0]] != h[prob.edges[:, 1]]
        val -= float(np.sum(prob.penalties[cut]))
    return val


def max_benefit_labeling(prob):
    """Exact maximization of the labeling benefit via s/t min-cut.

    Returns (h, value) where h is the optimal 0/1 labeling and value the
    objective at h.  Regions left indifferent by the cut take label 0
    (they are exactly the nodes unreachable from the source in the final
    residual network).

    Raises NonSubmodularError when any penalty is negative.
    """
    if np.any(prob.penalties < 0):
        raise NonSubmodularError("negative disagreement penalty")
    n = prob.n
    if n == 0:
        return np.zeros(0, dtype=bool), 0.0

    dinic = _Dinic(n + 2)
    source, sink = n, n + 1
    # Capacity relu(u1 - u0) toward label 1, relu(u0 - u1) toward label 0;
    # the max(u0, u1) baseline is a constant absorbed by objective_value.
    gain1 = prob.unary1 - prob.unary0
    for j in range(n):
        g = gain1[j]
        if g > 0:
            dinic.add_edge(source, j, g, 0.0)
        elif g < 0:
            dinic.add_edge(j, sink, -g, 0.0)
    for (j, k), lam in zip(prob.edges, prob.penalties):
        if lam > 0:
            dinic.add_edge(int(j), int(k), lam, lam)

    dinic.max_flow(source, sink)
    reached = dinic.reachable(source)
    h = reached[:n]
    return h, objective_value(prob, h)


def brute_force(prob):
    """Exhaustive maximization over all 2^N labelings (N <= 20).

    Ties are broken by the lowest binary value of h, reading h_0 as the
    least significant bit; the value is evaluated exactly as in
    `objective_value` so the two solvers are comparable bitwise.
    """
    n = prob.n
    if n > 20:
        raise TooLargeError(f"brute force limited to N <= 20, got {n}")
    if n == 0:
        return np.zeros(0, dtype=bool), 0.0
    codes = np.arange(2 ** n, dtype=np.uint32)
    labelings = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    vals = labelings @ prob.unary1 + (~labelings) @ prob.unary0
    if len(prob.edges):
        cut = labelings[:, prob.edges[:, 0]] != labelings[:, prob.edges[:, 1]]
        vals -= cut @ prob.penalties
    best = int(np.argmax(vals))          # first max -> lowest binary value
    h = labelings[best]
    return h, objective_value(prob, h)


class _Dinic:
    """Max-flow by shortest augmenting paths with blocking flow.

    Float capacities are safe here: an edge is saturated only when it is
    the path bottleneck, and `cap - cap` is exactly zero, so residual
    positivity tests stay meaningful.
    """

    def __init__(self, n_nodes):
        self.n = n_nodes
        self.head = [[] for _ in range(n_nodes)]
        self.to = []
        self.cap = []

    def add_edge(self, u, v, cap_forward, cap_backward):
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap_forward))
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(cap_backward))

    def _levels(self, source, sink):
        level = [-1] * self.n
        level[source] = 0
        queue = [source]
        for u in queue:
            for e in self.head[u]:
                v = self.to[e]
                if level[v] < 0 and self.cap[e] > 0.0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[sink] >= 0 else None

    def _blocking_flow(self, source, sink, level):
        to, cap, head = self.to, self.cap, self.head
        it = [0] * self.n
        total = 0.0
        # iterative DFS: stack of (node, edge id taken to reach it)
        path = []
        u = source
        while True:
            if u == sink:
                bottleneck = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= bottleneck
                    cap[e ^ 1] += bottleneck
                total += bottleneck
                # retreat to the first saturated edge on the path
                for i, e in enumerate(path):
                    if cap[e] <= 0.0:
                        del path[i:]
                        break
                u = to[path[-1]] if path else source
                continue
            advanced = False
            while it[u] < len(head[u]):
                e = head[u][it[u]]
                v = to[e]
                if cap[e] > 0.0 and level[v] == level[u] + 1:
                    path.append(e)
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if u == source:
                    break
                level[u] = -1            # dead end, prune
                e = path.pop()
                u = to[e ^ 1]
                it[u] += 1
        return total

    def max_flow(self, source, sink):
        flow = 0.0
        while True:
            level = self._levels(source, sink)
            if level is None:
                return flow
            flow += self._blocking_flow(source, sink, level)

    def reachable(self, source):
        """Nodes reachable from `source` through positive residuals."""
        seen = np.zeros(self.n, dtype=bool)
        seen[source] = True
        queue = [source]
        for u in queue:
            for e in self.head[u]:
                v = self.to[e]
                if not seen[v] and self.cap[e] > 0.0:
                    seen[v] = True
                    queue.append(v)
        return seen
