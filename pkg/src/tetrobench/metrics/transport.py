"""Exact optimal transport between discrete distributions on a pixel grid.

The solver is the transportation (network) simplex: a least-cost initial
basis, node potentials updated incrementally on the subtree cut off by each
pivot, and block pricing over rows of the cost matrix. It is exact up to
floating-point arithmetic; no entropic smoothing is involved.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

PRUNE_BELOW = 1e-12


@dataclass(frozen=True)
class MassDistribution:
    """Non-negative weights summing to one on unique (row, col) pixel coordinates."""

    support: np.ndarray  # (n, 2) int
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(support) != len(weights):
            raise ValueError("support and weights differ in length")
        if len(weights) == 0:
            raise ValueError("mass distribution has empty support")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        if len(np.unique(support, axis=0)) != len(support):
            raise ValueError("support coordinates must be unique")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_grid(cls, grid, prune: float = PRUNE_BELOW) -> "MassDistribution":
        """|grid| normalised to unit mass; pixels below ``prune`` after normalisation are dropped."""
        a = np.abs(np.asarray(grid, dtype=np.float64))
        s = a.sum()
        if not s > 0:
            raise ValueError("grid has no mass")
        w = a / s
        keep = w >= prune
        w = w[keep]
        return cls(np.argwhere(keep), w / w.sum())

    @classmethod
    def uniform(cls, mask) -> "MassDistribution":
        coords = np.argwhere(np.asarray(mask, dtype=bool))
        if len(coords) == 0:
            raise ValueError("mask is empty")
        return cls(coords, np.full(len(coords), 1.0 / len(coords)))


def euclidean_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :].astype(np.float64) - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _least_cost_basis(supply, demand, cost):
    m, n = cost.shape
    s, d = supply.copy(), demand.copy()
    row_done = np.zeros(m, bool)
    col_done = np.zeros(n, bool)
    rows_left, cols_left = m, n
    cells, flows = [], []
    for flat in np.argsort(cost, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if row_done[i] or col_done[j]:
            continue
        x = min(s[i], d[j])
        cells.append((i, j))
        flows.append(x)
        s[i] -= x
        d[j] -= x
        if rows_left == 1 and cols_left == 1:
            break
        if (s[i] <= d[j] and rows_left > 1) or cols_left == 1:
            row_done[i] = True
            rows_left -= 1
            s[i] = 0.0
        else:
            col_done[j] = True
            cols_left -= 1
            d[j] = 0.0
    return cells, flows


def transport_plan(supply, demand, cost, max_iter: int | None = None):
    """Minimum-cost plan moving ``supply`` onto ``demand``.

    Returns ``(cost, cells, flows)`` where ``cells`` lists the basic (i, j)
    entries of the optimal plan and ``flows`` their amounts.
    """
    supply = np.asarray(supply, dtype=np.float64)
    demand = np.asarray(demand, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    m, n = cost.shape
    if m == 0 or n == 0:
        raise ValueError("empty support")
    if len(supply) != m or len(demand) != n:
        raise ValueError(f"cost matrix {cost.shape} does not match masses ({m}, {n})")
    cells, flows = _least_cost_basis(supply, demand, cost)
    if m == 1 or n == 1:
        return float(sum(f * cost[c] for c, f in zip(cells, flows))), cells, flows

    # spanning tree over nodes: k < m is row k, m + j is column j; root is row 0
    N = m + n
    adj = [[] for _ in range(N)]
    for idx, (i, j) in enumerate(cells):
        adj[i].append((m + j, idx))
        adj[m + j].append((i, idx))
    parent = [-1] * N
    pedge = [-1] * N
    depth = [0] * N
    children = [set() for _ in range(N)]
    pot = np.zeros(N)
    seen = [False] * N
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w, idx in adj[u]:
            if not seen[w]:
                seen[w] = True
                i, j = cells[idx]
                pot[w] = cost[i, j] - pot[u]
                parent[w], pedge[w], depth[w] = u, idx, depth[u] + 1
                children[u].add(w)
                queue.append(w)

    tol = 1e-12 * max(float(cost.max()), 1.0)
    max_iter = max_iter or 50 * N * max(m, n)
    block = max(1, min(m, (1 << 16) // n))
    n_blocks = -(-m // block)
    cursor = 0
    for _ in range(max_iter):
        # block pricing: first block (cyclically) holding a negative reduced cost
        entering = None
        for _b in range(n_blocks):
            r0 = cursor * block
            r1 = min(r0 + block, m)
            cursor = (cursor + 1) % n_blocks
            red = cost[r0:r1] - pot[r0:r1, None] - pot[None, m:]
            flat = int(np.argmin(red))
            if red.flat[flat] < -tol:
                bi, ej = divmod(flat, n)
                entering = (r0 + bi, ej, float(red.flat[flat]))
                break
        if entering is None:
            break
        ei, ej, rc = entering
        u, v = ei, m + ej

        # cycle = tree path from u to v
        a, b = u, v
        up_u, up_v = [], []
        while a != b:
            if depth[a] >= depth[b]:
                up_u.append(a)
                a = parent[a]
            else:
                up_v.append(b)
                b = parent[b]
        path_nodes = up_u + up_v[::-1]          # lower endpoint of each path edge
        path = [pedge[x] for x in path_nodes]
        minus = range(0, len(path), 2)
        pos = min(minus, key=lambda k: (flows[path[k]], k))
        theta = flows[path[pos]]
        for k in range(len(path)):
            if k % 2 == 0:
                flows[path[k]] -= theta
            else:
                flows[path[k]] += theta
        leave = path[pos]
        c = path_nodes[pos]
        k_node, other = (u, v) if pos < len(up_u) else (v, u)

        # detached subtree under c shifts its potentials
        stack, sub = [c], []
        while stack:
            x = stack.pop()
            sub.append(x)
            stack.extend(children[x])
        sub = np.asarray(sub)
        same = (sub < m) == (k_node < m)
        pot[sub[same]] += rc
        pot[sub[~same]] -= rc

        # re-hang the subtree from k_node under other
        chain = [k_node]
        while chain[-1] != c:
            chain.append(parent[chain[-1]])
        children[parent[c]].discard(c)
        old_edges = [pedge[x] for x in chain]
        for t in range(len(chain) - 1, 0, -1):
            x, below = chain[t], chain[t - 1]
            children[x].discard(below)
            children[below].add(x)
            parent[x] = below
            pedge[x] = old_edges[t - 1]
        parent[k_node] = other
        pedge[k_node] = leave
        children[other].add(k_node)
        cells[leave] = (ei, ej)
        flows[leave] = theta
        stack = [k_node]
        depth[k_node] = depth[other] + 1
        while stack:
            x = stack.pop()
            for ch in children[x]:
                depth[ch] = depth[x] + 1
                stack.append(ch)
    else:
        raise RuntimeError(f"transportation simplex did not converge in {max_iter} pivots")
    flows = [max(f, 0.0) for f in flows]
    total = float(sum(f * cost[c] for c, f in zip(cells, flows)))
    return total, cells, flows


def optimal_transport_cost(supply: MassDistribution, demand: MassDistribution) -> float:
    """Exact earth mover's cost with Euclidean pixel distance as ground metric."""
    cost = euclidean_costs(supply.support, demand.support)
    return transport_plan(supply.weights, demand.weights, cost)[0]
