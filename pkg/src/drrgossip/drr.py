"""Forest construction by distributed random ranking.

``run_drr`` is the complete-graph version: every node probes up to
``ceil(log2 n) - 1`` random peers, one per round, and attaches to the first one
that outranks it. ``run_local_drr`` is the sparse-graph version: every node
attaches to its highest-ranked neighbour. Nodes that find nobody above them
become roots, and the parent links form a forest of disjoint trees.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .topology import Graph, GraphKind
from .transport import NetworkSim, Phase

NO_PARENT = -1


def rank_order(rank: np.ndarray) -> np.ndarray:
    """Position of each node in the total order (rank value, then node id)."""
    n = len(rank)
    order = np.lexsort((np.arange(n), rank))
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    return pos


def default_probe_budget(n: int) -> int:
    if n <= 1:
        return 0
    return max(0, math.ceil(math.log2(n)) - 1)


def _ancestors(parent: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointer jumping: (top ancestor, distance to it, on-cycle mask)."""
    n = len(parent)
    ids = np.arange(n)
    is_root = parent == NO_PARENT
    anc = np.where(is_root, ids, parent)
    dist = (~is_root).astype(np.int64)
    for _ in range(max(1, n.bit_length() + 1)):
        nxt = anc[anc]
        if np.array_equal(nxt, anc):
            break
        dist = dist + dist[anc]
        anc = nxt
    stuck = parent[anc] != NO_PARENT
    return anc, dist, stuck


@dataclass(frozen=True, eq=False)
class Forest:
    n: int
    rank: np.ndarray
    parent: np.ndarray
    children: tuple[np.ndarray, ...]
    roots: np.ndarray
    root_of: np.ndarray

    @classmethod
    def from_parents(cls, rank, parent) -> "Forest":
        rank = np.array(rank, dtype=np.float64)
        parent = np.array(parent, dtype=np.int64)
        n = len(parent)
        if len(rank) != n:
            raise ValueError("rank and parent lengths differ")
        anc, _, stuck = _ancestors(parent)
        root_of = np.where(stuck, NO_PARENT, anc)
        child_ids = np.flatnonzero(parent != NO_PARENT)
        order = child_ids[np.argsort(parent[child_ids], kind="stable")]
        splits = np.searchsorted(parent[order], np.arange(1, n))
        children = tuple(np.split(order, splits)) if n else ()
        roots = np.flatnonzero(parent == NO_PARENT)
        for arr in (rank, parent, root_of, roots):
            arr.setflags(write=False)
        return cls(n=n, rank=rank, parent=parent, children=children, roots=roots, root_of=root_of)

    @property
    def m(self) -> int:
        return len(self.roots)

    def depth(self) -> np.ndarray:
        return _ancestors(self.parent)[1]

    def tree_sizes(self) -> np.ndarray:
        """Size of the tree rooted at each entry of ``roots``."""
        counts = np.bincount(self.root_of[self.root_of >= 0], minlength=self.n)
        return counts[self.roots]

    def levels(self) -> list[np.ndarray]:
        """Non-root nodes grouped by depth, deepest first."""
        d = self.depth()
        d = np.where(self.parent == NO_PARENT, 0, d)
        top = int(d.max()) if self.n else 0
        return [np.flatnonzero(d == k) for k in range(top, 0, -1)]

    def records(self):
        for i in range(self.n):
            p = int(self.parent[i])
            yield {
                "id": i,
                "rank": float(self.rank[i]),
                "parent": None if p == NO_PARENT else p,
                "root": int(self.root_of[i]),
            }


def run_drr(
    sim: NetworkSim,
    n: int,
    rng: np.random.Generator,
    *,
    probe_budget: int | None = None,
    count_probe_replies: bool = False,
    ranks: np.ndarray | None = None,
) -> Forest:
    """Distributed random ranking on the complete graph.

    Probe targets are drawn i.i.d. from the other n - 1 nodes. A lost probe
    burns its slot; a lost connection message is resent next round.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if sim.n != n:
        raise ValueError(f"sim built for {sim.n} nodes, asked for {n}")
    rank = rng.random(n) if ranks is None else np.asarray(ranks, dtype=np.float64)
    pos = rank_order(rank)
    budget = default_probe_budget(n) if probe_budget is None else probe_budget
    if n == 1:
        budget = 0

    parent = np.full(n, NO_PARENT, dtype=np.int64)
    searching = np.ones(n, dtype=bool)
    for _ in range(budget):
        with sim.step(Phase.DRR_PROBE) as h:
            idx = np.flatnonzero(searching)
            if idx.size == 0:
                continue
            tgt = rng.integers(n - 1, size=idx.size)
            tgt += tgt >= idx
            ok = sim.send_many(h, idx)
            if count_probe_replies:
                back = np.flatnonzero(ok)
                ok[back] = sim.send_many(h, tgt[back], initiation=False)
            found = ok & (pos[tgt] > pos[idx])
            parent[idx[found]] = tgt[found]
            searching[idx[found]] = False

    _connect(sim, np.flatnonzero(parent != NO_PARENT))
    return Forest.from_parents(rank, parent)


def _connect(sim: NetworkSim, pending: np.ndarray) -> None:
    while pending.size:
        with sim.step(Phase.DRR_CONNECT) as h:
            ok = sim.send_many(h, pending, fields=1)
        pending = pending[~ok]


def local_parents(g: Graph, rank: np.ndarray) -> np.ndarray:
    """Highest-ranked neighbour of each node, or NO_PARENT at local maxima."""
    pos = rank_order(rank)
    indptr, indices = g.csr()
    deg = np.diff(indptr)
    parent = np.full(g.n, NO_PARENT, dtype=np.int64)
    has = deg > 0
    if not has.any():
        return parent
    nbr_pos = pos[indices]
    best = np.maximum.reduceat(nbr_pos, indptr[:-1][has])
    node_at = np.argsort(pos)
    wins = best > pos[has]
    who = np.flatnonzero(has)[wins]
    parent[who] = node_at[best[wins]]
    return parent


def run_local_drr(
    sim: NetworkSim,
    g: Graph,
    rng: np.random.Generator,
    *,
    ranks: np.ndarray | None = None,
) -> Forest:
    """Local-DRR: each node parents to its highest-ranked neighbour.

    Every node pushes its rank to all neighbours in one round (2|E| messages,
    lost ones resent), then each non-root sends one connection message so its
    parent learns its children.
    """
    if g.kind is GraphKind.COMPLETE:
        raise ValueError("run_local_drr needs explicit adjacency; use run_drr on complete graphs")
    if sim.n != g.n:
        raise ValueError(f"sim built for {sim.n} nodes, graph has {g.n}")
    rank = rng.random(g.n) if ranks is None else np.asarray(ranks, dtype=np.float64)
    indptr, _ = g.csr()
    pending = np.repeat(np.arange(g.n), np.diff(indptr))
    while pending.size:
        with sim.step(Phase.DRR_PROBE) as h:
            ok = sim.send_many(h, pending, initiation=False)
        pending = pending[~ok]
    parent = local_parents(g, rank)
    _connect(sim, np.flatnonzero(parent != NO_PARENT))
    return Forest.from_parents(rank, parent)


def validate_forest(f: Forest) -> list[str]:
    """Every violated forest invariant, as readable strings."""
    problems: list[str] = []
    n = f.n
    parent = np.asarray(f.parent)
    if len(parent) != n or len(f.rank) != n or len(f.root_of) != n:
        return [f"array lengths disagree with n={n}"]
    bad = np.flatnonzero((parent < NO_PARENT) | (parent >= n))
    for i in bad:
        problems.append(f"node {i}: parent {parent[i]} out of range")
    if bad.size:
        return problems
    roots = set(np.asarray(f.roots).tolist())
    parentless = set(np.flatnonzero(parent == NO_PARENT).tolist())
    if roots != parentless:
        problems.append(
            f"root set mismatch: roots without parent-absent {sorted(roots - parentless)[:5]}, "
            f"parentless non-roots {sorted(parentless - roots)[:5]}"
        )
    self_loops = np.flatnonzero(parent == np.arange(n))
    for i in self_loops:
        problems.append(f"node {i}: parent is itself")

    pos = rank_order(f.rank)
    kids = np.flatnonzero(parent != NO_PARENT)
    inverted = kids[pos[parent[kids]] <= pos[kids]]
    for i in inverted[:20]:
        problems.append(
            f"edge {i}->{parent[i]}: parent rank {f.rank[parent[i]]:.6g} "
            f"not above child rank {f.rank[i]:.6g}"
        )

    anc, _, stuck = _ancestors(parent)
    for i in np.flatnonzero(stuck)[:20]:
        problems.append(f"node {i}: parent chain never reaches a root (cycle)")
    ok = ~stuck
    mismatch = np.flatnonzero(ok & (np.asarray(f.root_of) != anc))
    for i in mismatch[:20]:
        problems.append(f"node {i}: root_of {f.root_of[i]} but chain ends at {anc[i]}")

    if len(f.children) != n:
        problems.append(f"children table has {len(f.children)} rows for n={n}")
    else:
        lengths = np.fromiter((len(c) for c in f.children), dtype=np.int64, count=n)
        listed = (
            np.concatenate([np.asarray(c, dtype=np.int64) for c in f.children])
            if lengths.sum() else np.empty(0, dtype=np.int64)
        )
        owner = np.repeat(np.arange(n), lengths)
        for k in np.flatnonzero(parent[listed] != owner)[:20]:
            c = listed[k]
            problems.append(f"node {c} listed as child of {owner[k]} but parent is {parent[c]}")
        times = np.bincount(listed, minlength=n)
        for i in kids[times[kids] != 1][:20]:
            problems.append(f"node {i} appears {times[i]} times in children lists")
    return problems


@dataclass(frozen=True)
class ForestStats:
    tree_count: int
    size_hist: dict[int, int]
    height_hist: dict[int, int]
    max_size: int
    max_height: int

    CSV_HEADER = "tree_count,max_size,max_height,mean_size"

    def csv_row(self) -> str:
        mean = sum(k * v for k, v in self.size_hist.items()) / max(self.tree_count, 1)
        return f"{self.tree_count},{self.max_size},{self.max_height},{mean:.6g}"


def forest_stats(f: Forest) -> ForestStats:
    sizes = f.tree_sizes()
    depth = np.where(f.parent == NO_PARENT, 0, f.depth())
    heights = np.zeros(f.n, dtype=np.int64)
    np.maximum.at(heights, f.root_of, depth)
    heights = heights[f.roots]
    size_hist = Counter(sizes.tolist())
    height_hist = Counter(heights.tolist())
    return ForestStats(
        tree_count=f.m,
        size_hist=dict(sorted(size_hist.items())),
        height_hist=dict(sorted(height_hist.items())),
        max_size=int(sizes.max()) if sizes.size else 0,
        max_height=int(heights.max()) if heights.size else 0,
    )
