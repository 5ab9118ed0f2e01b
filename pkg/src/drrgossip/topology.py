"""Communication graphs: complete, random d-regular, idealized Chord, edge-list files.

Graphs are immutable once built. ``Complete`` keeps adjacency implicit; every
other kind stores a sorted neighbor array per node.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_CHORD_BITS = 24
MAX_REGULAR_RETRIES = 1000


class GraphError(ValueError):
    """Invalid constructor argument."""


class InputFormatError(ValueError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno


class ConstructionError(RuntimeError):
    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class GraphKind(str, enum.Enum):
    COMPLETE = "complete"
    DREGULAR = "dregular"
    CHORD = "chord"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    kind: GraphKind
    adjacency: tuple[np.ndarray, ...] = ()
    chord_bits: int | None = None
    fingers: np.ndarray | None = field(default=None, repr=False)

    @property
    def explicit(self) -> bool:
        return self.kind is not GraphKind.COMPLETE

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range for n={self.n}")
        if self.kind is GraphKind.COMPLETE:
            return np.concatenate([np.arange(i), np.arange(i + 1, self.n)])
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        if self.kind is GraphKind.COMPLETE:
            return self.n - 1
        return len(self.adjacency[i])

    def degrees(self) -> np.ndarray:
        if self.kind is GraphKind.COMPLETE:
            return np.full(self.n, self.n - 1, dtype=np.int64)
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @property
    def edge_count(self) -> int:
        return int(self.degrees().sum()) // 2

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v."""
        if self.kind is GraphKind.COMPLETE:
            u, v = np.triu_indices(self.n, k=1)
            return np.stack([u, v], axis=1)
        rows = [
            np.stack([np.full(len(a), i), a], axis=1)[a > i]
            for i, a in enumerate(self.adjacency)
        ]
        if not rows:
            return np.empty((0, 2), dtype=np.int64)
        return np.concatenate(rows).astype(np.int64)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) view of the adjacency for vectorized passes."""
        if self.kind is GraphKind.COMPLETE:
            raise GraphError("complete graph has no explicit adjacency")
        lengths = np.fromiter((len(a) for a in self.adjacency), dtype=np.int64, count=self.n)
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        if indptr[-1] == 0:
            return indptr, np.empty(0, dtype=np.int64)
        return indptr, np.concatenate(self.adjacency).astype(np.int64)

    def summary(self) -> dict:
        deg = self.degrees()
        return {
            "kind": self.kind.value,
            "n": self.n,
            "edges": self.edge_count,
            "degree_min": int(deg.min()) if self.n else 0,
            "degree_max": int(deg.max()) if self.n else 0,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


@dataclass(frozen=True)
class RouteResult:
    destination: int
    hops: int
    messages_used: int


def _from_edge_sets(n: int, kind: GraphKind, nbrs: list[set[int]], **kw) -> Graph:
    adjacency = tuple(np.array(sorted(s), dtype=np.int64) for s in nbrs)
    return Graph(n=n, kind=kind, adjacency=adjacency, **kw)


def build_complete(n: int) -> Graph:
    if n < 1:
        raise GraphError(f"complete graph needs n >= 1, got {n}")
    return Graph(n=n, kind=GraphKind.COMPLETE)


def _pair_stubs(n: int, d: int, rng: np.random.Generator) -> list[set[int]] | None:
    # Random stub matching that rejects loops and repeated edges as it goes;
    # returns None when the remaining stubs cannot be matched simply.
    stubs = list(np.repeat(np.arange(n), d))
    nbrs: list[set[int]] = [set() for _ in range(n)]
    misses = 0
    while stubs:
        k = len(stubs)
        a, b = rng.integers(k), rng.integers(k)
        u, v = stubs[a], stubs[b]
        if a != b and u != v and v not in nbrs[u]:
            nbrs[u].add(v)
            nbrs[v].add(u)
            for idx in sorted((a, b), reverse=True):
                stubs[idx] = stubs[-1]
                stubs.pop()
            misses = 0
            continue
        misses += 1
        if misses > 50:
            left = sorted(set(stubs))
            if not any(w not in nbrs[x] for i, x in enumerate(left) for w in left[i + 1:]):
                return None
            misses = 0
    return nbrs


def build_d_regular(n: int, d: int, seed: int) -> Graph:
    """Simple d-regular graph by random stub pairing.

    Pairs that would create a loop or a repeated edge are redrawn; a dead end
    restarts the whole graph, at most ``MAX_REGULAR_RETRIES`` times.
    """
    if d < 1 or d >= n or (n * d) % 2:
        raise GraphError(f"no simple {d}-regular graph on {n} nodes (need 1 <= d < n, n*d even)")
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_REGULAR_RETRIES + 1):
        nbrs = _pair_stubs(n, d, rng)
        if nbrs is not None:
            return _from_edge_sets(n, GraphKind.DREGULAR, nbrs)
    raise ConstructionError(f"could not build simple {d}-regular graph on {n} nodes", attempt)


def build_chord(bits: int) -> Graph:
    """Fully populated Chord ring on 2**bits ids.

    Node i holds out-fingers (i + 2**k) mod n for k < bits; ``adjacency`` is the
    undirected union of in- and out-fingers.
    """
    if not 1 <= bits <= MAX_CHORD_BITS:
        raise GraphError(f"chord bits must be in [1, {MAX_CHORD_BITS}], got {bits}")
    n = 1 << bits
    ids = np.arange(n, dtype=np.int64)
    fingers = (ids[:, None] + (1 << np.arange(bits, dtype=np.int64))[None, :]) % n
    src = np.repeat(ids, bits)
    dst = fingers.ravel()
    u = np.concatenate([src, dst])
    v = np.concatenate([dst, src])
    keep = u != v
    pairs = np.unique(np.stack([u[keep], v[keep]], axis=1), axis=0)
    splits = np.searchsorted(pairs[:, 0], np.arange(1, n))
    adjacency = tuple(np.split(pairs[:, 1], splits))
    fingers.setflags(write=False)
    return Graph(n=n, kind=GraphKind.CHORD, adjacency=adjacency, chord_bits=bits, fingers=fingers)


def load_adjacency(path) -> Graph:
    """Read a whitespace-separated ``u v`` edge list with 0-based ids."""
    path = Path(path)
    edges: list[tuple[int, int]] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise InputFormatError(path, lineno, f"expected 2 fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise InputFormatError(path, lineno, f"non-integer node id in {text!r}") from None
            if u < 0 or v < 0:
                raise InputFormatError(path, lineno, "negative node id")
            if u == v:
                raise InputFormatError(path, lineno, f"self-loop on node {u}")
            edges.append((u, v))
    if not edges:
        raise InputFormatError(path, 0, "no edges")
    n = 1 + max(max(e) for e in edges)
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    return _from_edge_sets(n, GraphKind.CUSTOM, nbrs)


def validate_graph(g: Graph) -> list[str]:
    """Structural violations; empty when the graph is well formed."""
    problems = []
    if g.kind is GraphKind.COMPLETE:
        return problems
    if len(g.adjacency) != g.n:
        return [f"adjacency has {len(g.adjacency)} rows for n={g.n}"]
    sets = [set(a.tolist()) for a in g.adjacency]
    for i, a in enumerate(g.adjacency):
        if len(sets[i]) != len(a):
            problems.append(f"node {i}: duplicate neighbors")
        if i in sets[i]:
            problems.append(f"node {i}: self-loop")
        if np.any(np.diff(a) <= 0):
            problems.append(f"node {i}: neighbor list not strictly sorted")
        for j in sets[i]:
            if not 0 <= j < g.n:
                problems.append(f"node {i}: neighbor {j} out of range")
            elif i not in sets[j]:
                problems.append(f"edge {i}-{j} not symmetric")
    if g.kind is GraphKind.DREGULAR:
        deg = g.degrees()
        if deg.min() != deg.max():
            problems.append(f"not regular: degrees in [{deg.min()}, {deg.max()}]")
    if g.kind is GraphKind.CHORD:
        n = g.n
        for i in range(n):
            for f in g.fingers[i]:
                if f != i and int(f) not in sets[i]:
                    problems.append(f"finger {i}->{f} missing from neighbor view")
    return problems


def chord_hops(n: int, src, dst) -> np.ndarray:
    """Greedy clockwise finger hops from src to dst on a full 2**b ring.

    The largest finger not overshooting the remaining clockwise distance is
    always taken, so the hop count is the popcount of that distance.
    """
    dist = (np.asarray(dst, dtype=np.int64) - np.asarray(src, dtype=np.int64)) % n
    return np.bitwise_count(dist.astype(np.uint64)).astype(np.int64)


def greedy_path(g: Graph, src: int, target: int) -> list[int]:
    """Node sequence visited by greedy finger routing, src first."""
    if g.kind is not GraphKind.CHORD:
        raise GraphError("greedy finger routing needs a chord graph")
    path = [src]
    cur = src
    while cur != target:
        dist = (target - cur) % g.n
        k = dist.bit_length() - 1
        cur = int(g.fingers[cur, k])
        path.append(cur)
        if len(path) > g.chord_bits + 1:
            raise RuntimeError("greedy routing did not converge")
    return path


def route_to_random(g: Graph, src: int, rng: np.random.Generator) -> RouteResult:
    """Reach a uniformly random node: draw a ring id, then route greedily to it."""
    if g.kind is GraphKind.COMPLETE:
        dst = int(rng.integers(g.n))
        return RouteResult(destination=dst, hops=1, messages_used=1)
    if g.kind is not GraphKind.CHORD:
        raise GraphError(f"route_to_random does not route on {g.kind.value} graphs")
    target = int(rng.integers(g.n))
    hops = len(greedy_path(g, src, target)) - 1
    return RouteResult(destination=target, hops=hops, messages_used=hops)


def parse_topology(spec: str, seed: int = 0) -> Graph:
    """Build a graph from ``complete:n``, ``dregular:n,d``, ``chord:bits`` or ``file:path``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "complete":
            return build_complete(int(arg))
        if kind == "dregular":
            n, d = (int(x) for x in arg.split(","))
            return build_d_regular(n, d, seed)
        if kind == "chord":
            return build_chord(int(arg))
    except ValueError as exc:
        if isinstance(exc, GraphError):
            raise
        raise GraphError(f"bad topology spec {spec!r}: {exc}") from None
    if kind == "file":
        return load_adjacency(arg)
    raise GraphError(f"unknown topology {spec!r}")
