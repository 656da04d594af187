"""Undirected simple graphs, family generators and the edge-list format."""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GraphError


class Family(str, enum.Enum):
    PATH = "PATH"
    CYCLE = "CYCLE"
    CLIQUE = "CLIQUE"
    STAR = "STAR"
    GNP = "GNP"
    RANDOM_TREE = "RANDOM_TREE"
    GRID = "GRID"
    STAR_OF_CLIQUES = "STAR_OF_CLIQUES"


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable graph on vertices ``0..n-1`` with sorted adjacency tuples."""

    n: int
    adjacency: tuple
    m: int

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and self.adjacency == other.adjacency

    def __hash__(self):
        return hash((self.n, self.adjacency))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"

    def neighbors(self, v):
        return self.adjacency[v]

    def degree(self, v):
        return len(self.adjacency[v])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def indptr(self) -> np.ndarray:
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(a) for a in self.adjacency])
        return ptr

    @cached_property
    def indices(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0, dtype=np.int64)
        return np.fromiter(
            (u for adj in self.adjacency for u in adj), dtype=np.int64, count=2 * self.m
        )

    @cached_property
    def rows(self) -> np.ndarray:
        """Row index of every CSR entry (the ``v`` in ``u in N(v)``)."""
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)

    @cached_property
    def adjacency_matrix(self):
        """Symmetric 0/1 ``scipy.sparse`` CSR matrix with int64 entries."""
        from scipy.sparse import csr_matrix

        data = np.ones(self.indices.size, dtype=np.int64)
        return csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def edges(self):
        """Edges as sorted ``(u, v)`` pairs with ``u < v``."""
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    def to_edge_list(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines.extend(f"{u} {v}" for u, v in self.edges())
        return "\n".join(lines) + "\n"


def build_graph(n, edges) -> Graph:
    if n < 1:
        raise GraphError("INVALID_SPEC", f"n must be >= 1, got {n}")
    adj = [set() for _ in range(n)]
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError("ENDPOINT_OUT_OF_RANGE", f"edge ({u}, {v}) with n={n}")
        if u == v:
            raise GraphError("SELF_LOOP", f"self-loop at {u}")
        if v in adj[u]:
            raise GraphError("DUPLICATE_EDGE", f"edge ({u}, {v}) given twice")
        adj[u].add(v)
        adj[v].add(u)
    adjacency = tuple(tuple(sorted(a)) for a in adj)
    return Graph(n, adjacency, sum(len(a) for a in adjacency) // 2)


@dataclass(frozen=True)
class GraphFamilySpec:
    """Generator input. ``p`` is used by GNP only; ``k`` is the clique size of
    STAR_OF_CLIQUES."""

    family: Family
    n: int
    p: float | None = None
    seed: int = 0
    k: int = 8

    def __post_init__(self):
        fam = self.family
        fam = fam if isinstance(fam, Family) else str(fam).strip().upper()
        try:
            object.__setattr__(self, "family", Family(fam))
        except ValueError:
            raise GraphError("INVALID_SPEC", f"unknown family {self.family!r}") from None
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise GraphError("INVALID_SPEC", f"n must be a positive integer, got {self.n!r}")
        if self.family is Family.GNP:
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise GraphError("INVALID_SPEC", f"GNP needs p in [0, 1], got {self.p!r}")
        if self.family is Family.STAR_OF_CLIQUES and self.k < 1:
            raise GraphError("INVALID_SPEC", f"clique size must be >= 1, got {self.k}")


def _gnp_edges(n, p, rng):
    edges = []
    for u in range(n - 1):
        hits = np.flatnonzero(rng.random(n - u - 1) < p)
        edges.extend((u, u + 1 + int(j)) for j in hits)
    return edges


def _prufer_tree_edges(n, rng):
    # uniform labelled tree via a random Prufer sequence
    if n <= 2:
        return [(0, 1)] if n == 2 else []
    seq = [int(x) for x in rng.integers(0, n, size=n - 2)]
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, x), max(leaf, x)))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u, v = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, v))
    return edges


def generate(spec: GraphFamilySpec) -> Graph:
    n, fam = spec.n, spec.family
    if fam is Family.PATH:
        edges = [(i, i + 1) for i in range(n - 1)]
    elif fam is Family.CYCLE:
        if n < 3:  # C1 and C2 would need a loop or a double edge
            edges = [(0, 1)] if n == 2 else []
        else:
            edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    elif fam is Family.CLIQUE:
        edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    elif fam is Family.STAR:
        edges = [(0, v) for v in range(1, n)]
    elif fam is Family.GNP:
        edges = _gnp_edges(n, spec.p, np.random.default_rng(spec.seed))
    elif fam is Family.RANDOM_TREE:
        edges = _prufer_tree_edges(n, np.random.default_rng(spec.seed))
    elif fam is Family.GRID:
        w = math.isqrt(n - 1) + 1 if n > 1 else 1
        edges = [(i, i + 1) for i in range(n - 1) if (i + 1) % w != 0]
        edges += [(i, i + w) for i in range(n - w)]
    elif fam is Family.STAR_OF_CLIQUES:
        # hub 0 adjacent to everyone; the rest split into cliques of size k
        edges = [(0, v) for v in range(1, n)]
        for start in range(1, n, spec.k):
            block = range(start, min(start + spec.k, n))
            edges += [(u, v) for u in block for v in block if u < v]
    else:  # pragma: no cover
        raise GraphError("INVALID_SPEC", f"unhandled family {fam}")
    return build_graph(n, edges)


def max_degree(g: Graph) -> int:
    return int(g.degrees.max()) if g.n else 0


def two_hop_max_degree(g: Graph, v: int) -> int:
    if not 0 <= v < g.n:
        raise GraphError("VERTEX_OUT_OF_RANGE", f"vertex {v} not in 0..{g.n - 1}")
    return max(g.degree(u) for u in (v, *g.adjacency[v]))


def two_hop_max_degrees(g: Graph) -> np.ndarray:
    deg = g.degrees
    out = deg.copy()
    if g.m:
        np.maximum.at(out, g.rows, deg[g.indices])
    return out


def parse_edge_list(text: str) -> Graph:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GraphError("PARSE", "empty edge-list file")
    try:
        n, m = (int(x) for x in lines[0].split())
        edges = [tuple(int(x) for x in ln.split()) for ln in lines[1:]]
    except ValueError as exc:
        raise GraphError("PARSE", str(exc)) from None
    if len(edges) != m or any(len(e) != 2 for e in edges):
        raise GraphError("PARSE", f"header announces {m} edges, found {len(edges)}")
    return build_graph(n, edges)


def read_edge_list(path) -> Graph:
    return parse_edge_list(Path(path).read_text())


def write_edge_list(g: Graph, path) -> None:
    Path(path).write_text(g.to_edge_list())
