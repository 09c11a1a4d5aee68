"""Simple graphs, generators and brute-force cycle oracles.

Everything here is local (no simulator).  The enumerators are the ground
truth that the distributed detectors are checked against.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

MAX_ORACLE_N = 1024
MAX_ORACLE_H = 8
DEFAULT_STEP_BUDGET = 50_000_000


class OracleLimitError(RuntimeError):
    """Raised when a brute-force oracle would exceed its budget."""


class NoCyclesError(ValueError):
    pass


class Graph:
    """Immutable simple graph stored as a boolean adjacency matrix.

    ``adj[u, v]`` means the edge u->v.  Undirected graphs keep ``adj``
    symmetric.
    """

    __slots__ = ("n", "directed", "adj", "_succ")

    def __init__(self, adj, directed: bool = False):
        a = np.array(adj, dtype=bool, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if a.shape[0] < 1:
            raise ValueError("graph needs at least one vertex")
        if np.any(np.diagonal(a)):
            raise ValueError("self-loops are not allowed")
        if not directed and not np.array_equal(a, a.T):
            raise ValueError("undirected adjacency must be symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "n", int(a.shape[0]))
        object.__setattr__(self, "directed", bool(directed))
        object.__setattr__(self, "adj", a)
        object.__setattr__(self, "_succ", None)

    def __setattr__(self, name, value):
        raise AttributeError("Graph is immutable")

    def __eq__(self, other):
        return (isinstance(other, Graph) and self.directed == other.directed
                and np.array_equal(self.adj, other.adj))

    def __hash__(self):
        return hash((self.n, self.directed, self.adj.tobytes()))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, {kind}, m={self.num_edges})"

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, directed: bool = False) -> "Graph":
        a = np.zeros((n, n), dtype=bool)
        seen = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise ValueError(f"self-loop at {u}")
            key = (u, v) if directed else (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            a[u, v] = True
            if not directed:
                a[v, u] = True
        return cls(a, directed)

    @property
    def num_edges(self) -> int:
        m = int(self.adj.sum())
        return m if self.directed else m // 2

    def edges(self) -> list[tuple[int, int]]:
        us, vs = np.nonzero(self.adj)
        if not self.directed:
            keep = us < vs
            us, vs = us[keep], vs[keep]
        return list(zip(us.tolist(), vs.tolist()))

    def successors(self) -> list[list[int]]:
        if self._succ is None:
            object.__setattr__(self, "_succ",
                               [np.flatnonzero(row).tolist() for row in self.adj])
        return self._succ

    def induced(self, vertices) -> "Graph":
        idx = np.asarray(sorted(vertices), dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty vertex set")
        return Graph(self.adj[np.ix_(idx, idx)], self.directed)


@dataclass(frozen=True)
class CycleStats:
    h: int
    t: int
    x: int
    delta: Optional[float]

    def as_dict(self) -> dict:
        return {"h": self.h, "t": self.t, "x": self.x, "delta": self.delta}


def _check_budget(g: Graph, h: int, max_n: int = MAX_ORACLE_N):
    if not 3 <= h <= MAX_ORACLE_H:
        raise OracleLimitError(f"oracle limit: h={h} outside [3, {MAX_ORACLE_H}]")
    if g.n > max_n:
        raise OracleLimitError(f"oracle limit: n={g.n} exceeds {max_n}")


def iter_h_cycles(g: Graph, h: int, step_budget: int = DEFAULT_STEP_BUDGET) -> Iterator[tuple]:
    """Yield each h-cycle once as a vertex tuple.

    The tuple starts at the cycle's smallest vertex.  Undirected cycles are
    reported in the orientation whose second vertex is smaller than the last.
    """
    _check_budget(g, h)
    succ = g.successors()
    adj = g.adj
    steps = 0
    for s in range(g.n):
        path = [s]
        on_path = {s}
        stack = [iter([v for v in succ[s] if v > s])]
        while stack:
            steps += 1
            if steps > step_budget:
                raise OracleLimitError(f"oracle limit: more than {step_budget} DFS steps")
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if len(path) == h - 1:
                if adj[nxt, s] and (g.directed or path[1] < nxt):
                    yield tuple(path) + (nxt,)
                continue
            path.append(nxt)
            on_path.add(nxt)
            stack.append(iter([v for v in succ[nxt] if v > s and v not in on_path]))
        # path always returns to [] here


def count_h_cycles(g: Graph, h: int, step_budget: int = DEFAULT_STEP_BUDGET) -> int:
    return sum(1 for _ in iter_h_cycles(g, h, step_budget))


def cycle_participants(g: Graph, h: int, step_budget: int = DEFAULT_STEP_BUDGET) -> set[int]:
    out: set[int] = set()
    for cyc in iter_h_cycles(g, h, step_budget):
        out.update(cyc)
    return out


def subset_enumeration(g: Graph, h: int, max_n: int = 40) -> tuple[int, set[int]]:
    """Second, independent oracle: scan vertex subsets and their orderings.

    Only meant for small graphs (used to cross-check ``iter_h_cycles``).
    """
    _check_budget(g, h, max_n)
    a = g.adj
    t = 0
    part: set[int] = set()
    for sub in itertools.combinations(range(g.n), h):
        first, rest = sub[0], sub[1:]
        found = 0
        for perm in itertools.permutations(rest):
            if not g.directed and perm[0] > perm[-1]:
                continue
            order = (first,) + perm
            if all(a[order[i], order[(i + 1) % h]] for i in range(h)):
                found += 1
        if found:
            t += found
            part.update(sub)
    return t, part


def cycle_stats(g: Graph, h: int, step_budget: int = DEFAULT_STEP_BUDGET) -> CycleStats:
    t = 0
    part: set[int] = set()
    for cyc in iter_h_cycles(g, h, step_budget):
        t += 1
        part.update(cyc)
    x = len(part)
    delta = _delta_from(h, t, x, g.directed) if t else None
    return CycleStats(h=h, t=t, x=x, delta=delta)


def _delta_from(h: int, t: int, x: int, directed: bool) -> float:
    tuples = h * t if directed else 2 * h * t
    return h - math.log(tuples) / math.log(x)


def compute_delta(g: Graph, h: int) -> float:
    st = cycle_stats(g, h)
    if st.t == 0:
        raise NoCyclesError("no cycles: delta is undefined when t = 0")
    return st.delta


def count_cycle_tuples(g: Graph, h: int, vertices=None, max_tuples: float = 1e9) -> int:
    """Count ordered h-tuples over ``vertices`` that form an h-cycle.

    This walks ordered sequences directly, so it shares no canonicalisation
    logic with ``iter_h_cycles``.
    """
    verts = np.arange(g.n) if vertices is None else np.asarray(sorted(vertices), dtype=np.int64)
    x = len(verts)
    if float(x) ** h > max_tuples:
        raise OracleLimitError(f"oracle limit: {x}^{h} tuples exceeds {max_tuples:g}")
    sub = g.adj[np.ix_(verts, verts)]
    if float(x) ** h <= 2e6:
        # dense scan of every tuple, adding one coordinate at a time
        ok = np.ones(x, dtype=bool)
        for step in range(1, h):
            ok = ok[..., None] & sub.reshape([1] * (step - 1) + [x, x])
        ok = ok & sub.T.reshape([x] + [1] * (h - 2) + [x])
        return int(np.count_nonzero(ok & _all_distinct(h, x)))
    succ = [np.flatnonzero(row).tolist() for row in sub]
    total = 0
    for s in range(x):
        stack = [(s, (s,))]
        while stack:
            u, path = stack.pop()
            if len(path) == h:
                if sub[u, s]:
                    total += 1
                continue
            for v in succ[u]:
                if v not in path:
                    stack.append((v, path + (v,)))
    return total


def _all_distinct(h: int, x: int) -> np.ndarray:
    grids = np.indices((x,) * h, sparse=True)
    mask = np.ones((x,) * h, dtype=bool)
    for i in range(h):
        for j in range(i + 1, h):
            mask = mask & (grids[i] != grids[j])
    return mask


def tuple_cycle_probability(g: Graph, h: int) -> float:
    part = cycle_participants(g, h)
    if not part:
        raise NoCyclesError("no cycles: tuple probability needs t >= 1")
    x = len(part)
    return count_cycle_tuples(g, h, part) / float(x) ** h


# ---------------------------------------------------------------- generators

GENERATOR_KINDS = (
    "erdos_renyi", "planted_disjoint_cycles", "planted_clique", "cycle",
    "complete", "random_tree", "random_bipartite", "random_dag",
)


def generate(kind: str, params: dict, seed: int = 0) -> Graph:
    rng = np.random.default_rng(seed)
    p = dict(params)
    directed = bool(p.get("directed", False))
    if kind == "erdos_renyi":
        n, q = int(p["n"]), float(p["edge_prob"])
        if not 0.0 <= q <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        r = rng.random((n, n)) < q
        np.fill_diagonal(r, False)
        if not directed:
            r = np.triu(r, 1)
            r = r | r.T
        return Graph(r, directed)
    if kind == "planted_disjoint_cycles":
        n, count, h = int(p["n"]), int(p["count"]), int(p["h"])
        if h < 3 or count < 0:
            raise ValueError("need h >= 3 and count >= 0")
        if count * h > n:
            raise ValueError(f"cannot plant {count} disjoint {h}-cycles on {n} vertices")
        perm = rng.permutation(n)
        a = np.zeros((n, n), dtype=bool)
        for c in range(count):
            vs = perm[c * h:(c + 1) * h]
            for i in range(h):
                u, v = vs[i], vs[(i + 1) % h]
                a[u, v] = True
                if not directed:
                    a[v, u] = True
        return Graph(a, directed)
    if kind == "planted_clique":
        n, k = int(p["n"]), int(p["clique_size"])
        if not 0 <= k <= n:
            raise ValueError("clique_size must lie in [0, n]")
        vs = rng.choice(n, size=k, replace=False)
        a = np.zeros((n, n), dtype=bool)
        a[np.ix_(vs, vs)] = True
        np.fill_diagonal(a, False)
        return Graph(a, False)
    if kind == "cycle":
        n = int(p["n"])
        if n < 3:
            raise ValueError("cycle needs n >= 3")
        a = np.zeros((n, n), dtype=bool)
        i = np.arange(n)
        a[i, (i + 1) % n] = True
        if not directed:
            a = a | a.T
        return Graph(a, directed)
    if kind == "complete":
        n = int(p["n"])
        a = ~np.eye(n, dtype=bool)
        return Graph(a, False)
    if kind == "random_tree":
        n = int(p["n"])
        a = np.zeros((n, n), dtype=bool)
        order = rng.permutation(n)
        for i in range(1, n):
            u, v = order[i], order[rng.integers(0, i)]
            a[u, v] = a[v, u] = True
        return Graph(a, False)
    if kind == "random_bipartite":
        n, q = int(p["n"]), float(p.get("edge_prob", 0.3))
        side = rng.random(n) < 0.5
        r = (rng.random((n, n)) < q) & (side[:, None] != side[None, :])
        r = np.triu(r, 1)
        return Graph(r | r.T, False)
    if kind == "random_dag":
        n, q = int(p["n"]), float(p.get("edge_prob", 0.3))
        order = rng.permutation(n)
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n)
        r = (rng.random((n, n)) < q) & (rank[:, None] < rank[None, :])
        return Graph(r, True)
    raise ValueError(f"unknown generator kind {kind!r}; expected one of {GENERATOR_KINDS}")


# ------------------------------------------------------------------ file IO

def write_edgelist(g: Graph, path) -> None:
    lines = [f"{g.n} {'directed' if g.directed else 'undirected'}"]
    lines += [f"{u} {v}" for u, v in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> Graph:
    text = Path(path).read_text().split("\n")
    rows = [ln.strip() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ValueError("empty edge-list file")
    head = rows[0].split()
    if len(head) != 2 or head[1] not in ("directed", "undirected"):
        raise ValueError("header must be 'n directed|undirected'")
    n = int(head[0])
    directed = head[1] == "directed"
    edges = []
    for ln in rows[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"bad edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph.from_edges(n, edges, directed)
