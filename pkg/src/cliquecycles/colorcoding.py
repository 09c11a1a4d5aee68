"""Random colourings and the colour-successor graph.

Colours are 0-based: an arc u->v survives when colour(v) = colour(u) + 1
(mod h).  Any closed walk of length h in that graph steps through all h
colours once, so it is a simple h-cycle of the original graph.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph


@dataclass(frozen=True)
class Coloring:
    colors: np.ndarray
    h: int

    def __post_init__(self):
        c = np.asarray(self.colors, dtype=np.int64)
        if c.ndim != 1:
            raise ValueError("colors must be a vector")
        if self.h < 1 or (c.size and (c.min() < 0 or c.max() >= self.h)):
            raise ValueError("color out of range")
        object.__setattr__(self, "colors", c)

    @property
    def n(self) -> int:
        return self.colors.size

    def __getitem__(self, v):
        return self.colors[v]

    def classes(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.colors == i) for i in range(self.h)]


def sample_coloring(n: int, h: int, seed=None) -> Coloring:
    if h < 3:
        raise ValueError("h must be at least 3")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Coloring(rng.integers(0, h, n), h)


def successor_mask(colors: np.ndarray, h: int) -> np.ndarray:
    colors = np.asarray(colors)
    return ((colors[:, None] + 1) % h) == colors[None, :]


def build_aux_graph(g: Graph, phi: Coloring) -> Graph:
    """Directed graph keeping the arcs that step to the next colour."""
    if phi.n != g.n:
        raise ValueError("coloring must cover every vertex")
    return Graph(g.adj & successor_mask(phi.colors, phi.h), directed=True)


def colorful_trace_positive(g_phi: Graph, h: int) -> bool:
    """trace(A^h) > 0, by boolean repeated squaring."""
    A = g_phi.adj
    result = None
    base = A.copy()
    e = h
    while e:
        if e & 1:
            result = base if result is None else _bool_mm(result, base)
        e >>= 1
        if e:
            base = _bool_mm(base, base)
    return bool(np.any(np.diagonal(result)))


def _bool_mm(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return (X.astype(np.float32) @ Y.astype(np.float32)) > 0
