"""Loop-based graph attention over explicit edge lists.

This is the brute-force reference for the attention module: every score,
softmax and weighted sum is computed per target vertex with plain Python
loops. It deliberately shares nothing with :mod:`gsitlab.attn` except the
tensor container.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from gsitlab.errors import DegenerateRowError, ShapeError
from gsitlab.numkit import Tensor2


@dataclass(frozen=True)
class VertexSet:
    features: Tensor2
    label: str = "merged"

    def __post_init__(self):
        if self.features.rows < 1:
            raise ShapeError("a vertex set needs at least one vertex")

    def __len__(self) -> int:
        return self.features.rows


@dataclass(frozen=True)
class ExplicitGraph:
    """Directed edges ``(m, n)``: source vertex ``n`` feeds target ``m``."""

    targets: VertexSet
    sources: VertexSet
    edges: tuple[tuple[int, int], ...]
    # filled by gat_aggregate(..., keep_coefficients=True): head -> {edge: alpha}
    coefficients: dict = field(default=None, compare=False)

    def neighborhood(self, m: int) -> list[int]:
        return [n for (t, n) in self.edges if t == m]

    def without_edge(self, m: int, n: int) -> "ExplicitGraph":
        return ExplicitGraph(self.targets, self.sources, tuple(e for e in self.edges if e != (m, n)))


def build_bipartite(dominant: VertexSet, auxiliary: VertexSet) -> ExplicitGraph:
    """Complete bipartite graph, every auxiliary vertex -> every dominant vertex."""
    if dominant is auxiliary:
        raise ValueError("bipartite graph needs two distinct vertex sets")
    edges = tuple((m, n) for m in range(len(dominant)) for n in range(len(auxiliary)))
    return ExplicitGraph(dominant, auxiliary, edges)


def build_complete(vertices: VertexSet) -> ExplicitGraph:
    """Directed complete graph including self-loops."""
    n = len(vertices)
    return ExplicitGraph(vertices, vertices, tuple((m, k) for m in range(n) for k in range(n)))


def _project(row, w):
    # row . W for one vertex, W given as nested lists (D x D')
    return [sum(row[r] * w[r][c] for r in range(len(row))) for c in range(len(w[0]))]


def gat_aggregate(graph: ExplicitGraph, weights, keep_coefficients: bool = False):
    """Per-vertex multi-head neighbourhood softmax aggregation.

    ``weights`` is an :class:`~gsitlab.attn.EncoderWeights`; only ``wq``,
    ``wk``, ``wv`` and ``heads`` are read. Returns the aggregated features
    (``N_targets x d``) and, with ``keep_coefficients``, the graph with its
    per-head edge coefficients attached.
    """
    d = weights.wq.rows
    tgt = graph.targets.features.data.tolist()
    src = graph.sources.features.data.tolist()
    if len(tgt[0]) != d or len(src[0]) != d:
        raise ShapeError(f"vertex features must have width {d}")
    wq = weights.wq.data.tolist()
    wk = weights.wk.data.tolist()
    wv = weights.wv.data.tolist()
    heads = weights.heads
    h = d // heads
    c = 1.0 / math.sqrt(h)

    out = []
    coeffs: dict = {l: {} for l in range(heads)}
    for m in range(len(tgt)):
        nbrs = graph.neighborhood(m)
        if not nbrs:
            raise DegenerateRowError(m, "isolated target vertex")
        q = _project(tgt[m], wq)
        keys = {n: _project(src[n], wk) for n in nbrs}
        vals = {n: _project(src[n], wv) for n in nbrs}
        row = []
        for l in range(heads):
            lo, hi = l * h, (l + 1) * h
            e = {n: c * sum(q[r] * keys[n][r] for r in range(lo, hi)) for n in nbrs}
            top = max(e.values())
            w = {n: math.exp(e[n] - top) for n in nbrs}
            z = sum(w.values())
            alpha = {n: w[n] / z for n in nbrs}
            for n in nbrs:
                coeffs[l][(m, n)] = alpha[n]
            row.extend(sum(alpha[n] * vals[n][r] for n in nbrs) for r in range(lo, hi))
        out.append(row)
    result = Tensor2(out)
    if keep_coefficients:
        return result, ExplicitGraph(graph.targets, graph.sources, graph.edges, coeffs)
    return result
