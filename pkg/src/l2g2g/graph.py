"""Undirected attributed graphs, SBM generation and GCN normalization."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, ParameterError, SizeError

__all__ = [
    "Graph",
    "SbmConfig",
    "generate_sbm",
    "normalize_adjacency",
    "canonical_edges",
    "MAX_SBM_NODES",
]

#: Largest node count :func:`generate_sbm` accepts by default.
MAX_SBM_NODES = 10_000_000


def canonical_edges(edges):
    """Return ``edges`` as a sorted ``(M, 2)`` int64 array with ``u < v``.

    Reversed duplicates are merged. Self-loops are removed; the number of
    removed self-loop rows is returned alongside the array.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = e[:, 0] == e[:, 1]
    n_loops = int(loops.sum())
    e = e[~loops]
    e = np.sort(e, axis=1)
    if len(e):
        e = np.unique(e, axis=0)
    return e, n_loops


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted graph with an ``N x F`` feature matrix.

    ``edges`` holds each undirected edge once as ``(u, v)`` with ``u < v``,
    sorted lexicographically. Use :meth:`from_edges` to build one from an
    arbitrary pair list.
    """

    n_nodes: int
    edges: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.n_nodes:
            raise ContractViolation(
                f"feature matrix has shape {feats.shape}, expected ({self.n_nodes}, F)"
            )
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n_nodes:
                raise ContractViolation("edge endpoint outside 0..N-1")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ContractViolation("edges must be stored as (u, v) with u < v")
            codes = edges[:, 0] * self.n_nodes + edges[:, 1]
            if np.any(np.diff(codes) <= 0):
                raise ContractViolation("edges must be sorted and free of duplicates")
        edges.flags.writeable = False
        feats.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_edges(cls, n_nodes, edges, features=None):
        """Build a graph, deduplicating edges and dropping self-loops."""
        e, _ = canonical_edges(edges)
        if features is None:
            features = np.eye(n_nodes)
        return cls(int(n_nodes), e, features)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_features(self):
        return self.features.shape[1]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix in CSR form."""
        n = self.n_nodes
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def edge_codes(self):
        """Sorted int64 codes ``u * N + v`` of the stored edges."""
        return self.edges[:, 0] * self.n_nodes + self.edges[:, 1]

    def has_edges(self, pairs):
        """Vectorised membership test for an ``(m, 2)`` array of node pairs."""
        p = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        codes = p[:, 0] * self.n_nodes + p[:, 1]
        table = self.edge_codes()
        if len(table) == 0:
            return np.zeros(len(codes), dtype=bool)
        pos = np.minimum(np.searchsorted(table, codes), len(table) - 1)
        return table[pos] == codes

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes`` (relabelled 0..n-1 in sorted order)."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        local = np.full(self.n_nodes, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        lu = local[self.edges[:, 0]]
        lv = local[self.edges[:, 1]]
        keep = (lu >= 0) & (lv >= 0)
        # order is preserved because relabelling is monotone
        sub_edges = np.stack([lu[keep], lv[keep]], axis=1)
        return Graph(len(nodes), sub_edges, self.features[nodes])

    def without_edges(self, pairs):
        """Copy of the graph with the given undirected edges removed."""
        drop = np.zeros(self.n_edges, dtype=bool)
        p = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        codes = p[:, 0] * self.n_nodes + p[:, 1]
        drop[np.isin(self.edge_codes(), codes)] = True
        return Graph(self.n_nodes, self.edges[~drop], self.features)

    def same_as(self, other):
        return (
            self.n_nodes == other.n_nodes
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.features, other.features)
        )

    def __repr__(self):
        return f"Graph(N={self.n_nodes}, M={self.n_edges}, F={self.n_features})"


@dataclass(frozen=True)
class SbmConfig:
    """Planted-partition SBM with equal block sizes."""

    n_blocks: int
    block_size: int
    p_in: float
    p_out: float
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 1 or self.block_size < 1:
            raise ParameterError("n_blocks and block_size must be positive")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ParameterError(
                f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}"
            )

    @property
    def n_nodes(self):
        return self.n_blocks * self.block_size

    @property
    def n_within_pairs(self):
        b = self.block_size
        return self.n_blocks * (b * (b - 1) // 2)

    @property
    def n_between_pairs(self):
        nb = self.n_blocks
        return (nb * (nb - 1) // 2) * self.block_size ** 2

    def expected_edges(self):
        return self.n_within_pairs * self.p_in + self.n_between_pairs * self.p_out

    def edge_count_std(self):
        var = (self.n_within_pairs * self.p_in * (1 - self.p_in)
               + self.n_between_pairs * self.p_out * (1 - self.p_out))
        return float(np.sqrt(var))


def _bernoulli_positions(n_pairs, p, rng):
    """Indices in ``range(n_pairs)`` kept independently with probability ``p``.

    Geometric skips between successes, drawn in vectorised chunks.
    """
    if n_pairs <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_pairs, dtype=np.int64)
    out = []
    pos = -1
    mean = n_pairs * p
    chunk = int(mean + 6.0 * np.sqrt(mean) + 64)
    while True:
        gaps = rng.geometric(p, size=chunk).astype(np.int64)
        idx = pos + np.cumsum(gaps)
        done = idx[-1] >= n_pairs
        if done:
            idx = idx[idx < n_pairs]
        out.append(idx)
        if done:
            break
        pos = int(idx[-1])
        chunk = max(64, int((n_pairs - pos) * p * 1.1) + 64)
    return np.concatenate(out)


def _triangle_decode(index, n):
    """Map row-major indices of the strict upper triangle of ``n x n`` to (i, j)."""
    i_all = np.arange(n, dtype=np.int64)
    start = i_all * (2 * n - i_all - 1) // 2  # first index of row i
    i = np.searchsorted(start, index, side="right") - 1
    j = index - start[i] + i + 1
    return i, j


def generate_sbm(cfg: SbmConfig, max_nodes=MAX_SBM_NODES) -> Graph:
    """Sample an SBM graph with block one-hot features.

    Node ``v`` belongs to block ``v // block_size``. Within-block pairs are
    edges with probability ``p_in`` and between-block pairs with ``p_out``,
    all independently. Work is proportional to the number of edges drawn.

    Raises
    ------
    SizeError
        If ``N`` exceeds ``max_nodes``.
    """
    n = cfg.n_nodes
    if n > max_nodes:
        raise SizeError(f"SBM with N={n} exceeds the configured maximum of {max_nodes} nodes")
    rng = np.random.default_rng(cfg.seed)
    b = cfg.block_size

    per_block = b * (b - 1) // 2
    within = _bernoulli_positions(cfg.n_within_pairs, cfg.p_in, rng)
    blk, r = np.divmod(within, per_block) if per_block else (within, within)
    i, j = _triangle_decode(r, b)
    wu, wv = blk * b + i, blk * b + j

    between = _bernoulli_positions(cfg.n_between_pairs, cfg.p_out, rng)
    q, r = np.divmod(between, b * b)
    a, c = _triangle_decode(q, cfg.n_blocks)
    bu, bv = a * b + r // b, c * b + r % b

    edges = np.stack([np.concatenate([wu, bu]), np.concatenate([wv, bv])], axis=1)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    feats = np.zeros((n, cfg.n_blocks))
    feats[np.arange(n), np.arange(n) // b] = 1.0
    return Graph(n, edges, feats)


def normalize_adjacency(g: Graph) -> sp.csr_matrix:
    """GCN propagation matrix ``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree of ``A + I``."""
    a = g.adjacency + sp.identity(g.n_nodes, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(d)
    scale = sp.diags(inv_sqrt)
    out = (scale @ a @ scale).tocsr()
    out.sort_indices()
    return out
