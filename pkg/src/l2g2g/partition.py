"""Overlapping patches and the patch graph.

Nodes are first split into ``k`` disjoint clusters by seeded, capacity-capped
label propagation (:func:`cluster_nodes`). Each cluster is then grown by its
1-hop neighbourhood into a patch (:func:`build_patches`), so every edge of the
graph lies inside at least one patch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ContractViolation, FormatError, ParameterError
from .graph import Graph

__all__ = [
    "Patch",
    "PatchSet",
    "PatchGraph",
    "cluster_nodes",
    "build_patches",
    "partition_graph",
    "conductance",
    "save_patches",
    "load_patches",
    "CAPACITY_FACTOR",
]

CAPACITY_FACTOR = 1.2


@dataclass(frozen=True, eq=False)
class Patch:
    """Induced subgraph on ``nodes``; local id ``i`` is global id ``nodes[i]``."""

    index: int
    nodes: np.ndarray
    graph: Graph

    @property
    def n_nodes(self):
        return len(self.nodes)

    def to_local(self, global_ids):
        """Local ids of ``global_ids``; raises if a node is not in the patch."""
        g = np.asarray(global_ids, dtype=np.int64)
        pos = np.searchsorted(self.nodes, g)
        pos_c = np.minimum(pos, len(self.nodes) - 1)
        if np.any(self.nodes[pos_c] != g):
            raise ContractViolation(f"node(s) not in patch {self.index}")
        return pos


@dataclass(frozen=True, eq=False)
class PatchSet:
    """``k`` overlapping patches covering a graph."""

    patches: tuple
    n_nodes: int
    membership_indptr: np.ndarray
    membership: np.ndarray

    @property
    def k(self):
        return len(self.patches)

    def __len__(self):
        return len(self.patches)

    def __getitem__(self, j):
        return self.patches[j]

    def __iter__(self):
        return iter(self.patches)

    def patches_of(self, node):
        """Indices of the patches containing ``node``."""
        return self.membership[self.membership_indptr[node]:self.membership_indptr[node + 1]]

    def counts(self):
        """Number of patches containing each node."""
        return np.diff(self.membership_indptr)

    @property
    def sizes(self):
        return np.array([p.n_nodes for p in self.patches])

    @classmethod
    def from_node_lists(cls, g: Graph, node_lists):
        patches = []
        for j, nodes in enumerate(node_lists):
            nodes = np.unique(np.asarray(nodes, dtype=np.int64))
            patches.append(Patch(j, nodes, g.subgraph(nodes)))
        owner = np.concatenate([np.full(len(p.nodes), p.index) for p in patches])
        node = np.concatenate([p.nodes for p in patches])
        order = np.lexsort((owner, node))
        indptr = np.zeros(g.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(node, minlength=g.n_nodes), out=indptr[1:])
        return cls(tuple(patches), g.n_nodes, indptr, owner[order])


@dataclass(frozen=True, eq=False)
class PatchGraph:
    """Patches as nodes; an edge wherever two patches share at least ``min_overlap`` nodes."""

    n_patches: int
    edges: tuple  # (i, j) with i < j, sorted
    overlaps: dict  # (i, j) -> sorted shared global node ids
    min_overlap: int
    max_overlap: int

    def overlap(self, i, j):
        return self.overlaps[(i, j)] if i < j else self.overlaps[(j, i)]

    def neighbors(self, i):
        return [b if a == i else a for a, b in self.edges if i in (a, b)]

    def is_connected(self):
        if self.n_patches <= 1:
            return True
        if not self.edges:
            return False
        e = np.asarray(self.edges)
        a = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])),
                          shape=(self.n_patches, self.n_patches))
        return connected_components(a, directed=False)[0] == 1

    @classmethod
    def from_patches(cls, patch_set: PatchSet, min_overlap):
        k = patch_set.k
        overlaps = {}
        sizes = _overlap_counts(patch_set)
        max_overlap = 0
        for i in range(k):
            for j in range(i + 1, k):
                c = int(sizes[i, j])
                max_overlap = max(max_overlap, c)
                if c >= min_overlap and c > 0:
                    overlaps[(i, j)] = np.intersect1d(patch_set[i].nodes, patch_set[j].nodes)
        return cls(k, tuple(sorted(overlaps)), overlaps, int(min_overlap), max_overlap)


def _overlap_counts(patch_set):
    rows = np.concatenate([p.nodes for p in patch_set])
    cols = np.concatenate([np.full(p.n_nodes, p.index) for p in patch_set])
    mem = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(patch_set.n_nodes, patch_set.k))
    return (mem.T @ mem).toarray()


def _allocate_seeds(comp_sizes, k):
    """Seeds per connected component: one each for the largest, the rest by D'Hondt."""
    n_comp = len(comp_sizes)
    seeds = np.zeros(n_comp, dtype=np.int64)
    order = np.lexsort((np.arange(n_comp), -comp_sizes))
    first = order[:min(k, n_comp)]
    seeds[first] = 1
    for _ in range(k - len(first)):
        quota = np.where(seeds < comp_sizes, comp_sizes / (seeds + 1), -1.0)
        seeds[int(np.argmax(quota))] += 1
    return seeds


def cluster_nodes(g: Graph, k, seed=0, sweeps=10):
    """Assign every node to one of ``k`` non-empty clusters.

    Seeds are drawn with probability proportional to degree, at least one per
    connected component while seeds last. Clusters then grow in synchronous
    BFS rounds: an unassigned node joins the adjacent non-full cluster it has
    most links to (ties to the lower cluster id), and a cluster accepts
    candidates in increasing node id until it holds ``ceil(1.2 N / k)`` nodes.
    Nodes left over join the neighbouring cluster with most links regardless
    of capacity; nodes in unseeded components go to the smallest cluster.
    Finally up to ``sweeps`` label-propagation passes move nodes towards the
    cluster most of their neighbours belong to, which pulls clusters onto
    dense communities and keeps the 1-hop patches small.

    Returns
    -------
    labels : (N,) int64 array with values in ``0..k-1``.
    """
    n = g.n_nodes
    if k < 1 or k > n:
        raise ParameterError(f"k must satisfy 1 <= k <= N={n}, got {k}")
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    adj = g.adjacency
    n_comp, comp = connected_components(adj, directed=False)
    comp_sizes = np.bincount(comp, minlength=n_comp)
    per_comp = _allocate_seeds(comp_sizes, k)

    seeds = []
    deg = g.degrees.astype(np.float64)
    for c in np.flatnonzero(per_comp):
        members = np.flatnonzero(comp == c)
        w = deg[members]
        p = w / w.sum() if w.sum() > 0 else None
        seeds.append(rng.choice(members, size=per_comp[c], replace=False, p=p))
    seeds = np.sort(np.concatenate(seeds))

    labels = np.full(n, -1, dtype=np.int64)
    labels[seeds] = np.arange(k)
    size = np.ones(k, dtype=np.int64)
    cap = math.ceil(CAPACITY_FACTOR * n / k)

    def link_counts(nodes):
        assigned = np.flatnonzero(labels >= 0)
        onehot = sp.csr_matrix(
            (np.ones(len(assigned)), (assigned, labels[assigned])), shape=(n, k)
        )
        return (adj[nodes] @ onehot).toarray()

    while True:
        unassigned = np.flatnonzero(labels < 0)
        if not len(unassigned):
            break
        counts = link_counts(unassigned)
        counts[:, size >= cap] = 0
        has = counts.max(axis=1) > 0
        if not has.any():
            break
        cand = unassigned[has]
        choice = np.argmax(counts[has], axis=1)
        moved = 0
        for c in range(k):
            take = cand[choice == c][: cap - size[c]]
            labels[take] = c
            size[c] += len(take)
            moved += len(take)
        if not moved:
            break

    # stragglers: over-capacity regions first, then unseeded components
    while True:
        unassigned = np.flatnonzero(labels < 0)
        if not len(unassigned):
            break
        counts = link_counts(unassigned)
        has = counts.max(axis=1) > 0
        if not has.any():
            break
        labels[unassigned[has]] = np.argmax(counts[has], axis=1)
    size = np.bincount(labels[labels >= 0], minlength=k)
    for c in np.unique(comp[labels < 0]):
        members = np.flatnonzero(comp == c)
        target = int(np.argmin(size))
        labels[members] = target
        size[target] += len(members)
    _refine(adj, labels, size, cap, sweeps)
    return labels


def _refine(adj, labels, size, cap, sweeps):
    """Sequential label-propagation sweeps in node-id order, capacity respected.

    A node moves to the cluster holding strictly more of its neighbours than
    its current one (ties to the lower cluster id) if that cluster is below
    capacity and its own cluster stays non-empty.
    """
    k = len(size)
    indptr, indices = adj.indptr, adj.indices
    for _ in range(sweeps):
        moved = 0
        for i in range(len(labels)):
            nb = indices[indptr[i]:indptr[i + 1]]
            if not len(nb):
                continue
            counts = np.bincount(labels[nb], minlength=k)
            cur = labels[i]
            counts[size >= cap] = -1
            best = int(np.argmax(counts))
            if counts[best] > counts[cur] and size[cur] > 1 and best != cur:
                labels[i] = best
                size[cur] -= 1
                size[best] += 1
                moved += 1
        if not moved:
            break


def conductance(g: Graph, labels):
    """Mean conductance of the clusters in ``labels``."""
    labels = np.asarray(labels)
    k = labels.max() + 1
    u, v = g.edges[:, 0], g.edges[:, 1]
    cut = labels[u] != labels[v]
    cut_per = np.bincount(labels[u[cut]], minlength=k) + np.bincount(labels[v[cut]], minlength=k)
    vol = np.bincount(labels, weights=g.degrees, minlength=k)
    total = vol.sum()
    denom = np.minimum(vol, total - vol)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(denom > 0, cut_per / denom, 0.0)
    return float(phi.mean())


def _expand(g, labels, k):
    """Cluster plus its 1-hop neighbourhood, as a boolean ``(N, k)`` matrix."""
    n = g.n_nodes
    member = sp.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, k))
    reach = (g.adjacency @ member + member).tocsc()
    return [np.sort(reach[:, j].indices) for j in range(k)]


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def build_patches(g: Graph, labels, min_overlap=32):
    """Grow clusters into overlapping patches and build the patch graph.

    Patch ``j`` is cluster ``j`` plus every node adjacent to it. Patch pairs
    sharing at least ``min_overlap`` nodes are joined in the patch graph. If
    that graph is disconnected, components are linked along a maximum
    spanning tree of the cluster-adjacency graph (weighted by cut edges, then
    arbitrary pairs if the input graph itself is disconnected) by copying the
    highest-degree nodes of one patch into the other until they share
    ``min_overlap`` nodes.

    Returns
    -------
    (PatchSet, PatchGraph)
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (g.n_nodes,) or labels.min() < 0:
        raise ContractViolation("labels must assign every node to a cluster")
    k = int(labels.max()) + 1
    if np.any(np.bincount(labels, minlength=k) == 0):
        raise ContractViolation("every cluster must be non-empty")
    node_lists = _expand(g, labels, k)
    smallest = min(len(p) for p in node_lists)
    if k > 1 and min_overlap > smallest:
        raise ParameterError(f"min_overlap={min_overlap} exceeds the smallest patch size {smallest}")

    counts = _overlap_counts(PatchSet.from_node_lists(g, node_lists)) if k > 1 else None
    uf = _UnionFind(k)
    for i in range(k):
        for j in range(i + 1, k):
            if counts[i, j] >= min_overlap:
                uf.union(i, j)

    if k > 1 and len({uf.find(i) for i in range(k)}) > 1:
        u, v = g.edges[:, 0], g.edges[:, 1]
        lu, lv = labels[u], labels[v]
        cut = lu != lv
        a, b = np.minimum(lu[cut], lv[cut]), np.maximum(lu[cut], lv[cut])
        pairs, weight = np.unique(np.stack([a, b], 1), axis=0, return_counts=True)
        order = np.lexsort((pairs[:, 1], pairs[:, 0], -weight)) if len(pairs) else []
        candidates = [tuple(pairs[o]) for o in order]
        candidates += [(i, j) for i in range(k) for j in range(i + 1, k)]
        deg = g.degrees
        for i, j in candidates:
            if uf.union(i, j):
                node_lists[j] = _top_up(node_lists[i], node_lists[j], deg, min_overlap)

    patch_set = PatchSet.from_node_lists(g, node_lists)
    return patch_set, PatchGraph.from_patches(patch_set, min_overlap)


def _top_up(src, dst, deg, d):
    """Copy highest-degree nodes of ``src`` into ``dst`` until they share ``d`` nodes."""
    shared = np.intersect1d(src, dst)
    need = d - len(shared)
    if need <= 0:
        return dst
    pool = np.setdiff1d(src, dst)
    order = np.lexsort((pool, -deg[pool]))
    return np.union1d(dst, pool[order[:need]])


def partition_graph(g: Graph, k, min_overlap=32, seed=0):
    """:func:`cluster_nodes` followed by :func:`build_patches`."""
    return build_patches(g, cluster_nodes(g, k, seed), min_overlap)


def save_patches(path, patch_set: PatchSet, min_overlap):
    """Header ``k d`` followed by one line of global node ids per patch."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{patch_set.k} {min_overlap}\n")
        for p in patch_set:
            fh.write(" ".join(map(str, p.nodes.tolist())))
            fh.write("\n")


def load_patches(path, g: Graph):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    try:
        k, d = (int(t) for t in lines[0].split())
        node_lists = [np.array([int(t) for t in ln.split()], dtype=np.int64) for ln in lines[1:k + 1]]
    except ValueError:
        raise FormatError(f"{path}: malformed patch file") from None
    if len(node_lists) != k or any(len(x) == 0 for x in node_lists):
        raise FormatError(f"{path}: expected {k} non-empty patch lines")
    if max(int(x.max()) for x in node_lists) >= g.n_nodes:
        raise FormatError(f"{path}: node id outside the graph")
    patch_set = PatchSet.from_node_lists(g, node_lists)
    return patch_set, PatchGraph.from_patches(patch_set, d)
