"""Rigid-motion synchronization of overlapping patch embeddings.

Each patch ``j`` gets a transform ``z -> S_j z + t_j`` (row form
``Z S_j^T + t_j``) mapping its local frame into a shared global frame:

1. :func:`pairwise_rotation` estimates, for every patch-graph edge, the
   orthogonal map between the two frames from the shared nodes.
2. :func:`solve_rotations` finds per-patch rotations consistent with those
   estimates (weighted block fixed-point iteration).
3. :func:`solve_translations` fits translations by least squares on the
   patch-graph incidence matrix.
4. :func:`align_and_average` applies the transforms and averages nodes that
   occur in several patches.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, DegenerateOverlapError, FormatError, SyncError

__all__ = [
    "Transform",
    "IncidenceSystem",
    "polar_factor",
    "pairwise_rotation",
    "relative_rotations",
    "solve_rotations",
    "incidence_system",
    "conjugate_gradient",
    "solve_translations",
    "align_and_average",
    "synchronize",
    "save_transforms",
    "load_transforms",
]

log = logging.getLogger(__name__)

DEGENERACY_RATIO = 1e-10


@dataclass(frozen=True)
class Transform:
    """Rigid motion ``z -> rotation @ z + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    def apply(self, z):
        """Transform the rows of ``z``."""
        return np.asarray(z) @ self.rotation.T + self.translation

    def orthogonality_error(self):
        s = self.rotation
        return float(np.abs(s.T @ s - np.eye(s.shape[0])).max())


def polar_factor(m):
    """Orthogonal polar factor ``M (M^T M)^{-1/2}``, computed as ``U V^T`` from the SVD."""
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def pairwise_rotation(z_i, z_j, pair=(0, 1), center=True):
    """Orthogonal ``R`` minimising ``sum_u ||z_i[u] - R z_j[u]||^2``.

    ``z_i`` and ``z_j`` are the two patches' embeddings of the same ordered
    list of shared nodes. With ``center`` (the default) each side is centred
    on its overlap mean first, which makes the estimate independent of the
    patch translations.

    Raises
    ------
    DegenerateOverlapError
        If the cross-covariance is numerically rank deficient.
    """
    a = np.asarray(z_i, dtype=np.float64)
    b = np.asarray(z_j, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"overlap embeddings differ in shape: {a.shape} vs {b.shape}")
    if center:
        a = a - a.mean(axis=0)
        b = b - b.mean(axis=0)
    m = a.T @ b
    u, s, vt = np.linalg.svd(m)
    ratio = s[-1] / s[0] if s[0] > 0 else 0.0
    if ratio < DEGENERACY_RATIO:
        raise DegenerateOverlapError(pair, ratio)
    return u @ vt


@dataclass(frozen=True, eq=False)
class IncidenceSystem:
    """``B`` (signed incidence, +1 at i and -1 at j per edge) and mean overlap offsets ``C``."""

    b: sp.csr_matrix
    c: np.ndarray


def _local_rows(patch_set, j, nodes):
    return patch_set[j].to_local(nodes)


def relative_rotations(patch_set, patch_graph, embeddings, center=True):
    """``{(i, j): (R_ij, w_ij)}`` for every patch-graph edge, ``w_ij`` = overlap size."""
    out = {}
    for i, j in patch_graph.edges:
        nodes = patch_graph.overlap(i, j)
        zi = embeddings[i][_local_rows(patch_set, i, nodes)]
        zj = embeddings[j][_local_rows(patch_set, j, nodes)]
        out[(i, j)] = (pairwise_rotation(zi, zj, (i, j), center), len(nodes))
    return out


def _block_operator(k, dim, rotations):
    """Sparse ``R~`` with blocks ``w_ij R_ij / sum_l w_il``."""
    weight_sum = np.zeros(k)
    for (i, j), (_, w) in rotations.items():
        weight_sum[i] += w
        weight_sum[j] += w
    rows, cols, vals = [], [], []
    ii, jj = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    for (i, j), (r, w) in rotations.items():
        for a, b, blk in ((i, j, r), (j, i, r.T)):
            rows.append(a * dim + ii.ravel())
            cols.append(b * dim + jj.ravel())
            vals.append((w / weight_sum[a]) * blk.ravel())
    if not rows:
        return sp.csr_matrix((k * dim, k * dim))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(k * dim, k * dim),
    )


def _spectral_start(k, dim, rotations):
    """Blockwise-projected leading eigenvectors of ``R~``.

    ``R~ = D^-1 W`` with ``W`` symmetric (blocks ``w_ij R_ij``), so the
    eigenvectors come from the symmetric ``D^-1/2 W D^-1/2``.
    """
    w = np.zeros((k * dim, k * dim))
    deg = np.zeros(k)
    for (i, j), (r, wt) in rotations.items():
        w[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim] = wt * r
        w[j * dim:(j + 1) * dim, i * dim:(i + 1) * dim] = wt * r.T
        deg[i] += wt
        deg[j] += wt
    scale = np.repeat(1.0 / np.sqrt(deg), dim)
    vals, vecs = np.linalg.eigh(scale[:, None] * w * scale[None, :])
    top = scale[:, None] * vecs[:, np.argsort(vals)[::-1][:dim]]
    return np.stack([polar_factor(b) for b in top.reshape(k, dim, dim)])


def _neighbor_blocks(k, rotations):
    """Per patch, the list of ``(j, w_ij R_ij / sum_l w_il)`` terms of ``R~``."""
    weight_sum = np.zeros(k)
    for (i, j), (_, w) in rotations.items():
        weight_sum[i] += w
        weight_sum[j] += w
    out = [[] for _ in range(k)]
    for (i, j), (r, w) in rotations.items():
        out[i].append((j, (w / weight_sum[i]) * r))
        out[j].append((i, (w / weight_sum[j]) * r.T))
    return out


def solve_rotations(k, dim, rotations, method="gauss-seidel", damping=0.5, tol=1e-9,
                    max_iter=1000, start="spectral"):
    """Per-patch rotations ``S_j`` with ``S_i S_j^T ~ R_ij``.

    Both methods look for a stacked ``(k dim) x dim`` matrix ``S`` of
    orthogonal blocks that is a fixed point of ``S -> polar((1 - damping) S +
    damping R~ S)``, with ``R~`` the block matrix ``w_ij R_ij / sum_l w_il``
    and ``polar`` applied per block.

    ``method="damped"`` iterates that map directly (all blocks at once).
    ``method="gauss-seidel"`` sweeps over the blocks, setting
    ``S_i = polar((R~ S)_i)`` with the newest values of the other blocks. Its
    generic fixed points are fixed points of the damped map too, and it
    converges far faster when the pairwise estimates are mutually
    inconsistent, as they are for independently trained patch models.

    ``start="spectral"`` begins at the blockwise-projected leading
    eigenvectors of the symmetrised operator, gauge-fixed so the mean
    rotation is the identity; ``start="identity"`` begins at identity blocks.
    Iteration stops once no block entry changes by more than ``tol``.

    Raises
    ------
    SyncError
        If the iteration has not converged after ``max_iter`` steps.
    """
    if k == 1 or not rotations:
        if k > 1:
            raise ContractViolation("patch graph has no edges")
        return np.eye(dim)[None].copy()
    if start == "identity":
        s = np.tile(np.eye(dim), (k, 1, 1))
    elif start == "spectral":
        s = _spectral_start(k, dim, rotations)
        s = s @ polar_factor(s.sum(axis=0)).T
    else:
        raise ValueError(f"unknown start {start!r}")

    change = np.inf
    if method == "damped":
        op = _block_operator(k, dim, rotations)
        for _ in range(max_iter):
            mixed = (op @ s.reshape(k * dim, dim)).reshape(k, dim, dim)
            u, _, vt = np.linalg.svd((1.0 - damping) * s + damping * mixed)
            new = u @ vt
            change = float(np.abs(new - s).max())
            s = new
            if change <= tol:
                return s
    elif method == "gauss-seidel":
        blocks = _neighbor_blocks(k, rotations)
        for _ in range(max_iter):
            change = 0.0
            for i in range(k):
                new = polar_factor(sum(r @ s[j] for j, r in blocks[i]))
                change = max(change, float(np.abs(new - s[i]).max()))
                s[i] = new
            if change <= tol:
                return s
    else:
        raise ValueError(f"unknown method {method!r}")
    raise SyncError(
        f"rotation synchronization did not converge in {max_iter} iterations "
        f"(last max block change {change:.3e})",
        residual=change,
    )


def incidence_system(patch_set, patch_graph, rotated) -> IncidenceSystem:
    """Incidence ``B`` and offsets ``C[e] = mean_t(Z_j[t] - Z_i[t])`` for edge ``e = (i, j)``.

    With this orientation the least-squares solution ``T`` of ``B T = C``
    satisfies ``Z_i + T_i ~ Z_j + T_j`` on every overlap.
    """
    edges = patch_graph.edges
    k = patch_graph.n_patches
    dim = rotated[0].shape[1]
    m = len(edges)
    rows = np.repeat(np.arange(m), 2)
    cols = np.asarray(edges, dtype=np.int64).reshape(-1)
    vals = np.tile([1.0, -1.0], m)
    b = sp.csr_matrix((vals, (rows, cols)), shape=(m, k))
    c = np.zeros((m, dim))
    for e, (i, j) in enumerate(edges):
        nodes = patch_graph.overlap(i, j)
        zi = rotated[i][_local_rows(patch_set, i, nodes)]
        zj = rotated[j][_local_rows(patch_set, j, nodes)]
        c[e] = (zj - zi).mean(axis=0)
    return IncidenceSystem(b, c)


def conjugate_gradient(matvec, rhs, tol=1e-10, max_iter=200):
    """Column-wise conjugate gradient for a symmetric positive semidefinite operator.

    Starts from zero, so for a consistent singular system the iterates stay in
    the range of the operator and converge to the least-norm solution.
    Returns ``(x, iterations, relative_residual)``.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = np.einsum("ij,ij->j", r, r)
    norm_b = np.sqrt(rr)
    norm_b[norm_b == 0] = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        if np.all(np.sqrt(rr) <= tol * norm_b):
            it -= 1
            break
        ap = matvec(p)
        pap = np.einsum("ij,ij->j", p, ap)
        alpha = np.divide(rr, pap, out=np.zeros_like(rr), where=pap > 0)
        x += alpha * p
        r -= alpha * ap
        rr_new = np.einsum("ij,ij->j", r, r)
        beta = np.divide(rr_new, rr, out=np.zeros_like(rr), where=rr > 0)
        p = r + beta * p
        rr = rr_new
    return x, it, float(np.max(np.sqrt(rr) / norm_b))


def solve_translations(system: IncidenceSystem, tol=1e-10, max_iter=200):
    """Least-norm minimiser of ``||B T - C||^2`` (mean-zero over patches).

    Solves the normal equations ``B^T B T = B^T C`` (``B^T B`` is the patch
    graph Laplacian) by conjugate gradient.
    """
    b = system.b
    k = b.shape[1]
    if system.c.shape[0] == 0:
        return np.zeros((k, system.c.shape[1]))
    lap = (b.T @ b).tocsr()
    rhs = b.T @ system.c
    t, it, res = conjugate_gradient(lambda x: lap @ x, rhs, tol=tol, max_iter=max_iter)
    if res > tol:
        log.warning("translation solve stopped after %d iterations, residual %.2e", it, res)
    return t - t.mean(axis=0)


def _check_connected(patch_graph):
    if not patch_graph.is_connected():
        raise ContractViolation("patch graph must be connected for synchronization")


def synchronize(patch_set, patch_graph, embeddings, center=True, method="gauss-seidel",
                start="spectral", max_iter=1000):
    """Transforms taking every patch embedding into one global frame.

    ``method``, ``start`` and ``max_iter`` are passed to
    :func:`solve_rotations`.
    """
    _check_connected(patch_graph)
    k = patch_set.k
    dim = embeddings[0].shape[1]
    rel = relative_rotations(patch_set, patch_graph, embeddings, center)
    # S_i S_j^T ~ R_ij means S_j maps the global frame into patch j, so the
    # patch-to-global rotation is S_j^T (row form: Z_j S_j)
    rot = solve_rotations(k, dim, rel, method=method, start=start, max_iter=max_iter)
    rotated = [embeddings[j] @ rot[j] for j in range(k)]
    trans = solve_translations(incidence_system(patch_set, patch_graph, rotated))
    return [Transform(rot[j].T.copy(), trans[j]) for j in range(k)]


def align_and_average(patch_set, embeddings, transforms):
    """Global embedding: transform each patch, then average each node over its patches."""
    if len(transforms) != patch_set.k or len(embeddings) != patch_set.k:
        raise ContractViolation("need one embedding and one transform per patch")
    counts = patch_set.counts()
    if np.any(counts == 0):
        raise ContractViolation("every node must belong to at least one patch")
    dim = embeddings[0].shape[1]
    total = np.zeros((patch_set.n_nodes, dim))
    for patch, z, tr in zip(patch_set, embeddings, transforms):
        total[patch.nodes] += tr.apply(z)
    return total / counts[:, None]


def save_transforms(path, transforms):
    """Header ``k e``, then per patch ``e`` rotation rows and one translation row."""
    k = len(transforms)
    dim = transforms[0].rotation.shape[0] if k else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{k} {dim}\n")
        for tr in transforms:
            np.savetxt(fh, tr.rotation, fmt="%.17g")
            np.savetxt(fh, tr.translation[None], fmt="%.17g")


def load_transforms(path):
    with open(path, encoding="utf-8") as fh:
        try:
            k, dim = (int(t) for t in fh.readline().split())
            rows = np.loadtxt(fh, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if rows.shape != (k * (dim + 1), dim):
        raise FormatError(f"{path}: expected {k * (dim + 1)} rows of {dim} values")
    blocks = rows.reshape(k, dim + 1, dim)
    return [Transform(b[:dim].copy(), b[dim].copy()) for b in blocks]
