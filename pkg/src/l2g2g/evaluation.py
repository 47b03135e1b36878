"""Held-out edge splits, negative sampling and the AUC / AP ranking metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError, ParameterError
from .gcn import decoder_score
from .graph import Graph

__all__ = [
    "EdgeSplit",
    "sample_negatives",
    "split_edges",
    "auc",
    "ap",
    "score_pairs",
    "evaluate_embedding",
    "reconstruction_pairs",
]

MAX_NEGATIVE_ROUNDS = 50


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    """Training graph plus held-out positive and sampled negative pairs."""

    train: Graph
    test_pos: np.ndarray
    test_neg: np.ndarray
    val_pos: np.ndarray
    val_neg: np.ndarray
    seed: int

    def test_pairs(self):
        """``(pairs, labels)`` for the test set, positives first."""
        return _labelled(self.test_pos, self.test_neg)

    def val_pairs(self):
        return _labelled(self.val_pos, self.val_neg)


def _labelled(pos, neg):
    pairs = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos), dtype=np.int8), np.zeros(len(neg), dtype=np.int8)])
    return pairs, labels


def sample_negatives(g: Graph, count, rng, max_rounds=MAX_NEGATIVE_ROUNDS):
    """``count`` distinct node pairs ``u < v`` that are not edges of ``g``.

    Pairs are drawn uniformly, rejected if they are self-pairs, edges or
    repeats, and kept in draw order. Raises :class:`ParameterError` when the
    graph has too few non-edges or ``max_rounds`` batches do not suffice.
    """
    n = g.n_nodes
    available = n * (n - 1) // 2 - g.n_edges
    if count > available:
        raise ParameterError(f"need {count} non-edges but the graph has only {available}")
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)
    found = np.empty(0, dtype=np.int64)
    for _ in range(max_rounds):
        need = count - len(found)
        batch = rng.integers(0, n, size=(2 * need + 16, 2))
        batch = np.sort(batch, axis=1)
        batch = batch[(batch[:, 0] != batch[:, 1]) & ~g.has_edges(batch)]
        codes = np.concatenate([found, batch[:, 0] * n + batch[:, 1]])
        _, first = np.unique(codes, return_index=True)
        found = codes[np.sort(first)][:count]
        if len(found) == count:
            return np.stack([found // n, found % n], axis=1)
    raise ParameterError(
        f"negative sampling found {len(found)} of {count} non-edges after {max_rounds} rounds"
    )


def split_edges(g: Graph, test_frac=0.10, val_frac=0.05, seed=0) -> EdgeSplit:
    """Remove ``floor(test_frac M)`` test and ``floor(val_frac M)`` validation edges.

    Edges are chosen uniformly at random; each held-out set is paired with
    the same number of non-edges of the full graph. The training graph keeps
    every node and the remaining edges.
    """
    from .train import derive_rng

    if not (0 < test_frac and 0 < val_frac and test_frac + val_frac < 1):
        raise ParameterError("fractions must be positive and sum to less than 1")
    m = g.n_edges
    n_test, n_val = int(math.floor(test_frac * m)), int(math.floor(val_frac * m))
    if n_test < 1 or n_val < 1:
        raise ParameterError(f"graph with {m} edges is too small for a {test_frac}/{val_frac} split")
    rng = derive_rng(seed, "split")
    perm = rng.permutation(m)
    test_pos = g.edges[np.sort(perm[:n_test])]
    val_pos = g.edges[np.sort(perm[n_test:n_test + n_val])]
    train = Graph(g.n_nodes, g.edges[np.sort(perm[n_test + n_val:])], g.features)
    neg = sample_negatives(g, n_test + n_val, rng)
    return EdgeSplit(train, test_pos, neg[:n_test], val_pos, neg[n_test:], seed)


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise MetricError("scores and labels differ in length")
    pos = labels.astype(bool)
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise MetricError("need at least one positive and one negative label")
    return scores, pos, n_pos


def auc(scores, labels) -> float:
    """Probability that a positive outscores a negative, ties counting one half."""
    scores, pos, n_pos = _check(scores, labels)
    n_neg = len(scores) - n_pos
    ranks = rankdata(scores)  # average ranks give the half credit for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def ap(scores, labels) -> float:
    """Mean over positives of the precision at that positive's rank.

    Ranking is by descending score with a stable sort, so tied items keep
    their input order.
    """
    scores, pos, n_pos = _check(scores, labels)
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return math.fsum(precision.tolist()) / n_pos


def score_pairs(z, pairs):
    """Decoder probability for each row ``(u, v)`` of ``pairs``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return decoder_score(z[pairs[:, 0]], z[pairs[:, 1]])


def evaluate_embedding(z, pos_pairs, neg_pairs):
    """AUC and AP of an embedding on positive vs negative pairs, as fractions."""
    pairs, labels = _labelled(np.asarray(pos_pairs), np.asarray(neg_pairs))
    s = score_pairs(z, pairs)
    return {"auc": auc(s, labels), "ap": ap(s, labels)}


def reconstruction_pairs(g: Graph, seed=0):
    """All edges of ``g`` and as many uniformly sampled non-edges."""
    from .train import derive_rng

    return g.edges, sample_negatives(g, g.n_edges, derive_rng(seed, "split", 1))
