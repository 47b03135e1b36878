"""Plain-text readers and writers.

Formats (UTF-8, unix newlines):

* edge list: one ``u v`` pair of 0-based node ids per line;
* matrices (features, embeddings): header ``rows cols`` then one row per line.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

from .errors import FormatError
from .graph import Graph, canonical_edges

__all__ = [
    "read_matrix",
    "write_matrix",
    "read_edge_list",
    "write_edge_list",
    "load_graph",
    "save_graph",
    "load_graph_dir",
    "save_graph_dir",
    "save_embedding",
    "load_embedding",
]

EDGE_FILE = "edges.txt"
FEATURE_FILE = "features.txt"


def _load(fh, path, dtype, skiprows=0):
    try:
        with warnings.catch_warnings():
            # an empty file is a valid empty edge list
            warnings.filterwarnings("ignore", message="loadtxt: input contained no data")
            return np.loadtxt(fh, dtype=dtype, ndmin=2, skiprows=skiprows)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}:1: header must be 'rows cols'")
        try:
            rows, cols = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError(f"{path}:1: non-numeric header {' '.join(header)!r}") from None
        data = _load(fh, path, np.float64)
    if rows == 0:
        return np.empty((0, cols))
    if data.shape != (rows, cols):
        raise FormatError(f"{path}: header declares {rows}x{cols}, found {data.shape[0]}x{data.shape[1]}")
    return data


def write_matrix(path, matrix):
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        np.savetxt(fh, m, fmt="%.17g")


def read_edge_list(path):
    """Return the raw ``(m, 2)`` pairs of an edge-list file."""
    with open(path, encoding="utf-8") as fh:
        pairs = _load(fh, path, np.float64)
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if pairs.shape[1] != 2:
        raise FormatError(f"{path}: expected two node ids per line")
    if not np.all(np.isfinite(pairs)) or np.any(pairs != np.round(pairs)):
        raise FormatError(f"{path}: node ids must be integers")
    if pairs.min() < 0:
        raise FormatError(f"{path}: negative node id")
    return pairs.astype(np.int64)


def write_edge_list(path, edges):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, np.asarray(edges, dtype=np.int64).reshape(-1, 2), fmt="%d")


def load_graph(edge_list_path, feature_path) -> Graph:
    """Load a graph from an edge list and a feature matrix.

    The feature file fixes ``N``; node ids must be dense in ``0..N-1``.
    Reversed and repeated edge lines are merged and self-loop lines are
    dropped with a warning.
    """
    features = read_matrix(feature_path)
    n = features.shape[0]
    raw = read_edge_list(edge_list_path)
    if len(raw) and raw.max() >= n:
        raise FormatError(
            f"{edge_list_path}: node id {int(raw.max())} >= N={n} declared by {feature_path}"
        )
    edges, n_loops = canonical_edges(raw)
    if n_loops:
        warnings.warn(f"{edge_list_path}: dropped {n_loops} self-loop line(s)", stacklevel=2)
    return Graph(n, edges, features)


def save_graph(g: Graph, edge_list_path, feature_path):
    write_edge_list(edge_list_path, g.edges)
    write_matrix(feature_path, g.features)


def load_graph_dir(path) -> Graph:
    """Load ``edges.txt`` and ``features.txt`` from a directory."""
    return load_graph(os.path.join(path, EDGE_FILE), os.path.join(path, FEATURE_FILE))


def save_graph_dir(g: Graph, path):
    os.makedirs(path, exist_ok=True)
    save_graph(g, os.path.join(path, EDGE_FILE), os.path.join(path, FEATURE_FILE))


def save_embedding(path, z):
    write_matrix(path, z)


def load_embedding(path):
    return read_matrix(path)
