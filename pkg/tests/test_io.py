import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from l2g2g.errors import FormatError
from l2g2g.graph import Graph, SbmConfig, generate_sbm
from l2g2g.io import (
    load_embedding,
    load_graph,
    load_graph_dir,
    read_matrix,
    save_embedding,
    save_graph,
    save_graph_dir,
    write_matrix,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def feats(tmp_path):
    return _write(tmp_path / "x.txt", "3 2\n1 0\n0 1\n1 1\n")


def test_reversed_duplicate_lines_merge(tmp_path, feats):
    e = _write(tmp_path / "e.txt", "0 1\n1 0\n")
    assert load_graph(e, feats).n_edges == 1


def test_self_loop_dropped_with_warning(tmp_path, feats):
    e = _write(tmp_path / "e.txt", "0 1\n2 2\n")
    with pytest.warns(UserWarning, match="dropped 1 self-loop"):
        g = load_graph(e, feats)
    assert g.edges.tolist() == [[0, 1]]


def test_empty_edge_file(tmp_path, feats):
    e = _write(tmp_path / "e.txt", "")
    assert load_graph(e, feats).n_edges == 0


@pytest.mark.parametrize("text", ["0 3\n", "0 x\n", "0 1 2\n", "-1 0\n", "0.5 1\n"])
def test_bad_edge_files(tmp_path, feats, text):
    e = _write(tmp_path / "e.txt", text)
    with pytest.raises(FormatError):
        load_graph(e, feats)


@pytest.mark.parametrize("text", ["3\n1 0\n", "3 2\n1 0\n0 1\n", "2 2\n1 a\n0 1\n", "a b\n"])
def test_bad_matrix_files(tmp_path, text):
    with pytest.raises(FormatError):
        read_matrix(_write(tmp_path / "m.txt", text))


def test_matrix_round_trip_is_exact(tmp_path):
    m = np.random.default_rng(0).normal(size=(7, 3)) * 1e-3
    save_embedding(tmp_path / "z.txt", m)
    assert np.array_equal(load_embedding(tmp_path / "z.txt"), m)


def test_files_use_unix_newlines(tmp_path, path3):
    save_graph(path3, tmp_path / "e.txt", tmp_path / "x.txt")
    assert b"\r" not in (tmp_path / "e.txt").read_bytes()
    assert (tmp_path / "x.txt").read_bytes().startswith(b"3 3\n")


def test_sbm_round_trip(tmp_path):
    g = generate_sbm(SbmConfig(5, 20, 0.3, 0.02, seed=1))
    save_graph_dir(g, tmp_path / "g")
    assert load_graph_dir(tmp_path / "g").same_as(g)


@given(st.integers(1, 15), st.lists(st.tuples(st.integers(0, 14), st.integers(0, 14)), max_size=40),
       st.integers(0, 1000))
def test_round_trip_property(tmp_path_factory, n, pairs, seed):
    pairs = [(u % n, v % n) for u, v in pairs]
    pairs = [(u, v) for u, v in pairs if u != v]
    x = np.random.default_rng(seed).normal(size=(n, 2))
    g = Graph.from_edges(n, np.array(pairs, dtype=np.int64).reshape(-1, 2), x)
    d = tmp_path_factory.mktemp("rt")
    save_graph(g, d / "e.txt", d / "x.txt")
    assert load_graph(d / "e.txt", d / "x.txt").same_as(g)


def test_write_matrix_header(tmp_path):
    write_matrix(tmp_path / "m.txt", np.zeros((2, 4)))
    assert (tmp_path / "m.txt").read_text().splitlines()[0] == "2 4"
