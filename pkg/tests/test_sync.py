import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import orthogonal_procrustes
from scipy.stats import ortho_group

from l2g2g.errors import ContractViolation, DegenerateOverlapError, FormatError, SyncError
from l2g2g.graph import Graph
from l2g2g.partition import PatchGraph, PatchSet
from l2g2g.sync import (
    IncidenceSystem,
    Transform,
    align_and_average,
    conjugate_gradient,
    incidence_system,
    load_transforms,
    pairwise_rotation,
    polar_factor,
    relative_rotations,
    save_transforms,
    solve_rotations,
    solve_translations,
    synchronize,
)


def random_orthogonal(dim, rng):
    return ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.array([[rng.choice([-1.0, 1.0])]])


def synthetic_patches(k, dim, seed, overlap=None, extra_edges=True):
    """Chain of patches over a random ground-truth embedding, each seen through a random rigid motion."""
    rng = np.random.default_rng(seed)
    overlap = overlap or dim + 1
    size = 3 * overlap
    step = size - overlap
    n = (k - 1) * step + size
    nodes = [np.arange(j * step, j * step + size) for j in range(k)]
    if extra_edges and k > 2:
        # add some random cross links so the patch graph is not always a path
        for _ in range(k // 2):
            a, b = rng.choice(k, 2, replace=False)
            nodes[b] = np.union1d(nodes[b], rng.choice(nodes[a], overlap, replace=False))
    g = Graph.from_edges(n, [], np.zeros((n, 1)))
    ps = PatchSet.from_node_lists(g, nodes)
    pg = PatchGraph.from_patches(ps, overlap)
    truth = rng.normal(size=(n, dim))
    motions = [Transform(random_orthogonal(dim, rng), 3 * rng.normal(size=dim)) for _ in range(k)]
    local = [m.apply(truth[p.nodes]) for m, p in zip(motions, ps)]
    return ps, pg, truth, local


def procrustes_residual(a, b):
    """Max deviation of ``b`` from ``a`` after the best rigid motion of ``b``."""
    a0, b0 = a - a.mean(0), b - b.mean(0)
    r = polar_factor(a0.T @ b0)
    return np.abs(a0 - b0 @ r.T).max()


# pairwise rotation

def test_identical_inputs_give_identity():
    z = np.random.default_rng(0).normal(size=(20, 4))
    assert np.allclose(pairwise_rotation(z, z), np.eye(4), atol=1e-12)


def test_worked_polar_case():
    m = np.array([[0.0, -2.0], [2.0, 0.0]])
    assert np.array_equal(polar_factor(m), np.array([[0.0, -1.0], [1.0, 0.0]]))
    # same matrix reached through the overlap cross-covariance sum_u z_i z_j^T = M
    zi = np.array([[0.0, 2.0], [-2.0, 0.0]]) / np.sqrt(2)
    zj = np.array([[1.0, 0.0], [0.0, 1.0]]) * np.sqrt(2)
    assert np.allclose(zi.T @ zj, m)
    assert np.allclose(pairwise_rotation(zi, zj, center=False), [[0, -1], [1, 0]], atol=1e-15)


@given(st.integers(1, 16), st.integers(0, 10_000))
def test_recovers_planted_rotation(dim, seed):
    rng = np.random.default_rng(seed)
    zi = rng.normal(size=(dim + 5, dim))
    q = random_orthogonal(dim, rng)
    zj = zi @ q  # z_j = Q^T z_i row-wise, so R = Q maps j-frame to i-frame
    r = pairwise_rotation(zi, zj)
    assert np.abs(zi - zj @ r.T).max() <= 1e-10
    assert np.allclose(r, q, atol=1e-10)


@given(st.integers(1, 10), st.integers(0, 10_000))
def test_matches_scipy_procrustes(dim, seed):
    rng = np.random.default_rng(seed)
    zi, zj = rng.normal(size=(2, 3 * dim, dim))
    r = pairwise_rotation(zi, zj, center=False)
    ref, _ = orthogonal_procrustes(zj, zi)  # argmin ||zj Q - zi||, so R = Q^T
    assert np.abs(r - ref.T).max() <= 1e-8


def test_degenerate_overlap_names_pair():
    z = np.zeros((10, 3))
    z[:, 0] = np.arange(10)
    with pytest.raises(DegenerateOverlapError) as err:
        pairwise_rotation(z, z, pair=(2, 5))
    assert err.value.pair == (2, 5)
    assert "patches 2 and 5" in str(err.value)


def test_shape_mismatch():
    with pytest.raises(ContractViolation):
        pairwise_rotation(np.zeros((4, 2)), np.zeros((5, 2)))


def test_relative_rotations_transpose_consistency():
    ps, pg, _, local = synthetic_patches(4, 3, 1)
    rel = relative_rotations(ps, pg, local)
    for (i, j), (r, w) in rel.items():
        nodes = pg.overlap(i, j)
        zi = local[i][ps[i].to_local(nodes)]
        zj = local[j][ps[j].to_local(nodes)]
        assert np.allclose(pairwise_rotation(zj, zi), r.T, atol=1e-10)
        assert w == len(nodes)
        assert np.abs(r.T @ r - np.eye(3)).max() <= 1e-8


# rotation synchronization

@pytest.mark.parametrize("method", ["damped", "gauss-seidel"])
@pytest.mark.parametrize("start", ["identity", "spectral"])
def test_all_identity_rotations(method, start):
    rel = {(0, 1): (np.eye(3), 5), (1, 2): (np.eye(3), 7), (0, 2): (np.eye(3), 2)}
    s = solve_rotations(3, 3, rel, method=method, start=start)
    assert np.allclose(s, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("method", ["damped", "gauss-seidel"])
@pytest.mark.parametrize("seed", range(5))
def test_consistent_rotations_recovered(method, seed):
    rng = np.random.default_rng(seed)
    k, dim = 6, 4
    q = [random_orthogonal(dim, rng) for _ in range(k)]
    rel = {}
    for i in range(k):
        for j in range(i + 1, k):
            if j == i + 1 or rng.random() < 0.5:
                rel[(i, j)] = (q[i] @ q[j].T, int(rng.integers(10, 50)))
    s = solve_rotations(k, dim, rel, method=method)
    for (i, j), (r, _) in rel.items():
        assert np.abs(s[i] @ s[j].T - r).max() <= 1e-6
    assert max(np.abs(b.T @ b - np.eye(dim)).max() for b in s) <= 1e-8


def test_two_block_undamped_oscillates_damped_converges():
    # a single edge with a rotation by 90 degrees: from identity blocks the
    # undamped map swaps the two blocks' relation every step
    r = np.array([[0.0, -1.0], [1.0, 0.0]])
    rel = {(0, 1): (r, 10)}
    with pytest.raises(SyncError) as err:
        solve_rotations(2, 2, rel, method="damped", damping=1.0, start="identity", max_iter=50)
    assert err.value.residual > 0.1
    s = solve_rotations(2, 2, rel, method="damped", damping=0.5, start="identity")
    assert np.allclose(s[0] @ s[1].T, r, atol=1e-9)


def test_undamped_period_two():
    r = np.array([[0.0, -1.0], [1.0, 0.0]])
    op_s = np.stack([np.eye(2), np.eye(2)])
    # one undamped step from identity gives (R, R^T); a second step returns to (I, I) up to sign
    step1 = np.stack([polar_factor(r @ op_s[1]), polar_factor(r.T @ op_s[0])])
    step2 = np.stack([polar_factor(r @ step1[1]), polar_factor(r.T @ step1[0])])
    assert np.allclose(step2, op_s)
    assert not np.allclose(step1, op_s)


def test_single_patch_and_missing_edges():
    assert np.array_equal(solve_rotations(1, 3, {}), np.eye(3)[None])
    with pytest.raises(ContractViolation):
        solve_rotations(2, 3, {})


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_rotations(2, 2, {(0, 1): (np.eye(2), 1)}, method="newton")


# translations

def test_zero_offsets_give_zero_translations():
    b = IncidenceSystem(_incidence([(0, 1), (1, 2)], 3), np.zeros((2, 4)))
    assert np.array_equal(solve_translations(b), np.zeros((3, 4)))


def _incidence(edges, k):
    import scipy.sparse as sp

    rows = np.repeat(np.arange(len(edges)), 2)
    return sp.csr_matrix((np.tile([1.0, -1.0], len(edges)), (rows, np.ravel(edges))),
                         shape=(len(edges), k))


def test_two_patches_split_offset():
    c = np.array([[2.0, -4.0]])
    t = solve_translations(IncidenceSystem(_incidence([(0, 1)], 2), c))
    assert np.allclose(t, [[1.0, -2.0], [-1.0, 2.0]], atol=1e-14)


def random_connected_edges(k, rng):
    edges = {(int(rng.integers(0, j)), j) for j in range(1, k)}  # random tree
    for _ in range(int(rng.integers(0, k))):
        a, b = sorted(rng.choice(k, 2, replace=False))
        edges.add((int(a), int(b)))
    return sorted(edges)


@given(st.integers(2, 20), st.integers(1, 5), st.integers(0, 10_000))
def test_translations_match_pseudoinverse(k, dim, seed):
    rng = np.random.default_rng(seed)
    edges = random_connected_edges(k, rng)
    b = _incidence(edges, k)
    c = rng.normal(size=(len(edges), dim))
    t = solve_translations(IncidenceSystem(b, c))
    ref = np.linalg.pinv(b.toarray()) @ c
    assert np.abs(t - ref).max() <= 1e-8
    assert np.abs(t.sum(axis=0)).max() <= 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_translation_optimality(seed):
    rng = np.random.default_rng(seed)
    k = 8
    edges = random_connected_edges(k, rng)
    b = _incidence(edges, k).toarray()
    c = rng.normal(size=(len(edges), 3))
    t = solve_translations(IncidenceSystem(_incidence(edges, k), c))
    best = np.sum((b @ t - c) ** 2)
    for _ in range(100):
        alt = rng.normal(size=t.shape)
        assert best <= np.sum((b @ alt - c) ** 2) + 1e-9


def test_conjugate_gradient_spd():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    a = a @ a.T + 6 * np.eye(6)
    rhs = rng.normal(size=(6, 2))
    x, it, res = conjugate_gradient(lambda v: a @ v, rhs)
    assert np.allclose(a @ x, rhs, atol=1e-9) and res <= 1e-10 and it <= 6


# alignment and full recovery

def test_k1_identity_transform_is_noop():
    g = Graph.from_edges(4, [], np.zeros((4, 1)))
    ps = PatchSet.from_node_lists(g, [np.arange(4)])
    z = np.random.default_rng(0).normal(size=(4, 3))
    assert np.array_equal(align_and_average(ps, [z], [Transform.identity(3)]), z)


def test_node_in_two_patches_is_averaged():
    g = Graph.from_edges(3, [], np.zeros((3, 1)))
    ps = PatchSet.from_node_lists(g, [[0, 1], [1, 2]])
    za = np.array([[0.0, 0.0], [1.0, 2.0]])
    zb = np.array([[3.0, 4.0], [9.0, 9.0]])
    out = align_and_average(ps, [za, zb], [Transform.identity(2)] * 2)
    assert np.array_equal(out[1], [2.0, 3.0])
    assert np.array_equal(out[0], [0.0, 0.0]) and np.array_equal(out[2], [9.0, 9.0])


def test_uncovered_node_rejected():
    g = Graph.from_edges(3, [], np.zeros((3, 1)))
    ps = PatchSet.from_node_lists(g, [[0, 1]])
    with pytest.raises(ContractViolation):
        align_and_average(ps, [np.zeros((2, 2))], [Transform.identity(2)])


@pytest.mark.parametrize("k", [2, 5, 10])
@pytest.mark.parametrize("dim", [2, 16])
@pytest.mark.parametrize("seed", range(3))
def test_exact_recovery(k, dim, seed):
    ps, pg, truth, local = synthetic_patches(k, dim, seed)
    transforms = synchronize(ps, pg, local)
    assert max(t.orthogonality_error() for t in transforms) <= 1e-8
    assert procrustes_residual(truth, align_and_average(ps, local, transforms)) <= 1e-6


def test_gauge_common_motion_moves_output_rigidly():
    ps, pg, truth, local = synthetic_patches(5, 3, 4)
    rng = np.random.default_rng(9)
    common = Transform(random_orthogonal(3, rng), rng.normal(size=3))
    a = align_and_average(ps, local, synchronize(ps, pg, local))
    moved = [common.apply(z) for z in local]
    b = align_and_average(ps, moved, synchronize(ps, pg, moved))
    assert procrustes_residual(a, b) <= 1e-8
    # pairwise distances are preserved exactly up to round-off
    da = np.linalg.norm(a[:, None] - a[None], axis=-1)
    db = np.linalg.norm(b[:, None] - b[None], axis=-1)
    assert np.abs(da - db).max() <= 1e-8


def test_disconnected_patch_graph_rejected():
    g = Graph.from_edges(6, [], np.zeros((6, 1)))
    ps = PatchSet.from_node_lists(g, [[0, 1, 2], [3, 4, 5]])
    pg = PatchGraph.from_patches(ps, 1)
    with pytest.raises(ContractViolation):
        synchronize(ps, pg, [np.zeros((3, 2)), np.zeros((3, 2))])


def test_incidence_rows_sum_to_zero_and_rank():
    ps, pg, _, local = synthetic_patches(6, 2, 0)
    system = incidence_system(ps, pg, local)
    b = system.b.toarray()
    assert np.all(b.sum(axis=1) == 0)
    assert np.linalg.matrix_rank(b) == ps.k - 1


def test_transform_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ts = [Transform(random_orthogonal(3, rng), rng.normal(size=3)) for _ in range(4)]
    save_transforms(tmp_path / "t.txt", ts)
    assert (tmp_path / "t.txt").read_text().splitlines()[0] == "4 3"
    back = load_transforms(tmp_path / "t.txt")
    assert all(np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)
               for a, b in zip(ts, back))


def test_bad_transform_file(tmp_path):
    (tmp_path / "t.txt").write_text("2 2\n1 0\n0 1\n")
    with pytest.raises(FormatError):
        load_transforms(tmp_path / "t.txt")
