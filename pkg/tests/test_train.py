import json
import math
from itertools import permutations

import numpy as np
import pytest

from l2g2g.errors import DegenerateOverlapError, ParameterError, TrainingError
from l2g2g.evaluation import evaluate_embedding, split_edges
from l2g2g.gcn import decoder_score, init_model, prepare, recon_loss, _encode
from l2g2g.graph import Graph, SbmConfig, generate_sbm
from l2g2g.partition import PatchGraph, PatchSet, partition_graph
from l2g2g.sync import Transform, synchronize
import importlib
train_mod = importlib.import_module("l2g2g.train")
from l2g2g.train import (
    REGIMES,
    TrainConfig,
    derive_rng,
    fastgae_sample_size,
    sample_subgraph_degree_proportional,
    score_cross_patch,
    train,
    train_fastgae,
    train_gae,
    train_gae_l2g,
    train_l2g2g,
)

from test_sync import synthetic_patches


@pytest.fixture(scope="module")
def small():
    return generate_sbm(SbmConfig(4, 40, 0.4, 0.01, seed=3))


def cfg(**kw):
    base = dict(epochs=15, k=2, min_overlap=16)
    base.update(kw)
    return TrainConfig(**base)


@pytest.mark.parametrize("regime", REGIMES)
def test_zero_epochs_rejected(small, regime):
    with pytest.raises(ParameterError):
        train(small, cfg(regime=regime, epochs=0))


@pytest.mark.parametrize("field,value", [("sync_every", 0), ("k", 0), ("regime", "vgae")])
def test_config_validation(field, value):
    with pytest.raises(ParameterError):
        cfg(**{field: value}).validate()


@pytest.mark.parametrize("regime", REGIMES)
def test_bitwise_determinism(small, regime):
    a = train(small, cfg(regime=regime, seed=4))
    b = train(small, cfg(regime=regime, seed=4))
    assert a.losses == b.losses
    assert np.array_equal(a.embedding, b.embedding)
    c = train(small, cfg(regime=regime, seed=5))
    assert c.losses != a.losses


@pytest.mark.parametrize("regime", REGIMES)
def test_report_shape(small, regime):
    rep = train(small, cfg(regime=regime))
    assert len(rep.losses) == len(rep.epoch_times) == 15
    assert all(t > 0 for t in rep.epoch_times)
    assert rep.embedding.shape == (small.n_nodes, 16)
    assert np.all(np.isfinite(rep.embedding))
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["regime"] == regime
    assert ("transforms" in doc) == (regime in ("gae-l2g", "l2g2g"))


# sampling

def test_sample_size_is_floor_sqrt():
    assert fastgae_sample_size(10_000) == 100
    assert fastgae_sample_size(99) == 9
    assert fastgae_sample_size(1) == 1


def test_sampler_output(small):
    nodes = sample_subgraph_degree_proportional(small, 30, np.random.default_rng(0))
    assert len(nodes) == 30 == len(np.unique(nodes))
    assert np.array_equal(nodes, np.sort(nodes))
    again = sample_subgraph_degree_proportional(small, 30, np.random.default_rng(0))
    assert np.array_equal(nodes, again)


@pytest.mark.parametrize("n_s", [0, 161])
def test_sampler_bounds(small, n_s):
    with pytest.raises(ParameterError):
        sample_subgraph_degree_proportional(small, n_s, np.random.default_rng(0))


def test_sampler_uniform_on_regular_graph():
    n, n_s, draws = 40, 4, 10_000
    cycle = Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])
    rng = np.random.default_rng(1)
    hits = np.zeros(n)
    for _ in range(draws):
        hits[sample_subgraph_degree_proportional(cycle, n_s, rng)] += 1
    p = n_s / n
    sigma = math.sqrt(p * (1 - p) / draws)
    assert np.abs(hits / draws - p).max() <= 3 * sigma


def star(n):
    return Graph.from_edges(n, [(0, i) for i in range(1, n)])


def test_sampler_star_single_node_law():
    n, draws = 6, 20_000
    g = star(n)
    w = g.degrees + 1.0  # centre n, leaves 2
    p_centre = w[0] / w.sum()
    assert p_centre == pytest.approx(n / (n + 2 * (n - 1)))
    rng = np.random.default_rng(2)
    freq = np.mean([sample_subgraph_degree_proportional(g, 1, rng)[0] == 0 for _ in range(draws)])
    assert abs(freq - p_centre) <= 3 * math.sqrt(p_centre * (1 - p_centre) / draws)


def test_sampler_star_pair_law_by_enumeration():
    # successive sampling without replacement: P({a, b}) = sum over both orders
    g = star(4)
    w = g.degrees + 1.0
    p = w / w.sum()
    exact = {}
    for a, b in permutations(range(4), 2):
        key = (min(a, b), max(a, b))
        exact[key] = exact.get(key, 0.0) + p[a] * p[b] / (1 - p[a])
    assert sum(exact.values()) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    draws = 20_000
    counts = {}
    for _ in range(draws):
        key = tuple(sample_subgraph_degree_proportional(g, 2, rng).tolist())
        counts[key] = counts.get(key, 0) + 1
    for key, q in exact.items():
        assert abs(counts.get(key, 0) / draws - q) <= 3 * math.sqrt(q * (1 - q) / draws)


def test_fastgae_full_sample_equals_gae(small):
    c = cfg(regime="fastgae", sample_size=small.n_nodes, epochs=25)
    fast = train_fastgae(small, c)
    full = train_gae(small, cfg(regime="gae", epochs=25))
    assert fast.losses == full.losses
    assert np.array_equal(fast.embedding, full.embedding)


def test_fastgae_loss_uses_sampled_subgraph(small):
    rep = train_fastgae(small, cfg(regime="fastgae", epochs=1, seed=2))
    nodes = sample_subgraph_degree_proportional(small, fastgae_sample_size(small.n_nodes),
                                                derive_rng(2, "sample"))
    model = init_model(small.n_features, rng=derive_rng(2, "init", 0))
    z = _encode(model, prepare(small))[0]
    assert rep.losses[0] == recon_loss(z[nodes], small.subgraph(nodes))


# patch regimes

def test_gae_l2g_single_patch_equals_gae(small):
    patches = partition_graph(small, 1, 16)
    a = train_gae_l2g(small, patches, cfg(regime="gae-l2g", k=1))
    b = train_gae(small, cfg(regime="gae"))
    assert a.losses == b.losses
    assert np.array_equal(a.embedding, b.embedding)


def test_l2g2g_single_patch_equals_gae(small):
    patches = partition_graph(small, 1, 16)
    a = train_l2g2g(small, patches, cfg(regime="l2g2g", k=1))
    b = train_gae(small, cfg(regime="gae"))
    assert a.losses == b.losses
    assert np.array_equal(a.embedding, b.embedding)
    assert np.array_equal(a.transforms[0].rotation, np.eye(16))
    assert np.array_equal(a.transforms[0].translation, np.zeros(16))


def two_patch_setup():
    base = generate_sbm(SbmConfig(4, 25, 0.3, 0.02, seed=1))
    # one-hot block features leave the overlap embedding rank deficient
    g = Graph(100, base.edges, np.random.default_rng(0).normal(size=(100, 20)))
    ps = PatchSet.from_node_lists(g, [np.arange(60), np.arange(40, 100)])
    return g, (ps, PatchGraph.from_patches(ps, 17))


def test_l2g2g_weights_are_patch_fractions():
    g, (ps, pg) = two_patch_setup()
    rep = train_l2g2g(g, (ps, pg), cfg(regime="l2g2g", epochs=1, seed=6))
    model = init_model(g.n_features, rng=derive_rng(6, "init", 0))
    zs = [_encode(model, prepare(p.graph))[0] for p in ps]
    trs = synchronize(ps, pg, zs)
    parts = [recon_loss(t.apply(z), p.graph) for t, z, p in zip(trs, zs, ps)]
    assert rep.losses[0] == pytest.approx(0.6 * parts[0] + 0.6 * parts[1], rel=1e-14)


@pytest.mark.parametrize("every,epochs,expected", [(1, 5, [0, 1, 2, 3, 4]), (7, 7, [0]),
                                                   (10, 25, [0, 10, 20])])
def test_sync_cadence(every, epochs, expected, monkeypatch):
    g, patches = two_patch_setup()
    calls = []
    real = train_mod.synchronize

    def counting(*args, **kw):
        calls.append(1)
        return real(*args, **kw)

    monkeypatch.setattr(train_mod, "synchronize", counting)
    rep = train_l2g2g(g, patches, cfg(regime="l2g2g", epochs=epochs, sync_every=every))
    assert rep.sync_epochs == expected
    assert len(calls) == len(expected)


def test_sync_failure_reports_epoch(monkeypatch):
    g, patches = two_patch_setup()
    real = train_mod.synchronize
    state = {"n": 0}

    def flaky(*args, **kw):
        state["n"] += 1
        if state["n"] == 3:
            raise DegenerateOverlapError((0, 1), 0.0)
        return real(*args, **kw)

    monkeypatch.setattr(train_mod, "synchronize", flaky)
    with pytest.raises(TrainingError) as err:
        train_l2g2g(g, patches, cfg(regime="l2g2g", epochs=30, sync_every=5))
    assert err.value.epoch == 10
    assert str(err.value).startswith("epoch 10:")


def test_non_finite_loss_reports_epoch():
    x = np.ones((6, 1))
    x[0] = np.inf
    g = Graph.from_edges(6, [(0, 1), (1, 2), (3, 4)], x)
    with pytest.raises(TrainingError) as err, np.errstate(all="ignore"):
        train_gae(g, cfg(regime="gae"))
    assert err.value.epoch == 0


# cross-patch scoring

def test_cross_patch_same_patch_identity_equals_decoder():
    ps, pg, truth, local = synthetic_patches(2, 3, 0)
    ident = [Transform.identity(3)] * 2
    u, v = ps[0].nodes[1], ps[0].nodes[4]
    z = local[0]
    expected = decoder_score(z[ps[0].to_local([u])[0]], z[ps[0].to_local([v])[0]])
    assert score_cross_patch(u, 0, v, 0, ps, local, ident) == pytest.approx(expected, abs=1e-15)


def test_cross_patch_matches_ground_truth_after_sync():
    ps, pg, truth, local = synthetic_patches(4, 3, 5)
    trs = synchronize(ps, pg, local)
    # one global rigid motion separates the synchronized frame from the
    # truth; undo it so inner products are comparable
    aligned = np.concatenate([t.apply(z) for t, z in zip(trs, local)])
    glob = np.concatenate([truth[p.nodes] for p in ps])
    a0, b0 = glob - glob.mean(0), aligned - aligned.mean(0)
    u_, _, vt = np.linalg.svd(b0.T @ a0)
    rot = u_ @ vt
    shift = glob.mean(0) - aligned.mean(0) @ rot
    fixed = [Transform(rot.T @ t.rotation, t.translation @ rot + shift) for t in trs]
    rng = np.random.default_rng(0)
    for _ in range(20):
        i, j = rng.integers(0, ps.k, 2)
        u, v = rng.choice(ps[i].nodes), rng.choice(ps[j].nodes)
        got = score_cross_patch(u, i, v, j, ps, local, fixed)
        assert got == pytest.approx(decoder_score(truth[u], truth[v]), abs=1e-6)


def test_cross_patch_symmetric():
    ps, pg, _, local = synthetic_patches(3, 4, 2)
    trs = synchronize(ps, pg, local)
    u, v = ps[0].nodes[0], ps[2].nodes[-1]
    assert score_cross_patch(u, 0, v, 2, ps, local, trs) == score_cross_patch(v, 2, u, 0, ps, local, trs)


# accuracy smoke tests

def test_gae_toy_auc_median_above_08():
    g = generate_sbm(SbmConfig(5, 10, 0.8, 0.02, seed=0))
    aucs = []
    for seed in range(10):
        split = split_edges(g, seed=seed)
        rep = train_gae(split.train, TrainConfig(regime="gae", epochs=200, seed=seed))
        aucs.append(evaluate_embedding(rep.embedding, split.test_pos, split.test_neg)["auc"])
    assert np.median(aucs) > 0.8


def test_gae_l2g_feature_rotation_invariance():
    g = generate_sbm(SbmConfig(6, 30, 0.4, 0.01, seed=2))
    q = np.linalg.qr(np.random.default_rng(0).normal(size=(6, 6)))[0]
    g_rot = Graph(g.n_nodes, g.edges, g.features @ q)
    diffs = []
    for seed in range(3):
        split = split_edges(g, seed=seed)
        split_rot = Graph(g.n_nodes, split.train.edges, g_rot.features)
        c = TrainConfig(regime="gae-l2g", epochs=100, k=3, min_overlap=17, seed=seed)
        a = train(split.train, c)
        b = train(split_rot, c)
        diffs.append(evaluate_embedding(a.embedding, split.test_pos, split.test_neg)["auc"]
                     - evaluate_embedding(b.embedding, split.test_pos, split.test_neg)["auc"])
    assert abs(np.mean(diffs)) < 0.05
