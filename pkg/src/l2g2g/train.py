"""Training regimes: GAE, FastGAE, GAE+L2G and L2G2G.

All regimes share the encoder and loss of :mod:`l2g2g.gcn` and differ in what
the loss sees each epoch:

``gae``
    the full graph.
``fastgae``
    the induced subgraph on ``floor(sqrt(N))`` nodes drawn proportionally to
    degree + 1, redrawn every epoch.
``gae-l2g``
    one independent encoder per patch, synchronized once after training.
``l2g2g``
    one shared encoder; patch embeddings are synchronized every
    ``sync_every`` epochs and each patch loss is computed on its aligned
    embedding, weighted by ``N_j / N``.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import L2G2GError, ParameterError, TrainingError
from .gcn import EMBED, HIDDEN, AdamState, _backprop, _encode, _loss_grad, adam_step, init_model, prepare
from .gcn import recon_loss_and_grad
from .graph import Graph
from .partition import partition_graph
from .sync import align_and_average, synchronize

__all__ = [
    "REGIMES",
    "TrainConfig",
    "TrainReport",
    "derive_rng",
    "derive_seed",
    "fastgae_sample_size",
    "sample_subgraph_degree_proportional",
    "train_gae",
    "train_fastgae",
    "train_gae_l2g",
    "train_l2g2g",
    "train",
    "score_cross_patch",
]

REGIMES = ("gae", "fastgae", "gae-l2g", "l2g2g")
_STREAMS = {"split": 0, "partition": 1, "init": 2, "sample": 3}


def derive_rng(seed, stream, *extra):
    """Independent generator for one randomness source of a run."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[stream], *extra]))


def derive_seed(seed, stream, *extra):
    return int(np.random.SeedSequence([int(seed), _STREAMS[stream], *extra]).generate_state(1)[0])


@dataclass
class TrainConfig:
    regime: str = "l2g2g"
    epochs: int = 200
    lr: float = 0.001
    k: int = 10
    min_overlap: int = 32
    sync_every: int = 10
    sync_max_iter: int = 10_000
    sample_size: int | None = None
    seed: int = 0
    hidden: int = HIDDEN
    embed: int = EMBED

    def validate(self):
        if self.regime not in REGIMES:
            raise ParameterError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.sync_every < 1:
            raise ParameterError(f"sync_every must be >= 1, got {self.sync_every}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        return self


@dataclass
class TrainReport:
    regime: str
    losses: list
    epoch_times: list
    embedding: np.ndarray
    config: TrainConfig
    transforms: list | None = None
    patch_embeddings: list | None = None
    sync_epochs: list = field(default_factory=list)

    @property
    def mean_epoch_time(self):
        return float(np.mean(self.epoch_times))

    def to_dict(self):
        out = {
            "regime": self.regime,
            "config": asdict(self.config),
            "losses": [float(x) for x in self.losses],
            "epoch_times": [float(x) for x in self.epoch_times],
            "mean_epoch_time": self.mean_epoch_time,
            "sync_epochs": list(self.sync_epochs),
        }
        if self.transforms is not None:
            out["transforms"] = [
                {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}
                for t in self.transforms
            ]
        return out


def fastgae_sample_size(n_nodes):
    """``floor(sqrt(N))``."""
    return math.isqrt(n_nodes)


def sample_subgraph_degree_proportional(g: Graph, n_s, rng):
    """``n_s`` distinct nodes, drawn without replacement with weight ``degree + 1``.

    Returned in increasing order.
    """
    if not 1 <= n_s <= g.n_nodes:
        raise ParameterError(f"sample size must be in 1..{g.n_nodes}, got {n_s}")
    w = g.degrees + 1.0
    nodes = rng.choice(g.n_nodes, size=n_s, replace=False, p=w / w.sum())
    return np.sort(nodes)


def _model(g_features, cfg, index=0):
    return init_model(g_features, cfg.hidden, cfg.embed, rng=derive_rng(cfg.seed, "init", index))


def _step(model, state, fn, epoch):
    try:
        loss, grads = fn()
    except TrainingError as exc:
        raise TrainingError(str(exc), epoch=epoch) from exc
    adam_step(model, grads, state)
    return loss


def train_gae(g: Graph, cfg: TrainConfig) -> TrainReport:
    """Full-graph GAE."""
    cfg.validate()
    inp = prepare(g)
    model = _model(g.n_features, cfg)
    state = AdamState(lr=cfg.lr)
    losses, times = [], []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses.append(_step(model, state, lambda: _loss_grad(model, inp), epoch))
        times.append(time.perf_counter() - t0)
    z = _encode(model, inp)[0]
    return TrainReport("gae", losses, times, z, cfg)


def train_fastgae(g: Graph, cfg: TrainConfig) -> TrainReport:
    """GAE whose loss is evaluated on a freshly sampled induced subgraph each epoch."""
    cfg.validate()
    n_s = cfg.sample_size or fastgae_sample_size(g.n_nodes)
    inp = prepare(g)
    model = _model(g.n_features, cfg)
    state = AdamState(lr=cfg.lr)
    rng = derive_rng(cfg.seed, "sample")

    def loss_grad():
        z, cache = _encode(model, inp)
        nodes = sample_subgraph_degree_proportional(g, n_s, rng)
        loss, dzs = recon_loss_and_grad(z[nodes], g.subgraph(nodes))
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss}")
        dz = np.zeros_like(z)
        dz[nodes] = dzs
        return loss, _backprop(model, inp, cache, dz)

    losses, times = [], []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses.append(_step(model, state, loss_grad, epoch))
        times.append(time.perf_counter() - t0)
    z = _encode(model, inp)[0]
    return TrainReport("fastgae", losses, times, z, cfg)


def _sync(patch_set, patch_graph, zs, epoch, cfg):
    try:
        return synchronize(patch_set, patch_graph, zs, max_iter=cfg.sync_max_iter)
    except L2G2GError as exc:
        raise TrainingError(f"synchronization failed: {exc}", epoch=epoch) from exc


def train_gae_l2g(g: Graph, patches, cfg: TrainConfig) -> TrainReport:
    """Independent GAE per patch, then one synchronization pass.

    Patch models are trained one after another. ``epoch_times[e]`` sums the
    time of epoch ``e`` over all patches; the final synchronization is added
    to the last epoch.
    """
    cfg.validate()
    patch_set, patch_graph = patches
    times = np.zeros(cfg.epochs)
    losses = np.zeros(cfg.epochs)
    zs = []
    for patch in patch_set:
        inp = prepare(patch.graph)
        model = _model(g.n_features, cfg, patch.index)
        state = AdamState(lr=cfg.lr)
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            loss = _step(model, state, lambda: _loss_grad(model, inp), epoch)
            times[epoch] += time.perf_counter() - t0
            losses[epoch] += patch.n_nodes / g.n_nodes * loss
        zs.append(_encode(model, inp)[0])
    t0 = time.perf_counter()
    transforms = _sync(patch_set, patch_graph, zs, cfg.epochs - 1, cfg)
    z = align_and_average(patch_set, zs, transforms)
    times[-1] += time.perf_counter() - t0
    return TrainReport("gae-l2g", losses.tolist(), times.tolist(), z, cfg, transforms, zs,
                       [cfg.epochs - 1])


def train_l2g2g(g: Graph, patches, cfg: TrainConfig) -> TrainReport:
    """One shared encoder trained on synchronized patch embeddings.

    Every epoch encodes each patch with the shared weights. At epochs
    ``0, sync_every, 2 sync_every, ...`` the patch transforms are recomputed
    from the current embeddings; otherwise the previous ones are reused. The
    loss is ``sum_j (N_j / N) L_j`` with ``L_j`` the reconstruction loss of the
    aligned patch embedding against the patch graph; transforms are constants
    for differentiation. The returned embedding averages the aligned patch
    embeddings of the final model under the last transforms.
    """
    cfg.validate()
    patch_set, patch_graph = patches
    inputs = [prepare(p.graph) for p in patch_set]
    weights = [p.n_nodes / g.n_nodes for p in patch_set]
    model = _model(g.n_features, cfg)
    state = AdamState(lr=cfg.lr)
    transforms = None
    sync_epochs = []
    losses, times = [], []

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        encoded = [_encode(model, inp) for inp in inputs]
        if epoch % cfg.sync_every == 0:
            transforms = _sync(patch_set, patch_graph, [z for z, _ in encoded], epoch, cfg)
            sync_epochs.append(epoch)
        total = 0.0
        gw1 = np.zeros_like(model.w1)
        gw2 = np.zeros_like(model.w2)
        for inp, (z, cache), tr, w in zip(inputs, encoded, transforms, weights):
            loss, dzt = recon_loss_and_grad(tr.apply(z), inp.graph)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss}", epoch=epoch)
            dw1, dw2 = _backprop(model, inp, cache, dzt @ tr.rotation)
            total += w * loss
            gw1 += w * dw1
            gw2 += w * dw2
        adam_step(model, (gw1, gw2), state)
        losses.append(total)
        times.append(time.perf_counter() - t0)

    zs = [_encode(model, inp)[0] for inp in inputs]
    z = align_and_average(patch_set, zs, transforms)
    return TrainReport("l2g2g", losses, times, z, cfg, transforms, zs, sync_epochs)


def make_patches(g: Graph, cfg: TrainConfig):
    """Partition ``g`` with the run's partition stream."""
    return partition_graph(g, cfg.k, cfg.min_overlap, seed=derive_seed(cfg.seed, "partition"))


def train(g: Graph, cfg: TrainConfig, patches=None) -> TrainReport:
    """Dispatch on ``cfg.regime``; L2G regimes partition ``g`` if ``patches`` is not given."""
    cfg.validate()
    if cfg.regime == "gae":
        return train_gae(g, cfg)
    if cfg.regime == "fastgae":
        return train_fastgae(g, cfg)
    if patches is None:
        patches = make_patches(g, cfg)
    if cfg.regime == "gae-l2g":
        return train_gae_l2g(g, patches, cfg)
    return train_l2g2g(g, patches, cfg)


def score_cross_patch(u, i, v, j, patch_set, embeddings, transforms):
    """Edge probability between node ``u`` of patch ``i`` and node ``v`` of patch ``j``.

    Both embeddings are mapped into the global frame with their patch
    transforms before the sigmoid of their inner product is taken.
    """
    zu = embeddings[i][patch_set[i].to_local([u])[0]]
    zv = embeddings[j][patch_set[j].to_local([v])[0]]
    a = transforms[i].apply(zu[None])[0]
    b = transforms[j].apply(zv[None])[0]
    return float(1.0 / (1.0 + np.exp(-a @ b)))
