"""Two-layer GCN encoder, inner-product decoder, reconstruction loss and Adam.

The encoder is ``Z = A_hat relu(A_hat X W1) W2`` without biases. The loss is
the pos-weighted binary cross-entropy between ``sigmoid(Z Z^T)`` and
``A + I`` averaged over all ``N^2`` ordered pairs. Gradients are derived by
hand; everything runs in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, FormatError, TrainingError
from .graph import Graph, normalize_adjacency

__all__ = [
    "GcnModel",
    "AdamState",
    "GcnInput",
    "init_model",
    "prepare",
    "gcn_forward",
    "decoder_score",
    "pos_weight",
    "recon_loss",
    "recon_loss_and_grad",
    "loss_and_grad",
    "adam_step",
    "save_model",
    "load_model",
]

HIDDEN = 32
EMBED = 16
_BLOCK = 256


@dataclass
class GcnModel:
    w1: np.ndarray  # F x hidden
    w2: np.ndarray  # hidden x embed

    @property
    def shape(self):
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def copy(self):
        return GcnModel(self.w1.copy(), self.w2.copy())


def init_model(n_features, hidden=HIDDEN, embed=EMBED, rng=None) -> GcnModel:
    """Glorot-uniform initialisation."""
    rng = np.random.default_rng(rng)

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return GcnModel(glorot(n_features, hidden), glorot(hidden, embed))


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    moments: dict = field(default_factory=dict)


def adam_step(model: GcnModel, grads, state: AdamState):
    """One bias-corrected Adam update of ``model`` in place.

    ``grads`` is a ``(dW1, dW2)`` pair. Returns ``(model, state)``.
    """
    state.step += 1
    t = state.step
    for name, g in zip(("w1", "w2"), grads):
        w = getattr(model, name)
        if g.shape != w.shape:
            raise ContractViolation(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        m, v = state.moments.get(name, (np.zeros_like(w), np.zeros_like(w)))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        w -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        state.moments[name] = (m, v)
    return model, state


@dataclass(frozen=True, eq=False)
class GcnInput:
    """A graph with its normalized adjacency and ``A_hat X`` precomputed."""

    graph: Graph
    adj: object  # scipy CSR
    ax: np.ndarray

    @property
    def n_nodes(self):
        return self.graph.n_nodes


def prepare(g: Graph) -> GcnInput:
    adj = normalize_adjacency(g)
    return GcnInput(g, adj, np.asarray(adj @ g.features))


def _encode(model, inp: GcnInput):
    if inp.ax.shape[1] != model.w1.shape[0]:
        raise ContractViolation(
            f"features have {inp.ax.shape[1]} columns, model expects {model.w1.shape[0]}"
        )
    pre = inp.ax @ model.w1
    h = np.maximum(pre, 0.0)
    z = np.asarray(inp.adj @ (h @ model.w2))
    return z, (pre, h)


def _backprop(model, inp: GcnInput, cache, dz):
    pre, h = cache
    dhw = np.asarray(inp.adj @ dz)
    dw2 = h.T @ dhw
    dpre = (dhw @ model.w2.T) * (pre > 0)
    dw1 = inp.ax.T @ dpre
    return dw1, dw2


def gcn_forward(model: GcnModel, adj, features) -> np.ndarray:
    """``Z = adj relu(adj X W1) W2`` for a normalized adjacency ``adj``."""
    x = np.asarray(features, dtype=np.float64)
    if adj.shape[0] != x.shape[0]:
        raise ContractViolation(f"adjacency is {adj.shape}, features have {x.shape[0]} rows")
    inp = GcnInput(None, adj, np.asarray(adj @ x))
    return _encode(model, inp)[0]


def decoder_score(z_u, z_v):
    """Edge probability ``sigmoid(z_u . z_v)``; works row-wise on 2-D input."""
    z_u, z_v = np.asarray(z_u), np.asarray(z_v)
    if z_u.shape[-1] != z_v.shape[-1]:
        raise ContractViolation("embeddings must have equal dimension")
    return expit(np.sum(z_u * z_v, axis=-1))


def pos_weight(n_nodes, n_edges):
    """Weight of positive targets; ``A + I`` has ``2M + N`` positive entries."""
    n2 = n_nodes * n_nodes
    pos = 2 * n_edges + n_nodes
    if pos >= n2:
        return 1.0
    return (n2 - pos) / pos


def _dense_terms(z):
    """``sum_{u,v} softplus(z_u . z_v)`` and ``sigmoid(Z Z^T) Z``, by symmetric blocks."""
    n = z.shape[0]
    total = 0.0
    grad = np.zeros_like(z)
    bs = min(_BLOCK, max(n, 1))
    buf = np.empty((bs, n))
    buf2 = np.empty((bs, n))
    for s in range(0, n, bs):
        zs = z[s:s + bs]
        m, w = zs.shape[0], n - s
        logit = np.matmul(zs, z[s:].T, out=buf[:m, :w])
        # softplus(x) = x + log(1 + exp(-x)); the floor keeps exp finite and
        # changes nothing at double precision
        np.maximum(logit, -700.0, out=logit)
        x_all, x_diag = logit.sum(), logit[:, :m].sum()
        u = np.negative(logit, out=logit)
        np.exp(u, out=u)
        u += 1.0
        lg = np.log(u, out=buf2[:m, :w])
        sp_all = lg.sum() + x_all
        sp_diag = lg[:, :m].sum() + x_diag
        total += 2.0 * sp_all - sp_diag
        sig = np.reciprocal(u, out=u)
        grad[s:s + m] += sig @ z[s:]
        if w > m:
            grad[s + m:] += sig[:, m:].T @ zs
    return total, grad


def recon_loss_and_grad(z, target: Graph):
    """Reconstruction loss of ``z`` against ``target`` and its gradient in ``z``."""
    n = target.n_nodes
    if z.shape[0] != n:
        raise ContractViolation(f"embedding has {z.shape[0]} rows, target graph has {n} nodes")
    pw = pos_weight(n, target.n_edges)
    dense, grad = _dense_terms(z)

    u, v = target.edges[:, 0], target.edges[:, 1]
    le = np.einsum("ij,ij->i", z[u], z[v])
    ld = np.einsum("ij,ij->i", z, z)
    # positive entries: pw * softplus(-x) = softplus(x) + (pw - 1) softplus(x) - pw x
    pos = 2.0 * np.sum((pw - 1.0) * np.logaddexp(0.0, le) - pw * le)
    pos += np.sum((pw - 1.0) * np.logaddexp(0.0, ld) - pw * ld)
    ce = (pw - 1.0) * expit(le) - pw
    cd = (pw - 1.0) * expit(ld) - pw
    cz = cd[:, None] * z
    np.add.at(cz, u, ce[:, None] * z[v])
    np.add.at(cz, v, ce[:, None] * z[u])

    scale = 1.0 / (n * n)
    loss = (dense + pos) * scale
    return loss, (grad + cz) * (2.0 * scale)


def recon_loss(z, target: Graph) -> float:
    """Pos-weighted BCE over all ordered pairs with targets ``A + I``."""
    return recon_loss_and_grad(np.asarray(z, dtype=np.float64), target)[0]


def _apply(z, transform):
    if transform is None:
        return z
    return z @ transform.rotation.T + transform.translation


def _loss_grad(model, inp: GcnInput, transform=None):
    z, cache = _encode(model, inp)
    zt = _apply(z, transform)
    loss, dzt = recon_loss_and_grad(zt, inp.graph)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    dz = dzt if transform is None else dzt @ transform.rotation
    return loss, _backprop(model, inp, cache, dz)


def loss_and_grad(model: GcnModel, adj, features, target: Graph, transform=None):
    """Loss and ``(dW1, dW2)`` for the encoder-decoder on ``target``.

    ``transform`` (anything with ``rotation`` and ``translation``) is applied
    to the embedding before decoding and treated as a constant.
    """
    x = np.asarray(features, dtype=np.float64)
    inp = GcnInput(target, adj, np.asarray(adj @ x))
    return _loss_grad(model, inp, transform)


def save_model(path, model: GcnModel):
    f, h, e = model.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{f} {h} {e}\n")
        np.savetxt(fh, model.w1, fmt="%.17g")
        np.savetxt(fh, model.w2, fmt="%.17g")


def load_model(path) -> GcnModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh.read().split("\n") if ln.strip()]
    try:
        f, h, e = (int(t) for t in lines[0])
        w1 = np.array(lines[1:1 + f], dtype=np.float64)
        w2 = np.array(lines[1 + f:1 + f + h], dtype=np.float64)
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed checkpoint") from None
    if w1.shape != (f, h) or w2.shape != (h, e) or len(lines) != 1 + f + h:
        raise FormatError(f"{path}: weight rows do not match header {f} {h} {e}")
    return GcnModel(w1, w2)
