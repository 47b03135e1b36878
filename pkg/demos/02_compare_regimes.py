"""
Four ways to train a graph autoencoder
======================================

Train GAE, FastGAE, GAE+L2G and L2G2G on one small block-model graph and
compare held-out link prediction and per-epoch time.
"""
from l2g2g.evaluation import evaluate_embedding, split_edges
from l2g2g.graph import SbmConfig, generate_sbm
from l2g2g.train import REGIMES, TrainConfig, make_patches, train

g = generate_sbm(SbmConfig(n_blocks=20, block_size=50, p_in=0.2, p_out=1e-3, seed=0))
print(f"{g.n_nodes} nodes, {g.n_edges} edges, {g.n_features} features")

split = split_edges(g, seed=0)
cfg = dict(epochs=200, k=4, min_overlap=32, seed=0)
patches = make_patches(split.train, TrainConfig(**cfg))
print("patch sizes:", patches[0].sizes.tolist())

for regime in REGIMES:
    report = train(split.train, TrainConfig(regime=regime, **cfg), patches)
    m = evaluate_embedding(report.embedding, split.test_pos, split.test_neg)
    print(f"{regime:8s} AUC {100 * m['auc']:6.2f}  AP {100 * m['ap']:6.2f}  "
          f"epoch {1000 * report.mean_epoch_time:7.2f} ms  final loss {report.losses[-1]:.4f}")

# L2G2G re-synchronizes every sync_every epochs
report = train(split.train, TrainConfig(regime="l2g2g", **cfg), patches)
print("l2g2g synchronized at epochs", report.sync_epochs[:5], "...")
