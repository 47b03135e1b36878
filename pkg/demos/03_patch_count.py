"""
How the number of patches affects accuracy
==========================================

A small version of the patch-count sweep: mean AUC over a few seeds for
GAE+L2G and L2G2G as k grows. The same sweep at full size is
``l2g2g ablate --out results/``.
"""
from l2g2g.bench import BenchConfig, ablate, auc_drop
from l2g2g.graph import SbmConfig, generate_sbm

g = generate_sbm(SbmConfig(n_blocks=20, block_size=50, p_in=0.2, p_out=1e-3, seed=1))
cfg = BenchConfig(datasets=["toy"], seeds=[0, 1, 2], epochs=100, min_overlap=32)
results = ablate(cfg, ks=[2, 4, 6, 8], graphs={"toy": g})

for regime in ("gae-l2g", "l2g2g"):
    row = [r for r in results if r.regime == regime]
    cells = "  ".join(f"k={r.k}: {r.mean('auc'):.1f}" for r in row)
    print(f"{regime:8s} {cells}  drop {auc_drop(results, regime):.2f}")
