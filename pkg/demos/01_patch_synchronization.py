"""
Patch synchronization on a planted embedding
============================================

Cut a random point cloud into overlapping patches, hide each patch behind
its own random rotation and shift, then recover one global frame.
"""
import numpy as np
from scipy.stats import ortho_group

from l2g2g.graph import Graph
from l2g2g.partition import PatchGraph, PatchSet
from l2g2g.sync import Transform, align_and_average, synchronize

rng = np.random.default_rng(0)
n, dim, k = 300, 4, 6

# ground truth and a ring of overlapping index windows
truth = rng.normal(size=(n, dim))
step = n // k
windows = [np.arange(j * step, j * step + 2 * step) % n for j in range(k)]
g = Graph.from_edges(n, [])
patches = PatchSet.from_node_lists(g, windows)
patch_graph = PatchGraph.from_patches(patches, dim + 1)
print("patch sizes:", patches.sizes.tolist())
print("patch graph edges:", patch_graph.edges)

# every patch sees the truth through its own rigid motion
motions = [Transform(ortho_group.rvs(dim, random_state=rng), 5 * rng.normal(size=dim))
           for _ in range(k)]
local = [m.apply(truth[p.nodes]) for m, p in zip(motions, patches)]

transforms = synchronize(patches, patch_graph, local)
z = align_and_average(patches, local, transforms)

# compare up to one global rigid motion
a, b = truth - truth.mean(0), z - z.mean(0)
u, _, vt = np.linalg.svd(b.T @ a)
print("residual after global alignment: %.2e" % np.abs(b @ (u @ vt) - a).max())

# with noise the recovery degrades gracefully
noisy = [x + 0.05 * rng.normal(size=x.shape) for x in local]
z = align_and_average(patches, noisy, synchronize(patches, patch_graph, noisy))
b = z - z.mean(0)
u, _, vt = np.linalg.svd(b.T @ a)
print("residual with noise 0.05: %.3f" % np.abs(b @ (u @ vt) - a).max())
