"""Graph autoencoders trained on synchronized overlapping patches.

The package provides the L2G2G trainer, in which one GCN encoder is trained
on patch embeddings that are aligned into a common frame every few epochs,
together with the GAE, FastGAE and GAE+L2G baselines, the patch partitioner,
the rigid-motion synchronization, SBM benchmark graphs and an evaluation
harness.
"""
from .errors import (
    ContractViolation,
    DegenerateOverlapError,
    FormatError,
    L2G2GError,
    MetricError,
    ParameterError,
    SizeError,
    SyncError,
    TrainingError,
)
from .graph import Graph, SbmConfig, generate_sbm, normalize_adjacency
from .io import load_embedding, load_graph, save_embedding, save_graph
from .datasets import PRESETS, dataset_report, load_dataset, sbm_config
from .partition import PatchGraph, PatchSet, build_patches, cluster_nodes, partition_graph
from .gcn import GcnModel, AdamState, adam_step, decoder_score, gcn_forward, init_model, loss_and_grad, recon_loss
from .sync import (
    Transform,
    align_and_average,
    pairwise_rotation,
    solve_rotations,
    solve_translations,
    synchronize,
)
from .train import (
    TrainConfig,
    TrainReport,
    sample_subgraph_degree_proportional,
    score_cross_patch,
    train,
    train_fastgae,
    train_gae,
    train_gae_l2g,
    train_l2g2g,
)
from .evaluation import EdgeSplit, ap, auc, evaluate_embedding, split_edges
from .bench import BenchConfig, ablate, run_benchmark

__version__ = "0.1.0"
