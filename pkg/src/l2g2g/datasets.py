"""Named SBM benchmark configurations and an edge-count report.

Two probability readings exist for two of the four benchmark graphs. The
``"stated"`` reading uses the probabilities printed with the dataset list;
the ``"table"`` reading uses the probabilities whose expected edge count
agrees with the published edge counts. ``"table"`` is the default.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ParameterError
from .graph import Graph, SbmConfig, generate_sbm

__all__ = ["SbmPreset", "PRESETS", "sbm_config", "load_dataset", "dataset_report"]


@dataclass(frozen=True)
class SbmPreset:
    name: str
    block_size: int
    stated: tuple  # (p_in, p_out) as printed with the dataset list
    table: tuple  # (p_in, p_out) matching the published edge count
    reported_edges: int
    n_blocks: int = 100


PRESETS = {
    p.name: p
    for p in [
        SbmPreset("sbm-small", 100, (0.02, 1e-4), (0.2, 1e-4), 104_485),
        SbmPreset("sbm-large-sparse", 1000, (1e-3, 1e-4), (1e-3, 1e-5), 99_231),
        SbmPreset("sbm-large", 1000, (0.02, 1e-4), (0.02, 1e-4), 1_493_135),
        SbmPreset("sbm-large-dense", 1000, (0.1, 0.002), (0.1, 0.002), 14_897_099),
    ]
}


def sbm_config(name, reading="table", seed=0) -> SbmConfig:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown dataset {name!r}; known: {sorted(PRESETS)}") from None
    if reading not in ("table", "stated"):
        raise ParameterError(f"reading must be 'table' or 'stated', got {reading!r}")
    p_in, p_out = getattr(preset, reading)
    return SbmConfig(preset.n_blocks, preset.block_size, p_in, p_out, seed)


def load_dataset(name, reading="table", seed=0) -> Graph:
    """Generate a named SBM benchmark graph."""
    return generate_sbm(sbm_config(name, reading, seed))


def dataset_report(names=None, seed=0, generate=True):
    """Expected vs published vs sampled edge counts for each preset.

    Returns one dict per (dataset, reading) with the closed-form expectation
    and standard deviation, the published count and its distance from the
    expectation in standard deviations, and, when ``generate`` is true, the
    sampled count and its z-score.
    """
    rows = []
    for name in names or list(PRESETS):
        preset = PRESETS[name]
        for reading in ("stated", "table"):
            cfg = sbm_config(name, reading, seed)
            mean, std = cfg.expected_edges(), cfg.edge_count_std()
            row = {
                "dataset": name,
                "reading": reading,
                "p_in": cfg.p_in,
                "p_out": cfg.p_out,
                "n_nodes": cfg.n_nodes,
                "expected_edges": mean,
                "std_edges": std,
                "reported_edges": preset.reported_edges,
                "reported_delta": preset.reported_edges - mean,
                "reported_z": (preset.reported_edges - mean) / std,
            }
            if generate and (reading == "table" or preset.stated != preset.table):
                m = generate_sbm(cfg).n_edges
                row["sampled_edges"] = m
                row["sampled_z"] = (m - mean) / std
            rows.append(row)
    return rows
