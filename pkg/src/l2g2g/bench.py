"""Multi-seed benchmark runner, patch-count ablation and epoch timing harness.

Every run uses one integer seed for the edge split, the partition, the
weight initialisation and the FastGAE sampler, each through its own derived
stream. Per-epoch times cover the epoch body only; partitioning and edge
splitting happen before the clock starts.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import PRESETS, load_dataset
from .errors import L2G2GError, ParameterError
from .evaluation import evaluate_embedding, reconstruction_pairs, split_edges
from .graph import Graph
from .train import REGIMES, TrainConfig, make_patches, train

__all__ = [
    "BenchConfig",
    "RunRecord",
    "ExperimentResult",
    "load_config",
    "run_single",
    "run_benchmark",
    "ablate",
    "auc_drop",
    "time_epochs",
    "write_runs_csv",
    "write_aggregate_csv",
    "write_table_csv",
    "write_json",
]

CSV_COLUMNS = ["dataset", "regime", "k", "seed", "auc", "ap", "epoch_time_s"]
MODES = ("heldout", "reconstruct-full")


@dataclass
class BenchConfig:
    datasets: list = field(default_factory=lambda: ["sbm-small"])
    regimes: list = field(default_factory=lambda: list(REGIMES))
    seeds: list = field(default_factory=lambda: list(range(10)))
    k: int = 10
    ks: list = field(default_factory=lambda: list(range(2, 11)))
    epochs: int = 200
    lr: float = 0.001
    sync_every: int = 10
    min_overlap: int = 32
    mode: str = "heldout"
    reading: str = "table"

    def validate(self):
        for r in self.regimes:
            if r not in REGIMES:
                raise ParameterError(f"unknown regime {r!r}")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ParameterError("at least one seed is required")
        return self

    def train_config(self, regime, seed, k=None):
        return TrainConfig(regime=regime, epochs=self.epochs, lr=self.lr,
                           k=self.k if k is None else k, min_overlap=self.min_overlap,
                           sync_every=self.sync_every, seed=seed)


def _parse_value(text, kind):
    text = text.strip()
    if kind is list:
        items = [t for t in text.replace(",", " ").split() if t]
        out = []
        for t in items:
            if "-" in t and t.replace("-", "").isdigit() and not t.startswith("-"):
                lo, hi = t.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                try:
                    out.append(int(t))
                except ValueError:
                    out.append(t)
        return out
    return kind(text)


def load_config(path=None, overrides=None) -> BenchConfig:
    """Read a flat ``key = value`` file into a :class:`BenchConfig`.

    Blank lines and ``#`` comments are ignored. List values are comma or
    space separated; integer ranges may be written ``2-10``. ``overrides``
    is a mapping of the same keys to raw strings, applied after the file.
    """
    kinds = {f.name: (list if f.default_factory is not dataclasses.MISSING else type(f.default))
             for f in dataclasses.fields(BenchConfig)}
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParameterError(f"{path}:{lineno}: expected key=value")
                key, value = (s.strip() for s in line.split("=", 1))
                raw[key.replace("-", "_")] = value
    for key, value in (overrides or {}).items():
        raw[key.replace("-", "_")] = value
    values = {}
    for key, value in raw.items():
        if key not in kinds:
            raise ParameterError(f"unknown config key {key!r}")
        try:
            values[key] = _parse_value(str(value), kinds[key])
        except ValueError:
            raise ParameterError(f"bad value for {key}: {value!r}") from None
    return BenchConfig(**values).validate()


@dataclass
class RunRecord:
    dataset: str
    regime: str
    k: int
    seed: int
    auc: float = math.nan  # percent
    ap: float = math.nan
    epoch_time_s: float = math.nan
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class ExperimentResult:
    dataset: str
    regime: str
    k: int
    runs: list

    def _values(self, name):
        return np.array([getattr(r, name) for r in self.runs if r.ok])

    @property
    def n_ok(self):
        return sum(r.ok for r in self.runs)

    @property
    def complete(self):
        return self.n_ok == len(self.runs)

    def mean(self, name):
        v = self._values(name)
        return float(v.mean()) if len(v) else math.nan

    def std(self, name):
        v = self._values(name)
        return float(v.std(ddof=1)) if len(v) > 1 else (0.0 if len(v) else math.nan)

    def summary(self):
        return {
            "dataset": self.dataset, "regime": self.regime, "k": self.k,
            "n_seeds": len(self.runs), "n_ok": self.n_ok, "complete": self.complete,
            "auc_mean": self.mean("auc"), "auc_std": self.std("auc"),
            "ap_mean": self.mean("ap"), "ap_std": self.std("ap"),
            "epoch_time_mean": self.mean("epoch_time_s"),
            "failures": {r.seed: r.error for r in self.runs if not r.ok},
        }


def _graph(name, graphs, reading):
    if name in graphs:
        return graphs[name]
    if name not in PRESETS:
        raise ParameterError(f"unknown dataset {name!r}")
    graphs[name] = load_dataset(name, reading)
    return graphs[name]


def run_single(g: Graph, regime, seed, cfg: BenchConfig, k=None, dataset="graph", patches=None):
    """Split, partition, train and score one (regime, seed) cell.

    Returns ``(RunRecord, patches)`` so callers can share a partition between
    the two patch-based regimes.
    """
    k = cfg.k if k is None else k
    rec = RunRecord(dataset, regime, k, seed)
    try:
        if cfg.mode == "heldout":
            split = split_edges(g, seed=seed)
            train_g, pos, neg = split.train, split.test_pos, split.test_neg
        else:
            train_g = g
            pos, neg = reconstruction_pairs(g, seed)
        tcfg = cfg.train_config(regime, seed, k)
        if regime in ("gae-l2g", "l2g2g") and patches is None:
            patches = make_patches(train_g, tcfg)
        report = train(train_g, tcfg, patches)
        metrics = evaluate_embedding(report.embedding, pos, neg)
        rec.auc, rec.ap = 100 * metrics["auc"], 100 * metrics["ap"]
        rec.epoch_time_s = report.mean_epoch_time
    except L2G2GError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec, patches


def run_benchmark(cfg: BenchConfig, graphs=None, ks=None, progress=None):
    """Run every (dataset, k, regime, seed) cell of ``cfg``.

    ``graphs`` maps dataset names to prebuilt graphs; other names are
    generated from the presets. ``ks`` overrides the single ``cfg.k``.
    Failed runs are kept as records with an error message.
    """
    cfg.validate()
    graphs = dict(graphs or {})
    results = []
    for name in cfg.datasets:
        g = _graph(name, graphs, cfg.reading)
        for k in ks or [cfg.k]:
            cells = {r: [] for r in cfg.regimes}
            for seed in cfg.seeds:
                patches = None
                for regime in cfg.regimes:
                    rec, p = run_single(g, regime, seed, cfg, k, name,
                                        patches if regime in ("gae-l2g", "l2g2g") else None)
                    if regime in ("gae-l2g", "l2g2g"):
                        patches = p
                    cells[regime].append(rec)
                    if progress:
                        progress(rec)
            results.extend(ExperimentResult(name, r, k, runs) for r, runs in cells.items())
    return results


def ablate(cfg: BenchConfig, ks=None, graphs=None, progress=None):
    """Patch-count sweep: one result per (k, regime), regimes default to the patch-based ones."""
    if cfg.regimes == list(REGIMES):
        cfg = dataclasses.replace(cfg, regimes=["gae-l2g", "l2g2g"])
    return run_benchmark(cfg, graphs, ks=ks or cfg.ks, progress=progress)


def auc_drop(results, regime):
    """``max - min`` of the mean AUC over the swept k for ``regime``."""
    means = [r.mean("auc") for r in results if r.regime == regime]
    return max(means) - min(means)


def time_epochs(g: Graph, regimes=REGIMES, k=10, epochs=3, seed=0, min_overlap=32):
    """Mean per-epoch seconds of each regime on ``g``.

    The graph is used as is (no edge split). Partitioning is done once and
    excluded from the timing.
    """
    patches = None
    out = {}
    for regime in regimes:
        tcfg = TrainConfig(regime=regime, epochs=epochs, k=k, seed=seed, min_overlap=min_overlap)
        if regime in ("gae-l2g", "l2g2g") and patches is None:
            patches = make_patches(g, tcfg)
        out[regime] = train(g, tcfg, patches).mean_epoch_time
    return out


def write_runs_csv(path, results):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS + ["error"])
        for res in results:
            for r in res.runs:
                w.writerow([r.dataset, r.regime, r.k, r.seed, f"{r.auc:.6f}", f"{r.ap:.6f}",
                            f"{r.epoch_time_s:.6f}", r.error or ""])


def write_aggregate_csv(path, results):
    cols = ["dataset", "regime", "k", "n_seeds", "n_ok", "complete", "auc_mean", "auc_std",
            "ap_mean", "ap_std", "epoch_time_mean"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for res in results:
            s = res.summary()
            w.writerow([s[c] for c in cols])


def write_table_csv(path, results):
    """One row per (dataset, k, metric, regime) with a ``mean ± std`` cell."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "k", "metric", "regime", "value"])
        for metric in ("auc", "ap"):
            for res in results:
                cell = f"{res.mean(metric):.2f} ± {res.std(metric):.2f}"
                if not res.complete:
                    cell += " (incomplete)"
                w.writerow([res.dataset, res.k, metric.upper(), res.regime, cell])


def write_json(path, results, cfg: BenchConfig | None = None):
    doc = {
        "config": dataclasses.asdict(cfg) if cfg is not None else None,
        "results": [dict(res.summary(), runs=[dataclasses.asdict(r) for r in res.runs])
                    for res in results],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, default=float, allow_nan=True)
        fh.write("\n")
