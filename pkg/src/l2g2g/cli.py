"""Command-line entry point: ``l2g2g <subcommand> ...``.

Graphs are exchanged as directories holding ``edges.txt`` and
``features.txt``. Every subcommand prints a short JSON summary on stdout and
exits with status 1 on any library error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import bench
from .datasets import PRESETS, dataset_report, sbm_config
from .errors import L2G2GError, ParameterError
from .evaluation import evaluate_embedding, reconstruction_pairs, split_edges
from .gcn import EMBED
from .graph import SbmConfig, generate_sbm
from .io import load_embedding, load_graph_dir, save_embedding, save_graph_dir
from .partition import load_patches, partition_graph, save_patches
from .sync import save_transforms
from .train import REGIMES, TrainConfig, train

log = logging.getLogger("l2g2g")


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, default=float)
    sys.stdout.write("\n")


def _cmd_generate(args):
    if args.report:
        _emit(dataset_report([args.dataset] if args.dataset else None, seed=args.seed))
        return
    if args.dataset:
        cfg = sbm_config(args.dataset, args.reading, args.seed)
    else:
        missing = [n for n in ("blocks", "block_size", "p_in", "p_out") if getattr(args, n) is None]
        if missing:
            raise ParameterError("without --dataset, give --blocks --block-size --p-in --p-out")
        cfg = SbmConfig(args.blocks, args.block_size, args.p_in, args.p_out, args.seed)
    if args.out is None:
        raise ParameterError("--out is required unless --report is given")
    g = generate_sbm(cfg)
    save_graph_dir(g, args.out)
    _emit({"out": args.out, "n_nodes": g.n_nodes, "n_edges": g.n_edges,
           "expected_edges": cfg.expected_edges(), "p_in": cfg.p_in, "p_out": cfg.p_out})


def _cmd_partition(args):
    g = load_graph_dir(args.graph)
    patch_set, patch_graph = partition_graph(g, args.k, args.min_overlap, args.seed)
    save_patches(args.out, patch_set, args.min_overlap)
    _emit({"out": args.out, "k": patch_set.k, "sizes": patch_set.sizes.tolist(),
           "patch_graph_edges": len(patch_graph.edges), "min_overlap": patch_graph.min_overlap,
           "max_overlap": patch_graph.max_overlap})


def _train_graph(args):
    g = load_graph_dir(args.graph)
    if args.heldout:
        return g, split_edges(g, seed=args.seed).train
    return g, g


def _cmd_train(args):
    _, g = _train_graph(args)
    cfg = TrainConfig(regime=args.regime, epochs=args.epochs, lr=args.lr, k=args.k,
                      min_overlap=args.min_overlap, sync_every=args.sync_every, seed=args.seed)
    patches = None
    if args.patches and args.regime in ("gae-l2g", "l2g2g"):
        patches = load_patches(args.patches, g)
    report = train(g, cfg, patches)
    os.makedirs(args.out, exist_ok=True)
    save_embedding(os.path.join(args.out, "embedding.txt"), report.embedding)
    if report.transforms is not None:
        save_transforms(os.path.join(args.out, "transforms.txt"), report.transforms)
    doc = report.to_dict()
    doc["heldout"] = args.heldout
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    _emit({"out": args.out, "regime": report.regime, "final_loss": report.losses[-1],
           "mean_epoch_time_s": report.mean_epoch_time})


def _cmd_evaluate(args):
    g = load_graph_dir(args.graph)
    z = load_embedding(args.embedding)
    if z.shape[0] != g.n_nodes:
        raise ParameterError(f"embedding has {z.shape[0]} rows, graph has {g.n_nodes} nodes")
    if args.mode == "heldout":
        split = split_edges(g, seed=args.seed)
        pos, neg = split.test_pos, split.test_neg
    else:
        pos, neg = reconstruction_pairs(g, args.seed)
    m = evaluate_embedding(z, pos, neg)
    _emit({"mode": args.mode, "seed": args.seed, "auc": 100 * m["auc"], "ap": 100 * m["ap"],
           "n_pos": len(pos), "n_neg": len(neg)})


def _bench_config(args):
    overrides = dict(kv.split("=", 1) for kv in args.set or [])
    if args.seeds is not None:
        overrides["seeds"] = f"0-{args.seeds - 1}"
    return bench.load_config(args.config, overrides)


def _progress(rec):
    if rec.ok:
        log.info("%s %s k=%d seed=%d auc=%.2f ap=%.2f epoch=%.4fs", rec.dataset, rec.regime,
                 rec.k, rec.seed, rec.auc, rec.ap, rec.epoch_time_s)
    else:
        log.warning("%s %s k=%d seed=%d failed: %s", rec.dataset, rec.regime, rec.k, rec.seed,
                    rec.error)


def _write_results(out, results, cfg):
    os.makedirs(out, exist_ok=True)
    bench.write_runs_csv(os.path.join(out, "runs.csv"), results)
    bench.write_aggregate_csv(os.path.join(out, "aggregate.csv"), results)
    bench.write_table_csv(os.path.join(out, "table.csv"), results)
    bench.write_json(os.path.join(out, "results.json"), results, cfg)


def _graphs(args):
    if getattr(args, "graph", None):
        return {"graph": load_graph_dir(args.graph)}
    return None


def _cmd_bench(args):
    cfg = _bench_config(args)
    graphs = _graphs(args)
    if graphs:
        cfg.datasets = ["graph"]
    results = bench.run_benchmark(cfg, graphs, progress=_progress)
    _write_results(args.out, results, cfg)
    _emit([r.summary() for r in results])


def _cmd_ablate(args):
    cfg = _bench_config(args)
    graphs = _graphs(args)
    if graphs:
        cfg.datasets = ["graph"]
    results = bench.ablate(cfg, progress=_progress, graphs=graphs)
    _write_results(args.out, results, cfg)
    drops = {r: bench.auc_drop(results, r) for r in {res.regime for res in results}}
    _emit({"auc_drop": drops, "results": [r.summary() for r in results]})


def build_parser():
    p = argparse.ArgumentParser(prog="l2g2g", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-sbm", help="sample a stochastic block model graph")
    g.add_argument("--dataset", choices=sorted(PRESETS))
    g.add_argument("--reading", choices=["table", "stated"], default="table")
    g.add_argument("--blocks", type=int)
    g.add_argument("--block-size", type=int)
    g.add_argument("--p-in", type=float)
    g.add_argument("--p-out", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--report", action="store_true",
                   help="print expected vs published vs sampled edge counts instead")
    g.set_defaults(func=_cmd_generate)

    q = sub.add_parser("partition", help="split a graph into overlapping patches")
    q.add_argument("--graph", required=True)
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--min-overlap", type=int, default=2 * EMBED)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=_cmd_partition)

    t = sub.add_parser("train", help="train one regime and save the embedding")
    t.add_argument("--regime", choices=REGIMES, default="l2g2g")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--k", type=int, default=10)
    t.add_argument("--min-overlap", type=int, default=2 * EMBED)
    t.add_argument("--sync-every", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--graph", required=True)
    t.add_argument("--patches", help="patch file from `partition`; built on the fly otherwise")
    t.add_argument("--heldout", action="store_true",
                   help="train on the graph minus the seed's test and validation edges")
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="AUC / AP of a saved embedding")
    e.add_argument("--graph", required=True)
    e.add_argument("--embedding", required=True)
    e.add_argument("--mode", choices=bench.MODES, default="heldout")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=_cmd_evaluate)

    for name, fn, text in (("bench", _cmd_bench, "multi-seed benchmark table"),
                           ("ablate", _cmd_ablate, "patch-count sweep")):
        b = sub.add_parser(name, help=text)
        b.add_argument("--config", help="flat key=value file")
        b.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        b.add_argument("--seeds", type=int, help="use seeds 0..N-1")
        b.add_argument("--graph", help="graph directory to use instead of the named datasets")
        b.add_argument("--out", required=True)
        b.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "set", None):
        for kv in args.set:
            if "=" not in kv:
                print(f"error: --set expects KEY=VALUE, got {kv!r}", file=sys.stderr)
                return 2
    try:
        args.func(args)
    except L2G2GError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
