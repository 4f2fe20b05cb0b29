"""Command-line interface.

Subcommands: train, attack, sweep-attack-nodes, sweep-ancillary, fluctuation,
bench-subgraph, convert. Exit codes: 0 success, 1 runtime failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import attack as atk
from . import data as dataio
from . import experiments as exp
from . import gcn
from .errors import ConfigurationError, DatasetParseError, GraphStructureError, ValidationError
from .graphs import normalize

USAGE_ERRORS = (
    ConfigurationError, ValidationError, DatasetParseError, GraphStructureError,
    FileNotFoundError, IsADirectoryError, PermissionError,
)


def _add_dataset_args(p):
    p.add_argument("--dataset", required=True, help="registry name (cora/citeseer/pubmed) or path")
    p.add_argument("--data-dir", default="data", help="root holding named datasets")


def _add_attack_args(p):
    p.add_argument("--target-class", type=int, required=True)
    p.add_argument("--attack-nodes", type=int, default=3, help="number of attack nodes")
    p.add_argument("--fake-per-attack", type=int, default=2)
    p.add_argument("--ancillary", type=int, default=20, help="number of ancillary nodes")
    p.add_argument("--iters", type=int, default=25, help="max greedy iterations")
    p.add_argument("--budget", type=int, default=None, help="cap on edges + feature bits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tua",
        description="Targeted universal attack on a two-layer GCN: train, attack, sweep, benchmark.",
    )
    parser.add_argument("--verbose", action="store_true", help="log dataset details")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a GCN and write a checkpoint")
    _add_dataset_args(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--per-class-train", type=int, default=20)
    p.add_argument("--val-size", type=int, default=500)
    p.add_argument("--test-size", type=int, default=1000)

    p = sub.add_parser("attack", help="run one attack and report its ASR")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    _add_attack_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the attack result as JSON")
    p.add_argument("--full-graph", action="store_true",
                   help="disable the subgraph acceleration (slow reference path)")

    p = sub.add_parser("sweep-attack-nodes", help="ASR vs number of attack nodes, per class")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--attack-node-counts", default="1,2,3,4")
    p.add_argument("--ancillary", type=int, default=20)
    p.add_argument("--fake-per-attack", type=int, default=2)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full-grid", action="store_true",
                   help="paper-scale grid (10 repetitions per cell)")

    p = sub.add_parser("sweep-ancillary", help="ASR vs number of ancillary nodes")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attack-node-counts", default="1,2,3,4")
    p.add_argument("--ancillary-counts", default="5,10,15,20")
    p.add_argument("--fake-per-attack", type=int, default=2)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full-grid", action="store_true")

    p = sub.add_parser("fluctuation", help="ASR stability across resampled ancillary sets")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target-class", type=int, required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--attack-nodes", type=int, default=3)
    p.add_argument("--fake-per-attack", type=int, default=2)
    p.add_argument("--ancillary", type=int, default=20)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("bench-subgraph", help="gradient throughput: full graph vs subgraph")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target-class", type=int, default=0)
    p.add_argument("--attack-nodes", type=int, default=3)
    p.add_argument("--fake-per-attack", type=int, default=2)
    p.add_argument("--ancillary", type=int, default=20)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("convert", help="citation text files to the canonical JSON container")
    p.add_argument("--content", required=True)
    p.add_argument("--cites", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None,
                   help="validate against this registry descriptor after conversion")

    return parser


def _counts(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigurationError(f"expected a comma-separated count list, got {text!r}")


def _load(args):
    return dataio.resolve_dataset(args.dataset, args.data_dir)


def _load_params(args, graph):
    params = gcn.load_checkpoint(args.checkpoint)
    if params.num_features != graph.num_features or params.num_classes != graph.num_classes:
        raise ValidationError(
            f"checkpoint dims (d={params.num_features}, C={params.num_classes}) do not "
            f"match dataset (d={graph.num_features}, C={graph.num_classes})"
        )
    return params


def cmd_train(args) -> int:
    graph, name = _load(args)
    masks = dataio.make_split(
        graph, args.per_class_train, args.val_size, args.test_size, args.seed
    )
    cfg = gcn.TrainConfig(
        train_mask=masks.train, val_mask=masks.val, test_mask=masks.test,
        hidden_dim=args.hidden, learning_rate=args.lr,
        weight_decay=args.weight_decay, dropout_rate=args.dropout,
        epochs=args.epochs, seed=args.seed,
    )
    start = time.perf_counter()
    params = gcn.train(graph, cfg)
    elapsed = time.perf_counter() - start
    gcn.save_checkpoint(params, args.out)
    adj = normalize(graph)
    print(f"dataset={name} nodes={graph.num_nodes} edges={graph.num_edges}")
    for split, mask in (("train", masks.train), ("val", masks.val), ("test", masks.test)):
        acc = gcn.accuracy(adj, graph.features, params, graph.labels, mask)
        print(f"{split}_accuracy={acc:.4f}")
    print(f"epochs={args.epochs} seconds={elapsed:.1f} checkpoint={args.out}")
    return 0


def cmd_attack(args) -> int:
    graph, name = _load(args)
    params = _load_params(args, graph)
    cfg = atk.AttackConfig(
        target_class=args.target_class,
        num_attack_nodes=args.attack_nodes,
        fake_per_attack=args.fake_per_attack,
        num_ancillary=args.ancillary,
        max_iters=args.iters,
        budget=args.budget,
        seed=args.seed,
    )
    use_subgraph = not args.full_graph
    start = time.perf_counter()
    result = atk.run_attack(graph, params, cfg, use_subgraph=use_subgraph)
    pool = atk.eligible_victims(
        graph, cfg.target_class, result.attack_nodes, result.ancillary_nodes
    )
    asr = atk.evaluate_asr(graph, params, result, pool, use_subgraph=use_subgraph)
    elapsed = time.perf_counter() - start
    if args.out:
        atk.save_result(result, args.out)
        print(f"result={args.out}")
    bits = len(result.fake_feature_bits())
    print(
        f"dataset={name} target_class={cfg.target_class} "
        f"attack_nodes={list(result.attack_nodes)} fake_nodes={cfg.num_fake} "
        f"bits_set={bits} test_pool={pool.shape[0]}"
    )
    print(f"asr={asr:.4f} seconds={elapsed:.1f}")
    return 0


def _print_summary(records):
    for (class_id, n_attack, n_anc), (mean, std, count) in exp.summarize(records).items():
        print(
            f"class={class_id} n_attack={n_attack} n_ancillary={n_anc} "
            f"mean_asr={mean:.4f} std={std:.4f} reps={count}"
        )


def _sweep(args, fn) -> int:
    graph, name = _load(args)
    params = _load_params(args, graph)
    reps = 10 if args.full_grid else args.repetitions
    plan = exp.ExperimentPlan(
        dataset=name,
        attack_node_counts=_counts(args.attack_node_counts),
        ancillary_counts=(
            _counts(args.ancillary_counts)
            if hasattr(args, "ancillary_counts") else (args.ancillary,)
        ),
        fake_per_attack=args.fake_per_attack,
        repetitions=reps,
        max_iters=args.iters,
        base_seed=args.seed,
    )
    records = fn(graph, params, plan, workers=args.workers)
    exp.write_csv(records, args.out)
    print(f"rows={len(records)} csv={args.out}")
    _print_summary(records)
    return 0


def cmd_sweep_attack_nodes(args) -> int:
    return _sweep(args, exp.sweep_attack_nodes)


def cmd_sweep_ancillary(args) -> int:
    return _sweep(args, exp.sweep_ancillary)


def cmd_fluctuation(args) -> int:
    graph, name = _load(args)
    params = _load_params(args, graph)
    records = exp.fluctuation_study(
        graph, params, name, args.target_class,
        repetitions=args.reps, n_attack=args.attack_nodes,
        fake_per_attack=args.fake_per_attack, n_ancillary=args.ancillary,
        max_iters=args.iters, base_seed=args.seed, workers=args.workers,
    )
    exp.write_csv(records, args.out)
    asrs = [r.asr for r in records]
    print(f"rows={len(records)} csv={args.out}")
    print(
        f"class={args.target_class} mean_asr={np.mean(asrs):.4f} "
        f"std={np.std(asrs):.4f} reps={len(asrs)}"
    )
    return 0


def cmd_bench_subgraph(args) -> int:
    graph, name = _load(args)
    params = _load_params(args, graph)
    report = exp.bench_subgraph(
        graph, params,
        target_class=args.target_class, n_attack=args.attack_nodes,
        fake_per_attack=args.fake_per_attack, n_ancillary=args.ancillary,
        seed=args.seed, repeats=args.repeats,
    )
    print(f"dataset={name} evaluations={report.evaluations}")
    print(f"equivalence_max_abs_diff={report.max_abs_difference:.3e}")
    print(f"full_graph_evals_per_sec={report.full_evals_per_sec:.2f}")
    print(f"subgraph_evals_per_sec={report.sub_evals_per_sec:.2f}")
    print(
        f"subgraph_per_eval: extract={report.sub_extract_seconds * 1e3:.2f}ms "
        f"gradient={report.sub_gradient_seconds * 1e3:.2f}ms"
    )
    print(f"speedup={report.speedup:.1f}x")
    return 0


def cmd_convert(args) -> int:
    graph, stats = dataio.load_citation_text_with_stats(args.content, args.cites)
    if args.name:
        name = args.name.lower()
        if name not in dataio.DESCRIPTORS:
            raise ConfigurationError(f"unknown dataset name {args.name!r}")
        dataio.validate_descriptor(graph, dataio.DESCRIPTORS[name], stats)
    dataio.save_canonical(graph, args.out)
    print(
        f"nodes={graph.num_nodes} edges={graph.num_edges} features={graph.num_features} "
        f"classes={graph.num_classes} dropped_unknown={stats.dropped_unknown} out={args.out}"
    )
    return 0


COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "sweep-attack-nodes": cmd_sweep_attack_nodes,
    "sweep-ancillary": cmd_sweep_ancillary,
    "fluctuation": cmd_fluctuation,
    "bench-subgraph": cmd_bench_subgraph,
    "convert": cmd_convert,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
