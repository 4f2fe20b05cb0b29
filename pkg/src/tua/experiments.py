"""Experiment sweeps, ASR records, CSV emission, and the subgraph benchmark.

Every sweep cell derives its own seed from (base seed, dataset, class,
attack-node count, ancillary count, repetition), so any CSV row can be
recomputed in isolation and cells can run in a worker pool without changing
results. Rows are written in deterministic cell order regardless of worker
count.
"""

from __future__ import annotations

import csv
import hashlib
import multiprocessing
import time
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .attack import (
    AttackConfig,
    eligible_victims,
    evaluate_asr,
    grad_matrix,
    run_attack,
    select_attack_nodes,
    select_ancillary_nodes,
)
from .gcn import GcnParams, objective_grad_wrt_fake
from .graphs import Graph, inject_fake_nodes, normalize
from .subgraph import SubgraphCache, sub_grad_rows

CSV_FIELDS = (
    "dataset", "class_id", "n_attack", "n_fake", "n_ancillary",
    "repetition", "seed", "asr", "runtime_seconds",
)


@dataclass(frozen=True)
class ExperimentPlan:
    """Grid description for the ASR sweeps."""

    dataset: str
    attack_node_counts: tuple[int, ...] = (1, 2, 3, 4)
    ancillary_counts: tuple[int, ...] = (20,)
    fake_per_attack: int = 2
    repetitions: int = 3
    max_iters: int = 25
    base_seed: int = 0

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.fake_per_attack < 1 or self.max_iters < 0:
            raise ValueError("bad plan counts")
        if not self.attack_node_counts or not self.ancillary_counts:
            raise ValueError("plan needs at least one attack-node and ancillary count")


@dataclass(frozen=True)
class AsrRecord:
    dataset: str
    class_id: int
    n_attack: int
    n_fake: int
    n_ancillary: int
    repetition: int
    seed: int
    asr: float
    runtime_seconds: float


def cell_seed(
    base_seed: int, dataset: str, class_id: int, n_attack: int,
    n_ancillary: int, repetition: int, tag: str = "",
) -> int:
    """Stable 63-bit seed derived from the cell coordinates."""
    key = f"{base_seed}|{dataset}|{class_id}|{n_attack}|{n_ancillary}|{repetition}|{tag}"
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def run_cell(
    graph: Graph,
    params: GcnParams,
    dataset: str,
    class_id: int,
    n_attack: int,
    n_ancillary: int,
    fake_per_attack: int,
    repetition: int,
    base_seed: int,
    max_iters: int = 25,
    attack_nodes: Sequence[int] | None = None,
) -> AsrRecord:
    """One seeded attack plus ASR evaluation over the eligible pool."""
    seed = cell_seed(base_seed, dataset, class_id, n_attack, n_ancillary, repetition)
    cfg = AttackConfig(
        target_class=class_id,
        num_attack_nodes=n_attack,
        fake_per_attack=fake_per_attack,
        num_ancillary=n_ancillary,
        max_iters=max_iters,
        seed=seed,
    )
    start = time.perf_counter()
    result = run_attack(graph, params, cfg, attack_nodes=attack_nodes)
    pool = eligible_victims(
        graph, class_id, result.attack_nodes, result.ancillary_nodes
    )
    asr = evaluate_asr(graph, params, result, pool)
    return AsrRecord(
        dataset=dataset,
        class_id=class_id,
        n_attack=n_attack,
        n_fake=n_attack * fake_per_attack,
        n_ancillary=n_ancillary,
        repetition=repetition,
        seed=seed,
        asr=asr,
        runtime_seconds=time.perf_counter() - start,
    )


_POOL_CTX: dict = {}


def _pool_init(graph, params):
    _POOL_CTX["graph"] = graph
    _POOL_CTX["params"] = params


def _pool_cell(kwargs):
    return run_cell(_POOL_CTX["graph"], _POOL_CTX["params"], **kwargs)


def _run_cells(graph, params, cells: list[dict], workers: int) -> list[AsrRecord]:
    if workers <= 1:
        return [run_cell(graph, params, **c) for c in cells]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers, initializer=_pool_init, initargs=(graph, params)) as pool:
        return pool.map(_pool_cell, cells)


def sweep_attack_nodes(
    graph: Graph, params: GcnParams, plan: ExperimentPlan, workers: int = 1
) -> list[AsrRecord]:
    """Vary the attack-node count per class; ancillary count fixed at the plan's first."""
    n_anc = plan.ancillary_counts[0]
    cells = [
        dict(
            dataset=plan.dataset, class_id=c, n_attack=n, n_ancillary=n_anc,
            fake_per_attack=plan.fake_per_attack, repetition=rep,
            base_seed=plan.base_seed, max_iters=plan.max_iters,
        )
        for c in range(graph.num_classes)
        for n in plan.attack_node_counts
        for rep in range(plan.repetitions)
    ]
    return _run_cells(graph, params, cells, workers)


def sweep_ancillary(
    graph: Graph, params: GcnParams, plan: ExperimentPlan, workers: int = 1
) -> list[AsrRecord]:
    """Vary the ancillary count for every (class, attack-node count) pair."""
    cells = [
        dict(
            dataset=plan.dataset, class_id=c, n_attack=n, n_ancillary=a,
            fake_per_attack=plan.fake_per_attack, repetition=rep,
            base_seed=plan.base_seed, max_iters=plan.max_iters,
        )
        for c in range(graph.num_classes)
        for n in plan.attack_node_counts
        for a in plan.ancillary_counts
        for rep in range(plan.repetitions)
    ]
    return _run_cells(graph, params, cells, workers)


def fluctuation_study(
    graph: Graph,
    params: GcnParams,
    dataset: str,
    class_id: int,
    repetitions: int = 10,
    n_attack: int = 3,
    fake_per_attack: int = 2,
    n_ancillary: int = 20,
    max_iters: int = 25,
    base_seed: int = 0,
    workers: int = 1,
) -> list[AsrRecord]:
    """Repeat the attack with fixed attack nodes and resampled ancillary sets."""
    attack_nodes = select_attack_nodes(
        graph, class_id, n_attack,
        cell_seed(base_seed, dataset, class_id, n_attack, n_ancillary, 0, "attack-set"),
    )
    cells = [
        dict(
            dataset=dataset, class_id=class_id, n_attack=n_attack,
            n_ancillary=n_ancillary, fake_per_attack=fake_per_attack,
            repetition=rep, base_seed=base_seed, max_iters=max_iters,
            attack_nodes=attack_nodes,
        )
        for rep in range(repetitions)
    ]
    return _run_cells(graph, params, cells, workers)


def write_csv(records: Iterable[AsrRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow([getattr(r, f) for f in CSV_FIELDS])


def read_csv(path) -> list[AsrRecord]:
    types = {f.name: f.type for f in fields(AsrRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(AsrRecord(**{
                k: (int(v) if types[k] == "int" else float(v) if types[k] == "float" else v)
                for k, v in row.items()
            }))
    return out


def summarize(records: Sequence[AsrRecord]) -> dict[tuple, tuple[float, float, int]]:
    """Mean/std/count of ASR per (class_id, n_attack, n_ancillary) cell."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.class_id, r.n_attack, r.n_ancillary), []).append(r.asr)
    return {
        key: (float(np.mean(vals)), float(np.std(vals)), len(vals))
        for key, vals in sorted(groups.items())
    }


@dataclass(frozen=True)
class BenchReport:
    """Gradient-throughput comparison between the full-graph and subgraph paths."""

    full_evals_per_sec: float
    sub_evals_per_sec: float
    speedup: float
    sub_extract_seconds: float     # per-eval view construction time
    sub_gradient_seconds: float    # per-eval gradient time on the view
    max_abs_difference: float
    evaluations: int


def bench_subgraph(
    graph: Graph,
    params: GcnParams,
    target_class: int = 0,
    n_attack: int = 3,
    fake_per_attack: int = 2,
    n_ancillary: int = 20,
    seed: int = 0,
    repeats: int = 3,
) -> BenchReport:
    """Time per-ancillary gradient evaluations with and without subgraph views.

    Both paths are verified to produce identical gradients (1e-9) before any
    timing; a disagreement aborts the benchmark.
    """
    seeds = np.random.SeedSequence(seed).spawn(2)
    attack_nodes = select_attack_nodes(graph, target_class, n_attack, seeds[0])
    ancillary = select_ancillary_nodes(
        graph, target_class, n_ancillary, seeds[1], exclude=attack_nodes
    )
    pg = inject_fake_nodes(graph, attack_nodes, fake_per_attack)

    full = grad_matrix(pg, params, ancillary, use_subgraph=False)
    sub = grad_matrix(pg, params, ancillary, use_subgraph=True)
    max_diff = float(np.max(np.abs(full - sub))) if full.size else 0.0
    if max_diff >= 1e-9:
        raise RuntimeError(
            f"subgraph/full gradient mismatch (max abs diff {max_diff:.3e}); benchmark aborted"
        )

    fake_rows = np.arange(pg.base.num_nodes, pg.num_total, dtype=np.int64)
    evals = len(ancillary) * repeats

    start = time.perf_counter()
    for _ in range(repeats):
        for v in ancillary:
            pg.link_victim(v)
            adj = normalize(pg)
            objective_grad_wrt_fake(
                adj, pg.full_features(sparse=True), params, v, target_class, fake_rows
            )
            pg.unlink_victim()
    full_time = time.perf_counter() - start

    cache = SubgraphCache(pg)
    extract_time = 0.0
    grad_time = 0.0
    for _ in range(repeats):
        for v in ancillary:
            pg.link_victim(v)
            t0 = time.perf_counter()
            view = cache.view_for(v)
            t1 = time.perf_counter()
            sub_grad_rows(view, pg.feature_rows(view.nodes), params, v, target_class)
            t2 = time.perf_counter()
            extract_time += t1 - t0
            grad_time += t2 - t1
            pg.unlink_victim()
    sub_time = extract_time + grad_time

    return BenchReport(
        full_evals_per_sec=evals / full_time,
        sub_evals_per_sec=evals / sub_time,
        speedup=full_time / sub_time,
        sub_extract_seconds=extract_time / evals,
        sub_gradient_seconds=grad_time / evals,
        max_abs_difference=max_diff,
        evaluations=evals,
    )
