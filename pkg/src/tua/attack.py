"""Targeted universal attack: greedy gradient-guided fake-feature perturbation.

The attack wires a handful of target-class attack nodes to injected fake
nodes, then iteratively sets single feature bits of the fake block. Each
iteration accumulates, over a fixed set of non-target ancillary nodes, the
gradient of prob(v, target) - prob(v, current) with the ancillary node
linked to all attack nodes, and sets the unset bit with the largest
accumulated gradient. Any node later linked to the attack nodes then tends
to be classified as the target class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, GraphStructureError
from .gcn import GcnParams, forward, objective_grad_wrt_fake, prob_row
from .graphs import Graph, PerturbedGraph, inject_fake_nodes, normalize
from .subgraph import SubgraphCache


class PositionsExhausted(Exception):
    """Every fake-feature position is already set."""


@dataclass(frozen=True)
class AttackConfig:
    """Attack budget and sampling parameters. ``budget`` defaults to edges + max_iters."""

    target_class: int
    num_attack_nodes: int
    fake_per_attack: int
    num_ancillary: int
    max_iters: int = 25
    budget: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_attack_nodes < 1:
            raise ConfigurationError("need at least one attack node")
        if self.fake_per_attack < 1:
            raise ConfigurationError("fake_per_attack must be >= 1")
        if self.num_ancillary < 1:
            raise ConfigurationError("need at least one ancillary node")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be >= 0")
        edges = self.num_attack_nodes * self.fake_per_attack
        if self.budget is not None and self.budget < edges:
            raise ConfigurationError(
                f"budget {self.budget} cannot cover the {edges} injected edges"
            )

    @property
    def num_fake(self) -> int:
        return self.num_attack_nodes * self.fake_per_attack

    def effective_budget(self) -> int:
        return self.budget if self.budget is not None else self.num_fake + self.max_iters


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    i: int
    j: int
    grad_value: float
    objective_sum: float


@dataclass(frozen=True)
class AttackResult:
    """Final perturbed graph, per-iteration trace, and the ancillary set used."""

    perturbed: PerturbedGraph
    trace: tuple[IterationRecord, ...]
    ancillary_nodes: tuple[int, ...]

    @property
    def attack_nodes(self) -> tuple[int, ...]:
        return self.perturbed.attack_nodes

    @property
    def target_class(self) -> int:
        return self.perturbed.target_class

    def fake_feature_bits(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.perturbed.fake_features)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]


def select_attack_nodes(graph: Graph, target_class: int, n: int, seed) -> list[int]:
    """Seeded uniform draw of n distinct nodes labeled ``target_class``."""
    members = graph.nodes_of_class(target_class)
    if members.shape[0] < n:
        raise ConfigurationError(
            f"class {target_class} has {members.shape[0]} members, need {n}"
        )
    rng = np.random.default_rng(seed)
    return [int(x) for x in rng.choice(members, size=n, replace=False)]


def select_ancillary_nodes(
    graph: Graph, target_class: int, n: int, seed, exclude: Iterable[int] = ()
) -> list[int]:
    """Seeded draw of n distinct non-target-class nodes outside ``exclude``."""
    excluded = set(int(e) for e in exclude)
    pool = np.array(
        [
            u
            for u in range(graph.num_nodes)
            if int(graph.labels[u]) != target_class and u not in excluded
        ],
        dtype=np.int64,
    )
    if pool.shape[0] < n:
        raise ConfigurationError(
            f"only {pool.shape[0]} eligible ancillary nodes, need {n}"
        )
    rng = np.random.default_rng(seed)
    return [int(x) for x in rng.choice(pool, size=n, replace=False)]


def _restore_link(pg: PerturbedGraph, previous: int | None) -> None:
    if previous is None:
        pg.unlink_victim()
    else:
        pg.link_victim(previous)


def objective(
    pg: PerturbedGraph,
    params: GcnParams,
    v: int,
    cache: SubgraphCache | None = None,
    use_subgraph: bool = True,
) -> float:
    """Targeted score prob(v, target) - prob(v, argmax) with v linked to the attack nodes.

    Links v internally (restoring the prior link state afterwards). The value
    is <= 0, and 0 exactly when v is predicted as the target class.
    """
    if v in pg.attack_nodes:
        raise ConfigurationError(f"node {v} is an attack node")
    previous = pg.victim
    if use_subgraph and cache is None:
        if previous is not None:
            pg.unlink_victim()
        cache = SubgraphCache(pg)
    pg.link_victim(v)
    try:
        if use_subgraph:
            row = cache.prob_row(params, v)
        else:
            adj = normalize(pg)
            row = prob_row(adj.matrix, pg.full_features(sparse=True), params, v)
    finally:
        _restore_link(pg, previous)
    c_v = int(np.argmax(row))
    return float(row[pg.target_class] - row[c_v])


def grad_matrix(
    pg: PerturbedGraph,
    params: GcnParams,
    ancillary: Sequence[int],
    cache: SubgraphCache | None = None,
    use_subgraph: bool = True,
) -> np.ndarray:
    """Sum of per-ancillary fake-row gradients, each under its own victim link.

    Accumulation follows the ancillary list order, so results are
    deterministic; duplicated entries contribute multiple times.
    """
    if len(ancillary) == 0:
        raise ConfigurationError("ancillary list must not be empty")
    previous = pg.victim
    if use_subgraph and cache is None:
        if previous is not None:
            pg.unlink_victim()
        cache = SubgraphCache(pg)
    total = np.zeros_like(pg.fake_features)
    fake_rows = np.arange(pg.base.num_nodes, pg.num_total, dtype=np.int64)
    try:
        for v in ancillary:
            pg.link_victim(int(v))
            if use_subgraph:
                total += cache.grad_rows(params, int(v), pg.target_class)
            else:
                adj = normalize(pg)
                total += objective_grad_wrt_fake(
                    adj, pg.full_features(sparse=True), params,
                    int(v), pg.target_class, fake_rows,
                )
    finally:
        _restore_link(pg, previous)
    return total


def greedy_select(grad: np.ndarray, already_set: set[tuple[int, int]]) -> tuple[int, int]:
    """Largest-gradient position whose bit is still unset; ties go to lowest (i, j).

    Positions in ``already_set`` are skipped, which realizes the fall-through
    to the second-largest (and further) entries. Raises
    :class:`PositionsExhausted` when nothing remains.
    """
    if len(already_set) >= grad.size:
        raise PositionsExhausted
    masked = np.asarray(grad, dtype=np.float64).copy()
    for i, j in already_set:
        masked[i, j] = -np.inf
    i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
    return int(i), int(j)


def run_attack(
    graph: Graph,
    params: GcnParams,
    cfg: AttackConfig,
    attack_nodes: Sequence[int] | None = None,
    ancillary_nodes: Sequence[int] | None = None,
    use_subgraph: bool = True,
) -> AttackResult:
    """Full attack loop: inject fakes, then greedily set one feature bit per iteration.

    Stops early when the budget would be exceeded or every position is set.
    Explicit ``attack_nodes`` / ``ancillary_nodes`` override the seeded
    sampling (used by experiments that hold one of them fixed).
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    if attack_nodes is None:
        attack_nodes = select_attack_nodes(
            graph, cfg.target_class, cfg.num_attack_nodes, seeds[0]
        )
    attack_nodes = [int(a) for a in attack_nodes]
    if ancillary_nodes is None:
        ancillary_nodes = select_ancillary_nodes(
            graph, cfg.target_class, cfg.num_ancillary, seeds[1], exclude=attack_nodes
        )
    ancillary_nodes = [int(v) for v in ancillary_nodes]

    pg = inject_fake_nodes(graph, attack_nodes, cfg.fake_per_attack)
    if pg.target_class != cfg.target_class:
        raise ConfigurationError(
            f"attack nodes are labeled {pg.target_class}, not target {cfg.target_class}"
        )
    cache = SubgraphCache(pg) if use_subgraph else None
    budget = cfg.effective_budget()
    num_edges = pg.num_fake

    trace: list[IterationRecord] = []
    set_positions: set[tuple[int, int]] = set()
    for iteration in range(1, cfg.max_iters + 1):
        if num_edges + len(set_positions) + 1 > budget:
            break
        grad = grad_matrix(pg, params, ancillary_nodes, cache, use_subgraph)
        try:
            i, j = greedy_select(grad, set_positions)
        except PositionsExhausted:
            break
        pg.set_fake_feature(i, j, 1.0)
        set_positions.add((i, j))
        objective_sum = sum(
            objective(pg, params, v, cache, use_subgraph) for v in ancillary_nodes
        )
        trace.append(
            IterationRecord(iteration, i, j, float(grad[i, j]), float(objective_sum))
        )
    pg.unlink_victim()
    return AttackResult(
        perturbed=pg, trace=tuple(trace), ancillary_nodes=tuple(ancillary_nodes)
    )


def eligible_victims(
    graph: Graph,
    target_class: int,
    attack_nodes: Iterable[int] = (),
    ancillary_nodes: Iterable[int] = (),
) -> np.ndarray:
    """Evaluation pool: every node not labeled target-class, not attack, not ancillary."""
    banned = set(int(a) for a in attack_nodes) | set(int(v) for v in ancillary_nodes)
    return np.array(
        [
            u
            for u in range(graph.num_nodes)
            if int(graph.labels[u]) != target_class and u not in banned
        ],
        dtype=np.int64,
    )


def evaluate_asr(
    graph: Graph,
    params: GcnParams,
    result: AttackResult,
    test_nodes: Sequence[int],
    use_subgraph: bool = True,
) -> float:
    """Fraction of test nodes predicted as the target class once linked.

    Each victim is linked to all attack nodes, the adjacency renormalized,
    the victim's class predicted, and the link removed before the next one.
    """
    test_nodes = [int(t) for t in test_nodes]
    if not test_nodes:
        raise ConfigurationError("test pool must not be empty")
    pg = result.perturbed
    banned = set(pg.attack_nodes) | set(result.ancillary_nodes)
    for t in test_nodes:
        if t in banned or int(graph.labels[t]) == pg.target_class:
            raise ConfigurationError(
                f"test node {t} violates the exclusion rule "
                "(attack / ancillary / target-class nodes are ineligible)"
            )
    previous = pg.victim
    if previous is not None:
        pg.unlink_victim()
    cache = SubgraphCache(pg) if use_subgraph else None
    hits = 0
    try:
        for t in test_nodes:
            pg.link_victim(t)
            if use_subgraph:
                row = cache.prob_row(params, t)
            else:
                adj = normalize(pg)
                row = forward(adj, pg.full_features(sparse=True), params)[t]
            hits += int(np.argmax(row)) == pg.target_class
            pg.unlink_victim()
    finally:
        _restore_link(pg, previous)
    return hits / len(test_nodes)


def result_to_dict(result: AttackResult) -> dict:
    return {
        "target_class": result.target_class,
        "attack_nodes": list(result.attack_nodes),
        "ancillary_nodes": list(result.ancillary_nodes),
        "fake_edges": [[int(a), int(f)] for a, f in result.perturbed.fake_edges],
        "fake_feature_bits": [[i, j] for i, j in result.fake_feature_bits()],
        "trace": [
            {
                "iter": r.iteration,
                "i": r.i,
                "j": r.j,
                "grad_value": r.grad_value,
                "objective_sum": r.objective_sum,
            }
            for r in result.trace
        ],
    }


def save_result(result: AttackResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result_to_dict(result), fh, indent=2)
        fh.write("\n")


def load_result(graph: Graph, path) -> AttackResult:
    """Rebuild an :class:`AttackResult` (perturbed graph included) from its JSON form."""
    with open(path) as fh:
        doc = json.load(fh)
    attack_nodes = [int(a) for a in doc["attack_nodes"]]
    fake_edges = doc["fake_edges"]
    if len(fake_edges) % len(attack_nodes):
        raise GraphStructureError("fake edge count is not a multiple of attack nodes")
    pg = inject_fake_nodes(graph, attack_nodes, len(fake_edges) // len(attack_nodes))
    if [[a, f] for a, f in pg.fake_edges] != [[int(a), int(f)] for a, f in fake_edges]:
        raise GraphStructureError("fake edge layout does not match this graph")
    for i, j in doc["fake_feature_bits"]:
        pg.set_fake_feature(int(i), int(j), 1.0)
    trace = tuple(
        IterationRecord(
            int(r["iter"]), int(r["i"]), int(r["j"]),
            float(r["grad_value"]), float(r["objective_sum"]),
        )
        for r in doc["trace"]
    )
    return AttackResult(
        perturbed=pg,
        trace=trace,
        ancillary_nodes=tuple(int(v) for v in doc["ancillary_nodes"]),
    )
