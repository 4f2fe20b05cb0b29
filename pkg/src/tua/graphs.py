"""Graph containers, symmetric normalization, and the structural mutations used by the attack.

The base :class:`Graph` is immutable. Attack-time structure (injected fake
nodes, the transient victim link) lives in :class:`PerturbedGraph`, which is
mutable single-writer state layered on top of an untouched base graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GraphStructureError, ValidationError


def _canonical_edges(edge_list: Iterable[Sequence[int]], num_nodes: int) -> np.ndarray:
    """Deduplicate to sorted (u, v) rows with u < v; self-loops are dropped."""
    pairs = set()
    for e in edge_list:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphStructureError(
                f"edge ({u}, {v}) out of range for {num_nodes} nodes"
            )
        if u == v:
            continue
        pairs.add((u, v) if u < v else (v, u))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with binary node features and class labels.

    Invariants: no stored self-loops, no duplicate edges, every feature entry
    is exactly 0 or 1, every label is in [0, num_classes).
    """

    num_nodes: int
    num_features: int
    num_classes: int
    edges: np.ndarray      # (E, 2) int64, each row (u, v) with u < v, rows sorted
    features: np.ndarray   # (N, d) float64 with entries in {0, 1}
    labels: np.ndarray     # (N,) int64

    def __post_init__(self):
        for arr in (self.edges, self.features, self.labels):
            arr.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def neighbor_sets(self) -> list[set[int]]:
        """Adjacency as per-node neighbor sets (fresh copy, safe to mutate)."""
        adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].add(int(v))
            adj[v].add(int(u))
        return adj

    def nodes_of_class(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)


def build_graph(
    edge_list: Iterable[Sequence[int]],
    features: np.ndarray,
    labels: Sequence[int],
    num_classes: int | None = None,
) -> Graph:
    """Construct a canonical deduplicated undirected :class:`Graph`.

    Parameters
    ----------
    edge_list : iterable of (u, v) pairs
        Undirected edges; duplicates and orientation are collapsed, self-loops
        dropped.
    features : (N, d) array-like
        Binary feature matrix; any entry not exactly 0 or 1 is rejected.
    labels : length-N sequence of class indices
    num_classes : optional explicit class count (>= max label + 1)
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError("features must be a 2-d matrix")
    labels_arr = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if labels_arr.shape != (n,):
        raise ValidationError(
            f"labels length {labels_arr.shape} does not match {n} feature rows"
        )
    if not np.all((features == 0.0) | (features == 1.0)):
        raise ValidationError("feature entries must be exactly 0 or 1")
    if n and labels_arr.min() < 0:
        raise ValidationError("labels must be non-negative class indices")
    inferred = int(labels_arr.max()) + 1 if n else 0
    if num_classes is None:
        num_classes = inferred
    elif num_classes < inferred:
        raise ValidationError(
            f"num_classes={num_classes} smaller than max label {inferred - 1}"
        )
    edges = _canonical_edges(edge_list, n)
    return Graph(
        num_nodes=n,
        num_features=features.shape[1],
        num_classes=num_classes,
        edges=edges,
        features=features,
        labels=labels_arr,
    )


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically scaled adjacency with self-loops.

    Entry (u, w) is 1/sqrt(deg(u) * deg(w)) for w in the closed neighborhood
    of u, where deg counts neighbors plus the self-loop. ``degrees`` caches
    those closed degrees.
    """

    matrix: sp.csr_matrix   # (N, N) float64, exactly symmetric
    degrees: np.ndarray     # (N,) int64 closed degrees

    def __post_init__(self):
        self.degrees.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def _normalized_from_edges(edges: np.ndarray, n: int) -> NormalizedAdjacency:
    deg = np.ones(n, dtype=np.int64)
    if edges.shape[0]:
        deg += np.bincount(edges[:, 0], minlength=n)
        deg += np.bincount(edges[:, 1], minlength=n)
    inv = 1.0 / np.sqrt(deg.astype(np.float64))
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([edges[:, 0], edges[:, 1], loops])
    cols = np.concatenate([edges[:, 1], edges[:, 0], loops])
    vals = inv[rows] * inv[cols]
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return NormalizedAdjacency(matrix=mat, degrees=deg)


def normalize(graph: "Graph | PerturbedGraph") -> NormalizedAdjacency:
    """Recompute the normalized adjacency from scratch for the current topology.

    Accepts either a base :class:`Graph` or a :class:`PerturbedGraph` (whose
    fake nodes and current victim link are included). Same topology yields a
    bit-identical result.
    """
    if isinstance(graph, Graph):
        return _normalized_from_edges(graph.edges, graph.num_nodes)
    if isinstance(graph, PerturbedGraph):
        return _normalized_from_edges(graph.edge_array(), graph.num_total)
    raise TypeError(f"cannot normalize object of type {type(graph).__name__}")


class PerturbedGraph:
    """Base graph extended with attack nodes, a fake-node block, and a victim link.

    Fake nodes occupy indices [N, N + num_fake). Their features start at zero
    and are the only mutable feature state; the base graph is never modified.
    At most one victim is wired to the attack nodes at a time.
    """

    def __init__(
        self,
        base: Graph,
        attack_nodes: Sequence[int],
        target_class: int,
        fake_features: np.ndarray,
        fake_edges: list[tuple[int, int]],
    ):
        self.base = base
        self.attack_nodes = tuple(int(a) for a in attack_nodes)
        self.target_class = int(target_class)
        self.fake_features = fake_features
        self.fake_edges = list(fake_edges)
        self.victim: int | None = None
        self._victim_added: list[tuple[int, int]] = []
        adj = base.neighbor_sets()
        adj.extend(set() for _ in range(fake_features.shape[0]))
        for a, f in fake_edges:
            adj[a].add(f)
            adj[f].add(a)
        self._adj = adj
        self._base_csr: sp.csr_matrix | None = None

    @property
    def num_fake(self) -> int:
        return self.fake_features.shape[0]

    @property
    def num_total(self) -> int:
        return self.base.num_nodes + self.num_fake

    @property
    def fake_index_range(self) -> range:
        return range(self.base.num_nodes, self.num_total)

    def neighbors(self, u: int) -> set[int]:
        return self._adj[u]

    def closed_degree(self, u: int) -> int:
        return len(self._adj[u]) + 1

    def closed_degrees(self, nodes: Iterable[int]) -> np.ndarray:
        return np.array([len(self._adj[u]) + 1 for u in nodes], dtype=np.int64)

    def edge_array(self) -> np.ndarray:
        """All current edges (base + fake links + victim links), deterministic order."""
        parts = [self.base.edges]
        if self.fake_edges:
            parts.append(np.array(self.fake_edges, dtype=np.int64))
        if self._victim_added:
            parts.append(np.array(self._victim_added, dtype=np.int64))
        return np.concatenate(parts, axis=0)

    def link_victim(self, victim: int) -> "PerturbedGraph":
        """Wire ``victim`` to every attack node, replacing any previous victim link.

        Edges already present in the base graph are not duplicated. Consumers
        of normalized adjacency must renormalize afterwards: the degrees of
        the victim and of the attack nodes change.
        """
        victim = int(victim)
        if not 0 <= victim < self.base.num_nodes:
            raise GraphStructureError(
                f"victim {victim} is not an original node (N={self.base.num_nodes})"
            )
        if victim in self.attack_nodes:
            raise ConfigurationError(f"victim {victim} is an attack node")
        if self.victim is not None:
            self.unlink_victim()
        added = []
        for a in self.attack_nodes:
            if a not in self._adj[victim]:
                self._adj[victim].add(a)
                self._adj[a].add(victim)
                added.append((victim, a))
        self.victim = victim
        self._victim_added = added
        return self

    def unlink_victim(self) -> "PerturbedGraph":
        """Remove the current victim link, restoring the exact prior edge set."""
        for v, a in self._victim_added:
            self._adj[v].discard(a)
            self._adj[a].discard(v)
        self.victim = None
        self._victim_added = []
        return self

    def set_fake_feature(self, fake_row: int, feature: int, value: float = 1.0) -> None:
        if not 0 <= fake_row < self.num_fake:
            raise GraphStructureError(f"fake row {fake_row} out of range")
        if not 0 <= feature < self.base.num_features:
            raise GraphStructureError(f"feature index {feature} out of range")
        self.fake_features[fake_row, feature] = value

    def feature_rows(self, nodes: np.ndarray) -> np.ndarray:
        """Gather feature rows by global index without assembling the full stack."""
        nodes = np.asarray(nodes, dtype=np.int64)
        n = self.base.num_nodes
        out = np.empty((nodes.shape[0], self.base.num_features), dtype=np.float64)
        base_mask = nodes < n
        out[base_mask] = self.base.features[nodes[base_mask]]
        out[~base_mask] = self.fake_features[nodes[~base_mask] - n]
        return out

    def full_features(self, sparse: bool = False):
        """Vertical stack of original features over the fake block."""
        if sparse:
            if self._base_csr is None:
                self._base_csr = sp.csr_matrix(self.base.features)
            return sp.vstack(
                [self._base_csr, sp.csr_matrix(self.fake_features)], format="csr"
            )
        return np.vstack([self.base.features, self.fake_features])

    def copy(self) -> "PerturbedGraph":
        """Independent copy for per-thread consumers."""
        clone = PerturbedGraph(
            self.base,
            self.attack_nodes,
            self.target_class,
            self.fake_features.copy(),
            list(self.fake_edges),
        )
        if self.victim is not None:
            clone.link_victim(self.victim)
        return clone


def inject_fake_nodes(
    graph: Graph, attack_nodes: Sequence[int], fake_per_attack: int
) -> PerturbedGraph:
    """Append zero-feature fake nodes, each wired to exactly one attack node.

    Attack node i receives fake nodes N + i*fake_per_attack ... in a contiguous
    block, so the fake block has no internal edges and the feature stack keeps
    original rows first.
    """
    if fake_per_attack < 1:
        raise ConfigurationError("fake_per_attack must be >= 1")
    attack = [int(a) for a in attack_nodes]
    if not attack:
        raise ConfigurationError("need at least one attack node")
    if len(set(attack)) != len(attack):
        raise ConfigurationError("attack nodes must be distinct")
    for a in attack:
        if not 0 <= a < graph.num_nodes:
            raise GraphStructureError(f"attack node {a} out of range")
    labels = {int(graph.labels[a]) for a in attack}
    if len(labels) != 1:
        raise ConfigurationError(
            f"attack nodes carry mixed labels {sorted(labels)}; one target class required"
        )
    target_class = labels.pop()
    n = graph.num_nodes
    num_fake = len(attack) * fake_per_attack
    fake_edges = []
    for i, a in enumerate(attack):
        for k in range(fake_per_attack):
            fake_edges.append((a, n + i * fake_per_attack + k))
    fake_features = np.zeros((num_fake, graph.num_features), dtype=np.float64)
    return PerturbedGraph(graph, attack, target_class, fake_features, fake_edges)


def link_victim(pg: PerturbedGraph, victim: int) -> PerturbedGraph:
    """Operation form of :meth:`PerturbedGraph.link_victim` (mutates and returns pg)."""
    return pg.link_victim(victim)


def unlink_victim(pg: PerturbedGraph) -> PerturbedGraph:
    """Operation form of :meth:`PerturbedGraph.unlink_victim`."""
    return pg.unlink_victim()
