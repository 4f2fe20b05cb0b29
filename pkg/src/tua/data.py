"""Dataset ingestion: citation-format text files, canonical JSON, splits, binarization.

Citation text comes as two tab-separated files: a content file with lines
``id<TAB>f1 ... fd<TAB>label`` and a cites file with lines
``cited<TAB>citing``. Node ids are mapped to dense indices in file order so
index-based node selections are reproducible across runs. Label strings map
to class indices in sorted order.

Real-valued feature inputs (e.g. TF-IDF) are thresholded to binary with the
rule value > 0 -> 1; this affects accuracy and is applied consistently at
load time.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DatasetParseError, ValidationError
from .graphs import Graph, build_graph

log = logging.getLogger(__name__)

COUNT_TOLERANCE = 0.02  # published node/edge counts differ slightly across dataset versions


@dataclass(frozen=True)
class DatasetDescriptor:
    """Expected dimensions used to validate a loaded dataset."""

    name: str
    expected_nodes: int
    expected_edges: int
    expected_features: int
    expected_classes: int


DESCRIPTORS = {
    "cora": DatasetDescriptor("cora", 2708, 5429, 1433, 7),
    "citeseer": DatasetDescriptor("citeseer", 3312, 4732, 3703, 6),
    "pubmed": DatasetDescriptor("pubmed", 19717, 44338, 500, 3),
}


@dataclass(frozen=True)
class LoadStats:
    """Bookkeeping from a citation-text load."""

    citation_lines: int
    kept_pairs: int
    dropped_unknown: int
    dropped_self: int


@dataclass(frozen=True)
class SplitMasks:
    """Disjoint train/val/test node index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        sets = (set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist()))
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ConfigurationError("split masks must be pairwise disjoint")


def binarize_features(raw: np.ndarray) -> np.ndarray:
    """Threshold a real matrix to binary: entry 1 iff raw entry > 0."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValidationError("feature matrix must be finite")
    return (raw > 0).astype(np.float64)


def load_citation_text_with_stats(content_path, cites_path) -> tuple[Graph, LoadStats]:
    """Parse content/cites text into a Graph, reporting edge-drop statistics."""
    ids: dict[str, int] = {}
    feature_rows: list[np.ndarray] = []
    label_names: list[str] = []
    width = None
    with open(content_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) == 1:  # tolerate space-separated content
                parts = line.split()
            if len(parts) < 3:
                raise DatasetParseError(
                    f"content line needs id, features, label: {line[:60]!r}", lineno
                )
            node_id, *feats, label = parts
            if node_id in ids:
                raise DatasetParseError(f"duplicate node id {node_id!r}", lineno)
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise DatasetParseError(
                    f"expected {width} features, found {len(feats)}", lineno
                )
            try:
                row = np.array([float(x) for x in feats], dtype=np.float64)
            except ValueError as exc:
                raise DatasetParseError(f"non-numeric feature value ({exc})", lineno)
            ids[node_id] = len(feature_rows)
            feature_rows.append(row)
            label_names.append(label)

    classes = sorted(set(label_names))
    class_of = {name: k for k, name in enumerate(classes)}
    labels = [class_of[name] for name in label_names]
    features = binarize_features(
        np.vstack(feature_rows) if feature_rows else np.zeros((0, 0))
    )

    edges = []
    lines = kept = unknown = selfloops = 0
    with open(cites_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            lines += 1
            parts = line.split("\t")
            if len(parts) == 1:
                parts = line.split()
            if len(parts) != 2:
                raise DatasetParseError(
                    f"cites line needs two ids: {line[:60]!r}", lineno
                )
            cited, citing = parts
            if cited not in ids or citing not in ids:
                unknown += 1
                continue
            u, v = ids[cited], ids[citing]
            if u == v:
                selfloops += 1
                continue
            kept += 1
            edges.append((u, v))

    graph = build_graph(edges, features, labels)
    stats = LoadStats(lines, kept, unknown, selfloops)
    log.info(
        "loaded %s nodes, %s citation lines: kept %s pairs (%s unique edges), "
        "dropped %s with unknown ids, %s self-citations",
        graph.num_nodes, lines, kept, graph.num_edges, unknown, selfloops,
    )
    return graph, stats


def load_citation_text(content_path, cites_path) -> Graph:
    graph, _ = load_citation_text_with_stats(content_path, cites_path)
    return graph


def _within(actual: int, expected: int, tol: float = COUNT_TOLERANCE) -> bool:
    return abs(actual - expected) <= tol * expected


def validate_descriptor(
    graph: Graph, descriptor: DatasetDescriptor, stats: LoadStats | None = None
) -> None:
    """Check loaded dimensions against published counts.

    Nodes and edges get a small tolerance; published edge counts may refer to
    raw citation pairs, so the pre-dedup pair count also satisfies the check.
    Feature and class counts must match exactly.
    """
    log.info(
        "%s: nodes=%d edges=%d features=%d classes=%d",
        descriptor.name, graph.num_nodes, graph.num_edges,
        graph.num_features, graph.num_classes,
    )
    if not _within(graph.num_nodes, descriptor.expected_nodes):
        raise ValidationError(
            f"{descriptor.name}: {graph.num_nodes} nodes, expected "
            f"~{descriptor.expected_nodes}"
        )
    edge_ok = _within(graph.num_edges, descriptor.expected_edges)
    if not edge_ok and stats is not None:
        edge_ok = _within(stats.kept_pairs, descriptor.expected_edges)
    if not edge_ok:
        raise ValidationError(
            f"{descriptor.name}: {graph.num_edges} edges, expected "
            f"~{descriptor.expected_edges}"
        )
    if graph.num_features != descriptor.expected_features:
        raise ValidationError(
            f"{descriptor.name}: {graph.num_features} features, expected "
            f"{descriptor.expected_features}"
        )
    if graph.num_classes != descriptor.expected_classes:
        raise ValidationError(
            f"{descriptor.name}: {graph.num_classes} classes, expected "
            f"{descriptor.expected_classes}"
        )


def make_split(
    graph: Graph, per_class_train: int, val_size: int, test_size: int, seed: int
) -> SplitMasks:
    """Seeded split: ``per_class_train`` nodes per class, then val/test from the rest."""
    rng = np.random.default_rng(seed)
    train_parts = []
    for c in range(graph.num_classes):
        members = graph.nodes_of_class(c)
        if members.shape[0] < per_class_train:
            raise ConfigurationError(
                f"class {c} has {members.shape[0]} nodes, need {per_class_train} for train"
            )
        train_parts.append(rng.choice(members, size=per_class_train, replace=False))
    train = np.sort(np.concatenate(train_parts)) if train_parts else np.zeros(0, np.int64)
    rest = np.setdiff1d(np.arange(graph.num_nodes), train)
    if rest.shape[0] < val_size + test_size:
        raise ConfigurationError(
            f"{rest.shape[0]} nodes left after train, need {val_size + test_size}"
        )
    order = rng.permutation(rest)
    val = np.sort(order[:val_size])
    test = np.sort(order[val_size:val_size + test_size])
    return SplitMasks(train=train, val=val, test=test, seed=seed)


def save_canonical(graph: Graph, path) -> None:
    """Write the canonical JSON container (features as per-node nonzero indices)."""
    doc = {
        "num_nodes": graph.num_nodes,
        "num_features": graph.num_features,
        "num_classes": graph.num_classes,
        "edges": [[int(u), int(v)] for u, v in graph.edges],
        "features": [
            [int(j) for j in np.flatnonzero(graph.features[u])]
            for u in range(graph.num_nodes)
        ],
        "labels": [int(l) for l in graph.labels],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_canonical(path) -> Graph:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"{path}: invalid JSON ({exc})")
    for key in ("num_nodes", "num_features", "num_classes", "edges", "features", "labels"):
        if key not in doc:
            raise DatasetParseError(f"{path}: missing field {key!r}")
    n, d = int(doc["num_nodes"]), int(doc["num_features"])
    if len(doc["features"]) != n or len(doc["labels"]) != n:
        raise DatasetParseError(f"{path}: features/labels length does not match num_nodes")
    features = np.zeros((n, d), dtype=np.float64)
    for u, idxs in enumerate(doc["features"]):
        for j in idxs:
            if not 0 <= int(j) < d:
                raise DatasetParseError(f"{path}: feature index {j} out of range")
            features[u, int(j)] = 1.0
    return build_graph(
        doc["edges"], features, doc["labels"], num_classes=int(doc["num_classes"])
    )


def resolve_dataset(spec: str, data_dir="data") -> tuple[Graph, str]:
    """Load a dataset by registry name or by path.

    A registry name (cora/citeseer/pubmed) resolves to ``data_dir/<name>/``
    holding either ``<name>.content`` + ``<name>.cites`` or ``<name>.json``,
    and is validated against its descriptor. Otherwise ``spec`` is a path to
    a canonical JSON file or to a directory with content/cites files.
    """
    name = spec.lower()
    if name in DESCRIPTORS:
        root = Path(data_dir) / name
        content, cites = root / f"{name}.content", root / f"{name}.cites"
        canonical = root / f"{name}.json"
        if content.exists() and cites.exists():
            graph, stats = load_citation_text_with_stats(content, cites)
            validate_descriptor(graph, DESCRIPTORS[name], stats)
            return graph, name
        if canonical.exists():
            graph = load_canonical(canonical)
            validate_descriptor(graph, DESCRIPTORS[name])
            return graph, name
        raise FileNotFoundError(
            f"dataset {name!r}: place {content.name} and {cites.name} "
            f"(or {canonical.name}) under {root}/"
        )
    path = Path(spec)
    if path.is_dir():
        contents = sorted(path.glob("*.content"))
        cites = sorted(path.glob("*.cites"))
        if not contents or not cites:
            raise FileNotFoundError(f"{path}: no content/cites pair found")
        return load_citation_text(contents[0], cites[0]), path.stem
    if path.exists():
        return load_canonical(path), path.stem
    raise FileNotFoundError(f"dataset {spec!r} not found")
