"""Two-layer graph convolutional network: forward pass, training, feature gradients.

The model is softmax(A_hat ReLU(A_hat X W0) W1) with no biases. Training
follows the standard semi-supervised recipe for this architecture: hidden
width 16, Adam at lr 0.01, weight decay 5e-4 on the first layer only,
dropout 0.5 on layer inputs, 200 epochs, Glorot-uniform initialization.
All gradients are computed analytically; no autodiff framework is used.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ValidationError
from .graphs import Graph, NormalizedAdjacency, normalize

CHECKPOINT_MAGIC = b"GCNCKPT1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class GcnParams:
    """Trained weight matrices. w0: (d, h), w1: (h, num_classes)."""

    w0: np.ndarray
    w1: np.ndarray

    def __post_init__(self):
        if self.w0.ndim != 2 or self.w1.ndim != 2 or self.w0.shape[1] != self.w1.shape[0]:
            raise ValidationError(
                f"inconsistent weight shapes {self.w0.shape} x {self.w1.shape}"
            )
        if not (np.isfinite(self.w0).all() and np.isfinite(self.w1).all()):
            raise ValidationError("weights must be finite")
        self.w0.setflags(write=False)
        self.w1.setflags(write=False)

    @property
    def num_features(self) -> int:
        return self.w0.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w0.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters plus the node splits driving the loss."""

    train_mask: np.ndarray
    val_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    test_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    hidden_dim: int = 16
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout_rate: float = 0.5
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "train_mask", np.asarray(self.train_mask, dtype=np.int64))
        object.__setattr__(self, "val_mask", np.asarray(self.val_mask, dtype=np.int64))
        object.__setattr__(self, "test_mask", np.asarray(self.test_mask, dtype=np.int64))
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must be in [0, 1)")
        masks = (set(self.train_mask.tolist()), set(self.val_mask.tolist()),
                 set(self.test_mask.tolist()))
        if masks[0] & masks[1] or masks[0] & masks[2] or masks[1] & masks[2]:
            raise ConfigurationError("train/val/test masks must be disjoint")


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    # max-subtraction keeps exp() in range even for large feature counts
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _as_operand(features) -> "np.ndarray | sp.csr_matrix":
    if sp.issparse(features):
        return features.tocsr()
    return np.asarray(features, dtype=np.float64)


def _hidden(adj_matrix, features, w0):
    """Pre-activation and activation of the first layer."""
    s = adj_matrix @ np.asarray(features @ w0)
    return s, _relu(s)


def _logits(adj_matrix, features, w0, w1):
    _, h = _hidden(adj_matrix, features, w0)
    return adj_matrix @ (h @ w1)


def forward(
    adj: NormalizedAdjacency, features, params: GcnParams
) -> np.ndarray:
    """Deterministic forward pass returning the (N, num_classes) probability matrix.

    ``features`` may be a dense ndarray or a scipy sparse matrix with one row
    per node of ``adj``. Rows of the result sum to 1.
    """
    features = _as_operand(features)
    n = adj.matrix.shape[0]
    if features.shape[0] != n:
        raise ValidationError(
            f"features have {features.shape[0]} rows but adjacency has {n} nodes"
        )
    if features.shape[1] != params.num_features:
        raise ValidationError(
            f"feature dim {features.shape[1]} does not match weights ({params.num_features})"
        )
    return _softmax_rows(_logits(adj.matrix, features, params.w0, params.w1))


def prob_row(adj_matrix, features, params: GcnParams, node: int) -> np.ndarray:
    """Probability row for a single node without materializing all logits rows."""
    _, h = _hidden(adj_matrix, features, params.w0)
    row = np.asarray(adj_matrix.getrow(node) @ h) @ params.w1
    return _softmax_rows(row.reshape(1, -1))[0]


def predict(adj: NormalizedAdjacency, features, params: GcnParams, node: int) -> int:
    """Argmax class of the node's probability row; ties go to the lowest class index."""
    n = adj.matrix.shape[0]
    if not 0 <= node < n:
        raise IndexError(f"node {node} out of range for {n} nodes")
    z = forward(adj, features, params)
    return int(np.argmax(z[node]))


def accuracy(
    adj: NormalizedAdjacency, features, params: GcnParams,
    labels: np.ndarray, mask: np.ndarray,
) -> float:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return float("nan")
    z = forward(adj, features, params)
    pred = np.argmax(z[mask], axis=1)
    return float(np.mean(pred == labels[mask]))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _masked_ce(log_probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    return float(-log_probs[mask, labels[mask]].mean())


def _train_step_grads(
    a_mat: sp.csr_matrix,
    x_drop,
    labels: np.ndarray,
    train_idx: np.ndarray,
    onehot: np.ndarray,
    w0: np.ndarray,
    w1: np.ndarray,
    weight_decay: float,
    h_mask: np.ndarray | None,
):
    """Masked cross-entropy + first-layer L2, with analytic weight gradients.

    ``x_drop`` is the (possibly dropout-scaled) input; ``h_mask`` the inverted
    dropout mask for the hidden layer, or None when dropout is off.
    """
    s = a_mat @ np.asarray(x_drop @ w0)
    h = _relu(s)
    hd = h * h_mask if h_mask is not None else h
    logits = a_mat @ (hd @ w1)
    z = _softmax_rows(logits)
    loss = _masked_ce(_log_softmax_rows(logits), labels, train_idx)
    loss += 0.5 * weight_decay * float((w0 * w0).sum())

    g_logits = np.zeros_like(z)
    g_logits[train_idx] = (z[train_idx] - onehot) / train_idx.shape[0]
    ag = a_mat @ g_logits
    gw1 = hd.T @ ag
    gh = ag @ w1.T
    if h_mask is not None:
        gh *= h_mask
    gs = gh * (s > 0.0)
    ags = a_mat @ gs
    gw0 = np.asarray(x_drop.T @ ags) + weight_decay * w0
    return loss, gw0, gw1


def train(graph: Graph, cfg: TrainConfig) -> GcnParams:
    """Train on the masked cross-entropy objective; reproducible bit-for-bit per seed.

    Runs the fixed number of epochs and returns the parameters from the epoch
    with the lowest validation loss (final parameters when no validation mask
    is given). ``epochs=0`` returns the untouched initialization.
    """
    if cfg.train_mask.size == 0:
        raise ConfigurationError("training requires a non-empty train mask")
    rng = np.random.default_rng(cfg.seed)
    d, c = graph.num_features, graph.num_classes
    w0 = _glorot(rng, d, cfg.hidden_dim)
    w1 = _glorot(rng, cfg.hidden_dim, c)

    adj = normalize(graph)
    a_mat = adj.matrix
    x = sp.csr_matrix(graph.features)
    labels = graph.labels
    train_idx = cfg.train_mask
    onehot = np.zeros((train_idx.shape[0], c), dtype=np.float64)
    onehot[np.arange(train_idx.shape[0]), labels[train_idx]] = 1.0

    m0 = np.zeros_like(w0)
    v0 = np.zeros_like(w0)
    m1 = np.zeros_like(w1)
    v1 = np.zeros_like(w1)
    keep = 1.0 - cfg.dropout_rate

    best_val = np.inf
    best = (w0.copy(), w1.copy())
    have_val = cfg.val_mask.size > 0

    for t in range(1, cfg.epochs + 1):
        if cfg.dropout_rate > 0.0:
            x_keep = rng.random(x.nnz) < keep
            x_drop = sp.csr_matrix(
                (x.data * x_keep / keep, x.indices, x.indptr), shape=x.shape
            )
            h_mask = (rng.random((graph.num_nodes, cfg.hidden_dim)) < keep) / keep
        else:
            x_drop, h_mask = x, None

        _, gw0, gw1 = _train_step_grads(
            a_mat, x_drop, labels, train_idx, onehot, w0, w1, cfg.weight_decay, h_mask
        )

        for w, g, m, v in ((w0, gw0, m0, v0), (w1, gw1, m1, v1)):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            m_hat = m / (1.0 - ADAM_BETA1 ** t)
            v_hat = v / (1.0 - ADAM_BETA2 ** t)
            w -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        if have_val:
            logits = _logits(a_mat, x, w0, w1)
            val_loss = _masked_ce(_log_softmax_rows(logits), labels, cfg.val_mask)
            if val_loss < best_val:
                best_val = val_loss
                best = (w0.copy(), w1.copy())

    if not have_val:
        best = (w0, w1)
    return GcnParams(w0=best[0], w1=best[1])


def objective_grad_wrt_fake(
    adj: NormalizedAdjacency,
    features,
    params: GcnParams,
    v: int,
    target_class: int,
    fake_rows,
) -> np.ndarray:
    """Gradient of the targeted-misclassification score for node ``v`` w.r.t. fake rows.

    The score is prob(v, target_class) - prob(v, c_v) with c_v the argmax
    class of v's row under the supplied (victim-linked) adjacency. Binary
    features are treated as continuous. Returns a (len(fake_rows), d) matrix;
    gradients for all other rows are discarded. When v is already predicted
    as the target class the score is identically zero on that region, so the
    returned matrix is zero.
    """
    features = _as_operand(features)
    return _objective_grad_core(
        adj.matrix, features, params.w0, params.w1, v, target_class, fake_rows
    )


def _objective_grad_core(a_mat, features, w0, w1, v, target_class, fake_rows):
    n = a_mat.shape[0]
    if not 0 <= v < n:
        raise IndexError(f"node {v} out of range for {n} nodes")
    fake_rows = np.asarray(fake_rows, dtype=np.int64)
    d = w0.shape[0]

    s, h = _hidden(a_mat, features, w0)
    row = (np.asarray(a_mat.getrow(v) @ h) @ w1).reshape(1, -1)
    p = _softmax_rows(row)[0]
    c_v = int(np.argmax(p))
    if c_v == target_class:
        return np.zeros((fake_rows.shape[0], d), dtype=np.float64)

    # dF/dlogits_v for F = p[target] - p[c_v], through the softmax row
    g_row = p * (p[c_v] - p[target_class])
    g_row[target_class] += p[target_class]
    g_row[c_v] -= p[c_v]

    # logits gradient has a single nonzero row v; propagate two layers back
    col = np.asarray(a_mat.getrow(v).todense()).ravel()  # symmetric: row v = column v
    gh_dir = w1 @ g_row                                   # (h,)
    gs = (col[:, None] * gh_dir[None, :]) * (s > 0.0)
    return np.asarray((a_mat[fake_rows] @ gs) @ w0.T)


def save_checkpoint(params: GcnParams, path) -> None:
    """Flat binary checkpoint: magic, (d, h, C) little-endian int64, w0 then w1 row-major float64."""
    d, h, c = params.num_features, params.hidden_dim, params.num_classes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<3q", d, h, c))
        fh.write(np.ascontiguousarray(params.w0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.w1, dtype="<f8").tobytes())


def load_checkpoint(path) -> GcnParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = len(CHECKPOINT_MAGIC) + 24
    if len(blob) < header or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a GCN checkpoint")
    d, h, c = struct.unpack("<3q", blob[len(CHECKPOINT_MAGIC):header])
    expected = header + 8 * (d * h + h * c)
    if d <= 0 or h <= 0 or c <= 0 or len(blob) != expected:
        raise ValidationError(f"{path}: checkpoint size does not match dims {(d, h, c)}")
    w0 = np.frombuffer(blob, dtype="<f8", count=d * h, offset=header)
    w1 = np.frombuffer(blob, dtype="<f8", count=h * c, offset=header + 8 * d * h)
    return GcnParams(
        w0=w0.reshape(d, h).astype(np.float64),
        w1=w1.reshape(h, c).astype(np.float64),
    )
