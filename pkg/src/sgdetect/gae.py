"""Masked graph auto-encoder.

Two-layer GCN encoder with a row-softmax output, an MLP edge decoder on the
element-wise product of endpoint embeddings, and a loss that mixes masked
edge reconstruction (per view) with agreement between two masked views.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import tape as T

CKPT_FORMAT = "gae/1"
CLAMP = 1e-7
# graphs above this size get a sparse normalized adjacency during training
SPARSE_THRESHOLD = 200


class ShapeMismatch(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


def _edge_array(edges) -> np.ndarray:
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    return arr.reshape(-1, 2)


def _canonical_edges(pairs: np.ndarray) -> np.ndarray:
    """Undirected, loop-free, unique, sorted (i < j) edge array."""
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    out = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
    return out.reshape(-1, 2).astype(np.int64)


@dataclass
class DenseGraph:
    """Undirected attributed graph; edges stored as sorted (i < j) pairs."""

    features: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise ShapeMismatch("features must be an n x d matrix")
        self.edges = _canonical_edges(_edge_array(self.edges))
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise ShapeMismatch("edge endpoint out of range")

    @classmethod
    def from_adjacency(cls, adjacency, features) -> "DenseGraph":
        A = np.asarray(adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeMismatch("adjacency must be square")
        if A.shape[0] != np.asarray(features).shape[0]:
            raise ShapeMismatch("adjacency and features disagree on n")
        return cls(features, np.argwhere(A != 0))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        if len(self.edges):
            A[self.edges[:, 0], self.edges[:, 1]] = 1.0
            A[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return A


def disjoint_union(graphs: Sequence[DenseGraph]) -> tuple[DenseGraph, list[int]]:
    """Block-diagonal union; returns the graph and each member's row offset."""
    offsets, feats, edges = [], [], []
    at = 0
    for g in graphs:
        offsets.append(at)
        feats.append(g.features)
        edges.append(g.edges + at)
        at += g.n
    if not graphs:
        raise ValueError("empty graph list")
    return DenseGraph(np.vstack(feats), np.vstack(edges)), offsets


@dataclass(frozen=True)
class MaskedView:
    remaining_edges: frozenset
    masked_edges: frozenset
    seed: int

    def remaining_array(self) -> np.ndarray:
        return _edge_array(sorted(self.remaining_edges))

    def masked_array(self) -> np.ndarray:
        return _edge_array(sorted(self.masked_edges))


@dataclass
class Hyper:
    mask_p: float = 0.3
    alpha: float = 1.0
    lr: float = 0.01
    epochs: int = 200
    neg_ratio: float = 1.0
    seed: int = 0
    hidden: int = 64
    out: int = 32
    optimizer: str = "gd"
    standardize: bool = True

    def __post_init__(self) -> None:
        if not 0 <= self.mask_p < 1:
            raise ValueError(f"mask_p must be in [0, 1), got {self.mask_p}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_config(cls, section: dict) -> "Hyper":
        known = {k: section[k] for k in cls.__dataclass_fields__ if k in section}
        return cls(**known)


PARAM_NAMES = ("W0", "W1", "Wh", "bh", "wo", "bo")


@dataclass(eq=False)
class GaeParams:
    W0: np.ndarray
    W1: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    seed: int = 0
    hyper: dict = field(default_factory=dict)
    # column statistics applied to raw features before encoding
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None
    loss_history: list[float] = field(default_factory=list, compare=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W0.shape[0], self.W0.shape[1], self.W1.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def replace(self, **tensors) -> "GaeParams":
        cur = self.tensors()
        cur.update(tensors)
        return GaeParams(**cur, seed=self.seed, hyper=dict(self.hyper), shift=self.shift, scale=self.scale)

    def prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.shift is None:
            return X
        return (X - self.shift) / self.scale

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors().values())

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for k in PARAM_NAMES:
            h.update(np.ascontiguousarray(getattr(self, k), dtype=float).tobytes())
        return h.hexdigest()

    @classmethod
    def zeros(cls, d: int, hidden: int = 64, out: int = 32) -> "GaeParams":
        return cls(
            np.zeros((d, hidden)), np.zeros((hidden, out)), np.zeros((out, out)),
            np.zeros(out), np.zeros((out, 1)), np.zeros(1),
        )

    @classmethod
    def init(cls, d: int, hidden: int = 64, out: int = 32, seed: int = 0) -> "GaeParams":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(
            glorot(d, hidden), glorot(hidden, out), glorot(out, out),
            np.zeros(out), glorot(out, 1), np.zeros(1), seed=seed,
        )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def params_to_json(params: GaeParams) -> dict:
    return {
        "format": CKPT_FORMAT,
        "seed": params.seed,
        "hyper": params.hyper,
        "shapes": {k: list(getattr(params, k).shape) for k in PARAM_NAMES},
        "weights": {k: getattr(params, k).tolist() for k in PARAM_NAMES},
        "loss_history": list(params.loss_history),
        "shift": None if params.shift is None else params.shift.tolist(),
        "scale": None if params.scale is None else params.scale.tolist(),
    }


def params_from_json(obj: dict) -> GaeParams:
    if obj.get("format") != CKPT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {obj.get('format')!r}")
    tensors = {}
    for k in PARAM_NAMES:
        arr = np.asarray(obj["weights"][k], dtype=float)
        shape = tuple(obj["shapes"][k])
        tensors[k] = arr.reshape(shape)
    p = GaeParams(**tensors, seed=int(obj.get("seed", 0)), hyper=dict(obj.get("hyper", {})))
    p.loss_history = [float(x) for x in obj.get("loss_history", [])]
    if obj.get("shift") is not None:
        p.shift = np.asarray(obj["shift"], dtype=float)
        p.scale = np.asarray(obj["scale"], dtype=float)
    if not p.is_finite():
        raise ValueError("checkpoint holds non-finite weights")
    return p


def save_params(params: GaeParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_json(params)) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> GaeParams:
    return params_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def _norm_values(n: int, edges: np.ndarray):
    deg = np.ones(n)
    if len(edges):
        np.add.at(deg, edges[:, 0], 1.0)
        np.add.at(deg, edges[:, 1], 1.0)
    inv = 1.0 / np.sqrt(deg)
    return deg, inv


def normalized_operator(n: int, edges, sparse: bool | None = None):
    """D^-1/2 (A + I) D^-1/2 for an undirected edge list; sparse for big n."""
    edges = _canonical_edges(_edge_array(edges))
    _, inv = _norm_values(n, edges)
    if sparse is None:
        sparse = n > SPARSE_THRESHOLD
    if sparse:
        rows = np.concatenate([np.arange(n), edges[:, 0], edges[:, 1]])
        cols = np.concatenate([np.arange(n), edges[:, 1], edges[:, 0]])
        vals = inv[rows] * inv[cols]
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    M = np.diag(inv * inv)
    if len(edges):
        v = inv[edges[:, 0]] * inv[edges[:, 1]]
        M[edges[:, 0], edges[:, 1]] = v
        M[edges[:, 1], edges[:, 0]] = v
    return M


def normalize_adjacency(g: DenseGraph) -> np.ndarray:
    if g.n < 1:
        raise ValueError("graph has no nodes")
    return normalized_operator(g.n, g.edges, sparse=False)


def mask_edges(g: DenseGraph, p: float, seed: int) -> MaskedView:
    """Mask each undirected edge independently with probability ``p``."""
    if not 0 <= p < 1:
        raise ValueError(f"mask probability must be in [0, 1), got {p}")
    rng = np.random.default_rng(seed)
    hit = rng.random(len(g.edges)) < p
    pairs = [tuple(map(int, e)) for e in g.edges]
    masked = frozenset(e for e, h in zip(pairs, hit) if h)
    remaining = frozenset(e for e, h in zip(pairs, hit) if not h)
    return MaskedView(remaining, masked, seed)


def _check_encode_shapes(X, A_hat, params: GaeParams) -> None:
    n, d = X.shape
    if A_hat.shape != (n, n):
        raise ShapeMismatch(f"normalized adjacency {A_hat.shape} does not match {n} nodes")
    if params.W0.shape[0] != d:
        raise ShapeMismatch(f"features have width {d}, encoder expects {params.W0.shape[0]}")
    if params.W1.shape[0] != params.W0.shape[1]:
        raise ShapeMismatch("W0 and W1 disagree on the hidden width")


def _encode_var(X: np.ndarray, A_hat, W0: T.Var, W1: T.Var) -> T.Var:
    XW = T.matmul(T.Var(X), W0)
    H = T.relu(T.const_matmul(A_hat, XW))
    return T.softmax_rows(T.const_matmul(A_hat, T.matmul(H, W1)))


def encode(X, A_hat, params: GaeParams) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    _check_encode_shapes(X, A_hat, params)
    return _encode_var(X, A_hat, T.Var(params.W0), T.Var(params.W1)).value


def _decode_var(Zi: T.Var, Zj: T.Var, Wh, bh, wo, bo) -> T.Var:
    hidden = T.relu(T.add(T.matmul(T.mul(Zi, Zj), Wh), bh))
    return T.sigmoid(T.add(T.matmul(hidden, wo), bo))


def decode_edge(zi, zj, params: GaeParams) -> float:
    zi = np.asarray(zi, dtype=float).reshape(1, -1)
    zj = np.asarray(zj, dtype=float).reshape(1, -1)
    if zi.shape != zj.shape or zi.shape[1] != params.Wh.shape[0]:
        raise ShapeMismatch("embedding widths disagree")
    out = _decode_var(T.Var(zi), T.Var(zj), *(T.Var(params.tensors()[k]) for k in ("Wh", "bh", "wo", "bo")))
    return float(out.value[0, 0])


def _bce_var(probs: T.Var, positive: bool) -> T.Var:
    p = T.clip(probs, CLAMP, 1.0 - CLAMP)
    logs = T.log(p) if positive else T.log(T.one_minus(p))
    return T.scale(T.mean(logs), -1.0)


def _local_var(Z: T.Var, pos: np.ndarray, neg: np.ndarray, dec: Sequence[T.Var]) -> T.Var:
    terms = []
    for pairs, positive in ((pos, True), (neg, False)):
        if len(pairs) == 0:
            continue
        h = _decode_var(T.rows(Z, pairs[:, 0]), T.rows(Z, pairs[:, 1]), *dec)
        terms.append(_bce_var(h, positive))
    if not terms:
        return T.Var(0.0)
    out = terms[0]
    for t in terms[1:]:
        out = T.add(out, t)
    return out


def _global_var(Z1: T.Var, Z2: T.Var) -> T.Var:
    return T.mean(T.square(T.add(Z1, T.scale(Z2, -1.0))))


def local_loss(view: MaskedView, Z, params: GaeParams, neg_samples) -> float:
    """BCE over masked edges (positives) and sampled non-edges (negatives)."""
    Z = np.asarray(Z, dtype=float)
    dec = [T.Var(params.tensors()[k]) for k in ("Wh", "bh", "wo", "bo")]
    return float(_local_var(T.Var(Z), view.masked_array(), _edge_array(neg_samples), dec).value)


def global_loss(Z, Z_hat) -> float:
    Z, Z_hat = np.asarray(Z, dtype=float), np.asarray(Z_hat, dtype=float)
    if Z.shape != Z_hat.shape:
        raise ShapeMismatch(f"{Z.shape} vs {Z_hat.shape}")
    if Z.size == 0:
        return 0.0
    return float(np.mean((Z - Z_hat) ** 2))


def total_loss(local_losses: Sequence[float], global_value: float, alpha: float) -> float:
    """Mean of the per-view local losses plus ``alpha`` times the global loss."""
    return float(np.mean(local_losses)) + alpha * global_value


def sample_negatives(g: DenseGraph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform non-edges (i < j, with replacement)."""
    n = g.n
    if count <= 0 or n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    max_pairs = n * (n - 1) // 2
    if len(g.edges) >= max_pairs:
        return np.zeros((0, 2), dtype=np.int64)
    edge_keys = np.sort(g.edges[:, 0] * n + g.edges[:, 1]) if len(g.edges) else np.zeros(0, dtype=np.int64)
    out: list[np.ndarray] = []
    have = 0
    while have < count:
        draw = rng.integers(0, n, size=(2 * (count - have) + 8, 2))
        lo, hi = np.minimum(draw[:, 0], draw[:, 1]), np.maximum(draw[:, 0], draw[:, 1])
        ok = lo != hi
        keys = lo * n + hi
        if len(edge_keys):
            pos = np.searchsorted(edge_keys, keys).clip(max=len(edge_keys) - 1)
            ok &= edge_keys[pos] != keys
        good = np.stack([lo[ok], hi[ok]], axis=1)[: count - have]
        out.append(good)
        have += len(good)
    return np.vstack(out).astype(np.int64)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class EpochBatch:
    """Everything random about one epoch, fixed up front."""

    views: tuple[MaskedView, MaskedView]
    negatives: tuple[np.ndarray, np.ndarray]
    operators: tuple = ()


def feature_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and std; constant columns keep scale 1."""
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return shift, scale


def draw_batch(g: DenseGraph, hyper: Hyper, rng: np.random.Generator) -> EpochBatch:
    seeds = rng.integers(0, 2**62, size=3)
    views = (mask_edges(g, hyper.mask_p, int(seeds[0])), mask_edges(g, hyper.mask_p, int(seeds[1])))
    neg_rng = np.random.default_rng(int(seeds[2]))
    negs = tuple(
        sample_negatives(g, int(round(hyper.neg_ratio * len(v.masked_edges))), neg_rng) for v in views
    )
    ops = tuple(normalized_operator(g.n, v.remaining_array()) for v in views)
    return EpochBatch(views, negs, ops)


def loss_terms(params: GaeParams, g: DenseGraph, batch: EpochBatch, alpha: float):
    """Build the tape for one batch; returns (vars by name, losses by name)."""
    W = {k: T.Var(v) for k, v in params.tensors().items()}
    dec = [W[k] for k in ("Wh", "bh", "wo", "bo")]
    ops = batch.operators or tuple(normalized_operator(g.n, v.remaining_array()) for v in batch.views)
    X = params.prepare(g.features)
    Z = [_encode_var(X, op, W["W0"], W["W1"]) for op in ops]
    locals_ = [
        _local_var(z, v.masked_array(), neg, dec) for z, v, neg in zip(Z, batch.views, batch.negatives)
    ]
    local = T.scale(T.add(locals_[0], locals_[1]), 0.5)
    glob = _global_var(Z[0], Z[1])
    tot = T.add(local, T.scale(glob, alpha))
    return W, {"local": local, "global": glob, "total": tot}


def loss_gradients(params: GaeParams, g: DenseGraph, batch: EpochBatch, alpha: float, term: str = "total"):
    W, losses = loss_terms(params, g, batch, alpha)
    T.backward(losses[term])
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in W.items()}
    return float(losses[term].value), grads


class _Adam:
    def __init__(self, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, tensors: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k, w in tensors.items():
            g = grads[k]
            m = self.m[k] = self.b1 * self.m.get(k, 0.0) + (1 - self.b1) * g
            v = self.v[k] = self.b2 * self.v.get(k, 0.0) + (1 - self.b2) * g * g
            mh = m / (1 - self.b1**self.t)
            vh = v / (1 - self.b2**self.t)
            out[k] = w - self.lr * mh / (np.sqrt(vh) + self.eps)
        return out


def train(g: DenseGraph, hyper: Hyper | None = None, init: GaeParams | None = None) -> GaeParams:
    """Full-batch training; the returned params carry the per-epoch loss history."""
    hyper = hyper or Hyper()
    params = init or GaeParams.init(g.features.shape[1], hyper.hidden, hyper.out, hyper.seed)
    params.hyper = asdict(hyper)
    if hyper.standardize and init is None:
        params.shift, params.scale = feature_stats(g.features)
    stream = np.random.default_rng([hyper.seed, 1])
    adam = _Adam(hyper.lr) if hyper.optimizer == "adam" else None
    history: list[float] = []
    for epoch in range(hyper.epochs):
        batch = draw_batch(g, hyper, stream)
        value, grads = loss_gradients(params, g, batch, hyper.alpha)
        if not math.isfinite(value):
            raise DivergenceError(f"loss became {value} at epoch {epoch}")
        history.append(value)
        tensors = params.tensors()
        if adam is not None:
            new = adam.step(tensors, grads)
        else:
            new = {k: w - hyper.lr * grads[k] for k, w in tensors.items()}
        params = params.replace(**new)
        if not params.is_finite():
            raise DivergenceError(f"weights became non-finite at epoch {epoch}")
    params.loss_history = history
    return params


def evaluate_loss(params: GaeParams, g: DenseGraph, hyper: Hyper, batches: int = 8, seed: int = 12345) -> float:
    """Total loss averaged over a fixed set of freshly drawn batches.

    Single-epoch losses are noisy on small graphs (few masked edges), so
    before/after comparisons use the same held batches for both parameter sets.
    """
    rng = np.random.default_rng([seed, 2])
    values = [loss_gradients(params, g, draw_batch(g, hyper, rng), hyper.alpha)[0] for _ in range(batches)]
    return float(np.mean(values))


def embed(g: DenseGraph, params: GaeParams) -> np.ndarray:
    """Inference embedding over the full edge set."""
    return encode(params.prepare(g.features), normalized_operator(g.n, g.edges), params)


def pool(Z, out_dim: int | None = None) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ShapeMismatch("expected an n x F matrix")
    if Z.shape[0] == 0:
        return np.zeros(out_dim if out_dim is not None else Z.shape[1])
    return Z.mean(axis=0)
