"""Two-stage app detector.

Apps become nodes of a relation graph whose edges join apps sharing a
package name, app name or signing certificate. An encoder is self-trained on
that graph without labels, frozen, and a multinomial logistic regression is
fitted on its embeddings of the labeled apps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import gae
from .app_ir import AppBundle
from .scenegraph import FeatureConfig, fnv1a64

LABELS = ("GamblingGame", "Porn", "InvestmentScam", "Miscellaneous", "Legitimate")
MODEL_FORMAT = "sgdetect-model/1"


class DuplicateAppId(ValueError):
    pass


class IdCollision(ValueError):
    pass


class EmptyClass(ValueError):
    pass


@dataclass
class AppRecord:
    app_id: str
    package_name: str
    app_name: str
    cert_digest: str
    scene_vector: np.ndarray
    label: str | None = None

    def __post_init__(self) -> None:
        self.scene_vector = np.asarray(self.scene_vector, dtype=float)
        if not np.all(np.isfinite(self.scene_vector)):
            raise ValueError(f"{self.app_id}: scene vector is not finite")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"{self.app_id}: unknown label {self.label!r}")

    @property
    def strong_features(self) -> tuple[str, str, str]:
        return (self.package_name, self.app_name, self.cert_digest)

    def to_json(self) -> dict:
        return {
            "app_id": self.app_id,
            "package_name": self.package_name,
            "app_name": self.app_name,
            "cert_digest": self.cert_digest,
            "scene_vector": self.scene_vector.tolist(),
            "label": self.label,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AppRecord":
        return cls(
            obj["app_id"], obj["package_name"], obj.get("app_name", ""), obj.get("cert_digest", ""),
            np.asarray(obj["scene_vector"], dtype=float), obj.get("label"),
        )


@dataclass
class RelationGraph:
    nodes: list[AppRecord]
    edges: list[tuple[int, int]] = field(default_factory=list)

    @property
    def X(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, 0))
        return np.vstack([r.scene_vector for r in self.nodes])

    def index(self) -> dict[str, int]:
        return {r.app_id: i for i, r in enumerate(self.nodes)}

    def dense(self) -> gae.DenseGraph:
        return gae.DenseGraph(self.X, np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))


def build_relation_graph(apps: Sequence[AppRecord]) -> RelationGraph:
    """Join apps sharing any non-empty strong feature."""
    seen: set[str] = set()
    for r in apps:
        if r.app_id in seen:
            raise DuplicateAppId(r.app_id)
        seen.add(r.app_id)
    # bucket by (field, value) to avoid the quadratic scan
    buckets: dict[tuple[int, str], list[int]] = {}
    for i, r in enumerate(apps):
        for k, value in enumerate(r.strong_features):
            if value:
                buckets.setdefault((k, value), []).append(i)
    edges: set[tuple[int, int]] = set()
    for members in buckets.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                edges.add((members[a], members[b]))
    return RelationGraph(list(apps), sorted(edges))


def self_train_encoder(H: RelationGraph, hyper: gae.Hyper | None = None) -> gae.GaeParams:
    """Self-supervised encoder over the relation graph; labels are never read."""
    if len(H.nodes) < 2:
        raise ValueError("relation graph needs at least two apps")
    return gae.train(H.dense(), hyper)


def embed_relation_graph(H: RelationGraph, f_psi: gae.GaeParams) -> np.ndarray:
    return gae.embed(H.dense(), f_psi)


@dataclass(eq=False)
class ClassifierParams:
    weights: np.ndarray  # F x 5
    bias: np.ndarray  # 5
    trained: bool = False
    # input standardization fitted on the training embeddings
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None
    loss_history: list[float] = field(default_factory=list)

    def prepare(self, Z: np.ndarray) -> np.ndarray:
        if self.shift is None:
            return Z
        return (Z - self.shift) / self.scale

    def scores(self, Z: np.ndarray) -> np.ndarray:
        return _softmax(self.prepare(Z) @ self.weights + self.bias)

    def to_json(self) -> dict:
        return {
            "labels": list(LABELS),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "trained": self.trained,
            "shift": None if self.shift is None else self.shift.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassifierParams":
        if list(obj.get("labels", LABELS)) != list(LABELS):
            raise ValueError("classifier label order does not match")
        shift = obj.get("shift")
        return cls(
            np.asarray(obj["weights"], dtype=float), np.asarray(obj["bias"], dtype=float), bool(obj["trained"]),
            None if shift is None else np.asarray(shift, dtype=float),
            None if shift is None else np.asarray(obj["scale"], dtype=float),
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ClassifierHyper:
    lr: float = 0.1
    epochs: int = 500
    l2: float = 1e-4
    seed: int = 0
    standardize: bool = True

    @classmethod
    def from_config(cls, section: dict) -> "ClassifierHyper":
        return cls(**{k: section[k] for k in cls.__dataclass_fields__ if k in section})


def fit_logistic(Z: np.ndarray, y: np.ndarray, hyper: ClassifierHyper | None = None) -> ClassifierParams:
    """Multinomial logistic regression, full-batch gradient descent on CE + L2."""
    hyper = hyper or ClassifierHyper()
    n, f = Z.shape
    k = len(LABELS)
    rng = np.random.default_rng(hyper.seed)
    params = ClassifierParams(rng.normal(scale=0.01, size=(f, k)), np.zeros(k))
    if hyper.standardize:
        params.shift = Z.mean(axis=0)
        scale = Z.std(axis=0)
        scale[scale < 1e-12] = 1.0
        params.scale = scale
    Zp = params.prepare(Z)
    Y = np.zeros((n, k))
    Y[np.arange(n), y] = 1.0
    W, b = params.weights, params.bias
    history = []
    for _ in range(hyper.epochs):
        P = _softmax(Zp @ W + b)
        loss = -np.mean(np.log(np.clip(P[np.arange(n), y], 1e-12, None))) + 0.5 * hyper.l2 * np.sum(W * W)
        history.append(float(loss))
        G = (P - Y) / n
        W = W - hyper.lr * (Zp.T @ G + hyper.l2 * W)
        b = b - hyper.lr * G.sum(axis=0)
    params.weights, params.bias, params.trained = W, b, True
    params.loss_history = history
    return params


def train_classifier(
    H: RelationGraph,
    f_psi: gae.GaeParams,
    labeled: Iterable[str] | None = None,
    hyper: ClassifierHyper | None = None,
) -> ClassifierParams:
    """Fit the classifier on frozen embeddings of the labeled apps of ``H``."""
    idx = H.index()
    ids = [r.app_id for r in H.nodes if r.label is not None] if labeled is None else list(labeled)
    missing = [a for a in ids if a not in idx]
    if missing:
        raise KeyError(f"unknown app ids: {missing[:3]}")
    rows = [idx[a] for a in ids if H.nodes[idx[a]].label is not None]
    if not rows:
        raise EmptyClass("no labeled apps")
    present = {r.label for r in H.nodes if r.label is not None}
    have = {H.nodes[i].label for i in rows}
    if present - have:
        raise EmptyClass(f"no training example for {sorted(present - have)}")
    Z = embed_relation_graph(H, f_psi)
    y = np.array([LABELS.index(H.nodes[i].label) for i in rows])
    return fit_logistic(Z[rows], y, hyper)


@dataclass(frozen=True)
class Prediction:
    label: str
    scores: dict[str, float]


def classify(
    train_apps: Sequence[AppRecord],
    test_apps: Sequence[AppRecord],
    f_psi: gae.GaeParams,
    clf: ClassifierParams,
) -> dict[str, Prediction]:
    """Embed the union graph with the frozen encoder and score the test apps."""
    train_ids = {r.app_id for r in train_apps}
    clash = sorted(train_ids & {r.app_id for r in test_apps})
    if clash:
        raise IdCollision(f"test ids also in training set: {clash[:3]}")
    H = build_relation_graph(list(train_apps) + list(test_apps))
    Z = embed_relation_graph(H, f_psi)
    start = len(train_apps)
    P = clf.scores(Z[start:])
    out = {}
    for r, row in zip(test_apps, P):
        out[r.app_id] = Prediction(LABELS[int(np.argmax(row))], {lab: float(s) for lab, s in zip(LABELS, row)})
    return out


def manifest_vector(bundle: AppBundle, dim: int = 32) -> np.ndarray:
    """Manifest-only app features: hashed permissions plus component count."""
    v = np.zeros(dim)
    for perm in bundle.manifest.permissions:
        v[fnv1a64(perm) % (dim - 1)] += 1.0
    v[dim - 1] = np.log1p(len(bundle.manifest.declared_activities))
    return v


# ---------------------------------------------------------------------------
# Model bundle directory
# ---------------------------------------------------------------------------


@dataclass
class Model:
    f_theta: gae.GaeParams | None
    f_psi: gae.GaeParams
    classifier: ClassifierParams
    feature_config: FeatureConfig
    feature_view: str = "scene"
    train_records: list[AppRecord] = field(default_factory=list)


def save_model(model: Model, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "FORMAT").write_text(MODEL_FORMAT + "\n", encoding="utf-8")
    if model.f_theta is not None:
        gae.save_params(model.f_theta, d / "f_theta.json")
    gae.save_params(model.f_psi, d / "f_psi.json")
    (d / "classifier.json").write_text(json.dumps(model.classifier.to_json()) + "\n", encoding="utf-8")
    features = {"view": model.feature_view, **model.feature_config.to_dict()}
    (d / "features.json").write_text(json.dumps(features, sort_keys=True) + "\n", encoding="utf-8")
    records = [r.to_json() for r in model.train_records]
    (d / "train_apps.json").write_text(json.dumps(records) + "\n", encoding="utf-8")


def load_model(directory: str | Path) -> Model:
    d = Path(directory)
    fmt_file = d / "FORMAT"
    if not fmt_file.exists():
        raise ValueError(f"{d} is not a model directory (no FORMAT file)")
    fmt = fmt_file.read_text(encoding="utf-8").strip()
    if fmt != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {fmt!r}")
    f_theta = gae.load_params(d / "f_theta.json") if (d / "f_theta.json").exists() else None
    clf = ClassifierParams.from_json(json.loads((d / "classifier.json").read_text(encoding="utf-8")))
    feats = json.loads((d / "features.json").read_text(encoding="utf-8"))
    view = feats.pop("view", "scene")
    records = [AppRecord.from_json(o) for o in json.loads((d / "train_apps.json").read_text(encoding="utf-8"))]
    return Model(f_theta, gae.load_params(d / "f_psi.json"), clf, FeatureConfig(**feats), view, records)
