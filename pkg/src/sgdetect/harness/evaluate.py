"""Static-analysis scoring against sidecars and the end-to-end detection pipeline."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .. import app_ir as ir
from .. import detector as det
from .. import gae
from ..config import load_config
from ..scenegraph import FeatureConfig, SceneGraph, build_scene_graph, encode_features
from .corpus import CorpusEntry, load_index

log = logging.getLogger(__name__)

REPORT_FORMAT = "report/1"
FEATURE_VIEWS = ("scene", "atg", "manifest")


@dataclass(frozen=True)
class PRF:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @classmethod
    def of(cls, predicted: set, truth: set) -> "PRF":
        return cls(len(predicted & truth), len(predicted - truth), len(truth - predicted))

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class LoadedApp:
    entry: CorpusEntry
    bundle: ir.AppBundle
    truth: dict
    scene_graph: SceneGraph | None = None
    analysis_seconds: float = 0.0


def load_corpus(corpus_dir: str | Path, groups: Iterable[str] | None = None, analyze: bool = True,
                max_depth: int = 10) -> list[LoadedApp]:
    """Parse every bundle in the index; unparseable bundles are skipped with a warning."""
    root = Path(corpus_dir)
    wanted = set(groups) if groups is not None else None
    out = []
    for e in load_index(root):
        if wanted is not None and e.group not in wanted:
            continue
        try:
            bundle = ir.parse_bundle((root / e.path).read_text(encoding="utf-8"))
        except (ir.AppIrError, OSError) as exc:
            log.warning("skipping %s: %s", e.app_id, exc)
            continue
        truth = json.loads((root / e.truth).read_text(encoding="utf-8"))
        app = LoadedApp(e, bundle, truth)
        if analyze:
            t0 = time.perf_counter()
            app.scene_graph = build_scene_graph(bundle, e.app_id, max_depth=max_depth)
            app.analysis_seconds = time.perf_counter() - t0
        out.append(app)
    return out


# ---------------------------------------------------------------------------
# Static evaluation
# ---------------------------------------------------------------------------


def _widget_keys(widgets: dict) -> set:
    return {(owner, w["type"], w["id"]) for owner, ws in widgets.items() for w in ws}


def score_app(app: LoadedApp) -> dict:
    sg = app.scene_graph
    t = app.truth
    got_edges = set(sg.atg.edges)
    within = {tuple(e) for e in t["edges"]}
    planted = within | {tuple(e) for e in t["over_depth_edges"]}
    got_tokens = set().union(*(a.imprint_tokens for a in sg.attributes.values())) if sg.attributes else set()
    want_tokens = set(t["all_tokens"])
    got_widgets = {(o, w.widget_type, w.widget_id) for o, a in sg.attributes.items() for w in a.native_widgets}
    return {
        "app_id": app.entry.app_id,
        "transitions": PRF.of(got_edges, planted),
        "transitions_within_depth": PRF.of(got_edges, within),
        "tokens": PRF.of(got_tokens, want_tokens),
        "widgets": PRF.of(got_widgets, _widget_keys(t["widgets"])),
        "missed_edges": sorted(planted - got_edges),
        "extra_edges": sorted(got_edges - planted),
        "leaked_tokens": sorted(got_tokens - want_tokens),
        "seconds": app.analysis_seconds,
    }


@dataclass
class EvalReport:
    transitions: PRF | None = None
    transitions_within_depth: PRF | None = None
    tokens: PRF | None = None
    widgets: PRF | None = None
    per_app: list[dict] = field(default_factory=list)
    classification: dict | None = None
    corpus_stats: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict, compare=False)
    config: dict = field(default_factory=dict)

    def check(self) -> None:
        """Internal arithmetic consistency; raises AssertionError on mismatch."""
        for prf in (self.transitions, self.tokens, self.widgets):
            if prf is None:
                continue
            p, r = prf.precision, prf.recall
            if p + r and abs(prf.f1 - 2 * p * r / (p + r)) > 1e-12:
                raise AssertionError("F1 inconsistent with precision/recall")
        c = self.classification
        if c:
            cm = np.asarray(c["confusion"])
            if list(cm.sum(axis=1)) != [c["support"][lab] for lab in det.LABELS]:
                raise AssertionError("confusion rows do not match class supports")
            acc = np.trace(cm) / cm.sum() if cm.sum() else 0.0
            if abs(acc - c["accuracy"]) > 1e-12:
                raise AssertionError("accuracy inconsistent with confusion matrix")

    def to_json(self, timing: bool = True) -> dict:
        out: dict = {"format": REPORT_FORMAT}
        for name in ("transitions", "transitions_within_depth", "tokens", "widgets"):
            prf = getattr(self, name)
            if prf is not None:
                out[name] = prf.to_json()
        if self.per_app:
            out["per_app"] = [
                {k: (v.to_json() if isinstance(v, PRF) else v) for k, v in row.items() if timing or k != "seconds"}
                for row in self.per_app
            ]
        if self.classification is not None:
            out["classification"] = self.classification
        if self.corpus_stats:
            out["corpus_stats"] = self.corpus_stats
        if self.config:
            out["config"] = self.config
        if timing:
            out["timing"] = self.timing
        return out


def eval_static(apps: list[LoadedApp]) -> EvalReport:
    t0 = time.perf_counter()
    rows = [score_app(a) for a in apps]
    zero = PRF(0, 0, 0)
    rep = EvalReport(
        transitions=sum((r["transitions"] for r in rows), zero),
        transitions_within_depth=sum((r["transitions_within_depth"] for r in rows), zero),
        tokens=sum((r["tokens"] for r in rows), zero),
        widgets=sum((r["widgets"] for r in rows), zero),
        per_app=rows,
    )
    rep.timing = {
        "analysis_total": sum(a.analysis_seconds for a in apps),
        "analysis_max": max((a.analysis_seconds for a in apps), default=0.0),
        "scoring": time.perf_counter() - t0,
    }
    rep.check()
    return rep


def corpus_stats(apps: list[LoadedApp]) -> dict:
    by: dict[str, list] = {}
    for a in apps:
        label = a.entry.label or "unlabeled"
        s = a.scene_graph.stats()
        by.setdefault(label, []).append((s["transition_pairs"], s["widgets"], s["tokens"], s["nodes"]))
    return {
        label: {
            "apps": len(v),
            "mean_transition_pairs": float(np.mean([x[0] for x in v])),
            "mean_widgets": float(np.mean([x[1] for x in v])),
            "mean_tokens": float(np.mean([x[2] for x in v])),
            "mean_nodes": float(np.mean([x[3] for x in v])),
        }
        for label, v in sorted(by.items())
    }


# ---------------------------------------------------------------------------
# Detection pipeline
# ---------------------------------------------------------------------------


def split_ids(ids: list[str], seed: int, fractions=(0.7, 0.2, 0.1)) -> tuple[list[str], list[str], list[str]]:
    """Seeded shuffle, then cut into train/validation/test."""
    order = sorted(ids)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n = len(order)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def scene_dense(sg: SceneGraph, fcfg: FeatureConfig, view: str) -> gae.DenseGraph:
    fm = encode_features(sg, fcfg, view)
    index = {n: i for i, n in enumerate(fm.node_order)}
    edges = np.array([(index[a], index[b]) for a, b in sg.atg.edges], dtype=np.int64).reshape(-1, 2)
    return gae.DenseGraph(fm.values, edges)


def train_scene_encoder(graphs: list[gae.DenseGraph], hyper: gae.Hyper) -> gae.GaeParams:
    """One encoder trained over the disjoint union of the given scene graphs."""
    union, _ = gae.disjoint_union(graphs)
    return gae.train(union, hyper)


def app_vector(app: LoadedApp, model_view: str, fcfg: FeatureConfig, f_theta: gae.GaeParams | None) -> np.ndarray:
    return bundle_vector(app.bundle, app.scene_graph, model_view, fcfg, f_theta)


def bundle_vector(bundle: ir.AppBundle, sg: SceneGraph | None, model_view: str, fcfg: FeatureConfig,
                  f_theta: gae.GaeParams | None) -> np.ndarray:
    """App-level feature: pooled scene-encoder output, or the manifest vector."""
    if model_view == "manifest":
        return det.manifest_vector(bundle)
    g = scene_dense(sg, fcfg, model_view)
    if g.n == 0:
        return np.zeros(f_theta.W1.shape[1])
    return gae.pool(gae.embed(g, f_theta))


def make_record(app: LoadedApp, vector: np.ndarray, label: str | None) -> det.AppRecord:
    m = app.bundle.manifest
    return det.AppRecord(app.entry.app_id, m.package_name, m.app_name, m.cert_digest, vector, label)


def fit_model(train_apps: list[LoadedApp], labels: dict[str, str], cfg: dict, timing: dict | None = None) -> det.Model:
    timing = timing if timing is not None else {}
    view = cfg["pipeline"]["features"]
    if view not in FEATURE_VIEWS:
        raise ValueError(f"unknown feature view {view!r}")
    fcfg = FeatureConfig()
    hyper = gae.Hyper.from_config(cfg["gae"])
    t0 = time.perf_counter()
    f_theta = None
    if view != "manifest":
        graphs = [scene_dense(a.scene_graph, fcfg, view) for a in train_apps]
        f_theta = train_scene_encoder(graphs, hyper)
    timing["scene_encoder"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    records = [make_record(a, app_vector(a, view, fcfg, f_theta), labels[a.entry.app_id]) for a in train_apps]
    timing["app_vectors"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    H = det.build_relation_graph(records)
    f_psi = det.self_train_encoder(H, hyper)
    timing["app_encoder"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    clf = det.train_classifier(H, f_psi, hyper=det.ClassifierHyper.from_config(cfg["classifier"]))
    timing["classifier"] = time.perf_counter() - t0
    return det.Model(f_theta, f_psi, clf, fcfg, view, records)


def predict(model: det.Model, apps: list[LoadedApp]) -> dict[str, det.Prediction]:
    records = [
        make_record(a, app_vector(a, model.feature_view, model.feature_config, model.f_theta), None) for a in apps
    ]
    return det.classify(model.train_records, records, model.f_psi, model.classifier)


def confusion(truth: list[str], pred: list[str]) -> np.ndarray:
    cm = np.zeros((len(det.LABELS), len(det.LABELS)), dtype=int)
    for t, p in zip(truth, pred):
        cm[det.LABELS.index(t), det.LABELS.index(p)] += 1
    return cm


def classification_section(truth: dict[str, str], preds: dict[str, det.Prediction], ids: list[str]) -> dict:
    t = [truth[i] for i in ids]
    p = [preds[i].label for i in ids]
    cm = confusion(t, p)
    support = {lab: int(cm[k].sum()) for k, lab in enumerate(det.LABELS)}
    per_class = {
        lab: (float(cm[k, k] / cm[k].sum()) if cm[k].sum() else None) for k, lab in enumerate(det.LABELS)
    }
    return {
        "labels": list(det.LABELS),
        "accuracy": float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0,
        "per_class_accuracy": per_class,
        "confusion": cm.tolist(),
        "support": support,
    }


@dataclass
class PipelineResult:
    report: EvalReport
    model: det.Model
    split: dict[str, list[str]]
    predictions: dict[str, det.Prediction]


def run_pipeline(apps: list[LoadedApp], cfg: dict | None = None) -> PipelineResult:
    """Split, train both encoders and the classifier, score the held-out apps.

    Held-out accuracy is computed over validation and test apps together;
    the test-only figure is reported alongside it.
    """
    cfg = cfg or load_config()
    labeled = [a for a in apps if a.entry.label is not None]
    by_id = {a.entry.app_id: a for a in labeled}
    seed = int(cfg["pipeline"]["seed"])
    train_ids, val_ids, test_ids = split_ids(list(by_id), seed)
    truth = {i: by_id[i].entry.label for i in by_id}
    train_labels = {i: truth[i] for i in train_ids}
    if cfg["pipeline"].get("shuffle_labels"):
        rng = np.random.default_rng([seed, 7])
        shuffled = [truth[i] for i in train_ids]
        rng.shuffle(shuffled)
        train_labels = dict(zip(train_ids, shuffled))
    timing: dict = {}
    model = fit_model([by_id[i] for i in train_ids], train_labels, cfg, timing)
    t0 = time.perf_counter()
    held = val_ids + test_ids
    preds = predict(model, [by_id[i] for i in held])
    timing["classify"] = time.perf_counter() - t0
    section = classification_section(truth, preds, held)
    section["test_only"] = classification_section(truth, preds, test_ids)
    section["split"] = {"train": len(train_ids), "validation": len(val_ids), "test": len(test_ids)}
    section["feature_view"] = model.feature_view
    section["shuffled_labels"] = bool(cfg["pipeline"].get("shuffle_labels"))
    section["scene_encoder_loss"] = _loss_summary(model.f_theta)
    section["app_encoder_loss"] = _loss_summary(model.f_psi)
    report = EvalReport(classification=section, timing=timing,
                        config={k: cfg[k] for k in ("gae", "classifier", "pipeline")})
    report.check()
    return PipelineResult(report, model, {"train": train_ids, "validation": val_ids, "test": test_ids}, preds)


def _loss_summary(params: gae.GaeParams | None) -> dict | None:
    if params is None or not params.loss_history:
        return None
    h = params.loss_history
    return {"initial": h[0], "final": h[-1], "epochs": len(h)}
