"""Bundle-level operations shared by the HTTP service and the CLI."""

from __future__ import annotations

from typing import Sequence

from . import app_ir as ir
from . import detector as det
from . import gae
from .scenegraph import FeatureConfig, SceneGraph, build_scene_graph, encode_features, to_json_obj
from .harness.evaluate import bundle_vector, scene_dense


def check_source(source: str) -> list[ir.Violation]:
    """Every problem found in App-IR text; empty means valid."""
    try:
        bundle = ir.parse_bundle(source, check=False)
    except ir.AppIrSyntaxError as exc:
        return [ir.Violation("syntax", str(exc), exc.line)]
    except ir.AppIrError as exc:
        return [ir.Violation("invalid", str(exc), getattr(exc, "line", 0))]
    return ir.validate(bundle)


def analyze(source: str, app_id: str = "", max_depth: int = 10) -> tuple[ir.AppBundle, SceneGraph]:
    bundle = ir.parse_bundle(source)
    return bundle, build_scene_graph(bundle, app_id, max_depth=max_depth)


def scene_graph_json(source: str, app_id: str = "", max_depth: int = 10) -> dict:
    return to_json_obj(analyze(source, app_id, max_depth)[1])


def features_json(source: str, app_id: str = "", max_depth: int = 10, view: str = "scene",
                  model: det.Model | None = None, fcfg: FeatureConfig | None = None) -> dict:
    _, sg = analyze(source, app_id, max_depth)
    fcfg = model.feature_config if model is not None else (fcfg or FeatureConfig())
    fm = encode_features(sg, fcfg, view)
    out = {"app_id": sg.app_id, "view": view, "node_order": fm.node_order, "values": fm.values.tolist(),
           "pooled": None}
    if model is not None and model.f_theta is not None and model.feature_view == view and fm.rows:
        out["pooled"] = gae.pool(gae.embed(scene_dense(sg, fcfg, view), model.f_theta)).tolist()
    return out


def classify_sources(model: det.Model, apps: Sequence[tuple[str, str]], max_depth: int = 10) -> dict[str, det.Prediction]:
    """Classify ``(app_id, source)`` pairs against the model's training apps."""
    records = []
    for app_id, source in apps:
        bundle, sg = analyze(source, app_id, max_depth)
        vec = bundle_vector(bundle, sg, model.feature_view, model.feature_config, model.f_theta)
        m = bundle.manifest
        records.append(det.AppRecord(app_id or m.package_name, m.package_name, m.app_name, m.cert_digest, vec))
    ids = [r.app_id for r in records]
    if len(set(ids)) != len(ids):
        raise det.DuplicateAppId(next(i for i in ids if ids.count(i) > 1))
    return det.classify(model.train_records, records, model.f_psi, model.classifier)


def prediction_json(preds: dict[str, det.Prediction]) -> dict:
    return {"predictions": {k: {"label": p.label, "scores": p.scores} for k, p in sorted(preds.items())}}
