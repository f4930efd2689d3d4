"""HTTP service over the analysis and detection core.

Run with ``sgdetect serve`` or ``uvicorn sgdetect.service:app``; the model
directory is taken from ``SGDETECT_MODEL`` when set.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException

from . import api
from . import app_ir as ir
from . import detector as det
from .schemas import (
    ClassifyIn,
    ClassifyOut,
    FeaturesIn,
    FeaturesOut,
    HealthOut,
    BundleIn,
    SceneGraphIn,
    ValidateOut,
    ViolationOut,
)


def create_app(model_dir: str | None = None) -> FastAPI:
    model = det.load_model(model_dir) if model_dir else None
    app = FastAPI(title="sgdetect")

    def _bad_bundle(exc: Exception) -> HTTPException:
        return HTTPException(status_code=422, detail=f"invalid bundle: {exc}")

    @app.get("/health", response_model=HealthOut)
    def health() -> HealthOut:
        return HealthOut(status="ok", model_loaded=model is not None,
                         feature_view=model.feature_view if model else None)

    @app.post("/validate", response_model=ValidateOut)
    def validate(req: BundleIn) -> ValidateOut:
        problems = api.check_source(req.source)
        return ValidateOut(valid=not problems,
                           violations=[ViolationOut(code=v.code, message=v.message, line=v.line) for v in problems])

    @app.post("/scene-graph")
    def scene_graph(req: SceneGraphIn) -> dict:
        try:
            return api.scene_graph_json(req.source, req.app_id, req.max_depth)
        except ir.AppIrError as exc:
            raise _bad_bundle(exc) from exc

    @app.post("/features", response_model=FeaturesOut)
    def features(req: FeaturesIn) -> dict:
        try:
            return api.features_json(req.source, req.app_id, req.max_depth, req.view, model)
        except ir.AppIrError as exc:
            raise _bad_bundle(exc) from exc

    @app.post("/classify", response_model=ClassifyOut)
    def classify(req: ClassifyIn) -> dict:
        if model is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        try:
            preds = api.classify_sources(model, [(a.app_id, a.source) for a in req.apps])
        except ir.AppIrError as exc:
            raise _bad_bundle(exc) from exc
        except (det.IdCollision, det.DuplicateAppId) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return api.prediction_json(preds)

    return app


app = create_app(os.environ.get("SGDETECT_MODEL") or None)
