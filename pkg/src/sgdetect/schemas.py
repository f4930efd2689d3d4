"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class BundleIn(BaseModel):
    source: str = Field(..., description="App-IR text (appir/1)")
    app_id: str = ""


class ViolationOut(BaseModel):
    code: str
    message: str
    line: int = 0


class ValidateOut(BaseModel):
    valid: bool
    violations: list[ViolationOut] = []


class SceneGraphIn(BundleIn):
    max_depth: int = Field(10, ge=0)


class FeaturesIn(SceneGraphIn):
    view: Literal["scene", "atg"] = "scene"


class FeaturesOut(BaseModel):
    app_id: str
    view: str
    node_order: list[str]
    values: list[list[float]]
    # present only when the service holds a model with a scene encoder
    pooled: list[float] | None = None


class ClassifyIn(BaseModel):
    apps: list[BundleIn] = Field(..., min_length=1)


class PredictionOut(BaseModel):
    label: str
    scores: dict[str, float]


class ClassifyOut(BaseModel):
    predictions: dict[str, PredictionOut]


class HealthOut(BaseModel):
    status: str
    model_loaded: bool
    feature_view: str | None = None
