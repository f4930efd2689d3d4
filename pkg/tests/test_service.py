import pytest
from fastapi.testclient import TestClient

from sgdetect.service import create_app

from conftest import appir


@pytest.fixture(scope="module")
def bare():
    return TestClient(create_app(None))


@pytest.fixture(scope="module")
def served(trained_model):
    return TestClient(create_app(str(trained_model)))


def _src(benchmark_dir, name):
    return (benchmark_dir / f"{name}.appir").read_text()


def test_health(bare, served):
    assert bare.get("/health").json() == {"status": "ok", "model_loaded": False, "feature_view": None}
    assert served.get("/health").json()["model_loaded"] is True


def test_validate(bare):
    ok = bare.post("/validate", json={"source": appir("class A Activity", "end")}).json()
    assert ok == {"valid": True, "violations": []}
    bad = bare.post("/validate", json={"source": "nonsense"}).json()
    assert not bad["valid"] and bad["violations"][0]["code"] == "syntax"


def test_scene_graph_and_errors(bare, small_corpus):
    src = _src(small_corpus / "benchmark", "App1")
    r = bare.post("/scene-graph", json={"source": src, "app_id": "App1"})
    assert r.status_code == 200 and r.json()["format"] == "sg/1"
    assert bare.post("/scene-graph", json={"source": "nonsense"}).status_code == 422
    assert bare.post("/scene-graph", json={"source": src, "max_depth": -1}).status_code == 422


def test_features(bare, served, small_corpus):
    src = _src(small_corpus / "benchmark", "App3")
    r = bare.post("/features", json={"source": src, "view": "scene"}).json()
    assert r["pooled"] is None and len(r["values"][0]) == 160
    assert served.post("/features", json={"source": src}).json()["pooled"] is not None
    assert bare.post("/features", json={"source": src, "view": "pixels"}).status_code == 422


def test_classify(bare, served, small_corpus):
    src = _src(small_corpus / "benchmark", "App1")
    body = {"apps": [{"source": src, "app_id": "x"}]}
    assert bare.post("/classify", json=body).status_code == 503
    r = served.post("/classify", json=body)
    assert r.status_code == 200 and set(r.json()["predictions"]) == {"x"}
    dup = {"apps": [{"source": src, "app_id": "x"}, {"source": src, "app_id": "x"}]}
    assert served.post("/classify", json=dup).status_code == 409
    assert served.post("/classify", json={"apps": []}).status_code == 422
    assert served.post("/classify", json={"apps": [{"source": "junk", "app_id": "y"}]}).status_code == 422
