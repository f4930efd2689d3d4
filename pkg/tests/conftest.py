import json

import pytest

from sgdetect import app_ir as ir
from sgdetect.harness import corpus as C


def appir(*body: str, manifest: dict | None = None) -> str:
    """Assemble App-IR text from directive lines."""
    m = manifest or {"package_name": "com.t", "app_name": "T", "cert_digest": "00"}
    return "\n".join(["appir/1", "manifest " + json.dumps(m), *body]) + "\n"


def parse(*body: str, **kw) -> ir.AppBundle:
    return ir.parse_bundle(appir(*body, **kw))


@pytest.fixture(scope="session")
def benchmark():
    """name -> (bundle, truth) for the five benchmark apps."""
    out = {}
    for name, b in C.benchmark_builders().items():
        out[name] = (b.bundle(), b.truth(name))
    return out


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    C.gen_corpus(C.CorpusSpec(seed=3, per_class=8), root)
    return root


FAST_SETTINGS = ["gae.epochs=3", "gae.hidden=16", "gae.out=8", "classifier.epochs=50"]


@pytest.fixture(scope="session")
def trained_model(small_corpus, tmp_path_factory):
    """A model directory trained quickly on the small corpus."""
    from sgdetect.harness.cli import main

    out = tmp_path_factory.mktemp("model") / "m"
    args = ["train", str(small_corpus), "--model-out", str(out), "--no-timing",
            "--out", str(out.parent / "train.json")]
    for s in FAST_SETTINGS:
        args += ["--set", s]
    assert main(args) == 0
    return out
