import json
import subprocess
import sys

import pytest

from sgdetect.harness import cli
from sgdetect.harness import corpus as C

from conftest import FAST_SETTINGS, appir


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_corpus_summary(tmp_path, capsys):
    code, out, _ = _run(capsys, "gen-corpus", str(tmp_path / "c"), "--set", "corpus.per_class=1")
    assert code == 0
    summary = json.loads(out)
    assert summary["groups"] == {"benchmark": 10, "family": 5}
    assert (tmp_path / "c" / "corpus.json").exists()


def test_validate_exit_codes(tmp_path, capsys, small_corpus):
    good = small_corpus / "benchmark" / "App1.appir"
    bad = tmp_path / "bad.appir"
    bad.write_text(appir("class A Activity", "  method m", "    api - LoadUrl $u", "  end", "end"))
    code, out, _ = _run(capsys, "validate", str(good))
    assert code == 0 and json.loads(out)[str(good)]["valid"]
    code, out, _ = _run(capsys, "validate", str(good), str(bad))
    assert code == 1
    assert json.loads(out)[str(bad)]["violations"][0]["code"] == "undefined_register"
    code, _, err = _run(capsys, "validate", str(tmp_path / "missing.appir"))
    assert code == 1 and "no such file" in err


def test_build_sg_file_and_directory(tmp_path, capsys, small_corpus):
    code, out, _ = _run(capsys, "build-sg", str(small_corpus / "benchmark" / "App5.appir"))
    assert code == 0
    obj = json.loads(out)
    assert obj["format"] == "sg/1" and len(obj["edges"]) == 10
    code, out, _ = _run(capsys, "build-sg", str(small_corpus / "benchmark"), "--out", str(tmp_path / "sg"))
    assert code == 0
    assert len(json.loads(out)) == 10
    assert (tmp_path / "sg" / "App1.sg.json").exists()
    code, out, _ = _run(capsys, "build-sg", str(small_corpus / "benchmark" / "App5.appir"),
                        "--set", "analysis.max_depth=11")
    assert len(json.loads(out)["edges"]) == 11


def test_encode(capsys, small_corpus, trained_model):
    path = str(small_corpus / "benchmark" / "App2.appir")
    code, out, _ = _run(capsys, "encode", path, "--view", "atg")
    obj = json.loads(out)
    assert code == 0 and obj["view"] == "atg" and obj["pooled"] is None
    assert len(obj["values"]) == len(obj["node_order"]) and len(obj["values"][0]) == 160
    code, out, _ = _run(capsys, "encode", path, "--model", str(trained_model))
    assert len(json.loads(out)["pooled"]) == 8


def test_train_writes_model_dir(trained_model):
    names = {p.name for p in trained_model.iterdir()}
    assert {"FORMAT", "f_theta.json", "f_psi.json", "classifier.json", "features.json", "train_apps.json"} <= names
    report = json.loads((trained_model.parent / "train.json").read_text())
    assert report["format"] == "report/1" and "timing" not in report


def test_classify(capsys, small_corpus, trained_model):
    paths = [str(small_corpus / "benchmark" / f"App{i}.appir") for i in (1, 2)]
    code, out, _ = _run(capsys, "classify", *paths, "--model", str(trained_model))
    preds = json.loads(out)["predictions"]
    assert code == 0 and set(preds) == {"App1", "App2"}
    assert sum(preds["App1"]["scores"].values()) == pytest.approx(1.0)
    # a training app id collides
    train_ids = json.loads((trained_model / "train_apps.json").read_text())
    clash = small_corpus / "apps" / f"{train_ids[0]['app_id']}.appir"
    code, _, err = _run(capsys, "classify", str(clash), "--model", str(trained_model))
    assert code == 1 and "training set" in err
    code, _, _ = _run(capsys, "classify", paths[0])
    assert code == 1


def test_eval_and_report(capsys, small_corpus):
    code, out, _ = _run(capsys, "eval", str(small_corpus), "--groups", "benchmark", "--no-timing")
    rep = json.loads(out)
    assert code == 0 and rep["transitions_within_depth"]["f1"] == 1.0 and "timing" not in rep
    args = ["report", str(small_corpus), "--ablation", "--no-timing"]
    for s in FAST_SETTINGS:
        args += ["--set", s]
    code, out, _ = _run(capsys, *args)
    rep = json.loads(out)
    assert code == 0
    assert set(rep["ablation"]) == {"scene", "atg", "manifest", "shuffled_labels"}
    assert rep["classification"]["labels"][0] == "GamblingGame"
    assert rep["tokens"]["f1"] == 1.0


def test_bad_config_value(capsys, small_corpus):
    code, _, err = _run(capsys, "train", str(small_corpus), "--model-out", "/tmp/x",
                        "--set", "pipeline.features=pixels")
    assert code == 1 and "pixels" in err
    code, _, _ = _run(capsys, "eval", str(small_corpus), "--set", "nonsense")
    assert code == 1


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_console_entry_point(small_corpus):
    r = subprocess.run(
        [sys.executable, "-m", "sgdetect.harness.cli", "validate", str(small_corpus / "benchmark" / "App3.appir")],
        capture_output=True, text=True,
    )
    assert r.returncode == 0 and '"valid": true' in r.stdout


def test_server_mode_uses_the_service(monkeypatch, capsys, small_corpus, trained_model):
    import httpx
    from fastapi.testclient import TestClient

    from sgdetect.service import create_app

    client = TestClient(create_app(str(trained_model)))

    def fake_post(url, json=None, timeout=None):
        return client.post(url.removeprefix("http://svc"), json=json)

    monkeypatch.setattr(httpx, "post", fake_post)
    path = str(small_corpus / "benchmark" / "App4.appir")
    code, out, _ = _run(capsys, "build-sg", path, "--server", "http://svc")
    local = cli.main(["build-sg", path])
    assert code == 0 and local == 0
    remote_obj = json.loads(out)
    assert remote_obj == json.loads(capsys.readouterr().out)
    code, out, _ = _run(capsys, "classify", path, "--server", "http://svc")
    assert code == 0 and "App4" in json.loads(out)["predictions"]
