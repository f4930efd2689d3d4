import json

import numpy as np
import pytest

from sgdetect import detector as det
from sgdetect.config import load_config
from sgdetect.harness import corpus as C
from sgdetect.harness import evaluate as E


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_generation_is_byte_identical(tmp_path):
    spec = C.CorpusSpec(seed=9, per_class=2)
    C.gen_corpus(spec, tmp_path / "a")
    C.gen_corpus(spec, tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    C.gen_corpus(C.CorpusSpec(seed=10, per_class=2), tmp_path / "c")
    assert (tmp_path / "a" / "corpus.json").read_bytes() != (tmp_path / "c" / "corpus.json").read_bytes()


def test_index_layout(small_corpus):
    entries = C.load_index(small_corpus)
    groups = {e.group for e in entries}
    assert groups == {"benchmark", "family"}
    fam = [e for e in entries if e.group == "family"]
    assert len(fam) == 8 * 5
    assert {e.label for e in fam} == set(det.LABELS)
    bench = [e for e in entries if e.group == "benchmark"]
    assert {e.app_id for e in bench if e.obfuscation is None} == set(C.BENCHMARK_TEMPLATES)
    for e in bench:
        if e.obfuscation:
            assert e.source in C.BENCHMARK_TEMPLATES and (small_corpus / e.rename_map).exists()
    obj = json.loads((small_corpus / "corpus.json").read_text())
    assert obj["format"] == C.CORPUS_FORMAT


def test_truth_sidecar_for_app1(small_corpus):
    truth = json.loads((small_corpus / "benchmark" / "App1.truth.json").read_text())
    assert truth["format"] == C.TRUTH_FORMAT
    assert len(truth["edges"]) + len(truth["over_depth_edges"]) == 13


def test_motifs_are_disjoint():
    sets = [set(v) for v in C.MOTIFS.values()]
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            assert not sets[i] & sets[j]


def test_bad_spec():
    with pytest.raises(ValueError):
        C.CorpusSpec(per_class=-1)
    with pytest.raises(ValueError):
        C.CorpusSpec(families=("Spyware",))


def test_developer_groups_share_certificates():
    spec = C.CorpusSpec(seed=4, per_class=12, benchmark=False)
    certs: dict[str, set] = {}
    for _, fam, b in C.family_builders(spec):
        certs.setdefault(b.bundle().manifest.cert_digest, set()).add(fam)
    assert all(len(f) == 1 for f in certs.values())
    assert len(certs) < 12 * 5


# ---------------------------------------------------------------------------
# Static evaluation
# ---------------------------------------------------------------------------


def test_prf_arithmetic():
    p = E.PRF.of({1, 2, 3}, {2, 3, 4, 5})
    assert (p.tp, p.fp, p.fn) == (2, 1, 2)
    assert p.precision == pytest.approx(2 / 3) and p.recall == pytest.approx(0.5)
    assert p.f1 == pytest.approx(2 * (2 / 3) * 0.5 / (2 / 3 + 0.5))
    assert E.PRF(0, 0, 0).f1 == 1.0
    assert (E.PRF(1, 0, 0) + E.PRF(0, 1, 1)) == E.PRF(1, 1, 1)


def test_static_report_on_benchmark(small_corpus):
    apps = E.load_corpus(small_corpus, groups=["benchmark"])
    rep = E.eval_static(apps)
    assert rep.transitions_within_depth.f1 == 1.0
    assert rep.tokens.f1 == 1.0 and rep.widgets.f1 == 1.0
    # the App5 over-depth edge, plain and renamed, is the only miss
    assert rep.transitions.fn == 2 and rep.transitions.fp == 0
    rows = {r["app_id"]: r for r in rep.per_app}
    for name in C.BENCHMARK_TEMPLATES:
        plain, obf = rows[name], rows[f"{name}.rename1"]
        for key in ("transitions", "tokens", "widgets"):
            assert plain[key] == obf[key], (name, key)
    js = rep.to_json(timing=False)
    assert js["format"] == E.REPORT_FORMAT and "timing" not in js
    assert all("seconds" not in r for r in js["per_app"])


def test_corpus_stats(small_corpus):
    apps = E.load_corpus(small_corpus, groups=["family"])
    stats = E.corpus_stats(apps)
    assert set(stats) == set(det.LABELS)
    assert all(v["apps"] == 8 for v in stats.values())


def test_loader_skips_broken_bundles(tmp_path):
    C.gen_corpus(C.CorpusSpec(seed=1, per_class=1, benchmark=False), tmp_path)
    victim = next(tmp_path.glob("apps/*.appir"))
    victim.write_text("garbage\n")
    apps = E.load_corpus(tmp_path)
    assert len(apps) == 4


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def test_split_is_seeded_partition():
    ids = [f"x{i}" for i in range(20)]
    a = E.split_ids(ids, 3)
    assert a == E.split_ids(list(reversed(ids)), 3)
    assert sorted(sum(a, [])) == sorted(ids)
    assert [len(x) for x in a] == [14, 4, 2]


def test_confusion_rows_match_support():
    cm = E.confusion(["Porn", "Porn", "Legitimate"], ["Porn", "Legitimate", "Legitimate"])
    assert cm.sum() == 3 and cm[1, 1] == 1 and cm[1, 4] == 1 and cm[4, 4] == 1


@pytest.fixture(scope="module")
def fast_cfg():
    return load_config(overrides=["gae.epochs=3", "gae.hidden=16", "gae.out=8", "classifier.epochs=50"])


def test_pipeline_on_small_corpus(small_corpus, fast_cfg):
    apps = E.load_corpus(small_corpus, groups=["family"])
    res = E.run_pipeline(apps, fast_cfg)
    c = res.report.classification
    held = res.split["validation"] + res.split["test"]
    assert sum(c["support"].values()) == len(held) == len(res.predictions)
    assert np.asarray(c["confusion"]).sum() == len(held)
    assert not set(res.split["train"]) & set(held)
    again = E.run_pipeline(apps, fast_cfg)
    assert again.model.f_psi.digest() == res.model.f_psi.digest()
    assert again.report.to_json(timing=False) == res.report.to_json(timing=False)


@pytest.mark.parametrize("view", ["atg", "manifest"])
def test_pipeline_alternative_views(small_corpus, fast_cfg, view):
    apps = E.load_corpus(small_corpus, groups=["family"])
    cfg = {**fast_cfg, "pipeline": {**fast_cfg["pipeline"], "features": view}}
    res = E.run_pipeline(apps, cfg)
    assert res.model.feature_view == view
    assert (res.model.f_theta is None) == (view == "manifest")


def test_unknown_view(small_corpus, fast_cfg):
    apps = E.load_corpus(small_corpus, groups=["family"])
    cfg = {**fast_cfg, "pipeline": {**fast_cfg["pipeline"], "features": "pixels"}}
    with pytest.raises(ValueError):
        E.run_pipeline(apps, cfg)
