import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgdetect import app_ir as ir
from sgdetect import scenegraph as S
from sgdetect.harness import corpus as C

from conftest import appir, parse


def test_fnv_published_vectors():
    assert S.fnv1a64("") == 0xCBF29CE484222325
    assert S.fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert S.fnv1a64("foobar") == 0x85944171F73967E8


def test_config_dim():
    cfg = S.FeatureConfig()
    assert cfg.dim == 160
    with pytest.raises(ValueError):
        S.FeatureConfig(widget_buckets=0)


def test_single_activity_graph():
    sg = S.build_scene_graph(parse("class A Activity", "end"))
    assert list(sg.atg.nodes) == ["A"] and sg.atg.edges == set()
    fm = S.encode_features(sg)
    assert fm.values.shape == (1, 160)
    assert not fm.values.any()


def test_golden_buckets():
    b = parse(
        'layout @layout/l {"type": "LinearLayout", "children": [{"type": "TextView"}, {"type": "TextView"}, '
        '{"type": "TextView"}, {"type": "Button", "listeners": ["OnClick"]}]}',
        "class A Activity", "  method onCreate", "    api - SetContentView @layout/l", "  end", "end",
    )
    x = S.encode_features(S.build_scene_graph(b)).values[0]
    # frozen: fnv1a64("TextView") % 64 == 31, "Button" -> 17, "LinearLayout" -> 38, "OnClick" % 16 -> 8
    assert x[31] == pytest.approx(math.log1p(3))
    assert x[17] == pytest.approx(math.log1p(1))
    assert x[38] == pytest.approx(math.log1p(1))
    assert x[64 + 8] == pytest.approx(math.log1p(1))
    struct = x[144:]
    assert struct[2] == pytest.approx(math.log1p(5))  # widget count
    assert struct[3] == pytest.approx(math.log1p(2))  # layout depth
    assert struct[7] == pytest.approx(math.log1p(1))  # listener count
    assert not struct[8:].any()  # reserved slots


def test_identical_nodes_identical_rows():
    b = parse(
        'layout @layout/l {"type": "Button"}',
        "class A Activity", "  method onCreate", "    api - SetContentView @layout/l", "  end", "end",
        "class B Activity", "  method onCreate", "    api - SetContentView @layout/l", "  end", "end",
    )
    x = S.encode_features(S.build_scene_graph(b)).values
    assert np.array_equal(x[0], x[1])


def test_atg_view_keeps_topology_only(benchmark):
    sg = S.build_scene_graph(benchmark["App1"][0])
    x = S.encode_features(sg, view="atg").values
    assert not x[:, :144].any()
    assert x[:, 144:].any()


def test_app5_graph_matches_truth(benchmark):
    bundle, truth = benchmark["App5"]
    sg = S.build_scene_graph(bundle)
    assert sorted(sg.atg.nodes) == sorted(truth["nodes"])
    assert sorted(map(list, sg.atg.edges)) == sorted(truth["edges"])
    assert set(sg.attributes) == set(sg.atg.nodes)


def test_loan_motif_edges():
    spec = C.CorpusSpec(seed=2, per_class=3, families=("InvestmentScam",), benchmark=False)
    for _, _, b in C.family_builders(spec):
        sg = S.build_scene_graph(b.bundle())
        role = lambda n: n.removesuffix("Activity").removesuffix("Fragment")
        roles = {(role(a), role(c)) for a, c in sg.atg.edges}
        assert {("Home", "Personal"), ("Personal", "LoanApply"), ("Personal", "BankCard"),
                ("Personal", "Certification")} <= roles


def test_serialize_round_trip_and_determinism(benchmark):
    for bundle, _ in benchmark.values():
        sg = S.build_scene_graph(bundle)
        text = S.serialize(sg)
        back = S.deserialize(text)
        assert back == sg
        assert S.serialize(back) == text
        assert S.serialize(S.build_scene_graph(bundle)) == text


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda o: o.update(format="sg/0"), "$.format"),
        (lambda o: o["nodes"][0].update(kind="Service"), "$.nodes[0].kind"),
        (lambda o: o["nodes"][1].pop("widgets"), "$.nodes[1].widgets"),
        (lambda o: o["edges"][0].update(target="Ghost"), "$.edges[0].target"),
        (lambda o: o["edges"][0]["units"][0].update(location=[1]), "$.edges[0].units[0].location"),
    ],
)
def test_corrupted_field_names_path(benchmark, mutate, path):
    obj = json.loads(S.serialize(S.build_scene_graph(benchmark["App2"][0])))
    mutate(obj)
    with pytest.raises(S.FormatError) as exc:
        S.deserialize(json.dumps(obj))
    assert exc.value.path == path
    with pytest.raises(S.FormatError):
        S.deserialize("{not json")


def _shuffled(bundle: ir.AppBundle, rng: random.Random) -> ir.AppBundle:
    classes = list(bundle.classes)
    layouts = list(bundle.layouts)
    rng.shuffle(classes)
    rng.shuffle(layouts)
    return ir.AppBundle(bundle.manifest, tuple(layouts), bundle.string_resources, bundle.nav_graphs, tuple(classes))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), app=st.sampled_from(sorted(C.BENCHMARK_TEMPLATES)))
def test_declaration_order_and_rename_invariance(seed, app):
    bundle = C.BENCHMARK_TEMPLATES[app]().bundle()
    base = S.encode_features(S.build_scene_graph(bundle))
    moved = S.encode_features(S.build_scene_graph(_shuffled(bundle, random.Random(seed))))
    assert moved.node_order == base.node_order
    assert np.array_equal(moved.values, base.values)
    rm = ir.rename_map_for(bundle, seed)
    obf = S.encode_features(S.build_scene_graph(ir.rename_with_map(bundle, rm)))
    # same rows, permuted to the renamed sort order
    perm = [obf.node_order.index(rm.cls(n)) for n in base.node_order]
    assert np.array_equal(obf.values[perm], base.values)


def test_stats_and_csv(benchmark):
    sg = S.build_scene_graph(benchmark["App1"][0])
    s = sg.stats()
    assert s["transition_pairs"] == 13
    csv = S.encode_features(sg).to_csv().splitlines()
    assert csv[0].startswith("node,f0,") and len(csv) == s["nodes"] + 1
