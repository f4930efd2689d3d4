import random

import pytest
from hypothesis import given, settings, strategies as st

from sgdetect import app_ir as ir
from sgdetect.harness import corpus as C

from conftest import appir, parse


def test_minimal_bundle():
    b = parse(
        'layout @layout/main {"type": "LinearLayout"}',
        "class MainActivity Activity",
        "end",
    )
    assert len(b.classes) == 1
    assert len(b.layouts) == 1
    assert b.manifest.package_name == "com.t"


def test_undeclared_layout_is_dangling():
    with pytest.raises(ir.DanglingReference) as exc:
        parse(
            "class MainActivity Activity",
            "  method onCreate",
            "    api - SetContentView @layout/missing",
            "  end",
            "end",
        )
    assert exc.value.name == "@layout/missing"


def test_duplicate_class_raises_and_is_reported():
    src = appir("class A Activity", "end", "class A Activity", "end")
    with pytest.raises(ir.DuplicateName):
        ir.parse_bundle(src)
    problems = ir.validate(ir.parse_bundle(src, check=False))
    assert [v.code for v in problems] == ["duplicate_class"]


def test_self_inner_of_is_a_violation():
    src = appir("class L Listener", "  inner_of L", "end")
    problems = ir.validate(ir.parse_bundle(src, check=False))
    assert [v.code for v in problems] == ["inner_of_cycle"]


def test_syntax_error_carries_position():
    with pytest.raises(ir.AppIrSyntaxError) as exc:
        ir.parse_bundle(appir("class A Activity", "  method m", "    bogus $x", "  end", "end"))
    assert exc.value.line == 5
    with pytest.raises(ir.AppIrSyntaxError):
        ir.parse_bundle("not-a-header\n")


def test_undefined_register_reported():
    src = appir("class A Activity", "  method m", "    api - LoadUrl $u", "  end", "end")
    problems = ir.validate(ir.parse_bundle(src, check=False))
    assert [v.code for v in problems] == ["undefined_register"]
    assert problems[0].line == 5


def test_method_params_count_as_defined():
    b = parse("class A Plain", '  method f "(S)S" $p', "    return $p", "  end", "end")
    assert b.classes[0].methods[0].params == (ir.Reg("p"),)


def test_manifest_rules():
    src = appir("class B Plain", "end", manifest={"package_name": "", "declared_activities": ["B"]})
    codes = {v.code for v in ir.validate(ir.parse_bundle(src, check=False))}
    assert codes == {"empty_package_name", "declared_not_activity"}


def test_nav_graph_rules():
    src = appir('navgraph @navigation/n {"host": "P", "destinations": []}', "class P Plain", "end")
    codes = {v.code for v in ir.validate(ir.parse_bundle(src, check=False))}
    assert codes == {"nav_host_kind", "nav_empty"}


def test_duplicate_widget_id_within_layout():
    src = appir(
        'layout @layout/l {"type": "LinearLayout", "children": [{"type": "Button", "id": "@id/b"}, {"type": "Button", "id": "@id/b"}]}'
    )
    codes = [v.code for v in ir.validate(ir.parse_bundle(src, check=False))]
    assert codes == ["duplicate_widget_id"]


def test_unknown_listener_kind():
    src = appir('layout @layout/l {"type": "Button", "id": "@id/b", "listeners": ["OnSwipe"]}')
    codes = [v.code for v in ir.validate(ir.parse_bundle(src, check=False))]
    assert codes == ["unknown_listener"]


def test_api_arity_and_roles():
    src = appir(
        "class A Activity",
        "  method m",
        "    api - StartActivity",
        "    api - NewIntent @layout/x",
        "  end",
        "end",
    )
    codes = [v.code for v in ir.validate(ir.parse_bundle(src, check=False))]
    assert codes == ["bad_arity", "bad_argument"]


def test_benchmark_fixtures_validate_and_match_class_counts(benchmark):
    for name, (bundle, truth) in benchmark.items():
        assert ir.validate(bundle) == []
        assert len(bundle.classes) == truth["class_count"], name


def test_app5_parses_from_text(benchmark):
    bundle, truth = benchmark["App5"]
    again = ir.parse_bundle(ir.serialize(bundle))
    assert len(again.classes) == truth["class_count"]


def test_round_trip_on_every_fixture(benchmark):
    for bundle, _ in benchmark.values():
        text = ir.serialize(bundle)
        assert ir.parse_bundle(text) == bundle
        assert ir.serialize(ir.parse_bundle(text)) == text


def test_round_trip_on_family_apps():
    spec = C.CorpusSpec(seed=11, per_class=2, benchmark=False)
    for _, _, b in C.family_builders(spec):
        bundle = b.bundle()
        assert ir.parse_bundle(ir.serialize(bundle)) == bundle


# ---------------------------------------------------------------------------
# Rename obfuscation
# ---------------------------------------------------------------------------


def _names(bundle):
    return [c.name for c in bundle.classes]


def test_rename_is_deterministic(benchmark):
    bundle, _ = benchmark["App1"]
    assert ir.apply_rename_obfuscation(bundle, 7) == ir.apply_rename_obfuscation(bundle, 7)
    assert ir.apply_rename_obfuscation(bundle, 7) != ir.apply_rename_obfuscation(bundle, 8)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), app=st.sampled_from(sorted(C.BENCHMARK_TEMPLATES)))
def test_rename_properties(seed, app):
    bundle = C.BENCHMARK_TEMPLATES[app]().bundle()
    rm = ir.rename_map_for(bundle, seed)
    obf = ir.rename_with_map(bundle, rm)
    # bijection on class names, method names and widget ids
    for mapping in (rm.classes, rm.methods, rm.widget_ids):
        assert len(set(mapping.values())) == len(mapping)
    assert ir.validate(obf) == []
    assert _names(obf) == [rm.cls(n) for n in _names(bundle)]
    assert set(_names(obf)).isdisjoint(_names(bundle))
    for a, b in zip(bundle.classes, obf.classes):
        assert [len(m.instructions) for m in a.methods] == [len(m.instructions) for m in b.methods]
    # constants and resources untouched
    consts = lambda bb: sorted(
        i.value for c in bb.classes for m in c.methods for i in m.instructions if isinstance(i, ir.ConstText)
    )
    assert consts(obf) == consts(bundle)
    assert obf.string_resources == bundle.string_resources
    # layout tree shape preserved
    shape = lambda w: (w.widget_type, tuple(shape(ch) for ch in w.children))
    assert [shape(l.root) for l in obf.layouts] == [shape(l.root) for l in bundle.layouts]
    assert ir.parse_bundle(ir.serialize(obf)) == obf


def test_rename_keeps_framework_callbacks(benchmark):
    bundle, _ = benchmark["App2"]
    obf = ir.apply_rename_obfuscation(bundle, 1)
    kept = {m.name for c in obf.classes for m in c.methods} & ir.FRAMEWORK_METHODS
    assert "onCreate" in kept and "onKeyDown" in kept


def test_validation_soundness_on_random_mutations(benchmark):
    """Any bundle validate() accepts goes through the whole analysis."""
    from sgdetect.scenegraph import build_scene_graph, encode_features

    rng = random.Random(5)
    bundle, _ = benchmark["App3"]
    lines = ir.serialize(bundle).splitlines()
    accepted = 0
    for _ in range(60):
        mutated = list(lines)
        k = rng.randrange(2, len(mutated))
        del mutated[k]
        try:
            b = ir.parse_bundle("\n".join(mutated) + "\n")
        except ir.AppIrError:
            continue
        accepted += 1
        encode_features(build_scene_graph(b))
    assert accepted > 0
