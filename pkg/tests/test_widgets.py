import random

import pytest

from sgdetect import app_ir as ir
from sgdetect.callgraph import build_call_graph
from sgdetect.harness import corpus as C
from sgdetect.widgets import (
    SinkLocation,
    SinkNotText,
    backward_taint_text,
    generate_imprints,
    identify_native_widgets,
    loadurl_sites,
    split_tokens,
)

from conftest import appir, parse


def _widgets(bundle):
    return identify_native_widgets(bundle, build_call_graph(bundle))


def test_layout_widgets_and_listener():
    b = parse(
        'layout @layout/l {"type": "LinearLayout", "children": [{"type": "TextView"}, {"type": "Button", "id": "@id/ok", "listeners": ["OnClick"]}]}',
        "class A Activity", "  method onCreate", "    api - SetContentView @layout/l", "  end", "end",
    )
    attrs = _widgets(b)["A"]
    leaves = [w for w in attrs.native_widgets if w.widget_type != "LinearLayout"]
    assert sorted(w.widget_type for w in leaves) == ["Button", "TextView"]
    assert attrs.listener_count == 1
    # the layout root is recorded as well
    assert len(attrs.native_widgets) == 3


def test_dynamic_widget_in_fragment():
    b = parse(
        'layout @layout/f {"type": "FrameLayout", "id": "@id/root"}',
        "class F Fragment",
        "  method onCreateView",
        "    api - Inflate @layout/f",
        "    api $w NewWidget ImageView",
        "    api - AttachWidget @id/root $w",
        "  end",
        "end",
    )
    types = [w.widget_type for w in _widgets(b)["F"].native_widgets]
    assert "ImageView" in types


def test_listener_via_find_view_by_id():
    b = parse(
        'layout @layout/l {"type": "Button", "id": "@id/go"}',
        "class A Activity",
        "  method onCreate",
        "    api - SetContentView @layout/l",
        "    api $v FindViewById @id/go",
        "    api - SetOnClickListener $v L",
        "  end",
        "end",
        "class L Listener", "  inner_of A", "  method onClick", "  end", "end",
    )
    (w,) = _widgets(b)["A"].native_widgets
    assert w.listeners == frozenset({"OnClick"})


def test_fixture_widgets_exact(benchmark):
    for name, (bundle, truth) in benchmark.items():
        got = {
            owner: sorted((w.widget_type, w.widget_id or "", tuple(sorted(w.listeners))) for w in a.native_widgets)
            for owner, a in _widgets(bundle).items()
        }
        want = {
            owner: sorted((w["type"], w["id"] or "", tuple(sorted(w["listeners"]))) for w in ws)
            for owner, ws in truth["widgets"].items()
        }
        assert got == want, name


# ---------------------------------------------------------------------------
# Taint
# ---------------------------------------------------------------------------


def _taint(bundle, depth=10):
    (site,) = loadurl_sites(bundle)
    return backward_taint_text(bundle, build_call_graph(bundle), site, depth)


def test_tokens_through_helper_returns_and_runtime_source():
    b = parse(
        'string @string/base "https://base.example.org"',
        "class A Activity",
        "  method onCreate",
        "    call $v5 X.B",
        "    runtime $v4",
        "    text $url append $v5 $v4",
        "    api - LoadUrl $url",
        "  end",
        "end",
        "class X Plain",
        "  method A",
        "    res $v1 @string/base",
        "    return $v1",
        "  end",
        "  method B",
        "    call $v2 X.A",
        '    const $v3 "/pay?key=77"',
        "    text $v6 append $v2 $v3",
        "    return $v6",
        "  end",
        "end",
    )
    r = _taint(b)
    assert r.tokens == frozenset(split_tokens("https://base.example.org") + split_tokens("/pay?key=77"))
    assert r.discarded_runtime_sources == 1
    assert not r.depth_exhausted


def test_single_constant_and_stoplist():
    b = parse(
        "class A Activity",
        "  method onCreate",
        '    const $u "https://a.example/pay"',
        "    api - LoadUrl $u",
        "  end",
        "end",
    )
    assert _taint(b).tokens == {"https", "a", "example", "pay"}
    assert generate_imprints(b, build_call_graph(b))["A"] == {"a", "example", "pay"}


def test_github_is_filtered():
    b = parse(
        "class A Activity",
        "  method onCreate",
        '    const $u "https://github.com/x"',
        "    api - LoadUrl $u",
        "  end",
        "end",
    )
    assert "github" in _taint(b).tokens
    assert "github" not in generate_imprints(b, build_call_graph(b))["A"]


def test_no_loadurl_sites():
    b = parse("class A Activity", "  method onCreate", "  end", "end")
    assert generate_imprints(b, build_call_graph(b)) == {"A": set()}


def test_sink_not_text():
    b = parse(
        "class A Activity", "  method onCreate", "    api $i NewIntent A", "    api - LoadUrl $i", "  end", "end",
    )
    with pytest.raises(SinkNotText):
        _taint(b)
    with pytest.raises(ValueError):
        backward_taint_text(b, build_call_graph(b), SinkLocation("A", "onCreate", 0))


def test_depth_exhausted_flag():
    lines = ["class P Plain"]
    for i in range(6):
        nxt = [f"    call $r P.f{i + 1}", "    return $r"] if i < 5 else ['    const $r "deep.example"', "    return $r"]
        lines += [f"  method f{i}", *nxt, "  end"]
    lines += ["end", "class A Activity", "  method onCreate", "    call $u P.f0", "    api - LoadUrl $u", "  end", "end"]
    b = parse(*lines)
    assert _taint(b, depth=10).tokens == {"deep", "example"}
    r = _taint(b, depth=3)
    assert r.tokens == frozenset() and r.depth_exhausted


def test_benchmark_tokens_and_no_runtime_leak(benchmark):
    total = 0
    for name, (bundle, truth) in benchmark.items():
        got = generate_imprints(bundle, build_call_graph(bundle))
        assert {k: sorted(v) for k, v in got.items() if v} == {k: v for k, v in truth["tokens"].items() if v}, name
        total += len(truth["all_tokens"])
    assert total == C.BENCHMARK_TOKEN_TOTAL == 36


def test_imprints_invariant_under_rename(benchmark):
    for bundle, _ in benchmark.values():
        rm = ir.rename_map_for(bundle, 3)
        a = generate_imprints(bundle, build_call_graph(bundle))
        obf = ir.rename_with_map(bundle, rm)
        b = generate_imprints(obf, build_call_graph(obf))
        assert {rm.cls(k): v for k, v in a.items()} == b


# ---------------------------------------------------------------------------
# Forward-interpreter oracle
# ---------------------------------------------------------------------------
# Each value is evaluated forward as a list of fragments, a fragment being
# a concrete source string or None for a runtime value. Concatenation joins
# fragment lists; replace keeps the subject and the replacement. The token
# set is the split of every concrete fragment reaching the sink.

BOTTOM = None
PIECES = ["https://", "api.", "pay", "/v1/", "?k=", "x9", "cdn.host.cn", "index.html", "&lang=", "zh", ""]


def _interpret(program, strings, helper_body):
    env = {}
    for op, dst, args in program:
        if op == "const":
            env[dst] = [args[0]]
        elif op == "res":
            env[dst] = [strings[args[0]]]
        elif op == "runtime":
            env[dst] = [BOTTOM]
        elif op in ("append", "concat"):
            env[dst] = [f for a in args for f in env[a]]
        elif op == "assign":
            env[dst] = list(env[args[0]])
        elif op == "replace":
            env[dst] = env[args[0]] + env[args[2]]
        elif op == "call":
            # helper returns the concatenation of its two parameters and a constant
            env[dst] = env[args[0]] + env[args[1]] + [helper_body]
    return env


def _random_program(rng: random.Random):
    strings = {f"@string/s{i}": rng.choice(PIECES[:-1]) + rng.choice(PIECES) for i in range(3)}
    program, defined = [], []
    n = rng.randint(1, 11)
    regs = [f"r{i}" for i in range(6)]
    for _ in range(n):
        dst = rng.choice(regs)  # reuse exercises reaching definitions
        kinds = ["const", "res", "runtime"] + (["append", "concat", "assign", "replace", "call"] if defined else [])
        op = rng.choice(kinds)
        if op == "const":
            args = (rng.choice(PIECES) + rng.choice(PIECES),)
        elif op == "res":
            args = (rng.choice(sorted(strings)),)
        elif op == "runtime":
            args = ()
        elif op == "assign":
            args = (rng.choice(defined),)
        elif op == "replace":
            args = tuple(rng.choice(defined) for _ in range(3))
        elif op == "call":
            args = (rng.choice(defined), rng.choice(defined))
        else:
            args = tuple(rng.choice(defined) for _ in range(rng.randint(2, 3)))
        program.append((op, dst, args))
        if dst not in defined:
            defined.append(dst)
    sink = program[-1][1] if rng.random() < 0.7 else rng.choice(defined)
    return strings, program, sink


def _render(strings, program, sink, helper_body):
    lines = [f"string {k} {ir._dump(v)}" for k, v in sorted(strings.items())]
    lines += ["class A Activity", "  method onCreate"]
    for op, dst, args in program:
        if op == "const":
            lines.append(f"    const ${dst} {ir._dump(args[0])}")
        elif op == "res":
            lines.append(f"    res ${dst} {args[0]}")
        elif op == "runtime":
            lines.append(f"    runtime ${dst}")
        elif op == "call":
            lines.append(f"    call ${dst} H.join ${args[0]} ${args[1]}")
        else:
            lines.append(f"    text ${dst} {op} " + " ".join("$" + a for a in args))
    lines += [f"    api - LoadUrl ${sink}", "  end", "end"]
    lines += [
        "class H Plain",
        '  method join "(SS)S" $a $b',
        f"    const $c {ir._dump(helper_body)}",
        "    text $out append $a $b $c",
        "    return $out",
        "  end",
        "end",
    ]
    return appir(*lines)


def test_taint_matches_forward_oracle_on_random_programs():
    rng = random.Random(20240601)
    checked = 0
    for _ in range(500):
        strings, program, sink = _random_program(rng)
        helper_body = rng.choice(PIECES)
        bundle = ir.parse_bundle(_render(strings, program, sink, helper_body))
        env = _interpret(program, strings, helper_body)
        want = {t for frag in env[sink] if frag is not BOTTOM for t in split_tokens(frag)}
        assert _taint(bundle).tokens == want, program
        checked += 1
    assert checked == 500
