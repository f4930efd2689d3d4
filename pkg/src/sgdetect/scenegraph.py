"""Scene graphs: the transition graph with per-node UI attributes.

Node attributes are encoded into a fixed-width matrix by feature hashing so
the width does not depend on the corpus and identifiers never enter it.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .app_ir import AppBundle
from .atg import DEFAULT_MAX_DEPTH, Atg, CallerResolver, TransitionUnit, build_atg
from .callgraph import ImplicitPairTable, build_call_graph
from .config import DEFAULT_STOPLIST
from .widgets import NativeWidget, UiAttributes, identify_native_widgets, imprint_report

SG_FORMAT = "sg/1"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# structural slot layout
STRUCT_NAMES = (
    "in_degree", "out_degree", "widget_count", "layout_depth",
    "is_fragment", "has_webview", "token_count", "listener_count",
)
_FLAG_SLOTS = {"is_fragment", "has_webview"}
# slots kept by the topology-only feature view
_TOPOLOGY_SLOTS = {"in_degree", "out_degree", "is_fragment"}


class FormatError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def fnv1a64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FeatureConfig:
    widget_buckets: int = 64
    listener_buckets: int = 16
    token_buckets: int = 64
    structural_slots: int = 16

    def __post_init__(self) -> None:
        parts = (self.widget_buckets, self.listener_buckets, self.token_buckets, self.structural_slots)
        if min(parts) <= 0:
            raise ValueError("bucket counts must be positive")
        if self.structural_slots < len(STRUCT_NAMES):
            raise ValueError(f"need at least {len(STRUCT_NAMES)} structural slots")

    @property
    def dim(self) -> int:
        return self.widget_buckets + self.listener_buckets + self.token_buckets + self.structural_slots

    @property
    def offsets(self) -> dict[str, int]:
        return {
            "widgets": 0,
            "listeners": self.widget_buckets,
            "tokens": self.widget_buckets + self.listener_buckets,
            "structure": self.widget_buckets + self.listener_buckets + self.token_buckets,
        }

    def to_dict(self) -> dict:
        return {
            "widget_buckets": self.widget_buckets,
            "listener_buckets": self.listener_buckets,
            "token_buckets": self.token_buckets,
            "structural_slots": self.structural_slots,
        }


@dataclass
class SceneGraph:
    app_id: str
    atg: Atg
    attributes: dict[str, UiAttributes]
    warnings: list[str] = field(default_factory=list, compare=False)

    @property
    def node_order(self) -> list[str]:
        return sorted(self.atg.nodes)

    def stats(self) -> dict[str, int]:
        return {
            "nodes": len(self.atg.nodes),
            "transition_pairs": len(self.atg.edges),
            "widgets": sum(len(a.native_widgets) for a in self.attributes.values()),
            "tokens": sum(len(a.imprint_tokens) for a in self.attributes.values()),
            "webview_nodes": sum(1 for a in self.attributes.values() if a.has_webview),
        }


@dataclass
class FeatureMatrix:
    values: np.ndarray
    node_order: list[str]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def to_csv(self) -> str:
        lines = ["node," + ",".join(f"f{i}" for i in range(self.dim))]
        for name, row in zip(self.node_order, self.values):
            lines.append(name + "," + ",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"


def build_scene_graph(
    bundle: AppBundle,
    app_id: str = "",
    stoplist: Iterable[str] = DEFAULT_STOPLIST,
    max_depth: int = DEFAULT_MAX_DEPTH,
    table: ImplicitPairTable | None = None,
) -> SceneGraph:
    warnings: list[str] = []
    cg = build_call_graph(bundle, table)
    warnings.extend(cg.warnings)
    native = identify_native_widgets(bundle, cg, max_depth, warnings)
    resolver = CallerResolver(bundle, cg, max_depth)
    imprints = imprint_report(bundle, cg, stoplist, max_depth, resolver)
    atg = build_atg(bundle, cg, max_depth)
    attrs: dict[str, UiAttributes] = {}
    for name in sorted(atg.nodes):
        base = native[name]
        attrs[name] = UiAttributes(
            owner=name,
            native_widgets=base.native_widgets,
            imprint_tokens=frozenset(imprints.tokens.get(name, ())),
            has_webview=name in imprints.webview_owners,
            layout_depth=base.layout_depth,
            kind=atg.nodes[name],
        )
    return SceneGraph(app_id or bundle.manifest.package_name, atg, attrs, warnings)


def encode_features(sg: SceneGraph, cfg: FeatureConfig | None = None, view: str = "scene") -> FeatureMatrix:
    """Hash node attributes into an N x d matrix (rows in sorted node order).

    ``view="atg"`` keeps only the topology slots (degrees, fragment flag), the
    feature set used for transition-graph-only ablations.
    """
    cfg = cfg or FeatureConfig()
    if view not in ("scene", "atg"):
        raise ValueError(f"unknown feature view {view!r}")
    order = sg.node_order
    index = {n: i for i, n in enumerate(order)}
    X = np.zeros((len(order), cfg.dim))
    indeg = Counter(b for _, b in sg.atg.edges)
    outdeg = Counter(a for a, _ in sg.atg.edges)
    off = cfg.offsets
    for name in order:
        i = index[name]
        attr = sg.attributes[name]
        s = off["structure"]
        raw = {
            "in_degree": indeg[name],
            "out_degree": outdeg[name],
            "widget_count": len(attr.native_widgets),
            "layout_depth": attr.layout_depth,
            "is_fragment": 1.0 if attr.kind == "Fragment" else 0.0,
            "has_webview": 1.0 if attr.has_webview else 0.0,
            "token_count": len(attr.imprint_tokens),
            "listener_count": attr.listener_count,
        }
        for k, name_ in enumerate(STRUCT_NAMES):
            if view == "atg" and name_ not in _TOPOLOGY_SLOTS:
                continue
            value = raw[name_]
            X[i, s + k] = value if name_ in _FLAG_SLOTS else math.log1p(value)
        if view == "atg":
            continue
        wcounts = Counter(fnv1a64(w.widget_type) % cfg.widget_buckets for w in attr.native_widgets)
        lcounts = Counter(
            fnv1a64(kind) % cfg.listener_buckets for w in attr.native_widgets for kind in w.listeners
        )
        tcounts = Counter(fnv1a64(t) % cfg.token_buckets for t in attr.imprint_tokens)
        for b, n in wcounts.items():
            X[i, off["widgets"] + b] = math.log1p(n)
        for b, n in lcounts.items():
            X[i, off["listeners"] + b] = math.log1p(n)
        for b, n in tcounts.items():
            X[i, off["tokens"] + b] = math.log1p(n)
    return FeatureMatrix(X, order)


def adjacency(sg: SceneGraph) -> np.ndarray:
    """Directed 0/1 adjacency in ``node_order``; self-loops kept."""
    order = sg.node_order
    index = {n: i for i, n in enumerate(order)}
    A = np.zeros((len(order), len(order)))
    for a, b in sg.atg.edges:
        A[index[a], index[b]] = 1.0
    return A


# ---------------------------------------------------------------------------
# JSON (sg/1)
# ---------------------------------------------------------------------------


def _unit_to_json(u: TransitionUnit) -> dict:
    return {"location": list(u.location), "kind": u.kind, "callees": sorted(u.callees)}


def to_json_obj(sg: SceneGraph) -> dict:
    nodes = []
    for name in sg.node_order:
        a = sg.attributes[name]
        nodes.append(
            {
                "id": name,
                "kind": a.kind,
                "widgets": [
                    {"type": w.widget_type, "id": w.widget_id, "icon": w.icon, "listeners": sorted(w.listeners)}
                    for w in a.native_widgets
                ],
                "imprint_tokens": sorted(a.imprint_tokens),
                "has_webview": a.has_webview,
                "layout_depth": a.layout_depth,
            }
        )
    edges = [
        {"source": s, "target": t, "units": [_unit_to_json(u) for u in sorted(set(sg.atg.provenance.get((s, t), ())))]}
        for s, t in sg.atg.sorted_edges()
    ]
    return {"format": SG_FORMAT, "app_id": sg.app_id, "nodes": nodes, "edges": edges}


def serialize(sg: SceneGraph) -> str:
    return json.dumps(to_json_obj(sg), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _need(obj: dict, key: str, typ, path: str):
    if not isinstance(obj, dict):
        raise FormatError(path, "expected an object")
    if key not in obj:
        raise FormatError(f"{path}.{key}", "missing field")
    value = obj[key]
    if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
        raise FormatError(f"{path}.{key}", f"expected {getattr(typ, '__name__', typ)}")
    return value


def from_json_obj(obj: dict) -> SceneGraph:
    if _need(obj, "format", str, "$") != SG_FORMAT:
        raise FormatError("$.format", f"unsupported format {obj.get('format')!r}")
    app_id = _need(obj, "app_id", str, "$")
    atg = Atg()
    attrs: dict[str, UiAttributes] = {}
    for i, node in enumerate(_need(obj, "nodes", list, "$")):
        p = f"$.nodes[{i}]"
        name = _need(node, "id", str, p)
        kind = _need(node, "kind", str, p)
        if kind not in ("Activity", "Fragment"):
            raise FormatError(f"{p}.kind", f"bad node kind {kind!r}")
        widgets = []
        for j, w in enumerate(_need(node, "widgets", list, p)):
            wp = f"{p}.widgets[{j}]"
            listeners = _need(w, "listeners", list, wp)
            widgets.append(NativeWidget(_need(w, "type", str, wp), w.get("id"), w.get("icon"), frozenset(listeners)))
        tokens = _need(node, "imprint_tokens", list, p)
        atg.nodes[name] = kind
        attrs[name] = UiAttributes(
            owner=name,
            native_widgets=tuple(widgets),
            imprint_tokens=frozenset(tokens),
            has_webview=_need(node, "has_webview", bool, p),
            layout_depth=_need(node, "layout_depth", int, p),
            kind=kind,
        )
    for i, e in enumerate(_need(obj, "edges", list, "$")):
        p = f"$.edges[{i}]"
        s, t = _need(e, "source", str, p), _need(e, "target", str, p)
        for end, key in ((s, "source"), (t, "target")):
            if end not in atg.nodes:
                raise FormatError(f"{p}.{key}", f"unknown node {end!r}")
        units = []
        for j, u in enumerate(_need(e, "units", list, p)):
            up = f"{p}.units[{j}]"
            loc = _need(u, "location", list, up)
            if len(loc) != 3:
                raise FormatError(f"{up}.location", "expected [class, method, index]")
            units.append(TransitionUnit((str(loc[0]), str(loc[1]), int(loc[2])), _need(u, "kind", str, up),
                                        frozenset(_need(u, "callees", list, up))))
        atg.edges.add((s, t))
        atg.provenance[(s, t)] = units
    return SceneGraph(app_id, atg, attrs)


def deserialize(text: str) -> SceneGraph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("$", f"invalid JSON: {exc.msg}") from None
    return from_json_obj(obj)
