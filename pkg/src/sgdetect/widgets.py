"""Native widget identification and network imprints for web widgets.

Imprints come from a backward taint over text values: starting at a
``LoadUrl`` sink, def-use chains are followed through text operations and
across call boundaries. Constant and resource sources are instantiated and
split into URL field tokens; runtime sources are dropped and counted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

from .app_ir import (
    UI_KINDS,
    ApiCall,
    AppBundle,
    Call,
    ConstText,
    MethodIR,
    Reg,
    ResourceText,
    Return,
    RuntimeText,
    TextOp,
    instruction_dst,
)
from .atg import DEFAULT_MAX_DEPTH, CallerResolver, site_owners
from .callgraph import CallGraph, reachable_from_class
from .config import DEFAULT_STOPLIST

_DELIMS = re.compile(r"[/?&=:.]+")


class SinkNotText(ValueError):
    pass


@dataclass(frozen=True)
class NativeWidget:
    widget_type: str
    widget_id: str | None = None
    icon: str | None = None
    listeners: frozenset[str] = frozenset()


@dataclass(frozen=True)
class UiAttributes:
    owner: str
    native_widgets: tuple[NativeWidget, ...] = ()
    imprint_tokens: frozenset[str] = frozenset()
    has_webview: bool = False
    layout_depth: int = 0
    kind: str = "Activity"

    @property
    def listener_count(self) -> int:
        return sum(len(w.listeners) for w in self.native_widgets)


@dataclass(frozen=True)
class SinkLocation:
    cls: str
    method: str
    index: int

    @property
    def method_ref(self) -> str:
        return f"{self.cls}.{self.method}"


@dataclass(frozen=True)
class TaintResult:
    sink: SinkLocation
    tokens: frozenset[str]
    discarded_runtime_sources: int = 0
    depth_exhausted: bool = False


def split_tokens(text: str) -> list[str]:
    """Split a constant on URL delimiters, dropping empty pieces."""
    return [p for p in _DELIMS.split(text) if p]


# ---------------------------------------------------------------------------
# Native widgets
# ---------------------------------------------------------------------------


@dataclass
class _WidgetAcc:
    widgets: list[list] = field(default_factory=list)  # [type, id, icon, set(listeners)]
    layouts: set[str] = field(default_factory=set)
    depth: int = 0


def identify_native_widgets(
    bundle: AppBundle, cg: CallGraph, max_depth: int = DEFAULT_MAX_DEPTH, warnings: list[str] | None = None
) -> dict[str, UiAttributes]:
    """Widgets per Activity/Fragment: inflated layouts plus attached dynamic widgets."""
    layouts = bundle.layout_map()
    methods: dict[str, MethodIR] = {f"{c.name}.{m.name}": m for c in bundle.classes for m in c.methods}
    out: dict[str, UiAttributes] = {}
    for c in bundle.classes:
        if c.kind not in UI_KINDS:
            continue
        acc = _WidgetAcc()
        by_id: dict[str, list] = {}
        pending_listeners: list[tuple[str, str]] = []
        for mref in sorted(reachable_from_class(cg, c.name, max_depth)):
            m = methods[mref]
            reg_widget: dict[Reg, object] = {}
            new_widgets: dict[Reg, list] = {}
            for ins in m.instructions:
                if not isinstance(ins, ApiCall):
                    continue
                if ins.kind in ("SetContentView", "Inflate"):
                    lid = ins.args[0]
                    lay = layouts.get(lid)
                    if lay is None:
                        if warnings is not None:
                            warnings.append(f"unresolved layout {lid} in {mref}")
                        continue
                    if lid in acc.layouts:
                        continue
                    acc.layouts.add(lid)
                    acc.depth = max(acc.depth, lay.root.depth())
                    for w in lay.root.walk():
                        rec = [w.widget_type, w.widget_id, w.icon, set(w.listeners)]
                        acc.widgets.append(rec)
                        if w.widget_id:
                            by_id[w.widget_id] = rec
                elif ins.kind == "FindViewById" and ins.dst is not None:
                    reg_widget[ins.dst] = ins.args[0]
                elif ins.kind == "NewWidget" and ins.dst is not None:
                    new_widgets[ins.dst] = [ins.args[0], None, None, set()]
                elif ins.kind == "AttachWidget":
                    child = ins.args[1]
                    if isinstance(child, Reg) and child in new_widgets:
                        rec = new_widgets[child]
                        if not any(r is rec for r in acc.widgets):
                            acc.widgets.append(rec)
                            acc.depth = max(acc.depth, 1)
                elif ins.kind == "SetOnClickListener":
                    target = ins.args[0]
                    if isinstance(target, Reg):
                        if target in new_widgets:
                            new_widgets[target][3].add("OnClick")
                            continue
                        target = reg_widget.get(target)
                    if isinstance(target, str):
                        pending_listeners.append((target, mref))
        for wid, mref in pending_listeners:
            rec = by_id.get(wid)
            if rec is None:
                if warnings is not None:
                    warnings.append(f"listener target {wid} not among widgets of {c.name} ({mref})")
                continue
            rec[3].add("OnClick")
        widgets = tuple(NativeWidget(t, i, ic, frozenset(ls)) for t, i, ic, ls in acc.widgets)
        out[c.name] = UiAttributes(owner=c.name, native_widgets=widgets, layout_depth=acc.depth, kind=c.kind)
    return out


# ---------------------------------------------------------------------------
# Backward string taint
# ---------------------------------------------------------------------------


class _Taint:
    def __init__(self, bundle: AppBundle, cg: CallGraph, max_depth: int):
        self.bundle = bundle
        self.cg = cg
        self.max_depth = max_depth
        self.methods: dict[str, MethodIR] = {f"{c.name}.{m.name}": m for c in bundle.classes for m in c.methods}
        self.call_sites: dict[str, list[tuple[str, int]]] = {}
        for mref, m in sorted(self.methods.items()):
            for i, ins in enumerate(m.instructions):
                if isinstance(ins, Call) and ins.target in self.methods:
                    self.call_sites.setdefault(ins.target, []).append((mref, i))
        self.tokens: set[str] = set()
        self.runtime_sources: set[tuple] = set()
        self.depth_exhausted = False

    @staticmethod
    def reaching_def(m: MethodIR, reg: Reg, before: int) -> int | None:
        for j in range(before - 1, -1, -1):
            if instruction_dst(m.instructions[j]) == reg:
                return j
        return None

    def run(self, mref: str, reg: Reg, before: int) -> None:
        # work item: (method, register, use index, context stack, depth)
        # context frames: (caller method, call index, depth at caller)
        work = [(mref, reg, before, (), 0)]
        seen: set = set()
        while work:
            item = work.pop()
            if item in seen:
                continue
            seen.add(item)
            mref, reg, before, stack, depth = item
            m = self.methods[mref]
            j = self.reaching_def(m, reg, before)
            if j is None:
                self._param(mref, m, reg, stack, depth, work)
                continue
            ins = m.instructions[j]
            if isinstance(ins, ConstText):
                self.tokens.update(split_tokens(ins.value))
            elif isinstance(ins, ResourceText):
                text = self.bundle.resolve_text(ins.resource_id)
                if text is not None:
                    self.tokens.update(split_tokens(text))
            elif isinstance(ins, RuntimeText):
                self.runtime_sources.add((mref, j))
            elif isinstance(ins, TextOp):
                flows = ins.operands if ins.op != "replace" else (ins.operands[0], ins.operands[2])
                for r in flows:
                    work.append((mref, r, j, stack, depth))
            elif isinstance(ins, Call):
                callee = self.methods.get(ins.target)
                if callee is None:
                    self.runtime_sources.add((mref, j))
                    continue
                if depth + 1 > self.max_depth:
                    self.depth_exhausted = True
                    continue
                frame = stack + ((mref, j, depth),)
                for k, rins in enumerate(callee.instructions):
                    if isinstance(rins, Return) and rins.operand is not None:
                        work.append((ins.target, rins.operand, k, frame, depth + 1))
            # ApiCall results are not text; nothing flows from them

    def _param(self, mref, m: MethodIR, reg: Reg, stack, depth, work) -> None:
        if reg not in m.params:
            return
        k = m.params.index(reg)
        if stack:
            caller, idx, caller_depth = stack[-1]
            call = self.methods[caller].instructions[idx]
            if k < len(call.args):
                work.append((caller, call.args[k], idx, stack[:-1], caller_depth))
            return
        sites = self.call_sites.get(mref, [])
        if not sites:
            # entry-point parameter: supplied by the framework at runtime
            self.runtime_sources.add((mref, "param", k))
            return
        if depth + 1 > self.max_depth:
            self.depth_exhausted = True
            return
        for caller, idx in sites:
            call = self.methods[caller].instructions[idx]
            if k < len(call.args):
                work.append((caller, call.args[k], idx, (), depth + 1))


def backward_taint_text(
    bundle: AppBundle, cg: CallGraph, sink: SinkLocation, max_depth: int = DEFAULT_MAX_DEPTH
) -> TaintResult:
    t = _Taint(bundle, cg, max_depth)
    m = t.methods.get(sink.method_ref)
    if m is None or not (0 <= sink.index < len(m.instructions)):
        raise ValueError(f"no instruction at {sink}")
    ins = m.instructions[sink.index]
    if not (isinstance(ins, ApiCall) and ins.kind == "LoadUrl"):
        raise ValueError(f"{sink} is not a LoadUrl call")
    operand = ins.args[0]
    if not isinstance(operand, Reg):
        raise SinkNotText(f"LoadUrl operand {operand!r} is not a register")
    j = t.reaching_def(m, operand, sink.index)
    if j is not None and isinstance(m.instructions[j], ApiCall):
        raise SinkNotText(f"LoadUrl operand {operand} comes from {m.instructions[j].kind}")
    t.run(sink.method_ref, operand, sink.index)
    return TaintResult(sink, frozenset(t.tokens), len(t.runtime_sources), t.depth_exhausted)


def loadurl_sites(bundle: AppBundle) -> list[SinkLocation]:
    return [
        SinkLocation(c.name, m.name, i)
        for c in bundle.classes
        for m in c.methods
        for i, ins in enumerate(m.instructions)
        if isinstance(ins, ApiCall) and ins.kind == "LoadUrl"
    ]


@dataclass
class ImprintReport:
    tokens: dict[str, set[str]]
    webview_owners: set[str]
    results: list[TaintResult]


def imprint_report(
    bundle: AppBundle,
    cg: CallGraph,
    stoplist: Iterable[str] = DEFAULT_STOPLIST,
    max_depth: int = DEFAULT_MAX_DEPTH,
    resolver: CallerResolver | None = None,
) -> ImprintReport:
    stop = {s.lower() for s in stoplist}
    sites = loadurl_sites(bundle)
    owners = site_owners(bundle, cg, {s.method_ref for s in sites}, max_depth, resolver)
    tokens: dict[str, set[str]] = {c.name: set() for c in bundle.classes if c.kind in UI_KINDS}
    webview: set[str] = set()
    results = []
    for site in sites:
        res = backward_taint_text(bundle, cg, site, max_depth)
        results.append(res)
        kept = {tok for tok in res.tokens if tok.lower() not in stop}
        for owner in owners.get(site.method_ref, ()):
            tokens[owner] |= kept
            webview.add(owner)
    return ImprintReport(tokens, webview, results)


def generate_imprints(
    bundle: AppBundle,
    cg: CallGraph,
    stoplist: Iterable[str] = DEFAULT_STOPLIST,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> dict[str, set[str]]:
    """Imprint token set per Activity/Fragment, stoplist removed."""
    return imprint_report(bundle, cg, stoplist, max_depth).tokens


__all__ = [
    "NativeWidget",
    "SinkLocation",
    "SinkNotText",
    "TaintResult",
    "UiAttributes",
    "backward_taint_text",
    "generate_imprints",
    "identify_native_widgets",
    "imprint_report",
    "loadurl_sites",
    "split_tokens",
]
