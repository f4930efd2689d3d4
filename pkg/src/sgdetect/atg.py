"""Activity transition graph construction.

Transition units are located by API kind; each unit's callees are paired
with every caller resolved from the class whose methods reach the unit.
Fragments resolve to themselves plus the activities hosting them, inner
classes to their outer UI classes.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .app_ir import UI_KINDS, ApiCall, AppBundle, Reg
from .callgraph import CallGraph, reachable_methods

EXPLICIT_API = "ExplicitApi"
IMPLICIT_ICC = "ImplicitIcc"
SYSTEM_LISTENER = "SystemListener"
NAVIGATION = "Navigation"

START_KINDS = ("StartActivity", "StartActivityForResult")
DEFAULT_MAX_DEPTH = 10


class UnknownClass(KeyError):
    pass


@dataclass(frozen=True, order=True)
class TransitionUnit:
    location: tuple[str, str, int]  # (class, method or navgraph id, instruction index; -1 for navgraphs)
    kind: str
    callees: frozenset[str]

    @property
    def method_ref(self) -> str:
        return f"{self.location[0]}.{self.location[1]}"


@dataclass
class Atg:
    nodes: dict[str, str] = field(default_factory=dict)  # class name -> Activity | Fragment
    edges: set[tuple[str, str]] = field(default_factory=set)
    provenance: dict[tuple[str, str], list[TransitionUnit]] = field(default_factory=dict)

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(self.edges)

    def edge_list_text(self) -> str:
        return "".join(f"{a} -> {b}\n" for a, b in self.sorted_edges())


def _ui_classes(bundle: AppBundle) -> dict[str, str]:
    return {c.name: c.kind for c in bundle.classes if c.kind in UI_KINDS}


def find_transition_units(bundle: AppBundle, cg: CallGraph | None = None) -> list[TransitionUnit]:
    """All transition sites of the bundle, over-approximated (no path pruning)."""
    ui = _ui_classes(bundle)
    units: set[TransitionUnit] = set()

    def add(loc, kind, targets: Iterable[str]) -> None:
        callees = frozenset(t for t in targets if t in ui)
        if callees:
            units.add(TransitionUnit(loc, kind, callees))

    for c in bundle.classes:
        for m in c.methods:
            on_listener = m.name in c.overrides_system_listener
            intents: dict[Reg, list[tuple[int, str]]] = defaultdict(list)
            for i, ins in enumerate(m.instructions):
                if isinstance(ins, ApiCall) and ins.kind == "NewIntent" and ins.dst is not None:
                    intents[ins.dst].append((i, ins.args[0]))
            consumed: set[int] = set()
            for i, ins in enumerate(m.instructions):
                if not isinstance(ins, ApiCall):
                    continue
                if ins.kind in START_KINDS:
                    target = ins.args[0]
                    if isinstance(target, Reg):
                        # intent built anywhere in the same method
                        for j, intent_target in intents.get(target, ()):
                            if j not in consumed:
                                consumed.add(j)
                                kind = SYSTEM_LISTENER if on_listener else IMPLICIT_ICC
                                add((c.name, m.name, j), kind, [intent_target])
                    else:
                        kind = SYSTEM_LISTENER if on_listener else EXPLICIT_API
                        add((c.name, m.name, i), kind, [target])
                elif ins.kind == "NavNavigate":
                    add((c.name, m.name, i), NAVIGATION, [ins.args[0]])
    for nav in bundle.nav_graphs:
        add((nav.host_class, nav.id, -1), NAVIGATION, nav.destinations)
    return sorted(units)


def fragment_hosts(bundle: AppBundle, cg: CallGraph, max_depth: int = DEFAULT_MAX_DEPTH) -> dict[str, set[str]]:
    """Direct hosts of each fragment: classes attaching it or declaring it in a navgraph."""
    ui = _ui_classes(bundle)
    attaches: dict[str, set[str]] = defaultdict(set)  # method ref -> fragments attached there
    for c in bundle.classes:
        for m in c.methods:
            for ins in m.instructions:
                if isinstance(ins, ApiCall) and ins.kind == "AttachWidget":
                    child = ins.args[-1]
                    if isinstance(child, str) and ui.get(child) == "Fragment":
                        attaches[f"{c.name}.{m.name}"].add(child)
    hosts: dict[str, set[str]] = defaultdict(set)
    for c in bundle.classes:
        if c.kind not in UI_KINDS:
            continue
        reach: set[str] = set()
        for mref in cg.class_index.get(c.name, ()):
            reach |= reachable_methods(cg, mref, max_depth)
        for mref in reach:
            for frag in attaches.get(mref, ()):
                if frag != c.name:
                    hosts[frag].add(c.name)
    for nav in bundle.nav_graphs:
        for d in nav.destinations:
            if ui.get(d) == "Fragment" and d != nav.host_class:
                hosts[d].add(nav.host_class)
    return hosts


class CallerResolver:
    """Caller resolution shared by transitions and imprint attribution."""

    def __init__(self, bundle: AppBundle, cg: CallGraph, max_depth: int = DEFAULT_MAX_DEPTH):
        self.classes = bundle.class_map()
        self.hosts = fragment_hosts(bundle, cg, max_depth)
        self._cache: dict[str, frozenset[str]] = {}

    def owning_activities(self, fragment: str) -> set[str]:
        out: set[str] = set()
        seen = {fragment}
        stack = [fragment]
        while stack:
            cur = stack.pop()
            for h in self.hosts.get(cur, ()):
                if h in seen:
                    continue
                seen.add(h)
                kind = self.classes[h].kind
                if kind == "Activity":
                    out.add(h)
                elif kind == "Fragment":
                    stack.append(h)
        return out

    def resolve(self, cls: str) -> frozenset[str]:
        if cls not in self.classes:
            raise UnknownClass(cls)
        if cls in self._cache:
            return self._cache[cls]
        c = self.classes[cls]
        if c.kind == "Fragment":
            result = frozenset({cls} | self.owning_activities(cls))
        elif c.inner_of is not None:
            found: set[str] = set()
            seen = {cls}
            outer = c.inner_of
            while outer is not None and outer not in seen and outer in self.classes:
                seen.add(outer)
                oc = self.classes[outer]
                if oc.kind in UI_KINDS:
                    found |= self.resolve(outer) if oc.kind == "Fragment" else {outer}
                outer = oc.inner_of
            result = frozenset(found)
        else:
            result = frozenset({cls})
        self._cache[cls] = result
        return result


def resolve_callers(cls: str, bundle: AppBundle, cg: CallGraph, max_depth: int = DEFAULT_MAX_DEPTH) -> set[str]:
    return set(CallerResolver(bundle, cg, max_depth).resolve(cls))


def site_owners(
    bundle: AppBundle,
    cg: CallGraph,
    site_methods: Iterable[str],
    max_depth: int = DEFAULT_MAX_DEPTH,
    resolver: CallerResolver | None = None,
) -> dict[str, set[str]]:
    """Map each method ref holding a site to the UI classes it is attributed to."""
    wanted = set(site_methods)
    resolver = resolver or CallerResolver(bundle, cg, max_depth)
    ui = _ui_classes(bundle)
    owners: dict[str, set[str]] = {m: set() for m in wanted}
    for c in sorted(bundle.classes, key=lambda k: k.name):
        callers = {x for x in resolver.resolve(c.name) if x in ui}
        if not callers:
            continue
        for mref in cg.class_index.get(c.name, ()):
            for hit in reachable_methods(cg, mref, max_depth) & wanted:
                owners[hit] |= callers
    return owners


def build_atg(bundle: AppBundle, cg: CallGraph, max_depth: int = DEFAULT_MAX_DEPTH) -> Atg:
    ui = _ui_classes(bundle)
    atg = Atg(nodes=dict(sorted(ui.items())))
    units = find_transition_units(bundle, cg)
    resolver = CallerResolver(bundle, cg, max_depth)
    code_units = [u for u in units if u.location[2] >= 0]
    owners = site_owners(bundle, cg, {u.method_ref for u in code_units}, max_depth, resolver)

    def emit(callers: Iterable[str], unit: TransitionUnit) -> None:
        for a in sorted(callers):
            if a not in ui:
                continue
            for b in sorted(unit.callees):
                atg.edges.add((a, b))
                atg.provenance.setdefault((a, b), []).append(unit)

    for unit in code_units:
        emit(owners.get(unit.method_ref, ()), unit)
    for unit in units:
        if unit.location[2] < 0:
            emit(resolver.resolve(unit.location[0]), unit)
    atg.provenance = {k: sorted(set(v)) for k, v in sorted(atg.provenance.items())}
    return atg
