"""Method-level call graph, completed with implicit run/start pairs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .app_ir import ApiCall, AppBundle, Call, split_method_ref

DIRECT = "Direct"
IMPLICIT = "Implicit"


@dataclass(frozen=True)
class ImplicitPair:
    top_class: str
    run_method: str
    start_method: str


# Rows of the framework's asynchronous start/run pairs. The OnClickListener
# row is stored with run/start oriented the same way as the other rows.
DEFAULT_IMPLICIT_PAIRS: tuple[ImplicitPair, ...] = (
    ImplicitPair("AsyncTask", "onPreExecute", "execute"),
    ImplicitPair("AsyncTask", "doInBackground", "onPreExecute"),
    ImplicitPair("AsyncTask", "doPostExecute", "doInBackground"),
    ImplicitPair("OnClickListener", "onClick", "setOnClickListener"),
    ImplicitPair("Runnable", "run", "start"),
    ImplicitPair("Message", "handleMessage", "sendMessage"),
)

# api kind -> the start method it stands for
API_START_METHODS = {
    "AsyncExecute": "execute",
    "SetOnClickListener": "setOnClickListener",
    "ThreadStart": "start",
    "SendMessage": "sendMessage",
}


class UnknownMethod(KeyError):
    pass


@dataclass(frozen=True)
class ImplicitPairTable:
    rows: tuple[ImplicitPair, ...] = DEFAULT_IMPLICIT_PAIRS

    @classmethod
    def from_config(cls, data: dict) -> "ImplicitPairTable":
        """Build from a parsed config mapping with an ``implicit_pairs`` array of tables."""
        rows = data.get("implicit_pairs")
        if rows is None:
            return cls()
        return cls(tuple(ImplicitPair(r["top_class"], r["run_method"], r["start_method"]) for r in rows))

    @classmethod
    def load(cls, path: str | Path) -> "ImplicitPairTable":
        from .config import load_toml

        return cls.from_config(load_toml(path))

    def run_methods_for(self, start_method: str) -> list[ImplicitPair]:
        return [r for r in self.rows if r.start_method == start_method]

    def method_names(self) -> set[str]:
        return {r.run_method for r in self.rows} | {r.start_method for r in self.rows}


@dataclass
class CallGraph:
    nodes: set[str] = field(default_factory=set)
    edges: set[tuple[str, str, str]] = field(default_factory=set)
    class_index: dict[str, list[str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._succ: dict[str, list[str]] | None = None

    def successors(self, method: str) -> list[str]:
        if self._succ is None:
            succ: dict[str, set[str]] = {n: set() for n in self.nodes}
            for a, b, _ in self.edges:
                succ[a].add(b)
            self._succ = {k: sorted(v) for k, v in succ.items()}
        return self._succ.get(method, [])

    def callers_of(self, method: str) -> list[str]:
        return sorted({a for a, b, _ in self.edges if b == method})

    def dump(self) -> str:
        """Edge list text, one ``caller -> callee [kind]`` per line."""
        return "".join(f"{a} -> {b} [{k}]\n" for a, b, k in sorted(self.edges))


def build_call_graph(bundle: AppBundle, table: ImplicitPairTable | None = None) -> CallGraph:
    table = table or ImplicitPairTable()
    cg = CallGraph()
    methods_of: dict[str, set[str]] = {}
    for c in bundle.classes:
        names = [m.name for m in c.methods]
        cg.class_index[c.name] = [f"{c.name}.{n}" for n in names]
        methods_of[c.name] = set(names)
        cg.nodes.update(cg.class_index[c.name])

    def has(cls: str, meth: str) -> bool:
        return meth in methods_of.get(cls, ())

    def implicit(caller: str, target_cls: str, start: str) -> None:
        for row in table.run_methods_for(start):
            if has(target_cls, row.run_method):
                cg.edges.add((caller, f"{target_cls}.{row.run_method}", IMPLICIT))
        _chain(target_cls)

    def _chain(target_cls: str) -> None:
        # run methods that are themselves start methods of another row
        # (the AsyncTask lifecycle) are linked inside the target class.
        for row in table.rows:
            if has(target_cls, row.start_method) and has(target_cls, row.run_method):
                if any(r.run_method == row.start_method for r in table.rows):
                    cg.edges.add(
                        (f"{target_cls}.{row.start_method}", f"{target_cls}.{row.run_method}", IMPLICIT)
                    )

    for c in bundle.classes:
        for m in c.methods:
            caller = f"{c.name}.{m.name}"
            for ins in m.instructions:
                if isinstance(ins, Call):
                    tcls, tmeth = split_method_ref(ins.target)
                    # a start method is usually inherited, so it need not have a body here
                    if table.run_methods_for(tmeth):
                        implicit(caller, tcls, tmeth)
                    if has(tcls, tmeth):
                        cg.edges.add((caller, ins.target, DIRECT))
                    elif not table.run_methods_for(tmeth):
                        cg.warnings.append(f"unresolved call target {ins.target} in {caller}")
                elif isinstance(ins, ApiCall) and ins.kind in API_START_METHODS:
                    target_cls = ins.args[-1]
                    if isinstance(target_cls, str):
                        implicit(caller, target_cls, API_START_METHODS[ins.kind])
    return cg


def reachable_methods(cg: CallGraph, start: str, max_depth: int) -> set[str]:
    """Methods reachable from ``start`` in at most ``max_depth`` call hops."""
    if start not in cg.nodes:
        raise UnknownMethod(start)
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        node, d = frontier.popleft()
        if d == max_depth:
            continue
        for nxt in cg.successors(node):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    return seen


def reachable_from_class(cg: CallGraph, cls: str, max_depth: int) -> set[str]:
    out: set[str] = set()
    for m in cg.class_index.get(cls, ()):
        out |= reachable_methods(cg, m, max_depth)
    return out


def reachable_many(cg: CallGraph, starts: Iterable[str], max_depth: int) -> set[str]:
    out: set[str] = set()
    for s in starts:
        out |= reachable_methods(cg, s, max_depth)
    return out
