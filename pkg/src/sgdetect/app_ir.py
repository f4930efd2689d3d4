"""App-IR: a line-oriented text stand-in for a decompiled Android app.

A bundle file starts with the header ``appir/1`` and is made of directive
lines. Values use JSON syntax (strings, objects, arrays); registers carry a
``$`` sigil, resource ids start with ``@`` and everything else is a bare name::

    appir/1
    manifest {"package_name": "com.demo", "app_name": "Demo", "cert_digest": "ab01"}
    string @string/base_url "https://api.demo.net"
    layout @layout/main {"type": "LinearLayout", "children": [{"type": "Button", "id": "@id/go", "listeners": ["OnClick"]}]}
    navgraph @navigation/nav {"host": "MainActivity", "destinations": ["HomeFragment"]}
    class MainActivity Activity
      overrides onKeyDown
      method onCreate "()V"
        api - SetContentView @layout/main
        const $v1 "https://"
        res $v2 @string/base_url
        text $v3 concat $v1 $v2
        call $v4 Helper.build $v3
        api - LoadUrl $v4
        return
      end
    end

See ``docs/appir.md`` for the full grammar.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Union

HEADER = "appir/1"

CLASS_KINDS = ("Activity", "Fragment", "Listener", "Plain")
UI_KINDS = ("Activity", "Fragment")
LISTENER_KINDS = ("OnClick", "OnLongClick", "OnKeyDown", "Custom")
TEXT_OPS = ("append", "assign", "replace", "concat")

# api kind -> argument roles. "reg" = register, "class" = class name,
# "layout"/"widget" = resource id, "type" = widget type, "class|reg" etc. = either.
API_SIGNATURES: dict[str, tuple[str, ...]] = {
    "SetContentView": ("layout",),
    "Inflate": ("layout",),
    "FindViewById": ("widget",),
    "NewWidget": ("type",),
    "AttachWidget": ("widget|reg", "reg|class"),
    "LoadUrl": ("reg",),
    "StartActivity": ("class|reg",),
    "StartActivityForResult": ("class|reg",),
    "NewIntent": ("class",),
    "NavNavigate": ("class",),
    "SetOnClickListener": ("widget|reg", "class"),
    "ThreadStart": ("class",),
    "AsyncExecute": ("class",),
    "SendMessage": ("class",),
}
API_KINDS = tuple(API_SIGNATURES)

# Resource ids that resolve to manifest values rather than string resources.
MANIFEST_RESOURCES = ("@manifest/package_name", "@manifest/app_name")


class AppIrError(ValueError):
    """Base class for App-IR parse and validation failures."""


class AppIrSyntaxError(AppIrError):
    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class DanglingReference(AppIrError):
    def __init__(self, name: str, line: int = 0):
        super().__init__(f"dangling reference {name!r}" + (f" (line {line})" if line else ""))
        self.name = name
        self.line = line


class DuplicateName(AppIrError):
    def __init__(self, name: str, line: int = 0):
        super().__init__(f"duplicate name {name!r}" + (f" (line {line})" if line else ""))
        self.name = name
        self.line = line


class InvalidBundle(AppIrError):
    def __init__(self, violations: list["Violation"]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reg:
    """A method-local register (``$name`` in the concrete syntax)."""

    name: str

    def __str__(self) -> str:
        return "$" + self.name


Arg = Union[Reg, str]


@dataclass(frozen=True)
class ManifestInfo:
    package_name: str
    app_name: str = ""
    cert_digest: str = ""
    permissions: frozenset[str] = frozenset()
    declared_activities: frozenset[str] = frozenset()


@dataclass(frozen=True)
class WidgetNode:
    widget_type: str
    widget_id: str | None = None
    icon: str | None = None
    listeners: frozenset[str] = frozenset()
    children: tuple["WidgetNode", ...] = ()

    def walk(self) -> Iterator["WidgetNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)


@dataclass(frozen=True)
class LayoutResource:
    id: str
    root: WidgetNode
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class NavGraphResource:
    id: str
    host_class: str
    destinations: tuple[str, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ConstText:
    dst: Reg
    value: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ResourceText:
    dst: Reg
    resource_id: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RuntimeText:
    dst: Reg
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class TextOp:
    """String manipulation. ``replace`` takes (subject, pattern, replacement)."""

    dst: Reg
    op: str
    operands: tuple[Reg, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    dst: Reg | None
    target: str  # "Class.method"
    args: tuple[Reg, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ApiCall:
    dst: Reg | None
    kind: str
    args: tuple[Arg, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Return:
    operand: Reg | None = None
    line: int = field(default=0, compare=False)


Instruction = Union[ConstText, ResourceText, RuntimeText, TextOp, Call, ApiCall, Return]


@dataclass(frozen=True)
class MethodIR:
    name: str
    signature: str = "()V"
    params: tuple[Reg, ...] = ()
    instructions: tuple[Instruction, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AppClass:
    name: str
    kind: str
    inner_of: str | None = None
    methods: tuple[MethodIR, ...] = ()
    overrides_system_listener: frozenset[str] = frozenset()
    line: int = field(default=0, compare=False)

    def method(self, name: str) -> MethodIR | None:
        for m in self.methods:
            if m.name == name:
                return m
        return None


@dataclass(frozen=True)
class AppBundle:
    manifest: ManifestInfo
    layouts: tuple[LayoutResource, ...] = ()
    string_resources: tuple[tuple[str, str], ...] = ()
    nav_graphs: tuple[NavGraphResource, ...] = ()
    classes: tuple[AppClass, ...] = ()

    @property
    def strings(self) -> dict[str, str]:
        return dict(self.string_resources)

    def class_map(self) -> dict[str, AppClass]:
        return {c.name: c for c in self.classes}

    def layout_map(self) -> dict[str, LayoutResource]:
        return {lay.id: lay for lay in self.layouts}

    def resolve_text(self, resource_id: str) -> str | None:
        if resource_id == "@manifest/package_name":
            return self.manifest.package_name
        if resource_id == "@manifest/app_name":
            return self.manifest.app_name
        return self.strings.get(resource_id)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    line: int = 0

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.code}: {self.message}"


def split_method_ref(ref: str) -> tuple[str, str]:
    cls, _, meth = ref.rpartition(".")
    return cls, meth


def instruction_dst(ins: Instruction) -> Reg | None:
    return getattr(ins, "dst", None)


def instruction_uses(ins: Instruction) -> tuple[Reg, ...]:
    if isinstance(ins, TextOp):
        return ins.operands
    if isinstance(ins, Call):
        return ins.args
    if isinstance(ins, ApiCall):
        return tuple(a for a in ins.args if isinstance(a, Reg))
    if isinstance(ins, Return):
        return (ins.operand,) if ins.operand is not None else ()
    return ()


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_decoder = json.JSONDecoder()
_BARE = re.compile(r"[^\s\"\[\]{}]+")


def _tokenize(text: str, lineno: int, offset: int = 0) -> list[tuple[object, int]]:
    """Split one line into (value, col) atoms: JSON values, ``$`` registers or bare words."""
    out: list[tuple[object, int]] = []
    i = offset
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        col = i + 1
        if ch in '"[{':
            try:
                value, end = _decoder.raw_decode(text, i)
            except json.JSONDecodeError as exc:
                raise AppIrSyntaxError(f"bad JSON value: {exc.msg}", lineno, col) from None
            out.append((value, col))
            i = end
            continue
        m = _BARE.match(text, i)
        assert m is not None
        word = m.group(0)
        if word.startswith("$"):
            if len(word) == 1:
                raise AppIrSyntaxError("empty register name", lineno, col)
            out.append((Reg(word[1:]), col))
        else:
            out.append((word, col))
        i = m.end()
    return out


def _widget_from_json(obj: object, lineno: int) -> WidgetNode:
    if not isinstance(obj, dict) or "type" not in obj:
        raise AppIrSyntaxError("widget must be an object with a 'type' field", lineno)
    unknown = set(obj) - {"type", "id", "icon", "listeners", "children"}
    if unknown:
        raise AppIrSyntaxError(f"unknown widget field(s) {sorted(unknown)}", lineno)
    return WidgetNode(
        widget_type=str(obj["type"]),
        widget_id=obj.get("id"),
        icon=obj.get("icon"),
        listeners=frozenset(obj.get("listeners", ())),
        children=tuple(_widget_from_json(c, lineno) for c in obj.get("children", ())),
    )


def _widget_to_json(w: WidgetNode) -> dict:
    out: dict = {"type": w.widget_type}
    if w.widget_id is not None:
        out["id"] = w.widget_id
    if w.icon is not None:
        out["icon"] = w.icon
    if w.listeners:
        out["listeners"] = sorted(w.listeners)
    if w.children:
        out["children"] = [_widget_to_json(c) for c in w.children]
    return out


def _expect_reg(value: object, lineno: int, col: int) -> Reg:
    if not isinstance(value, Reg):
        raise AppIrSyntaxError(f"expected register, got {value!r}", lineno, col)
    return value


def _expect_name(value: object, lineno: int, col: int) -> str:
    if not isinstance(value, str) or value.startswith("@"):
        raise AppIrSyntaxError(f"expected name, got {value!r}", lineno, col)
    return value


def _opt_dst(value: object, lineno: int, col: int) -> Reg | None:
    if value == "-":
        return None
    return _expect_reg(value, lineno, col)


def _parse_instruction(atoms: list[tuple[object, int]], lineno: int) -> Instruction:
    op, col = atoms[0]
    rest = atoms[1:]

    def need(k: int) -> None:
        if len(rest) != k:
            raise AppIrSyntaxError(f"'{op}' takes {k} operand(s), got {len(rest)}", lineno, col)

    if op == "const":
        need(2)
        if not isinstance(rest[1][0], str):
            raise AppIrSyntaxError("const value must be a JSON string", lineno, rest[1][1])
        return ConstText(_expect_reg(rest[0][0], lineno, rest[0][1]), rest[1][0], line=lineno)
    if op == "res":
        need(2)
        rid = rest[1][0]
        if not (isinstance(rid, str) and rid.startswith("@")):
            raise AppIrSyntaxError("res expects a resource id", lineno, rest[1][1])
        return ResourceText(_expect_reg(rest[0][0], lineno, rest[0][1]), rid, line=lineno)
    if op == "runtime":
        need(1)
        return RuntimeText(_expect_reg(rest[0][0], lineno, rest[0][1]), line=lineno)
    if op == "text":
        if len(rest) < 3:
            raise AppIrSyntaxError("text takes dst, op and operands", lineno, col)
        dst = _expect_reg(rest[0][0], lineno, rest[0][1])
        top = rest[1][0]
        if top not in TEXT_OPS:
            raise AppIrSyntaxError(f"unknown text op {top!r}", lineno, rest[1][1])
        operands = tuple(_expect_reg(v, lineno, c) for v, c in rest[2:])
        return TextOp(dst, top, operands, line=lineno)
    if op == "call":
        if len(rest) < 2:
            raise AppIrSyntaxError("call takes dst and target", lineno, col)
        dst = _opt_dst(rest[0][0], lineno, rest[0][1])
        target = _expect_name(rest[1][0], lineno, rest[1][1])
        if "." not in target:
            raise AppIrSyntaxError("call target must be Class.method", lineno, rest[1][1])
        args = tuple(_expect_reg(v, lineno, c) for v, c in rest[2:])
        return Call(dst, target, args, line=lineno)
    if op == "api":
        if len(rest) < 2:
            raise AppIrSyntaxError("api takes dst and kind", lineno, col)
        dst = _opt_dst(rest[0][0], lineno, rest[0][1])
        kind = rest[1][0]
        if kind not in API_SIGNATURES:
            raise AppIrSyntaxError(f"unknown api kind {kind!r}", lineno, rest[1][1])
        args: list[Arg] = []
        for v, c in rest[2:]:
            if not isinstance(v, (Reg, str)):
                raise AppIrSyntaxError("api arguments must be registers or names", lineno, c)
            args.append(v)
        return ApiCall(dst, kind, tuple(args), line=lineno)
    if op == "return":
        if len(rest) > 1:
            raise AppIrSyntaxError("return takes at most one operand", lineno, col)
        operand = _expect_reg(rest[0][0], lineno, rest[0][1]) if rest else None
        return Return(operand, line=lineno)
    raise AppIrSyntaxError(f"unknown instruction {op!r}", lineno, col)


def parse_bundle(source: str, *, check: bool = True) -> AppBundle:
    """Parse App-IR text into an :class:`AppBundle`.

    With ``check`` (the default) the result is validated; the first dangling
    reference or duplicate name is raised as its own exception type and any
    other violation as :class:`InvalidBundle`.
    """
    lines = source.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise AppIrSyntaxError(f"missing '{HEADER}' header", 1)

    manifest: ManifestInfo | None = None
    layouts: list[LayoutResource] = []
    strings: list[tuple[str, str]] = []
    navs: list[NavGraphResource] = []
    classes: list[AppClass] = []

    cls: dict | None = None
    meth: dict | None = None

    for lineno, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        atoms = _tokenize(raw, lineno)
        head, col = atoms[0]
        if meth is not None:
            if head == "end":
                cls["methods"].append(
                    MethodIR(meth["name"], meth["signature"], meth["params"], tuple(meth["ins"]), line=meth["line"])
                )
                meth = None
            else:
                meth["ins"].append(_parse_instruction(atoms, lineno))
            continue
        if cls is not None:
            if head == "end":
                classes.append(
                    AppClass(
                        cls["name"], cls["kind"], cls["inner_of"], tuple(cls["methods"]),
                        frozenset(cls["overrides"]), line=cls["line"],
                    )
                )
                cls = None
            elif head == "inner_of":
                if len(atoms) != 2:
                    raise AppIrSyntaxError("inner_of takes one class name", lineno, col)
                cls["inner_of"] = _expect_name(atoms[1][0], lineno, atoms[1][1])
            elif head == "overrides":
                if len(atoms) != 2:
                    raise AppIrSyntaxError("overrides takes one method name", lineno, col)
                cls["overrides"].add(_expect_name(atoms[1][0], lineno, atoms[1][1]))
            elif head == "method":
                if len(atoms) < 2:
                    raise AppIrSyntaxError("method needs a name", lineno, col)
                name = _expect_name(atoms[1][0], lineno, atoms[1][1])
                sig = "()V"
                rest = atoms[2:]
                if rest and isinstance(rest[0][0], str):
                    sig = rest[0][0]
                    rest = rest[1:]
                params = tuple(_expect_reg(v, lineno, c) for v, c in rest)
                meth = {"name": name, "signature": sig, "params": params, "ins": [], "line": lineno}
            else:
                raise AppIrSyntaxError(f"unexpected {head!r} inside class", lineno, col)
            continue

        if head == "manifest":
            if manifest is not None:
                raise DuplicateName("manifest", lineno)
            if len(atoms) != 2 or not isinstance(atoms[1][0], dict):
                raise AppIrSyntaxError("manifest takes one JSON object", lineno, col)
            obj = atoms[1][0]
            unknown = set(obj) - {"package_name", "app_name", "cert_digest", "permissions", "declared_activities"}
            if unknown:
                raise AppIrSyntaxError(f"unknown manifest field(s) {sorted(unknown)}", lineno, col)
            manifest = ManifestInfo(
                package_name=str(obj.get("package_name", "")),
                app_name=str(obj.get("app_name", "")),
                cert_digest=str(obj.get("cert_digest", "")),
                permissions=frozenset(obj.get("permissions", ())),
                declared_activities=frozenset(obj.get("declared_activities", ())),
            )
        elif head == "string":
            if len(atoms) != 3 or not isinstance(atoms[2][0], str) or not str(atoms[1][0]).startswith("@"):
                raise AppIrSyntaxError("string takes a resource id and a JSON string", lineno, col)
            strings.append((atoms[1][0], atoms[2][0]))
        elif head == "layout":
            if len(atoms) != 3 or not str(atoms[1][0]).startswith("@"):
                raise AppIrSyntaxError("layout takes a resource id and a widget object", lineno, col)
            layouts.append(LayoutResource(atoms[1][0], _widget_from_json(atoms[2][0], lineno), line=lineno))
        elif head == "navgraph":
            if len(atoms) != 3 or not isinstance(atoms[2][0], dict) or not str(atoms[1][0]).startswith("@"):
                raise AppIrSyntaxError("navgraph takes a resource id and an object", lineno, col)
            obj = atoms[2][0]
            navs.append(
                NavGraphResource(
                    atoms[1][0], str(obj.get("host", "")), tuple(obj.get("destinations", ())), line=lineno
                )
            )
        elif head == "class":
            if len(atoms) != 3:
                raise AppIrSyntaxError("class takes a name and a kind", lineno, col)
            kind = atoms[2][0]
            if kind not in CLASS_KINDS:
                raise AppIrSyntaxError(f"unknown class kind {kind!r}", lineno, atoms[2][1])
            cls = {
                "name": _expect_name(atoms[1][0], lineno, atoms[1][1]),
                "kind": kind,
                "inner_of": None,
                "methods": [],
                "overrides": set(),
                "line": lineno,
            }
        else:
            raise AppIrSyntaxError(f"unknown directive {head!r}", lineno, col)

    if meth is not None or cls is not None:
        raise AppIrSyntaxError("unterminated class or method block", len(lines))
    if manifest is None:
        raise AppIrSyntaxError("missing manifest line", len(lines))

    bundle = AppBundle(manifest, tuple(layouts), tuple(strings), tuple(navs), tuple(classes))
    if check:
        problems = validate(bundle)
        if problems:
            first = problems[0]
            if first.code == "dangling_reference":
                raise DanglingReference(first.message.split("'")[1], first.line)
            if first.code.startswith("duplicate_"):
                raise DuplicateName(first.message.split("'")[1], first.line)
            raise InvalidBundle(problems)
    return bundle


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt_arg(a: object) -> str:
    if isinstance(a, Reg):
        return str(a)
    return str(a)


def _dump(value: object) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=False)


def format_instruction(ins: Instruction) -> str:
    if isinstance(ins, ConstText):
        return f"const {ins.dst} {_dump(ins.value)}"
    if isinstance(ins, ResourceText):
        return f"res {ins.dst} {ins.resource_id}"
    if isinstance(ins, RuntimeText):
        return f"runtime {ins.dst}"
    if isinstance(ins, TextOp):
        return " ".join(["text", str(ins.dst), ins.op, *map(str, ins.operands)])
    if isinstance(ins, Call):
        return " ".join(["call", str(ins.dst) if ins.dst else "-", ins.target, *map(str, ins.args)])
    if isinstance(ins, ApiCall):
        return " ".join(["api", str(ins.dst) if ins.dst else "-", ins.kind, *map(_fmt_arg, ins.args)])
    if isinstance(ins, Return):
        return "return" + (f" {ins.operand}" if ins.operand else "")
    raise TypeError(f"not an instruction: {ins!r}")


def serialize(bundle: AppBundle) -> str:
    m = bundle.manifest
    out = [HEADER]
    manifest = {
        "package_name": m.package_name,
        "app_name": m.app_name,
        "cert_digest": m.cert_digest,
        "permissions": sorted(m.permissions),
        "declared_activities": sorted(m.declared_activities),
    }
    out.append(f"manifest {_dump(manifest)}")
    for rid, text in bundle.string_resources:
        out.append(f"string {rid} {_dump(text)}")
    for lay in bundle.layouts:
        out.append(f"layout {lay.id} {_dump(_widget_to_json(lay.root))}")
    for nav in bundle.nav_graphs:
        out.append(f"navgraph {nav.id} {_dump({'host': nav.host_class, 'destinations': list(nav.destinations)})}")
    for c in bundle.classes:
        out.append(f"class {c.name} {c.kind}")
        if c.inner_of:
            out.append(f"  inner_of {c.inner_of}")
        for o in sorted(c.overrides_system_listener):
            out.append(f"  overrides {o}")
        for meth in c.methods:
            head = f"  method {meth.name} {_dump(meth.signature)}"
            if meth.params:
                head += " " + " ".join(map(str, meth.params))
            out.append(head)
            for ins in meth.instructions:
                out.append("    " + format_instruction(ins))
            out.append("  end")
        out.append("end")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _arg_matches(role: str, arg: Arg) -> bool:
    for alt in role.split("|"):
        if alt == "reg" and isinstance(arg, Reg):
            return True
        if isinstance(arg, Reg):
            continue
        if alt in ("layout", "widget") and arg.startswith("@"):
            return True
        if alt in ("class", "type") and not arg.startswith("@"):
            return True
    return False


def validate(bundle: AppBundle) -> list[Violation]:
    """Check every bundle invariant; an empty list means the bundle is valid."""
    v: list[Violation] = []
    classes: dict[str, AppClass] = {}
    for c in bundle.classes:
        if c.name in classes:
            v.append(Violation("duplicate_class", f"class '{c.name}' declared twice", c.line))
        else:
            classes[c.name] = c

    m = bundle.manifest
    if not m.package_name:
        v.append(Violation("empty_package_name", "manifest package_name is empty"))
    for act in sorted(m.declared_activities):
        if act not in classes:
            v.append(Violation("dangling_reference", f"declared activity '{act}' is not a class"))
        elif classes[act].kind != "Activity":
            v.append(Violation("declared_not_activity", f"declared activity '{act}' has kind {classes[act].kind}"))

    strings_seen: set[str] = set()
    for rid, _ in bundle.string_resources:
        if rid in strings_seen:
            v.append(Violation("duplicate_resource", f"string resource '{rid}' declared twice"))
        strings_seen.add(rid)

    layout_ids: set[str] = set()
    widget_ids: set[str] = set()
    for lay in bundle.layouts:
        if lay.id in layout_ids:
            v.append(Violation("duplicate_resource", f"layout '{lay.id}' declared twice", lay.line))
        layout_ids.add(lay.id)
        local: set[str] = set()
        for w in lay.root.walk():
            if w.widget_id is not None:
                if w.widget_id in local:
                    v.append(Violation("duplicate_widget_id", f"widget id '{w.widget_id}' repeated in {lay.id}", lay.line))
                local.add(w.widget_id)
            bad = set(w.listeners) - set(LISTENER_KINDS)
            if bad:
                v.append(Violation("unknown_listener", f"listener kind(s) {sorted(bad)} in {lay.id}", lay.line))
        widget_ids |= local

    nav_ids: set[str] = set()
    for nav in bundle.nav_graphs:
        if nav.id in nav_ids:
            v.append(Violation("duplicate_resource", f"navgraph '{nav.id}' declared twice", nav.line))
        nav_ids.add(nav.id)
        if nav.host_class not in classes:
            v.append(Violation("dangling_reference", f"navgraph host '{nav.host_class}' is not a class", nav.line))
        elif classes[nav.host_class].kind not in UI_KINDS:
            v.append(Violation("nav_host_kind", f"navgraph host '{nav.host_class}' is not an Activity/Fragment", nav.line))
        if not nav.destinations:
            v.append(Violation("nav_empty", f"navgraph '{nav.id}' has no destinations", nav.line))
        for d in nav.destinations:
            if d not in classes:
                v.append(Violation("dangling_reference", f"navgraph destination '{d}' is not a class", nav.line))

    for c in classes.values():
        if c.inner_of is not None:
            if c.inner_of == c.name:
                v.append(Violation("inner_of_cycle", f"class '{c.name}' is inner of itself", c.line))
            elif c.inner_of not in classes:
                v.append(Violation("dangling_reference", f"inner_of '{c.inner_of}' of class '{c.name}' is not a class", c.line))
        seen_methods: set[str] = set()
        for meth in c.methods:
            if meth.name in seen_methods:
                v.append(Violation("duplicate_method", f"method '{c.name}.{meth.name}' declared twice", meth.line))
            seen_methods.add(meth.name)
            v.extend(_validate_method(bundle, classes, layout_ids, widget_ids, c, meth))

    # longer inner_of cycles
    for c in classes.values():
        seen = {c.name}
        cur = c.inner_of
        while cur is not None and cur in classes and cur != c.name:
            if cur in seen:
                break
            seen.add(cur)
            cur = classes[cur].inner_of
        if cur == c.name and c.inner_of != c.name:
            v.append(Violation("inner_of_cycle", f"class '{c.name}' is transitively inner of itself", c.line))
    return v


def _validate_method(bundle, classes, layout_ids, widget_ids, c: AppClass, meth: MethodIR) -> list[Violation]:
    v: list[Violation] = []
    defined = set(meth.params)
    where = f"{c.name}.{meth.name}"
    for ins in meth.instructions:
        for r in instruction_uses(ins):
            if r not in defined:
                v.append(Violation("undefined_register", f"register '{r}' used before definition in {where}", ins.line))
        if isinstance(ins, ResourceText):
            if ins.resource_id not in MANIFEST_RESOURCES and bundle.resolve_text(ins.resource_id) is None:
                v.append(Violation("dangling_reference", f"string resource '{ins.resource_id}' in {where}", ins.line))
        elif isinstance(ins, TextOp):
            arity = {"assign": (1, 1), "replace": (3, 3), "append": (2, None), "concat": (2, None)}[ins.op]
            lo, hi = arity
            if len(ins.operands) < lo or (hi is not None and len(ins.operands) > hi):
                v.append(Violation("bad_arity", f"text {ins.op} with {len(ins.operands)} operands in {where}", ins.line))
        elif isinstance(ins, Call):
            pass  # unresolved call targets are tolerated; the call graph records them
        elif isinstance(ins, ApiCall):
            roles = API_SIGNATURES[ins.kind]
            if len(ins.args) != len(roles):
                v.append(Violation("bad_arity", f"{ins.kind} takes {len(roles)} argument(s) in {where}", ins.line))
            else:
                for role, arg in zip(roles, ins.args):
                    if not _arg_matches(role, arg):
                        v.append(Violation("bad_argument", f"{ins.kind} argument {arg} is not a {role} in {where}", ins.line))
                        continue
                    if isinstance(arg, Reg):
                        continue
                    if role == "layout" and arg not in layout_ids:
                        v.append(Violation("dangling_reference", f"layout '{arg}' in {where}", ins.line))
                    elif "widget" in role and arg.startswith("@") and arg not in widget_ids:
                        v.append(Violation("dangling_reference", f"widget id '{arg}' in {where}", ins.line))
                    elif "class" in role and not arg.startswith("@") and arg not in classes:
                        v.append(Violation("dangling_reference", f"class '{arg}' in {where}", ins.line))
        dst = instruction_dst(ins)
        if dst is not None:
            defined.add(dst)
    return v


# ---------------------------------------------------------------------------
# Rename obfuscation
# ---------------------------------------------------------------------------

# Methods overriding framework callbacks keep their names, as a shrinker would.
FRAMEWORK_METHODS = frozenset(
    {
        "onCreate", "onStart", "onResume", "onPause", "onStop", "onDestroy", "onCreateView",
        "onViewCreated", "onKeyDown", "onBackPressed", "onClick", "onLongClick", "run",
        "start", "execute", "onPreExecute", "doInBackground", "doPostExecute", "onPostExecute",
        "handleMessage", "sendMessage", "setOnClickListener", "OnClick",
    }
)


def _name_stream(rng: random.Random) -> Iterator[str]:
    """Yield short, unique, seed-shuffled identifiers (a, b, ..., ba, bb, ...)."""
    alphabet = list("abcdefghijklmnopqrstuvwxyz")
    length = 1
    while True:
        pool = [""]
        for _ in range(length):
            pool = [p + ch for p in pool for ch in alphabet]
        rng.shuffle(pool)
        yield from pool
        length += 1


@dataclass(frozen=True)
class RenameMap:
    classes: dict[str, str]
    methods: dict[str, str]
    widget_ids: dict[str, str]

    def cls(self, name: str) -> str:
        return self.classes.get(name, name)

    def method_ref(self, ref: str) -> str:
        c, m = split_method_ref(ref)
        return f"{self.cls(c)}.{self.methods.get(m, m)}"


def rename_map_for(bundle: AppBundle, seed: int, preserve: Iterable[str] = ()) -> RenameMap:
    rng = random.Random(seed)
    keep = set(FRAMEWORK_METHODS) | set(preserve)
    for c in bundle.classes:
        keep |= set(c.overrides_system_listener)
    taken = set(keep)
    names = _name_stream(rng)

    def fresh() -> str:
        while True:
            n = next(names)
            if n not in taken:
                taken.add(n)
                return n

    class_map = {c.name: "C" + fresh() for c in bundle.classes}
    method_names = sorted({m.name for c in bundle.classes for m in c.methods} - keep)
    method_map = {name: fresh() for name in method_names}
    wids = sorted({w.widget_id for lay in bundle.layouts for w in lay.root.walk() if w.widget_id})
    widget_map = {wid: "@id/" + fresh() for wid in wids}
    return RenameMap(class_map, method_map, widget_map)


def apply_rename_obfuscation(bundle: AppBundle, seed: int, preserve: Iterable[str] = ()) -> AppBundle:
    """Return ``bundle`` with class names, method names and widget ids renamed.

    The mapping is a seeded bijection (see :func:`rename_map_for`). Constant
    text, resources, api kinds and all structure are left as they are. Method
    names that override framework callbacks are kept.
    """
    return rename_with_map(bundle, rename_map_for(bundle, seed, preserve))


def rename_with_map(bundle: AppBundle, rm: RenameMap) -> AppBundle:
    def widget(w: WidgetNode) -> WidgetNode:
        return replace(
            w,
            widget_id=rm.widget_ids.get(w.widget_id, w.widget_id) if w.widget_id else None,
            children=tuple(widget(ch) for ch in w.children),
        )

    def arg(kind: str, role: str, a: Arg) -> Arg:
        if isinstance(a, Reg):
            return a
        if a.startswith("@"):
            return rm.widget_ids.get(a, a)
        if "class" in role:
            return rm.cls(a)
        return a

    def ins(i: Instruction) -> Instruction:
        if isinstance(i, Call):
            return replace(i, target=rm.method_ref(i.target))
        if isinstance(i, ApiCall):
            roles = API_SIGNATURES[i.kind]
            return replace(i, args=tuple(arg(i.kind, r, a) for r, a in zip(roles, i.args)))
        return i

    m = bundle.manifest
    manifest = replace(m, declared_activities=frozenset(rm.cls(a) for a in m.declared_activities))
    classes = tuple(
        replace(
            c,
            name=rm.cls(c.name),
            inner_of=rm.cls(c.inner_of) if c.inner_of else None,
            methods=tuple(
                replace(mt, name=rm.methods.get(mt.name, mt.name), instructions=tuple(ins(i) for i in mt.instructions))
                for mt in c.methods
            ),
        )
        for c in bundle.classes
    )
    return AppBundle(
        manifest=manifest,
        layouts=tuple(replace(lay, root=widget(lay.root)) for lay in bundle.layouts),
        string_resources=bundle.string_resources,
        nav_graphs=tuple(
            replace(n, host_class=rm.cls(n.host_class), destinations=tuple(rm.cls(d) for d in n.destinations))
            for n in bundle.nav_graphs
        ),
        classes=classes,
    )
