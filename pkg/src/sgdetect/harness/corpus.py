"""Synthetic corpus: five hand-designed benchmark apps plus labeled app families.

Every bundle is produced by :class:`AppBuilder`, which records what it plants
(transitions, widgets, URL constants) while emitting IR. Ground truth sidecars
come from those records, never from running the analysis.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .. import app_ir as ir
from ..app_ir import ApiCall, Call, ConstText, Reg, ResourceText, Return, RuntimeText, TextOp
from ..config import DEFAULT_STOPLIST
from ..detector import LABELS
from ..widgets import split_tokens

TRUTH_FORMAT = "truth/1"
CORPUS_FORMAT = "corpus/1"

# transition mechanisms understood by AppBuilder.transition
MECHANISMS = ("explicit", "for_result", "intent", "key", "click", "async", "thread", "handler", "helper")


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------


@dataclass
class _Method:
    params: tuple[Reg, ...] = ()
    body: list = field(default_factory=list)


@dataclass
class _Class:
    name: str
    kind: str
    inner_of: str | None = None
    methods: dict[str, _Method] = field(default_factory=dict)
    overrides: set[str] = field(default_factory=set)


@dataclass
class _Widget:
    type: str
    id: str | None = None
    listeners: set[str] = field(default_factory=set)
    children: list["_Widget"] = field(default_factory=list)

    def to_node(self) -> ir.WidgetNode:
        return ir.WidgetNode(
            self.type, self.id, None, frozenset(self.listeners), tuple(c.to_node() for c in self.children)
        )

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


class AppBuilder:
    """Emit App-IR while recording the planted ground truth."""

    def __init__(self, package: str, app_name: str = "", cert: str = "", permissions: Iterable[str] = ()):
        self.package = package
        self.app_name = app_name
        self.cert = cert
        self.permissions = set(permissions)
        self.classes: dict[str, _Class] = {}
        self.layouts: dict[str, _Widget] = {}  # owner class -> root widget
        self.dynamic: dict[str, list[_Widget]] = {}
        self.strings: list[tuple[str, str]] = []
        self.navs: list[tuple[str, str, tuple[str, ...]]] = []
        self.hosts: dict[str, set[str]] = {}  # fragment -> direct hosts
        self.units: list[tuple[str, tuple[str, ...], bool]] = []  # (site class, targets, over depth)
        self.web_sites: list[tuple[str, list[str]]] = []  # (site class, planted tokens)
        self._n = 0

    # -- structure ---------------------------------------------------------

    def _fresh(self, prefix: str) -> str:
        self._n += 1
        return f"{prefix}{self._n}"

    def _class(self, name: str, kind: str, inner_of: str | None = None) -> _Class:
        if name in self.classes:
            return self.classes[name]
        c = _Class(name, kind, inner_of)
        self.classes[name] = c
        return c

    def _method(self, cls: str, name: str, params: tuple[Reg, ...] = ()) -> list:
        c = self.classes[cls]
        if name not in c.methods:
            c.methods[name] = _Method(params)
        return c.methods[name].body

    def entry(self, cls: str) -> list:
        """Body of the class's creation callback (layout is set up on first use)."""
        c = self.classes[cls]
        name = "onCreate" if c.kind == "Activity" else "onCreateView"
        fresh = name not in c.methods
        body = self._method(cls, name)
        if fresh:
            lid = f"@layout/{cls.lower()}"
            kind = "SetContentView" if c.kind == "Activity" else "Inflate"
            body.append(ApiCall(None, kind, (lid,)))
            self.layouts[cls] = _Widget("LinearLayout", f"@id/{cls.lower()}_root")
        return body

    def activity(self, name: str) -> str:
        self._class(name, "Activity")
        self.entry(name)
        return name

    def fragment(self, name: str) -> str:
        self._class(name, "Fragment")
        self.entry(name)
        return name

    def widget(self, owner: str, wtype: str, wid: str | None = None, listeners=(), parent: _Widget | None = None) -> _Widget:
        self.entry(owner)
        w = _Widget(wtype, wid, set(listeners))
        (parent or self.layouts[owner]).children.append(w)
        return w

    def dynamic_widget(self, owner: str, wtype: str) -> None:
        body = self.entry(owner)
        r = Reg(self._fresh("w"))
        body.append(ApiCall(r, "NewWidget", (wtype,)))
        body.append(ApiCall(None, "AttachWidget", (self.layouts[owner].id, r)))
        self.dynamic.setdefault(owner, []).append(_Widget(wtype))

    def host(self, activity: str, fragment: str) -> None:
        """Attach ``fragment`` into a container of ``activity``'s layout."""
        cid = f"@id/{fragment.lower()}_box"
        if not any(w.id == cid for w in self.layouts[activity].walk()):
            self.widget(activity, "FrameLayout", cid)
        self.entry(activity).append(ApiCall(None, "AttachWidget", (cid, fragment)))
        self.hosts.setdefault(fragment, set()).add(activity)

    def navgraph(self, host: str, destinations: list[str], nav_id: str | None = None) -> None:
        nav_id = nav_id or f"@navigation/{host.lower()}_nav{len(self.navs)}"
        self.navs.append((nav_id, host, tuple(destinations)))
        for d in destinations:
            if self.classes[d].kind == "Fragment" and d != host:
                self.hosts.setdefault(d, set()).add(host)
        self.units.append((host, tuple(destinations), False))

    # -- transitions -------------------------------------------------------

    def transition(self, src: str, dst: str, mech: str = "explicit", depth: int = 2) -> None:
        body = self.entry(src)
        start = [ApiCall(None, "StartActivity", (dst,))]
        over = False
        if mech == "explicit":
            body.extend(start)
        elif mech == "for_result":
            body.append(ApiCall(None, "StartActivityForResult", (dst,)))
        elif mech == "intent":
            r = Reg(self._fresh("i"))
            body.extend([ApiCall(r, "NewIntent", (dst,)), ApiCall(None, "StartActivity", (r,))])
        elif mech == "navigate":
            body.append(ApiCall(None, "NavNavigate", (dst,)))
        elif mech == "key":
            self.classes[src].overrides.add("onKeyDown")
            r = Reg(self._fresh("k"))
            self._method(src, "onKeyDown").extend(
                [ApiCall(r, "NewIntent", (dst,)), ApiCall(None, "StartActivity", (r,))]
            )
        elif mech in ("click", "deep"):
            lname = self._fresh(f"{src}Click")
            self._class(lname, "Listener", inner_of=src)
            wid = f"@id/{lname.lower()}_btn"
            self.widget(src, "Button", wid, ["OnClick"])
            body.append(ApiCall(None, "SetOnClickListener", (wid, lname)))
            on_click = self._method(lname, "onClick")
            if mech == "click":
                on_click.extend(start)
            else:
                # onClick -> f1 -> ... -> f10 -> actionStart: eleven hops to the site
                chain = self._fresh("Chain")
                self._class(chain, "Plain")
                on_click.append(Call(None, f"{chain}.f1"))
                for k in range(1, 11):
                    nxt = f"f{k + 1}" if k < 10 else "actionStart"
                    self._method(chain, f"f{k}").append(Call(None, f"{chain}.{nxt}"))
                self._method(chain, "actionStart").extend(start)
                over = True
        elif mech == "async":
            task = self._fresh(f"{src}Task")
            self._class(task, "Plain")
            self._method(task, "onPreExecute")
            self._method(task, "doInBackground")
            self._method(task, "doPostExecute").extend(start)
            body.append(ApiCall(None, "AsyncExecute", (task,)))
        elif mech == "thread":
            runner = self._fresh(f"{src}Runner")
            self._class(runner, "Plain")
            self._method(runner, "run").extend(start)
            body.append(ApiCall(None, "ThreadStart", (runner,)))
        elif mech == "handler":
            handler = self._fresh(f"{src}Handler")
            self._class(handler, "Plain")
            self._method(handler, "handleMessage").extend(start)
            body.append(ApiCall(None, "SendMessage", (handler,)))
        elif mech == "helper":
            nav = self._fresh("Router")
            self._class(nav, "Plain")
            body.append(Call(None, f"{nav}.go0"))
            for k in range(depth - 1):
                self._method(nav, f"go{k}").append(Call(None, f"{nav}.go{k + 1}"))
            self._method(nav, f"go{depth - 1}").extend(start)
        else:
            raise ValueError(f"unknown mechanism {mech!r}")
        self.units.append((src, (dst,), over))

    # -- web widgets -------------------------------------------------------

    def web(self, src: str, pieces: list[tuple], helper: bool = False, replace_marker: str | None = None) -> None:
        """Build a URL from ``pieces`` and load it into a WebView of ``src``.

        Pieces: ("const", text), ("res", text), ("manifest", "package_name"
        or "app_name"), ("runtime",). With ``helper`` the last two parts are
        joined by a Plain helper method, exercising the inter-procedural path.
        With ``replace_marker`` a placeholder constant is swapped for the
        final part via ``replace`` (the placeholder itself carries no tokens).
        """
        body = self.entry(src)
        self.widget(src, "WebView", f"@id/{src.lower()}_web{len(self.web_sites)}")
        planted: list[str] = []
        regs: list[Reg] = []
        for p in pieces:
            r = Reg(self._fresh("s"))
            if p[0] == "const":
                body.append(ConstText(r, p[1]))
                planted += split_tokens(p[1])
            elif p[0] == "res":
                rid = f"@string/{self._fresh('url_')}"
                self.strings.append((rid, p[1]))
                body.append(ResourceText(r, rid))
                planted += split_tokens(p[1])
            elif p[0] == "manifest":
                body.append(ResourceText(r, f"@manifest/{p[1]}"))
                planted += split_tokens(self.package if p[1] == "package_name" else self.app_name)
            elif p[0] == "runtime":
                body.append(RuntimeText(r))
            else:
                raise ValueError(f"unknown url piece {p!r}")
            regs.append(r)
        if helper and len(regs) >= 2:
            hname = self._fresh("UrlHelper")
            self._class(hname, "Plain")
            a, b = Reg("a"), Reg("b")
            hb = self._method(hname, "build", (a, b))
            hb.extend([TextOp(Reg("r"), "concat", (a, b)), Return(Reg("r"))])
            joined = Reg(self._fresh("s"))
            body.append(Call(joined, f"{hname}.build", (regs[-2], regs[-1])))
            regs = regs[:-2] + [joined]
        acc = regs[0]
        for r in regs[1:]:
            nxt = Reg(self._fresh("s"))
            body.append(TextOp(nxt, "append", (acc, r)))
            acc = nxt
        if replace_marker is not None:
            marker, rep, out = Reg(self._fresh("s")), Reg(self._fresh("s")), Reg(self._fresh("s"))
            body.append(ConstText(marker, "{" + replace_marker + "}"))
            rep_text = "lang=zh"
            body.append(ConstText(rep, rep_text))
            body.append(TextOp(out, "replace", (acc, marker, rep)))
            planted += split_tokens(rep_text)
            acc = out
        body.append(ApiCall(None, "LoadUrl", (acc,)))
        self.web_sites.append((src, planted))

    # -- output ------------------------------------------------------------

    def callers(self, cls: str) -> set[str]:
        """Design-level owners of a site: the class plus every activity hosting it."""
        if self.classes[cls].kind != "Fragment":
            return {cls}
        out, seen, stack = {cls}, {cls}, [cls]
        while stack:
            for h in self.hosts.get(stack.pop(), ()):
                if h not in seen:
                    seen.add(h)
                    stack.append(h)
                    if self.classes[h].kind == "Activity":
                        out.add(h)
        return out

    def bundle(self) -> ir.AppBundle:
        classes = []
        for c in self.classes.values():
            methods = []
            for name, m in c.methods.items():
                sig = "(" + ",".join(p.name for p in m.params) + ")"
                methods.append(ir.MethodIR(name, sig, m.params, tuple(m.body)))
            classes.append(ir.AppClass(c.name, c.kind, c.inner_of, tuple(methods), frozenset(c.overrides)))
        layouts = tuple(ir.LayoutResource(f"@layout/{owner.lower()}", root.to_node()) for owner, root in self.layouts.items())
        manifest = ir.ManifestInfo(
            self.package, self.app_name, self.cert, frozenset(self.permissions),
            frozenset(c.name for c in self.classes.values() if c.kind == "Activity"),
        )
        navs = tuple(ir.NavGraphResource(i, h, d) for i, h, d in self.navs)
        return ir.AppBundle(manifest, layouts, tuple(self.strings), navs, tuple(classes))

    def truth(self, app_id: str, label: str | None = None, stoplist=DEFAULT_STOPLIST) -> dict:
        edges: set[tuple[str, str]] = set()
        over: set[tuple[str, str]] = set()
        for src, targets, deep in self.units:
            for a in self.callers(src):
                for b in targets:
                    (over if deep else edges).add((a, b))
        over -= edges
        stop = {s.lower() for s in stoplist}
        tokens: dict[str, set[str]] = {c: set() for c, k in self.classes.items() if k.kind in ir.UI_KINDS}
        for src, planted in self.web_sites:
            for owner in self.callers(src):
                tokens[owner] |= {t for t in planted if t.lower() not in stop}
        widgets = {}
        for c, k in self.classes.items():
            if k.kind not in ir.UI_KINDS:
                continue
            ws = list(self.layouts[c].walk()) if c in self.layouts else []
            ws += self.dynamic.get(c, [])
            widgets[c] = sorted(
                ({"type": w.type, "id": w.id, "listeners": sorted(w.listeners)} for w in ws),
                key=lambda d: (d["type"], d["id"] or "", d["listeners"]),
            )
        all_tokens = sorted(set().union(*tokens.values())) if tokens else []
        return {
            "format": TRUTH_FORMAT,
            "app_id": app_id,
            "label": label,
            "class_count": len(self.classes),
            "nodes": {c: k.kind for c, k in sorted(self.classes.items()) if k.kind in ir.UI_KINDS},
            "edges": sorted([list(e) for e in edges]),
            "over_depth_edges": sorted([list(e) for e in over]),
            "widgets": dict(sorted(widgets.items())),
            "tokens": {k: sorted(v) for k, v in sorted(tokens.items())},
            "all_tokens": all_tokens,
            "transition_sites": len(self.units),
        }


# ---------------------------------------------------------------------------
# Benchmark templates
# ---------------------------------------------------------------------------

BENCHMARK_EDGE_COUNTS = {"App1": 13, "App2": 13, "App3": 13, "App4": 12, "App5": 11}
BENCHMARK_TOKEN_TOTAL = 36


def _bench_manifest(name: str) -> AppBuilder:
    return AppBuilder(f"com.bench.{name.lower()}", name, hashlib.sha256(name.encode()).hexdigest()[:16])


def template_app1() -> AppBuilder:
    """Activity to activity transitions through every trigger mechanism."""
    b = _bench_manifest("App1")
    for a in ("Main", "Login", "Register", "Home", "Profile", "Settings", "About", "Detail", "Pay"):
        b.activity(a + "Activity")
    A = lambda s: s + "Activity"  # noqa: E731
    plan = [
        ("Main", "Login", "explicit"), ("Main", "Register", "intent"), ("Login", "Home", "click"),
        ("Register", "Login", "for_result"), ("Home", "Profile", "async"), ("Home", "Settings", "thread"),
        ("Home", "Detail", "handler"), ("Profile", "Settings", "helper"), ("Settings", "About", "key"),
        ("Settings", "Main", "explicit"), ("Detail", "Pay", "click"), ("Pay", "Home", "intent"),
        ("About", "Main", "key"),
    ]
    for s, d, m in plan:
        b.transition(A(s), A(d), m)
    for a in ("Main", "Login", "Register", "Profile"):
        b.widget(A(a), "TextView", f"@id/{a.lower()}_title")
    b.widget(A("Login"), "EditText", "@id/user")
    b.widget(A("Login"), "EditText", "@id/password")
    b.dynamic_widget(A("Home"), "ImageView")
    b.web(A("Pay"), [("const", "https://pay.quickloan8.com/gateway?order="), ("runtime",)])
    b.web(A("Detail"), [("res", "http://cdn.quickloan8.com/api"), ("const", "/detail")])
    return b


def template_app2() -> AppBuilder:
    """Transitions between activities and (unhosted) fragments in both directions."""
    b = _bench_manifest("App2")
    for a in ("MainActivity", "ShopActivity"):
        b.activity(a)
    for f in ("HomeFragment", "ListFragment", "CartFragment", "MeFragment", "PayFragment"):
        b.fragment(f)
    plan = [
        ("MainActivity", "HomeFragment", "explicit"), ("MainActivity", "ListFragment", "intent"),
        ("MainActivity", "CartFragment", "click"), ("ShopActivity", "ListFragment", "async"),
        ("ShopActivity", "PayFragment", "thread"), ("ShopActivity", "MeFragment", "handler"),
        ("HomeFragment", "ShopActivity", "explicit"), ("ListFragment", "ShopActivity", "intent"),
        ("CartFragment", "MainActivity", "key"), ("MeFragment", "MainActivity", "helper"),
        ("PayFragment", "MainActivity", "click"), ("PayFragment", "ShopActivity", "for_result"),
        ("HomeFragment", "MainActivity", "async"),
    ]
    for s, d, m in plan:
        b.transition(s, d, m)
    b.widget("ListFragment", "RecyclerView", "@id/items")
    b.widget("CartFragment", "CheckBox", "@id/all")
    b.web("HomeFragment", [("const", "https://m.shop-demo.net/"), ("manifest", "app_name")])
    b.web("PayFragment", [("const", "https://"), ("res", "cashier.paydemo.cn"), ("runtime",)], helper=True)
    return b


def template_app3() -> AppBuilder:
    """Fragment to fragment transitions; the first fragment is hosted by the launcher."""
    b = _bench_manifest("App3")
    b.activity("MainActivity")
    frags = ("HomeFragment", "NewsFragment", "VideoFragment", "ChatFragment", "MineFragment", "DetailFragment")
    for f in frags:
        b.fragment(f)
    b.host("MainActivity", "HomeFragment")
    plan = [
        ("HomeFragment", "NewsFragment", "explicit"), ("HomeFragment", "VideoFragment", "intent"),
        ("NewsFragment", "VideoFragment", "click"), ("NewsFragment", "ChatFragment", "async"),
        ("VideoFragment", "ChatFragment", "thread"), ("VideoFragment", "MineFragment", "handler"),
        ("ChatFragment", "MineFragment", "helper"), ("ChatFragment", "DetailFragment", "key"),
        ("MineFragment", "DetailFragment", "explicit"), ("DetailFragment", "HomeFragment", "intent"),
        ("MineFragment", "NewsFragment", "for_result"),
    ]
    for s, d, m in plan:
        b.transition(s, d, m)
    b.widget("VideoFragment", "VideoView", "@id/player")
    b.web("VideoFragment", [("const", "https://v.kanpian99.tv/play/"), ("runtime",)])
    b.web("ChatFragment", [("const", "https://im.kanpian99.tv/"), ("runtime",)], replace_marker="lang")
    return b


def template_app4() -> AppBuilder:
    """Navigation graphs and navigation-controller calls."""
    b = _bench_manifest("App4")
    b.activity("NavActivity")
    for f in ("HomeFragment", "DashFragment", "NotifyFragment", "ListFragment", "ItemFragment"):
        b.fragment(f)
    b.navgraph("NavActivity", ["HomeFragment", "DashFragment", "NotifyFragment"], "@navigation/main")
    b.navgraph("DashFragment", ["ListFragment", "ItemFragment"], "@navigation/dash")
    for s, d in (("HomeFragment", "DashFragment"), ("DashFragment", "NotifyFragment"),
                 ("ListFragment", "ItemFragment"), ("ItemFragment", "HomeFragment"),
                 ("NotifyFragment", "HomeFragment")):
        b.transition(s, d, "navigate")
    b.widget("HomeFragment", "BottomNavigationView", "@id/bottom")
    b.web("NotifyFragment", [("res", "https://push.notify-center.org/msg"), ("const", "&token="), ("runtime",)])
    b.web("ItemFragment", [("const", "http://www.github.com/"), ("const", "item"), ("runtime",)])
    return b


def template_app5() -> AppBuilder:
    """All transition kinds together, plus one call chain beyond the depth bound."""
    b = _bench_manifest("App5")
    for a in ("MainActivity", "LoginActivity", "PayActivity", "UserActivity"):
        b.activity(a)
    for f in ("HomeFragment", "ShopFragment", "CartFragment", "ProfileFragment", "SettingsFragment"):
        b.fragment(f)
    plan = [
        ("MainActivity", "LoginActivity", "explicit"), ("LoginActivity", "MainActivity", "key"),
        ("MainActivity", "HomeFragment", "click"), ("HomeFragment", "ShopFragment", "intent"),
        ("ShopFragment", "CartFragment", "async"), ("CartFragment", "PayActivity", "thread"),
        ("PayActivity", "MainActivity", "handler"),
    ]
    for s, d, m in plan:
        b.transition(s, d, m)
    b.navgraph("UserActivity", ["ProfileFragment"], "@navigation/user")
    b.transition("UserActivity", "SettingsFragment", "navigate")
    b.transition("SettingsFragment", "LoginActivity", "explicit")
    b.transition("MainActivity", "UserActivity", "deep")
    b.widget("LoginActivity", "EditText", "@id/phone")
    b.dynamic_widget("ShopFragment", "ImageView")
    b.web("ShopFragment", [("manifest", "package_name"), ("const", "/shop"), ("runtime",)])
    b.web("PayActivity", [("const", "https://pay5.cc/"), ("res", "order")], helper=True)
    return b


BENCHMARK_TEMPLATES = {
    "App1": template_app1,
    "App2": template_app2,
    "App3": template_app3,
    "App4": template_app4,
    "App5": template_app5,
}


# ---------------------------------------------------------------------------
# Labeled families
# ---------------------------------------------------------------------------

GENERIC_TOKENS = ("api", "cdn", "static", "img", "v1", "v2", "index", "m", "h5", "app", "com", "cn", "net")
FAMILY_TOKENS = {
    "GamblingGame": ("bet", "casino", "lottery", "slot", "odds", "jackpot", "recharge", "baccarat", "poker", "win88"),
    "Porn": ("video", "vip", "live", "av", "hot", "91kan", "player", "fans", "night", "chat18"),
    "InvestmentScam": ("loan", "credit", "apply", "quota", "bank", "repay", "fund", "cash", "invest", "profit"),
    "Miscellaneous": ("task", "reward", "invite", "coin", "sign", "withdraw", "share", "lucky", "mission", "bonus"),
    "Legitimate": ("docs", "help", "news", "weather", "map", "music", "account", "feedback", "search", "mail"),
}
FAMILY_WIDGETS = {
    "GamblingGame": ("ImageView", "ImageButton", "TextView", "GridView"),
    "Porn": ("VideoView", "ImageView", "TextView", "RecyclerView"),
    "InvestmentScam": ("EditText", "Button", "TextView", "CheckBox"),
    "Miscellaneous": ("Button", "TextView", "ProgressBar", "ImageView"),
    "Legitimate": ("TextView", "Button", "EditText", "ImageView", "Switch", "RecyclerView", "SeekBar", "Spinner"),
}
PERMISSIONS = (
    "INTERNET", "ACCESS_NETWORK_STATE", "READ_PHONE_STATE", "CAMERA", "READ_CONTACTS", "ACCESS_FINE_LOCATION",
    "WRITE_EXTERNAL_STORAGE", "RECORD_AUDIO", "VIBRATE", "WAKE_LOCK", "READ_SMS", "RECEIVE_BOOT_COMPLETED",
)
NEUTRAL_APP_NAMES = (
    "Helper", "Assistant", "Pro", "Lite", "Plus", "Go", "Box", "Hub", "Center", "Star", "Fast", "Smart",
)

# role-level motif edges; kept pairwise disjoint across families
MOTIFS = {
    "InvestmentScam": [("Home", "Personal"), ("Personal", "LoanApply"), ("Personal", "BankCard"),
                       ("Personal", "Certification")],
    "GamblingGame": [("Lobby", "Game"), ("Game", "Betting"), ("Betting", "Recharge")],
    "Porn": [("Portal", "VideoList"), ("Portal", "LiveList"), ("Portal", "Mine"), ("VideoList", "Player"),
             ("LiveList", "Player"), ("Player", "Vip")],
    "Miscellaneous": [("Dashboard", "TaskList"), ("TaskList", "TaskDetail"), ("Dashboard", "Withdraw"),
                      ("Dashboard", "Invite")],
}


def _motif_disjointness() -> None:
    sets = {k: set(v) for k, v in MOTIFS.items()}
    names = sorted(sets)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if sets[a] & sets[b]:
                raise AssertionError(f"motifs {a} and {b} share edges")


_motif_disjointness()


def _pick_mech(rng: random.Random) -> str:
    return rng.choice(MECHANISMS)


def _url(rng: random.Random, family: str, k: int) -> list[tuple]:
    words = rng.sample(FAMILY_TOKENS[family], k)
    host = f"{rng.choice(('api', 'm', 'h5', 'cdn'))}.{words[0]}{rng.randint(1, 99)}.{rng.choice(('com', 'cn', 'net'))}"
    pieces: list[tuple] = [("const", f"https://{host}/")]
    for w in words[1:]:
        pieces.append((rng.choice(("const", "res")), f"{w}/{rng.choice(GENERIC_TOKENS)}"))
    if rng.random() < 0.6:
        pieces.append(("runtime",))
    return pieces


def _fill_layout(b: AppBuilder, rng: random.Random, node: str, family: str, count: int) -> None:
    pool = FAMILY_WIDGETS[family]
    group = None
    for k in range(count):
        if family == "Legitimate" and k % 6 == 0:
            group = b.widget(node, "LinearLayout", f"@id/{node.lower()}_g{k}")
        wtype = rng.choice(pool)
        listeners = ["OnClick"] if wtype in ("Button", "ImageButton") else []
        b.widget(node, wtype, f"@id/{node.lower()}_w{k}", listeners, parent=group)


def family_app(family: str, rng: random.Random, app_id: str, cert: str, app_name: str) -> AppBuilder:
    perms = rng.sample(PERMISSIONS, rng.randint(3, 7))
    package = "com." + hashlib.sha256(f"{app_id}".encode()).hexdigest()[:10] + ".app"
    b = AppBuilder(package, app_name, cert, perms)
    nodes: list[str] = []

    def node(role: str, kind: str | None = None) -> str:
        kind = kind or ("Fragment" if rng.random() < 0.25 else "Activity")
        name = role + kind
        if name not in b.classes:
            (b.activity if kind == "Activity" else b.fragment)(name)
            nodes.append(name)
        return name

    if family == "Legitimate":
        n = rng.randint(10, 15)
        roles = [f"Screen{k}" for k in range(n)]
        names = [node(r) for r in roles]
        seen = set()
        for k in range(1, n):
            seen.add((names[rng.randrange(k)], names[k]))
        while len(seen) < int(n * 1.4):
            a, c = rng.sample(names, 2)
            seen.add((a, c))
        for a, c in sorted(seen):
            b.transition(a, c, _pick_mech(rng))
        per_node = (14, 24)
        web_nodes = rng.sample(names, max(1, n // 4))
    else:
        motif = MOTIFS.get(family)
        if family == "GamblingGame":
            lobby = node("Lobby", "Activity")
            games = [node(f"Game{k}", "Fragment") for k in range(rng.randint(3, 5))]
            bet = node("Betting", "Activity")
            rech = node("Recharge", "Activity")
            for g in games:
                b.host(lobby, g)
                b.transition(lobby, g, _pick_mech(rng))
                b.transition(g, bet, _pick_mech(rng))
            b.transition(bet, rech, _pick_mech(rng))
        elif family == "Porn":
            portal = node("Portal", "Activity")
            tabs = [node(t, "Fragment") for t in ("VideoList", "LiveList", "Mine")]
            b.navgraph(portal, tabs)
            player = node("Player", "Activity")
            b.transition(tabs[0], player, _pick_mech(rng))
            b.transition(tabs[1], player, _pick_mech(rng))
            vip = node("Vip", "Activity")
            b.transition(player, vip, _pick_mech(rng))
            if rng.random() < 0.7:
                b.transition(vip, node("Payment", "Activity"), _pick_mech(rng))
        else:
            for a, c in motif:
                b.transition(node(a, "Activity"), node(c), _pick_mech(rng))
        splash = node("Splash", "Activity")
        b.transition(splash, nodes[0], _pick_mech(rng))
        # noise: a couple of extra screens loosely attached
        for k in range(rng.randint(0, 2)):
            extra = node(f"Extra{k}")
            b.transition(rng.choice(nodes[:-1]), extra, _pick_mech(rng))
            if rng.random() < 0.5:
                b.transition(extra, rng.choice(nodes[:-1]), _pick_mech(rng))
        names = nodes
        per_node = (2, 4)
        web_nodes = rng.sample(names, max(1, len(names) // 3))
    for nd in names:
        _fill_layout(b, rng, nd, family, rng.randint(*per_node))
    for nd in web_nodes:
        b.web(nd, _url(rng, family, rng.randint(2, 4)), helper=rng.random() < 0.3)
    return b


# ---------------------------------------------------------------------------
# Corpus on disk
# ---------------------------------------------------------------------------


@dataclass
class CorpusSpec:
    seed: int = 0
    per_class: int = 50
    families: tuple[str, ...] = LABELS
    benchmark: bool = True
    rename_seeds: tuple[int, ...] = (1,)
    developer_group_max: int = 4
    stoplist: frozenset[str] = DEFAULT_STOPLIST

    def __post_init__(self) -> None:
        if self.per_class < 0:
            raise ValueError("per_class must be non-negative")
        unknown = set(self.families) - set(LABELS)
        if unknown:
            raise ValueError(f"unknown families {sorted(unknown)}")


@dataclass
class CorpusEntry:
    app_id: str
    path: str
    truth: str
    group: str  # "benchmark" | "family"
    label: str | None = None
    obfuscation: str | None = None
    source: str | None = None
    rename_map: str | None = None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def rename_truth(truth: dict, rm: ir.RenameMap) -> dict:
    out = dict(truth)
    c = rm.cls
    out["nodes"] = {c(k): v for k, v in sorted(truth["nodes"].items())}
    out["edges"] = sorted([[c(a), c(b)] for a, b in truth["edges"]])
    out["over_depth_edges"] = sorted([[c(a), c(b)] for a, b in truth["over_depth_edges"]])
    out["widgets"] = {
        c(k): sorted(
            ({**w, "id": rm.widget_ids.get(w["id"], w["id"]) if w["id"] else None} for w in ws),
            key=lambda d: (d["type"], d["id"] or "", d["listeners"]),
        )
        for k, ws in sorted(truth["widgets"].items())
    }
    out["tokens"] = {c(k): v for k, v in sorted(truth["tokens"].items())}
    return out


def _emit(root: Path, rel: str, app_id: str, b: AppBuilder, label, group, entries, spec: CorpusSpec) -> None:
    bundle = b.bundle()
    problems = ir.validate(bundle)
    if problems:
        raise AssertionError(f"generator produced an invalid bundle {app_id}: {problems[0]}")
    truth = b.truth(app_id, label, spec.stoplist)
    _write(root / f"{rel}.appir", ir.serialize(bundle))
    _write(root / f"{rel}.truth.json", _dump(truth))
    entries.append(CorpusEntry(app_id, f"{rel}.appir", f"{rel}.truth.json", group, label))
    for s in spec.rename_seeds:
        rm = ir.rename_map_for(bundle, s)
        obf = ir.rename_with_map(bundle, rm)
        orel = f"{rel}.rename{s}"
        oid = f"{app_id}.rename{s}"
        _write(root / f"{orel}.appir", ir.serialize(obf))
        _write(root / f"{orel}.truth.json", _dump({**rename_truth(truth, rm), "app_id": oid}))
        _write(
            root / f"{orel}.map.json",
            _dump({"classes": rm.classes, "methods": rm.methods, "widget_ids": rm.widget_ids}),
        )
        entries.append(
            CorpusEntry(oid, f"{orel}.appir", f"{orel}.truth.json", group, label, "rename", app_id, f"{orel}.map.json")
        )


def benchmark_builders() -> dict[str, AppBuilder]:
    out = {}
    for name, make in BENCHMARK_TEMPLATES.items():
        b = make()
        truth = b.truth(name)
        planted = len(truth["edges"]) + len(truth["over_depth_edges"])
        if planted != BENCHMARK_EDGE_COUNTS[name]:
            raise AssertionError(f"{name} plants {planted} transitions, expected {BENCHMARK_EDGE_COUNTS[name]}")
        out[name] = b
    total = sum(len(b.truth(n)["all_tokens"]) for n, b in out.items())
    if total != BENCHMARK_TOKEN_TOTAL:
        raise AssertionError(f"benchmark plants {total} tokens, expected {BENCHMARK_TOKEN_TOTAL}")
    return out


def family_builders(spec: CorpusSpec) -> list[tuple[str, str, AppBuilder]]:
    rng = random.Random(spec.seed)
    out = []
    for family in spec.families:
        made = 0
        group = 0
        while made < spec.per_class:
            size = min(rng.randint(1, spec.developer_group_max), spec.per_class - made)
            cert = hashlib.sha256(f"{spec.seed}:{family}:{group}".encode()).hexdigest()[:16]
            group += 1
            for _ in range(size):
                app_id = f"{family.lower()}-{made:03d}"
                app_name = rng.choice(NEUTRAL_APP_NAMES) + str(rng.randint(1, 40))
                app_rng = random.Random(f"{spec.seed}:{app_id}")
                out.append((app_id, family, family_app(family, app_rng, app_id, cert, app_name)))
                made += 1
    return out


def gen_corpus(spec: CorpusSpec, out_dir: str | Path) -> list[CorpusEntry]:
    """Write bundles, sidecars and an index; identical specs give identical bytes."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOError(f"cannot create corpus directory {root}: {exc}") from exc
    entries: list[CorpusEntry] = []
    if spec.benchmark:
        for name, b in benchmark_builders().items():
            _emit(root, f"benchmark/{name}", name, b, None, "benchmark", entries, spec)
    fam_spec = CorpusSpec(**{**spec.__dict__, "rename_seeds": ()})
    for app_id, family, b in family_builders(spec):
        _emit(root, f"apps/{app_id}", app_id, b, family, "family", entries, fam_spec)
    index = {
        "format": CORPUS_FORMAT,
        "seed": spec.seed,
        "per_class": spec.per_class,
        "apps": [e.__dict__ for e in entries],
    }
    _write(root / "corpus.json", _dump(index))
    return entries


def load_index(corpus_dir: str | Path) -> list[CorpusEntry]:
    obj = json.loads((Path(corpus_dir) / "corpus.json").read_text(encoding="utf-8"))
    if obj.get("format") != CORPUS_FORMAT:
        raise ValueError(f"unsupported corpus format {obj.get('format')!r}")
    return [CorpusEntry(**e) for e in obj["apps"]]
