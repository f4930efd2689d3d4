"""Command-line front end.

Corpus-level commands (gen-corpus, train, eval, report) run in-process.
Bundle-level commands (validate, build-sg, encode, classify) also run
in-process unless ``--server URL`` is given, in which case they call the
HTTP service instead.

Exit codes: 0 success, 1 validation failure, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import app_ir as ir
from .. import detector as det
from ..config import load_config
from . import corpus as C
from . import evaluate as E

log = logging.getLogger("sgdetect")

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2


class ValidationFailure(Exception):
    """Input rejected; maps to exit code 1."""


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _bundle_paths(targets: list[str]) -> list[Path]:
    paths: list[Path] = []
    for t in targets:
        p = Path(t)
        if p.is_dir():
            paths.extend(sorted(p.rglob("*.appir")))
        elif p.exists():
            paths.append(p)
        else:
            raise ValidationFailure(f"no such file or directory: {t}")
    if not paths:
        raise ValidationFailure("no .appir bundles found")
    return paths


def _app_id(path: Path) -> str:
    return path.name[: -len(".appir")] if path.name.endswith(".appir") else path.stem


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    r = httpx.post(server.rstrip("/") + route, json=payload, timeout=600.0)
    if r.status_code in (409, 422):
        raise ValidationFailure(f"{route}: {r.json().get('detail')}")
    r.raise_for_status()
    return r.json()


def _config(args) -> dict:
    return load_config(args.config, args.set)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    cfg = _config(args)
    section = cfg["corpus"]
    spec = C.CorpusSpec(
        seed=int(section["seed"]),
        per_class=int(section["per_class"]),
        benchmark=not args.no_benchmark,
        developer_group_max=int(section.get("developer_group_max", 4)),
    )
    entries = C.gen_corpus(spec, args.out_dir)
    groups: dict[str, int] = {}
    for e in entries:
        groups[e.group] = groups.get(e.group, 0) + 1
    _emit({"corpus": str(args.out_dir), "apps": len(entries), "groups": groups}, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    results = {}
    for p in _bundle_paths(args.targets):
        source = p.read_text(encoding="utf-8")
        if args.server:
            results[str(p)] = _post(args.server, "/validate", {"source": source})
        else:
            from ..api import check_source

            problems = check_source(source)
            results[str(p)] = {"valid": not problems,
                               "violations": [{"code": v.code, "message": v.message, "line": v.line} for v in problems]}
    _emit(results, args.out)
    return EXIT_OK if all(r["valid"] for r in results.values()) else EXIT_INVALID


def _scene_graph(path: Path, args, max_depth: int) -> dict:
    source = path.read_text(encoding="utf-8")
    if args.server:
        return _post(args.server, "/scene-graph", {"source": source, "app_id": _app_id(path), "max_depth": max_depth})
    from ..api import scene_graph_json

    return scene_graph_json(source, _app_id(path), max_depth)


def cmd_build_sg(args) -> int:
    max_depth = int(_config(args)["analysis"]["max_depth"])
    target = Path(args.target)
    if not target.is_dir():
        _emit(_scene_graph(target, args, max_depth), args.out)
        return EXIT_OK
    # directory input: one sg/1 file per bundle under --out, summary to stdout
    out_dir = Path(args.out) if args.out else None
    summary = {}
    for p in _bundle_paths([args.target]):
        obj = _scene_graph(p, args, max_depth)
        rel = p.relative_to(target).with_suffix(".sg.json")
        if out_dir is not None:
            (out_dir / rel).parent.mkdir(parents=True, exist_ok=True)
            (out_dir / rel).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        summary[str(rel)] = {"nodes": len(obj["nodes"]), "edges": len(obj["edges"])}
    _emit(summary, None)
    return EXIT_OK


def cmd_encode(args) -> int:
    max_depth = int(_config(args)["analysis"]["max_depth"])
    path = Path(args.bundle)
    source = path.read_text(encoding="utf-8")
    if args.server:
        obj = _post(args.server, "/features",
                    {"source": source, "app_id": _app_id(path), "max_depth": max_depth, "view": args.view})
    else:
        from ..api import features_json

        model = det.load_model(args.model) if args.model else None
        obj = features_json(source, _app_id(path), max_depth, args.view, model)
    _emit(obj, args.out)
    return EXIT_OK


def _load_family(args, cfg) -> list[E.LoadedApp]:
    apps = E.load_corpus(args.corpus, groups=["family"], max_depth=int(cfg["analysis"]["max_depth"]))
    if not apps:
        raise ValidationFailure(f"{args.corpus}: no labeled apps")
    return apps


def cmd_train(args) -> int:
    cfg = _config(args)
    result = E.run_pipeline(_load_family(args, cfg), cfg)
    det.save_model(result.model, args.model_out)
    report = result.report.to_json(timing=not args.no_timing)
    report["split"] = result.split
    report["model"] = str(args.model_out)
    _emit(report, args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    max_depth = int(_config(args)["analysis"]["max_depth"])
    apps = [(_app_id(p), p.read_text(encoding="utf-8")) for p in _bundle_paths(args.targets)]
    if args.server:
        obj = _post(args.server, "/classify", {"apps": [{"app_id": a, "source": s} for a, s in apps]})
    else:
        if not args.model:
            raise ValidationFailure("classify needs --model or --server")
        from ..api import classify_sources, prediction_json

        obj = prediction_json(classify_sources(det.load_model(args.model), apps, max_depth))
    _emit(obj, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    groups = args.groups.split(",") if args.groups else None
    apps = E.load_corpus(args.corpus, groups=groups, max_depth=int(cfg["analysis"]["max_depth"]))
    if not apps:
        raise ValidationFailure(f"{args.corpus}: no apps in the selected groups")
    rep = E.eval_static(apps)
    rep.corpus_stats = E.corpus_stats(apps)
    _emit(rep.to_json(timing=not args.no_timing), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    """Static scores on the benchmark group plus the detection pipeline."""
    cfg = _config(args)
    max_depth = int(cfg["analysis"]["max_depth"])
    apps = E.load_corpus(args.corpus, max_depth=max_depth)
    bench = [a for a in apps if a.entry.group == "benchmark"]
    family = [a for a in apps if a.entry.group == "family"]
    out: dict = {"format": E.REPORT_FORMAT}
    if bench:
        static = E.eval_static(bench).to_json(timing=not args.no_timing)
        out.update({k: v for k, v in static.items() if k != "format"})
    if family:
        out["corpus_stats"] = E.corpus_stats(family)
        main = E.run_pipeline(family, cfg).report.to_json(timing=not args.no_timing)
        out["classification"] = main["classification"]
        out["config"] = main["config"]
        if "timing" in main:
            out.setdefault("timing", {}).update({f"pipeline_{k}": v for k, v in main["timing"].items()})
        if args.ablation:
            ablation = {}
            for view in E.FEATURE_VIEWS:
                vcfg = load_config(args.config, list(args.set) + [f"pipeline.features={view}"])
                ablation[view] = E.run_pipeline(family, vcfg).report.classification["accuracy"]
            scfg = load_config(args.config, list(args.set) + ["pipeline.shuffle_labels=true"])
            ablation["shuffled_labels"] = E.run_pipeline(family, scfg).report.classification["accuracy"]
            out["ablation"] = ablation
    _emit(out, args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from ..service import create_app

    uvicorn.run(create_app(args.model), host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. gae.epochs=50 (repeatable)")
    common.add_argument("--out", help="write JSON here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    remote = argparse.ArgumentParser(add_help=False)
    remote.add_argument("--server", help="base URL of a running service; run the command there")

    p = argparse.ArgumentParser(prog="sgdetect", description="Scene-graph app analysis and detection.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-corpus", parents=[common], help="write the synthetic corpus")
    s.add_argument("out_dir")
    s.add_argument("--no-benchmark", action="store_true", help="skip the five benchmark apps")
    s.set_defaults(func=cmd_gen_corpus)

    s = sub.add_parser("validate", parents=[common, remote], help="check App-IR bundles")
    s.add_argument("targets", nargs="+", help="bundle files or directories")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("build-sg", parents=[common, remote], help="build the sg/1 scene graph of a bundle")
    s.add_argument("target", help="bundle file or directory (directory output goes under --out)")
    s.set_defaults(func=cmd_build_sg)

    s = sub.add_parser("encode", parents=[common, remote], help="node feature matrix of a bundle")
    s.add_argument("bundle")
    s.add_argument("--view", choices=("scene", "atg"), default="scene")
    s.add_argument("--model", help="model directory; adds the pooled scene-encoder vector")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("train", parents=[common], help="train a model on a corpus and score held-out apps")
    s.add_argument("corpus")
    s.add_argument("--model-out", required=True)
    s.add_argument("--no-timing", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("classify", parents=[common, remote], help="label bundles with a trained model")
    s.add_argument("targets", nargs="+")
    s.add_argument("--model")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("eval", parents=[common], help="score static analysis against sidecars")
    s.add_argument("corpus")
    s.add_argument("--groups", help="comma-separated corpus groups (benchmark, family)")
    s.add_argument("--no-timing", action="store_true")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", parents=[common], help="full report/1: static scores and classification")
    s.add_argument("corpus")
    s.add_argument("--ablation", action="store_true", help="also run the feature-view and shuffled-label controls")
    s.add_argument("--no-timing", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    s.add_argument("--model")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationFailure, ir.AppIrError, det.IdCollision, det.DuplicateAppId, det.EmptyClass) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, ValueError) as exc:
        # bad config values, unreadable models and corpus indexes
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
