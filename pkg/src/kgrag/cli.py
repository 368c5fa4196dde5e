"""Operator command line: curate, query (one-shot or REPL), stats,
export-cypher, serve.

Exit codes: 0 success, 1 pipeline failure, 2 configuration error. Data
goes to stdout, logs to stderr. ``--format json`` makes every command
machine-readable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .engine import Engine
from .llm import ProviderError
from .queryphase import LEVELS, MissingStoreError, QueryPhaseError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgrag", description=__doc__)
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument("--store", dest="store_dir", help="store directory")
    parser.add_argument("--format", choices=("json", "text"), default="json")
    sub = parser.add_subparsers(dest="command", required=True)

    curate = sub.add_parser("curate", help="build or extend the stores from a manifest")
    curate.add_argument("--manifest", required=True)
    curate.add_argument("--ontology")
    curate.add_argument("--provider", choices=("mock", "remote"))
    curate.add_argument("--lexicon", dest="mock_lexicon")
    curate.add_argument("--reference-kb", dest="reference_kb")
    curate.add_argument("--vocab")

    query = sub.add_parser("query", help="answer a question over the stores")
    query.add_argument("text", nargs="?")
    query.add_argument("--level", choices=LEVELS)
    query.add_argument("--verbose", action="store_true")
    query.add_argument("--interactive", action="store_true")
    query.add_argument("--ontology")
    query.add_argument("--provider", choices=("mock", "remote"))
    query.add_argument("--lexicon", dest="mock_lexicon")

    stats = sub.add_parser("stats", help="type distribution and store totals")
    stats.add_argument("--top", type=int, default=10)
    stats.add_argument("--ontology")

    export = sub.add_parser("export-cypher", help="write the graph as a Cypher script")
    export.add_argument("--out", required=True)

    graph_query = sub.add_parser("graph-query", help="run a raw graph-pattern query")
    graph_query.add_argument("text")
    graph_query.add_argument("--ontology")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--listen")
    return parser


def _engine_from_args(args) -> Engine:
    overrides = {}
    for key in ("store_dir", "ontology", "provider", "mock_lexicon", "reference_kb",
                "vocab", "listen"):
        value = getattr(args, key, None)
        if value:
            overrides[key] = value
    config = load_config(args.config, overrides)
    return Engine(config)


def _emit(args, payload: dict, text_renderer=None) -> None:
    if args.format == "json" or text_renderer is None:
        print(json.dumps(payload, ensure_ascii=False, indent=1))
    else:
        print(text_renderer(payload))


def _render_answer(result: dict) -> str:
    text = result["answer"]
    footnotes = []
    for i, citation in enumerate(result["citations"], start=1):
        marker = f"[#{citation['kind']}:{citation['id']}]"
        text = text.replace(marker, f"[{i}]")
        footnotes.append(f"[{i}] {citation['kind']} {citation['id']}")
    lines = [text.strip()]
    if footnotes:
        lines += ["", "citations:"] + footnotes
    lines.append("")
    lines.append(f"(level {result['level']}, "
                 f"{result['diagnostics']['provider_calls']} provider calls)")
    return "\n".join(lines)


def _cmd_curate(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        log.error("manifest not found: %s", manifest_path)
        return EXIT_CONFIG
    engine = _engine_from_args(args)
    summary = engine.curate(manifest_path.read_text(encoding="utf-8"))
    _emit(args, summary.to_dict())
    if summary.docs == 0 and summary.failures and not engine.state["docs"]:
        return EXIT_FAILURE
    if summary.docs == 0 and summary.chunks == 0 and not engine.state["docs"]:
        return EXIT_FAILURE
    return EXIT_OK


def _run_query(engine: Engine, args, text: str, level: str | None) -> int:
    try:
        result = engine.query(text, level=level, verbose=args.verbose)
    except (QueryPhaseError, ProviderError, MissingStoreError) as err:
        log.error("query failed: %s", err)
        return EXIT_FAILURE
    _emit(args, result, _render_answer)
    return EXIT_OK


def _cmd_query(args) -> int:
    engine = _engine_from_args(args)
    if args.interactive:
        level = args.level or engine.config.level
        print(f"interactive mode, level {level} (:level L to switch, :quit to exit)",
              file=sys.stderr)
        while True:
            try:
                line = input("query> ").strip()
            except EOFError:
                return EXIT_OK
            if not line:
                continue
            if line == ":quit":
                return EXIT_OK
            if line.startswith(":level"):
                _, _, value = line.partition(" ")
                if value in LEVELS:
                    level = value
                    print(f"level set to {level}", file=sys.stderr)
                else:
                    print(f"unknown level {value!r}; expected one of {LEVELS}", file=sys.stderr)
                continue
            _run_query(engine, args, line, level)
        return EXIT_OK
    if not args.text:
        log.error("query text required (or --interactive)")
        return EXIT_CONFIG
    return _run_query(engine, args, args.text, args.level)


def _cmd_stats(args) -> int:
    engine = _engine_from_args(args)
    if not engine.graph.nodes and not engine.chunks:
        log.error("no stores found under %s (run curate first)", engine.store_dir)
        return EXIT_CONFIG
    payload = engine.stats(args.top)

    def render(p: dict) -> str:
        lines = [f"docs {p['docs']}  chunks {p['chunks']}  nodes {p['nodes']}  edges {p['edges']}",
                 "", "node types:"]
        lines += [f"  {t:<32} {c}" for t, c in p["node_types"]]
        lines.append("edge types:")
        lines += [f"  {t:<32} {c}" for t, c in p["edge_types"]]
        return "\n".join(lines)

    _emit(args, payload, render)
    return EXIT_OK


def _cmd_export(args) -> int:
    engine = _engine_from_args(args)
    if not engine.graph.nodes:
        log.error("no graph found under %s (run curate first)", engine.store_dir)
        return EXIT_CONFIG
    Path(args.out).write_text(engine.export_cypher_text(), encoding="utf-8")
    _emit(args, {"out": args.out, "nodes": len(engine.graph.nodes),
                 "edges": len(engine.graph.edges)})
    return EXIT_OK


def _cmd_graph_query(args) -> int:
    from .graphquery import QuerySyntaxError, QueryValidationError, evaluate, parse_query

    engine = _engine_from_args(args)
    if not engine.graph.nodes:
        log.error("no graph found under %s (run curate first)", engine.store_dir)
        return EXIT_CONFIG
    try:
        table = evaluate(engine.graph, parse_query(args.text))
    except (QuerySyntaxError, QueryValidationError) as err:
        log.error("invalid query: %s", err)
        return EXIT_FAILURE

    def render(payload: dict) -> str:
        lines = ["\t".join(payload["columns"])]
        for row in payload["rows"]:
            lines.append("\t".join("" if v is None else str(v) for v in row))
        return "\n".join(lines)

    _emit(args, table.to_dict(), render)
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import serve

    overrides = {"listen": args.listen} if args.listen else {}
    config = load_config(args.config, {**overrides, "store_dir": args.store_dir})
    host, _, port = config.listen.partition(":")
    try:
        int(port or "8095")
    except ValueError:
        log.error("bad listen address %r", config.listen)
        return EXIT_CONFIG
    serve(config)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "curate": _cmd_curate,
        "query": _cmd_query,
        "stats": _cmd_stats,
        "export-cypher": _cmd_export,
        "graph-query": _cmd_graph_query,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        log.error("missing file: %s", err)
        return EXIT_CONFIG
    except (QueryPhaseError, ProviderError) as err:
        log.error("pipeline error: %s", err)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
