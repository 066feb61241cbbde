"""Command line entry point: crawl, rank, search and fixture tooling.

Exit codes: 0 success, 2 input error (bad arguments, unreachable seed,
missing store), 3 query error (query has no searchable terms).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .classifier import load_suffix_table
from .crawler import CrawlConfig, CrawlError, crawl
from .fixture import FixtureError, FixtureServer, FixtureSpec, generate_site
from .pipeline import rerank_store, write_store
from .ranker import RankConfig
from .scanner import normalize_url
from .search import EmptyQueryError, IndexBuildError, build_index, format_records, format_table, load_index, query, save_index
from .store import Store, StoreError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_QUERY = 3
STORE_ENV = "BOARDCRAWL_STORE"

log = logging.getLogger("boardcrawl")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _damping(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return value


def _add_rank_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=_damping, default=0.85, help="damping factor (default 0.85)")
    p.add_argument("--epsilon", type=_positive_float, default=1e-8,
                   help="L1 residual tolerance (default 1e-8)")
    p.add_argument("--max-iterations", type=_positive_int, default=200)


def build_parser() -> argparse.ArgumentParser:
    default_store = os.environ.get(STORE_ENV)
    parser = argparse.ArgumentParser(
        prog="boardcrawl",
        description="Crawl a bulletin board and search its ranked attachments.",
        epilog="exit codes: 0 ok, 2 input error, 3 query error. "
               f"${STORE_ENV} sets the default store directory.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("crawl", help="crawl a board and write a ranked store")
    p.add_argument("url")
    p.add_argument("--out", default=default_store, required=default_store is None, help="store directory")
    p.add_argument("--max-pages", type=_positive_int, default=10000)
    p.add_argument("--parallelism", type=_positive_int, default=4)
    p.add_argument("--delay", type=_non_negative_float, default=200.0, help="per-host delay in ms")
    p.add_argument("--timeout", type=_positive_float, default=10.0, help="fetch timeout in s")
    p.add_argument("--scope", choices=("host", "any"), default="host")
    p.add_argument("--robots", action="store_true", help="honor robots.txt")
    p.add_argument("--suffix-table", type=Path, help="JSON suffix table override")
    _add_rank_flags(p)

    p = sub.add_parser("rank", help="recompute AttachRank for an existing store")
    p.add_argument("--store", default=default_store, required=default_store is None)
    _add_rank_flags(p)

    p = sub.add_parser("search", help="query a store")
    p.add_argument("query")
    p.add_argument("--store", default=default_store, required=default_store is None)
    p.add_argument("--k", type=_positive_int, default=10)
    p.add_argument("--lambda", dest="lam", type=_non_negative_float, default=1.0,
                   help="AttachRank weight; 0 gives pure lexical ranking")
    p.add_argument("--format", choices=("table", "records"), default="table")
    p.add_argument("--index", type=Path, help="load this index file, or build and save it there")

    p = sub.add_parser("fixture", help="synthetic board tooling")
    fsub = p.add_subparsers(dest="fixture_command", required=True)
    g = fsub.add_parser("gen", help="generate a fixture site")
    g.add_argument("--spec", type=Path, help="JSON FixtureSpec (defaults apply when omitted)")
    g.add_argument("--out", type=Path, required=True)
    s = fsub.add_parser("serve", help="serve a directory over HTTP")
    s.add_argument("dir", type=Path)
    s.add_argument("--port", type=int, default=8000)
    return parser


def cmd_crawl(args, parser) -> int:
    if normalize_url("", args.url) is None:
        parser.error(f"not an http(s) URL: {args.url!r}")
    table = None
    if args.suffix_table:
        try:
            table = load_suffix_table(args.suffix_table)
        except (OSError, ValueError) as e:
            parser.error(f"bad suffix table: {e}")
    config = CrawlConfig(
        seed=args.url,
        scope=args.scope == "host",
        max_pages=args.max_pages,
        parallelism=args.parallelism,
        per_host_delay=args.delay / 1000.0,
        fetch_timeout=args.timeout,
        respect_robots=args.robots,
        suffix_table=table,
    )
    rank_config = RankConfig(args.d, args.epsilon, args.max_iterations)
    try:
        result = crawl(config)
    except CrawlError as e:
        print(f"boardcrawl: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        store, graph, ranks, _ = write_store(result, args.out, rank_config)
    except StoreError as e:
        print(f"boardcrawl: {e}", file=sys.stderr)
        return EXIT_INPUT
    stats = result.stats
    print(f"pages fetched:       {stats.pages_fetched}")
    print(f"fetch errors:        {stats.fetch_errors}")
    print(f"attachments found:   {stats.attachments_found}")
    print(f"attachments stored:  {len(store.manifest['attachments'])}")
    print(f"attachment errors:   {stats.attachment_errors}")
    print(f"links discarded:     {stats.links_discarded}")
    print(f"graph:               {len(graph.nodes)} pages, {graph.edge_count()} links")
    print(f"pagerank:            {ranks.iterations_used} iterations, residual {ranks.final_residual:.3g}")
    if stats.fetch_errors or stats.attachment_errors:
        print(f"boardcrawl: warning: {stats.fetch_errors + stats.attachment_errors} fetches failed",
              file=sys.stderr)
    return EXIT_OK


def cmd_rank(args, parser) -> int:
    config = RankConfig(args.d, args.epsilon, args.max_iterations)
    try:
        store, graph, ranks, table = rerank_store(args.store, config)
    except StoreError as e:
        print(f"boardcrawl: {e}", file=sys.stderr)
        return EXIT_INPUT
    print(f"reranked {len(graph.nodes)} pages, {len(store.manifest['attachments'])} attachments "
          f"({ranks.iterations_used} iterations, residual {ranks.final_residual:.3g})")
    return EXIT_OK


def cmd_search(args, parser) -> int:
    try:
        if args.index is not None and args.index.exists():
            index = load_index(args.index)
        else:
            index = build_index(Store(args.store, create=False))
            if args.index is not None:
                save_index(index, args.index)
    except (StoreError, IndexBuildError, ValueError) as e:
        print(f"boardcrawl: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        result = query(index, args.query, k=args.k, lam=args.lam)
    except EmptyQueryError as e:
        print(f"boardcrawl: {e}", file=sys.stderr)
        return EXIT_QUERY
    text = format_table(result) if args.format == "table" else format_records(result)
    if text:
        print(text)
    return EXIT_OK


def cmd_fixture(args, parser) -> int:
    if args.fixture_command == "gen":
        try:
            data = json.loads(args.spec.read_text(encoding="utf-8")) if args.spec else {}
            spec = FixtureSpec.from_json(data)
        except (OSError, ValueError, TypeError) as e:
            parser.error(f"bad fixture spec: {e}")
        truth = generate_site(spec, args.out)
        print(f"wrote {len(truth.pages)} pages and {len(truth.attachments)} attachments to {args.out}")
        return EXIT_OK
    try:
        server = FixtureServer(args.dir, args.port)
    except (OSError, FixtureError) as e:
        print(f"boardcrawl: cannot serve on port {args.port}: {e}", file=sys.stderr)
        return EXIT_INPUT
    print(f"serving {args.dir} at {server.seed_url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


COMMANDS = {"crawl": cmd_crawl, "rank": cmd_rank, "search": cmd_search, "fixture": cmd_fixture}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    return COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
