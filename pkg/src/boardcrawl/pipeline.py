"""Stage wiring shared by the CLI and the tests."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Union

from .classifier import SuffixTable, class_of
from .crawler import CrawlResult
from .model import seal_graph
from .ranker import RankConfig, compute_attachrank, compute_pagerank
from .store import AttachmentRecord, Store

log = logging.getLogger(__name__)


def rank_pages(pages, scope: Optional[str], config: RankConfig):
    graph = seal_graph(pages, scope)
    ranks = compute_pagerank(graph, config)
    if not ranks.converged:
        log.warning("pagerank stopped after %d iterations, residual %.3g",
                    ranks.iterations_used, ranks.final_residual)
    return graph, ranks, compute_attachrank(graph, ranks)


def write_store(result: CrawlResult, root: Union[str, Path],
                config: RankConfig = RankConfig()) -> tuple:
    """Persist a finished crawl: pages, ranked attachment records, manifest.

    Records are only written once ranking is done, so every header carries
    its final AttachRank. Attachments whose download failed are skipped.
    """
    graph, ranks, table = rank_pages(result.pages, result.scope, config)
    store = Store(root)
    with store.batch():
        store.set_scope(result.scope)
        store.set_rank_config(config)
        for page in result.pages:
            store.store_page(page)
        for att_id, entry in table.items():
            fetched = result.attachments.get(att_id)
            if fetched is None:
                continue
            store.write_attachment_record(AttachmentRecord(
                id=att_id,
                cls=fetched.cls,
                ar=entry.ar,
                containing_pages=entry.containing_pages,
                anchor_text=fetched.anchor_text,
                fetched_at=fetched.fetched_at,
                payload=fetched.payload,
            ))
    return store, graph, ranks, table


def rerank_store(root: Union[str, Path], config: RankConfig = RankConfig(),
                 table: Optional[SuffixTable] = None) -> tuple:
    """Recompute ranks from the stored pages and rewrite every record header."""
    store = Store(root, create=False)
    pages = store.pages()
    graph, ranks, ar_table = rank_pages(pages, store.manifest.get("scope"), config)
    with store.batch():
        store.set_rank_config(config)
        for entry, record in list(store.attachment_records()):
            ar_entry = ar_table.get(record.id)
            if ar_entry is None:
                log.warning("stored attachment %s is no longer contained by any page", record.id)
                continue
            store.write_attachment_record(AttachmentRecord(
                id=record.id,
                cls=record.cls if table is None else class_of(record.id, table),
                ar=ar_entry.ar,
                containing_pages=ar_entry.containing_pages,
                anchor_text=record.anchor_text,
                fetched_at=record.fetched_at,
                payload=record.payload,
                payload_sha256=record.payload_sha256,
            ))
    return store, graph, ranks, ar_table

