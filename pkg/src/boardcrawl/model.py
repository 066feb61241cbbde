"""Domain types shared by the crawl, rank, store and search stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, FrozenSet, Iterable, List, NewType, Optional, Tuple
from urllib.parse import urlsplit

# A normalized absolute http(s) URL, see scanner.normalize_url.
PageId = NewType("PageId", str)


class GraphError(ValueError):
    """Structural problem in pages or graph (duplicate ids, missing nodes)."""


class AttachmentClass(str, enum.Enum):
    DOCUMENT = "document"
    SPREADSHEET = "spreadsheet"
    PRESENTATION = "presentation"
    TEXT = "text"
    ARCHIVE = "archive"
    IMAGE = "image"
    OTHER = "other"

    def __str__(self) -> str:
        return self.value


def url_suffix(url: str) -> str:
    """Lowercase extension of the last path segment; query and fragment ignored.

    >>> url_suffix("http://b.example/files/Data.XLS?x=1")
    'xls'
    >>> url_suffix("http://b.example/dir/")
    ''
    """
    path = urlsplit(url).path
    segment = path.rsplit("/", 1)[-1]
    if "." not in segment:
        return ""
    return segment.rsplit(".", 1)[1].lower()


def url_host(url: str) -> str:
    """Network location (host[:port]) of a normalized URL."""
    return urlsplit(url).netloc


@dataclass(frozen=True, order=True)
class AttachmentId:
    url: str
    suffix: str = field(compare=False, default="")

    def __post_init__(self) -> None:
        object.__setattr__(self, "suffix", url_suffix(self.url))

    def __str__(self) -> str:
        return self.url


def _dedupe(items: Iterable, exclude=None) -> tuple:
    seen = set()
    out = []
    for item in items:
        if item == exclude or item in seen:
            continue
        seen.add(item)
        out.append(item)
    return tuple(out)


@dataclass(frozen=True)
class PageRecord:
    """One fetched board page.

    Outlinks and attachments are deduplicated on construction (first
    occurrence wins) and a link back to the page itself is dropped.
    """

    id: PageId
    title: str = ""
    body_text: str = ""
    fetched_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    http_status: int = 200
    outlinks: Tuple[PageId, ...] = ()
    attachments: Tuple[AttachmentId, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "outlinks", _dedupe(self.outlinks, exclude=self.id))
        object.__setattr__(self, "attachments", _dedupe(self.attachments))


@dataclass(frozen=True)
class LinkGraph:
    nodes: FrozenSet[PageId]
    edges: Dict[PageId, Tuple[PageId, ...]]
    containment: Dict[PageId, Tuple[AttachmentId, ...]]

    def out_degree(self, page: PageId) -> int:
        return len(self.edges.get(page, ()))

    def edge_count(self) -> int:
        return sum(len(targets) for targets in self.edges.values())

    def attachment_ids(self) -> List[AttachmentId]:
        ids = {a for attachments in self.containment.values() for a in attachments}
        return sorted(ids)


def seal_graph(pages: Iterable[PageRecord], scope: Optional[str] = None) -> LinkGraph:
    """Build the closed page graph used for ranking.

    ``scope`` is a host[:port] filter; ``None`` accepts every host. Outlinks
    to pages that were not fetched, or that fall outside the scope, are
    pruned so that every edge endpoint is a node.
    """
    by_id: Dict[PageId, PageRecord] = {}
    for page in pages:
        if page.id in by_id:
            raise GraphError(f"duplicate page id: {page.id}")
        by_id[page.id] = page

    nodes = frozenset(
        pid for pid in by_id if scope is None or url_host(pid) == scope
    )
    edges: Dict[PageId, Tuple[PageId, ...]] = {}
    containment: Dict[PageId, Tuple[AttachmentId, ...]] = {}
    for pid in sorted(nodes):
        page = by_id[pid]
        edges[pid] = tuple(t for t in page.outlinks if t in nodes and t != pid)
        if page.attachments:
            containment[pid] = page.attachments
    return LinkGraph(nodes=nodes, edges=edges, containment=containment)
