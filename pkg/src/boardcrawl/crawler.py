"""Fetch loop: frontier, polite HTTP retrieval and scan/classify orchestration."""

from __future__ import annotations

import logging
import socket
import threading
import time
import urllib.error
import urllib.request
import urllib.robotparser
from collections import deque
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Deque, Dict, List, Optional, Set, Tuple

from . import USER_AGENT
from .classifier import AttachmentLink, Discard, PageLink, SuffixTable, classify_link
from .model import AttachmentClass, AttachmentId, PageId, PageRecord, url_host
from .scanner import RawLink, extract_links, extract_page_text, normalize_url

log = logging.getLogger(__name__)

HTML_TYPES = ("text/html", "application/xhtml+xml")


class CrawlError(RuntimeError):
    """Fatal crawl failure."""


class SeedFetchError(CrawlError):
    pass


class FetchError(Exception):
    """A single retrieval failed. ``kind`` is one of timeout, connection,
    status or not-html."""

    def __init__(self, url: str, kind: str, message: str = "", status: Optional[int] = None):
        super().__init__(f"{kind}: {url}: {message}" if message else f"{kind}: {url}")
        self.url = url
        self.kind = kind
        self.status = status


@dataclass(frozen=True)
class FetchResponse:
    url: str
    status: int
    content_type: str
    body: bytes

    @property
    def is_html(self) -> bool:
        ctype = self.content_type.split(";", 1)[0].strip().lower()
        return ctype in HTML_TYPES


Fetcher = Callable[[str], FetchResponse]


class HttpFetcher:
    """Blocking HTTP GET with a per-host politeness delay.

    When ``per_host_delay`` is positive, requests to one host are serialized
    and each begins at least that long after the previous one completed.
    """

    def __init__(self, timeout: float = 10.0, per_host_delay: float = 0.2,
                 user_agent: str = USER_AGENT):
        self.timeout = timeout
        self.per_host_delay = per_host_delay
        self.user_agent = user_agent
        self._lock = threading.Lock()
        self._host_locks: Dict[str, threading.Lock] = {}
        self._last_done: Dict[str, float] = {}

    def _host_lock(self, host: str) -> threading.Lock:
        with self._lock:
            return self._host_locks.setdefault(host, threading.Lock())

    def fetch_page(self, url: str) -> FetchResponse:
        if self.per_host_delay <= 0:
            return self._get(url)
        host = url_host(url)
        with self._host_lock(host):
            last = self._last_done.get(host)
            if last is not None:
                wait_for = last + self.per_host_delay - time.monotonic()
                if wait_for > 0:
                    time.sleep(wait_for)
            try:
                return self._get(url)
            finally:
                self._last_done[host] = time.monotonic()

    __call__ = fetch_page

    def _get(self, url: str) -> FetchResponse:
        req = urllib.request.Request(url, headers={"User-Agent": self.user_agent})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read()
                return FetchResponse(url, resp.status, resp.headers.get("Content-Type", ""), body)
        except urllib.error.HTTPError as e:
            raise FetchError(url, "status", f"HTTP {e.code}", status=e.code) from None
        except urllib.error.URLError as e:
            kind = "timeout" if isinstance(e.reason, (socket.timeout, TimeoutError)) else "connection"
            raise FetchError(url, kind, str(e.reason)) from None
        except (socket.timeout, TimeoutError) as e:
            raise FetchError(url, "timeout", str(e)) from None
        except OSError as e:
            raise FetchError(url, "connection", str(e)) from None


@dataclass(frozen=True)
class CrawlConfig:
    seed: str
    scope: bool = True
    max_pages: int = 10000
    parallelism: int = 4
    per_host_delay: float = 0.2
    fetch_timeout: float = 10.0
    respect_robots: bool = False
    suffix_table: Optional[SuffixTable] = None

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.max_pages < 1:
            raise ValueError(f"max_pages must be >= 1, got {self.max_pages}")
        if self.per_host_delay < 0 or self.fetch_timeout <= 0:
            raise ValueError("delay must be >= 0 and timeout > 0")


class Frontier:
    """FIFO of page URLs; a URL is enqueued at most once per crawl."""

    def __init__(self) -> None:
        self.queue: Deque[PageId] = deque()
        self.seen: Set[PageId] = set()
        self.fetched: Set[PageId] = set()

    def enqueue(self, url: PageId, scope: Optional[str] = None) -> bool:
        fresh = url not in self.seen
        self.seen.add(url)
        if not fresh or (scope is not None and url_host(url) != scope):
            return False
        self.queue.append(url)
        return True

    def next_url(self) -> Optional[PageId]:
        """Pop the head of the queue, or ``None`` once it is exhausted."""
        if not self.queue:
            return None
        url = self.queue.popleft()
        self.fetched.add(url)
        return url

    def __len__(self) -> int:
        return len(self.queue)


@dataclass
class CrawlStats:
    pages_fetched: int = 0
    fetch_errors: int = 0
    attachments_found: int = 0
    attachments_fetched: int = 0
    attachment_errors: int = 0
    links_discarded: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FetchedAttachment:
    id: AttachmentId
    cls: AttachmentClass
    anchor_text: str
    fetched_at: datetime
    payload: bytes


@dataclass
class CrawlResult:
    pages: List[PageRecord] = field(default_factory=list)
    attachment_refs: List[Tuple[AttachmentId, PageId, AttachmentClass]] = field(default_factory=list)
    attachments: Dict[AttachmentId, FetchedAttachment] = field(default_factory=dict)
    stats: CrawlStats = field(default_factory=CrawlStats)
    errors: List[FetchError] = field(default_factory=list)
    scope: Optional[str] = None


@dataclass
class _ParsedPage:
    url: PageId
    status: int
    fetched_at: datetime
    title: str
    body_text: str
    links: List[RawLink]


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _retrieve_page(fetch: Fetcher, url: PageId) -> _ParsedPage:
    resp = fetch(url)
    if not 200 <= resp.status < 300:
        raise FetchError(url, "status", f"HTTP {resp.status}", status=resp.status)
    if not resp.is_html:
        raise FetchError(url, "not-html", resp.content_type or "no content type")
    title, body = extract_page_text(resp.body)
    return _ParsedPage(url, resp.status, _now(), title, body, extract_links(resp.body, url))


def _retrieve_attachment(fetch: Fetcher, url: str) -> Tuple[bytes, datetime]:
    resp = fetch(url)
    if not 200 <= resp.status < 300:
        raise FetchError(url, "status", f"HTTP {resp.status}", status=resp.status)
    return resp.body, _now()


class _RobotsGate:
    def __init__(self, fetch: Fetcher):
        self.fetch = fetch
        self.parsers: Dict[str, Optional[urllib.robotparser.RobotFileParser]] = {}

    def allowed(self, url: str) -> bool:
        host = url_host(url)
        if host not in self.parsers:
            robots_url = url.split("://", 1)[0] + "://" + host + "/robots.txt"
            parser = None
            try:
                resp = self.fetch(robots_url)
                if 200 <= resp.status < 300:
                    parser = urllib.robotparser.RobotFileParser()
                    parser.parse(resp.body.decode("utf-8", "replace").splitlines())
            except FetchError:
                pass
            self.parsers[host] = parser
        parser = self.parsers[host]
        return parser is None or parser.can_fetch(USER_AGENT, url)


def crawl(config: CrawlConfig, fetch: Optional[Fetcher] = None) -> CrawlResult:
    """Crawl from ``config.seed`` until the frontier runs out or the page cap is hit.

    Frontier mutation, classification and result assembly happen on the
    calling thread; only retrieval and HTML parsing run on the worker pool.
    With ``parallelism=1`` pages are fetched in breadth-first document order.
    """
    seed = normalize_url("", config.seed)
    if seed is None:
        raise CrawlError(f"seed is not a fetchable http(s) URL: {config.seed!r}")
    fetch = fetch or HttpFetcher(config.fetch_timeout, config.per_host_delay)
    table = config.suffix_table
    scope = url_host(seed) if config.scope else None
    robots = _RobotsGate(fetch) if config.respect_robots else None

    frontier = Frontier()
    frontier.enqueue(seed, scope)
    result = CrawlResult(scope=scope)
    stats = result.stats
    pending_attachments: Deque[Tuple[AttachmentId, AttachmentClass, str]] = deque()
    known_attachments: Set[AttachmentId] = set()

    def accept_links(page: _ParsedPage) -> PageRecord:
        outlinks: List[PageId] = []
        attachments: List[AttachmentId] = []
        for link in page.links:
            decision = classify_link(normalize_url(page.url, link.href), table)
            if isinstance(decision, Discard):
                stats.links_discarded += 1
            elif isinstance(decision, PageLink):
                target = decision.url
                if scope is not None and url_host(target) != scope:
                    stats.links_discarded += 1
                    continue
                outlinks.append(target)
                if target in frontier.seen:
                    continue
                if robots is not None and not robots.allowed(target):
                    frontier.seen.add(target)
                    stats.links_discarded += 1
                    continue
                frontier.enqueue(target, scope)
            elif isinstance(decision, AttachmentLink):
                att = decision.id
                if scope is not None and url_host(att.url) != scope:
                    stats.links_discarded += 1
                    continue
                if att not in attachments:
                    attachments.append(att)
                    result.attachment_refs.append((att, page.url, decision.cls))
                if att not in known_attachments:
                    known_attachments.add(att)
                    stats.attachments_found += 1
                    pending_attachments.append((att, decision.cls, link.anchor_text))
        return PageRecord(
            id=page.url,
            title=page.title,
            body_text=page.body_text,
            fetched_at=page.fetched_at,
            http_status=page.status,
            outlinks=tuple(outlinks),
            attachments=tuple(attachments),
        )

    in_flight: Dict[Future, tuple] = {}
    pages_in_flight = 0
    with ThreadPoolExecutor(max_workers=config.parallelism, thread_name_prefix="crawl") as pool:
        while True:
            while len(in_flight) < config.parallelism:
                if pending_attachments:
                    att, cls_, anchor = pending_attachments.popleft()
                    fut = pool.submit(_retrieve_attachment, fetch, att.url)
                    in_flight[fut] = ("attachment", att, cls_, anchor)
                    continue
                if stats.pages_fetched + pages_in_flight >= config.max_pages:
                    break
                url = frontier.next_url()
                if url is None:
                    break
                in_flight[pool.submit(_retrieve_page, fetch, url)] = ("page", url)
                pages_in_flight += 1
            if not in_flight:
                break
            done, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
            # handle completions in submission order
            for fut in [f for f in in_flight if f in done]:
                task = in_flight.pop(fut)
                if task[0] == "page":
                    pages_in_flight -= 1
                    url = task[1]
                    try:
                        parsed = fut.result()
                    except FetchError as e:
                        if url == seed:
                            raise SeedFetchError(f"seed fetch failed: {e}") from e
                        stats.fetch_errors += 1
                        result.errors.append(e)
                        log.warning("page fetch failed: %s", e)
                        continue
                    stats.pages_fetched += 1
                    result.pages.append(accept_links(parsed))
                else:
                    _, att, cls_, anchor = task
                    try:
                        payload, fetched_at = fut.result()
                    except FetchError as e:
                        stats.attachment_errors += 1
                        result.errors.append(e)
                        log.warning("attachment fetch failed: %s", e)
                        continue
                    stats.attachments_fetched += 1
                    result.attachments[att] = FetchedAttachment(att, cls_, anchor, fetched_at, payload)
    log.info("crawl finished: %s", stats.as_dict())
    return result
