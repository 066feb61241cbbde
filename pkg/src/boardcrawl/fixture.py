"""Deterministic bulletin-board site generator and a static server for tests.

``generate_site`` writes a small mirrored board (HTML notices plus
attachment files) and returns the ground truth the crawl is expected to
recover. Paths in the ground truth are site-absolute (``/notice/0003.html``);
join them with the server base URL to get crawl ids.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import mimetypes
import random
import threading
from collections import deque
from dataclasses import asdict, dataclass, field
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, List, Optional, Union
from urllib.parse import unquote, urlsplit

from .classifier import DEFAULT_CLASS_SUFFIXES, AttachmentLink, PageLink, classify_link
from .crawler import FetchError, FetchResponse
from .model import AttachmentClass
from .scanner import extract_links, extract_page_text, normalize_url

GROUND_TRUTH_NAME = "groundtruth.json"
AUDIT_BASE = "http://fixture.invalid"

DEFAULT_CLASS_MIX = {
    "document": 0.30,
    "spreadsheet": 0.20,
    "presentation": 0.10,
    "text": 0.15,
    "archive": 0.10,
    "image": 0.10,
    "other": 0.05,
}
OTHER_SUFFIXES = ("dat", "bin", "mdb")

FILLER = (
    "office student meeting schedule room course department library campus "
    "report form deadline semester lecture project budget staff faculty "
    "announcement training seminar contact holiday building network service "
    "policy record result list archive update annual review session center "
    "notice please see details below regarding following attached"
).split()
TOPICS = (
    "scholarship dormitory examination graduation internship tuition "
    "laboratory enrollment transcript thesis fellowship registration "
    "cafeteria timetable workshop admission competition volunteer "
    "insurance certificate"
).split()


class FixtureError(RuntimeError):
    pass


class FixtureAuditError(FixtureError):
    """The generated tree does not match its declared ground truth."""


@dataclass
class RelevancePlan:
    n_queries: int = 10
    relevant_per_query: int = 10
    decoys_per_query: int = 10
    boost: float = 4.0


@dataclass
class FixtureSpec:
    seed: int = 0
    n_pages: int = 200
    n_attachments: int = 500
    link_density: float = 4.0
    class_mix: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CLASS_MIX))
    shared_fraction: float = 0.1
    noise: bool = True
    relevance_plan: Optional[RelevancePlan] = None

    def __post_init__(self) -> None:
        if isinstance(self.relevance_plan, dict):
            self.relevance_plan = RelevancePlan(**self.relevance_plan)
        if self.n_pages < 1:
            raise ValueError("n_pages must be >= 1")
        if self.n_attachments < 0 or self.link_density < 0:
            raise ValueError("counts must be >= 0")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ValueError("shared_fraction must be in [0, 1]")
        unknown = set(self.class_mix) - {c.value for c in AttachmentClass}
        if unknown:
            raise ValueError(f"unknown classes in class_mix: {sorted(unknown)}")
        if any(v < 0 for v in self.class_mix.values()) or not math.isclose(
            sum(self.class_mix.values()), 1.0, abs_tol=1e-9
        ):
            raise ValueError("class_mix must be non-negative and sum to 1")

    @classmethod
    def from_json(cls, data: dict) -> "FixtureSpec":
        return cls(**data)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    pages: Dict[str, dict]
    attachments: Dict[str, dict]
    queries: List[dict]
    spec: dict

    def class_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for att in self.attachments.values():
            counts[att["class"]] = counts.get(att["class"], 0) + 1
        return counts

    def to_json(self) -> dict:
        return {"spec": self.spec, "pages": self.pages, "attachments": self.attachments,
                "queries": self.queries}

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        return cls(data["pages"], data["attachments"], data["queries"], data["spec"])

    @classmethod
    def load(cls, site_dir: Union[str, Path]) -> "GroundTruth":
        return cls.from_json(json.loads((Path(site_dir) / GROUND_TRUTH_NAME).read_text("utf-8")))


def _page_path(i: int) -> str:
    return "/index.html" if i == 0 else f"/notice/{i:04d}.html"


def _href(rng: random.Random, src: str, dst: str, noise: bool) -> str:
    """A relative or absolute-path reference from page ``src`` to ``dst``."""
    in_notice = src.startswith("/notice/")
    if in_notice:
        choices = ["../" + dst[1:], dst]
        if dst.startswith("/notice/"):
            name = dst.rsplit("/", 1)[1]
            choices += [name, "./" + name]
    else:
        choices = [dst[1:], "./" + dst[1:], dst]
    href = rng.choice(choices) if noise else choices[0]
    if noise and rng.random() < 0.1:
        href += "#top"
    return href


def _words(rng: random.Random, n: int) -> str:
    return " ".join(rng.choice(FILLER) for _ in range(n))


def _topic_terms(n: int) -> List[str]:
    return [TOPICS[i] if i < len(TOPICS) else f"topic{i:03d}" for i in range(n)]


def generate_site(spec: FixtureSpec, out_dir: Union[str, Path]) -> GroundTruth:
    """Write the board described by ``spec`` under ``out_dir``.

    Output is a pure function of ``spec``. The tree is re-parsed before
    returning and :class:`FixtureAuditError` is raised on any mismatch.
    """
    rng = random.Random(spec.seed)
    out = Path(out_dir)
    n = spec.n_pages
    paths = [_page_path(i) for i in range(n)]

    # placement of planted query attachments on distinct non-index pages
    plan = spec.relevance_plan
    planted: List[tuple] = []  # (query index, relevant flag)
    if plan is not None:
        for q in range(plan.n_queries):
            planted += [(q, True)] * plan.relevant_per_query
            planted += [(q, False)] * plan.decoys_per_query
        if len(planted) > n - 1:
            raise ValueError(f"relevance plan needs {len(planted)} non-index pages, have {n - 1}")
        if len(planted) > spec.n_attachments:
            raise ValueError(f"relevance plan needs {len(planted)} attachments")
    planted_pages = rng.sample(range(1, n), len(planted)) if planted else []
    boosted = {p for p, (_, rel) in zip(planted_pages, planted) if rel}

    # link structure: random tree rooted at the index, plus popularity-weighted extras
    links: List[List[int]] = [[] for _ in range(n)]
    for i in range(1, n):
        links[rng.randrange(0, i)].append(i)
    extra = max(0, round(spec.link_density * n) - (n - 1)) if n > 1 else 0
    weights = [plan.boost if (plan and i in boosted) else 1.0 for i in range(n)]
    for _ in range(extra):
        src = rng.randrange(n)
        dst = rng.choices(range(n), weights=weights)[0]
        if dst != src:
            links[src].append(dst)

    # attachments
    classes = sorted(spec.class_mix)
    mix = [spec.class_mix[c] for c in classes]
    topics = _topic_terms(plan.n_queries) if plan else []
    attachments: Dict[str, dict] = {}
    page_atts: List[List[str]] = [[] for _ in range(n)]
    queries = [{"query": t, "relevant": [], "decoys": []} for t in topics]
    for a in range(spec.n_attachments):
        cls_ = rng.choices(classes, weights=mix)[0]
        if cls_ == "other":
            suffix = rng.choice(OTHER_SUFFIXES)
        else:
            suffix = rng.choice(DEFAULT_CLASS_SUFFIXES[AttachmentClass(cls_)])
        if spec.noise and rng.random() < 0.1:
            suffix = suffix.upper()
        stem = f"{rng.getrandbits(32):08x}-{rng.choice(FILLER)}"
        path = f"/files/{stem}.{suffix}"
        anchor = _words(rng, 2)
        if a < len(planted):
            q, relevant = planted[a]
            anchor = f"{topics[q]} {anchor}"
            queries[q]["relevant" if relevant else "decoys"].append(path)
            hosts = [planted_pages[a]]
        else:
            hosts = [rng.randrange(n)]
            if n > 1 and rng.random() < spec.shared_fraction:
                hosts.append(_other_page(rng, n, hosts[0]))
        payload = rng.randbytes(rng.randint(16, 512))
        attachments[path] = {
            "class": cls_,
            "anchor_text": anchor,
            "containing_pages": sorted(paths[h] for h in hosts),
            "sha256": hashlib.sha256(payload).hexdigest(),
            "size": len(payload),
        }
        for h in hosts:
            page_atts[h].append(path)
        target = out / path[1:]
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(payload)

    pages: Dict[str, dict] = {}
    for i in range(n):
        src = paths[i]
        title = "Bulletin board index" if i == 0 else f"Notice {i}: {_words(rng, 3)}"
        sentences = [_words(rng, rng.randint(6, 14)) + "." for _ in range(rng.randint(1, 3))]
        items = []  # (href, anchor text, tag name)
        for dst in links[i]:
            items.append((_href(rng, src, paths[dst], spec.noise), f"Notice {dst}", "a"))
        for att in page_atts[i]:
            items.append((_href(rng, src, att, spec.noise), attachments[att]["anchor_text"], "a"))
        if spec.noise:
            if items and rng.random() < 0.2:
                items.append(rng.choice(items))  # repeated link
            if rng.random() < 0.2:
                items.append((_href(rng, src, src, True), "this notice", "a"))
            if rng.random() < 0.15:
                items.append(("mailto:office@board.invalid", "mail the office", "a"))
            if rng.random() < 0.1:
                items.append(("javascript:void(0)", "print", "a"))
            if rng.random() < 0.1:
                items.append(("http://elsewhere.invalid/home.html", "partner site", "a"))
            if rng.random() < 0.05:
                items.append(("http://elsewhere.invalid/form.doc", "external form", "a"))
            items = [(h, t, "A" if rng.random() < 0.1 else "a") for h, t, _ in items]
        html, body = _render_page(title, sentences, items, rng if spec.noise else None)
        target = out / src[1:]
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(html, encoding="utf-8")
        outlinks = list(dict.fromkeys(paths[d] for d in links[i] if d != i))
        pages[src] = {
            "title": title,
            "body_text": body,
            "outlinks": outlinks,
            "attachments": list(dict.fromkeys(page_atts[i])),
        }

    truth = GroundTruth(pages, attachments, queries, spec.to_json())
    (out / GROUND_TRUTH_NAME).write_text(
        json.dumps(truth.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    audit_site(out, truth)
    return truth


def _other_page(rng: random.Random, n: int, exclude: int) -> int:
    while True:
        p = rng.randrange(n)
        if p != exclude:
            return p


def _render_page(title: str, sentences: List[str], items: List[tuple],
                 rng: Optional[random.Random]) -> tuple:
    """HTML for one notice page and the body text a reader would see."""
    visible = [title, *sentences]
    lines = [
        "<!DOCTYPE html>",
        "<html><head><meta charset=\"utf-8\">",
        f"<title>{title}</title></head>",
        "<body>",
        f"<h1>{title}</h1>",
    ]
    # sloppy markup: unclosed paragraph and list items when noise is on
    close_p = "" if rng is not None and rng.random() < 0.3 else "</p>"
    lines.append(f"<p>{' '.join(sentences)}{close_p}")
    lines.append("<ul>")
    for href, text, tag in items:
        close_li = "" if rng is not None and rng.random() < 0.3 else "</li>"
        lines.append(f'<li><{tag} href="{href}">{text}</{tag}>{close_li}')
        visible.append(text)
    lines.append("</ul>")
    lines.append("</body></html>")
    return "\n".join(lines) + "\n", " ".join(visible)


def audit_site(site_dir: Union[str, Path], truth: GroundTruth) -> None:
    """Re-parse the generated tree and check it against ``truth``."""
    root = Path(site_dir)
    problems = []
    for path, page in sorted(truth.pages.items()):
        html = (root / path[1:]).read_bytes()
        base = AUDIT_BASE + path
        title, body = extract_page_text(html)
        if (title, body) != (page["title"], page["body_text"]):
            problems.append(f"{path}: title/body differ from declaration")
        outlinks, atts = [], []
        for link in extract_links(html, base):
            decision = classify_link(normalize_url(base, link.href))
            if isinstance(decision, PageLink) and decision.url.startswith(AUDIT_BASE + "/"):
                target = decision.url[len(AUDIT_BASE):]
                if target != path and target not in outlinks:
                    outlinks.append(target)
            elif isinstance(decision, AttachmentLink) and decision.id.url.startswith(AUDIT_BASE + "/"):
                target = decision.id.url[len(AUDIT_BASE):]
                if target not in atts:
                    atts.append(target)
                if decision.cls.value != truth.attachments[target]["class"]:
                    problems.append(f"{path}: {target} classifies as {decision.cls.value}")
        if outlinks != page["outlinks"]:
            problems.append(f"{path}: outlinks differ from declaration")
        if atts != page["attachments"]:
            problems.append(f"{path}: attachment links differ from declaration")
    for path, att in sorted(truth.attachments.items()):
        f = root / path[1:]
        if not f.is_file() or hashlib.sha256(f.read_bytes()).hexdigest() != att["sha256"]:
            problems.append(f"{path}: payload missing or digest differs")
        for host in att["containing_pages"]:
            if path not in truth.pages[host]["attachments"]:
                problems.append(f"{path}: not linked from declared page {host}")
    if truth.pages:
        reached = {"/index.html"}
        todo = deque(["/index.html"])
        while todo:
            for nxt in truth.pages[todo.popleft()]["outlinks"]:
                if nxt not in reached:
                    reached.add(nxt)
                    todo.append(nxt)
        if len(reached) != len(truth.pages):
            problems.append(f"{len(truth.pages) - len(reached)} pages unreachable from the index")
    if problems:
        raise FixtureAuditError("; ".join(problems[:10]))


class _QuietHandler(SimpleHTTPRequestHandler):
    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass


class FixtureServer:
    """Static HTTP server over a directory, running on a background thread."""

    def __init__(self, directory: Union[str, Path], port: int = 0, host: str = "127.0.0.1"):
        directory = Path(directory)
        if not directory.is_dir():
            raise FixtureError(f"not a directory: {directory}")
        handler = functools.partial(_QuietHandler, directory=str(directory))
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.host, self.port = self.httpd.server_address[:2]
        self._thread: Optional[threading.Thread] = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def seed_url(self) -> str:
        return self.base_url + "/index.html"

    def start(self) -> "FixtureServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self) -> None:
        try:
            self.httpd.serve_forever()
        finally:
            self.httpd.server_close()

    def __enter__(self) -> "FixtureServer":
        return self.start() if self._thread is None else self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(directory: Union[str, Path], port: int = 0) -> FixtureServer:
    """Start serving ``directory``; ``port=0`` picks a free port."""
    return FixtureServer(directory, port).start()


class SiteFetcher:
    """In-process fetcher reading a generated site straight from disk.

    Stands in for HTTP in tests that are about crawl logic, not transport.
    """

    def __init__(self, directory: Union[str, Path], base_url: str = AUDIT_BASE):
        self.root = Path(directory).resolve()
        self.base_url = base_url.rstrip("/")
        self.requests: List[str] = []
        self._lock = threading.Lock()

    def __call__(self, url: str) -> FetchResponse:
        with self._lock:
            self.requests.append(url)
        if not url.startswith(self.base_url + "/"):
            raise FetchError(url, "connection", "host not served")
        rel = unquote(urlsplit(url).path).lstrip("/")
        path = (self.root / rel).resolve()
        if self.root not in path.parents or not path.is_file():
            raise FetchError(url, "status", "HTTP 404", status=404)
        ctype = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return FetchResponse(url, 200, ctype, path.read_bytes())
