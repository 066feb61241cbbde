"""Link scanner: permissive HTML link/text extraction and URL normalization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import List, Optional, Tuple
from urllib.parse import quote, urljoin, urlsplit, urlunsplit

from .model import PageId

FETCHABLE_SCHEMES = ("http", "https")
DEFAULT_PORTS = {"http": 80, "https": 443}

# Tags whose boundaries separate words in rendered text.
_BLOCK_TAGS = frozenset(
    "address article aside blockquote body br dd div dl dt fieldset figcaption "
    "figure footer form h1 h2 h3 h4 h5 h6 head header hr html li main nav ol p "
    "pre section table tbody td tfoot th thead tr ul".split()
)
_HIDDEN_TAGS = frozenset(("script", "style", "title", "noscript", "template"))
_WS = re.compile(r"\s+")

# Characters left untouched when re-quoting path and query; '%' is kept so
# that already-escaped input is not escaped twice.
_PATH_SAFE = "/%:@!$&'()*+,;=-._~"
_QUERY_SAFE = _PATH_SAFE + "?"


@dataclass(frozen=True)
class RawLink:
    href: str
    anchor_text: str
    base: PageId
    position: int


def decode_html(html: bytes | str) -> str:
    if isinstance(html, str):
        return html
    try:
        return html.decode("utf-8")
    except UnicodeDecodeError:
        # latin-1 maps every byte, so scanning never fails
        return html.decode("latin-1")


def collapse_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


class _BoardParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.links: List[Tuple[str, List[str]]] = []
        self._open_anchor: Optional[List[str]] = None
        self.title_parts: List[str] = []
        self.body_parts: List[str] = []
        self._hidden_depth = 0
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            # an unclosed <a> is implicitly closed by the next one
            self._open_anchor = None
            href = next((v for k, v in attrs if k == "href" and v is not None), None)
            if href is not None:
                self._open_anchor = []
                self.links.append((href, self._open_anchor))
        elif tag in _HIDDEN_TAGS:
            self._hidden_depth += 1
            self._in_title = self._in_title or tag == "title"
        if tag in _BLOCK_TAGS:
            self.body_parts.append(" ")

    def handle_startendtag(self, tag, attrs):
        if tag in _HIDDEN_TAGS:
            return
        self.handle_starttag(tag, attrs)
        if tag == "a":
            self._open_anchor = None

    def handle_endtag(self, tag):
        if tag == "a":
            self._open_anchor = None
        elif tag in _HIDDEN_TAGS and self._hidden_depth:
            self._hidden_depth -= 1
            if tag == "title":
                self._in_title = False
        if tag in _BLOCK_TAGS:
            self.body_parts.append(" ")

    def handle_data(self, data):
        if self._in_title:
            self.title_parts.append(data)
            return
        if self._hidden_depth:
            return
        self.body_parts.append(data)
        if self._open_anchor is not None:
            self._open_anchor.append(data)


def _parse(html: bytes | str) -> _BoardParser:
    parser = _BoardParser()
    try:
        parser.feed(decode_html(html))
        parser.close()
    except Exception:  # noqa: BLE001 - keep whatever was recovered so far
        pass
    return parser


def extract_links(html: bytes | str, base: PageId) -> List[RawLink]:
    """Return every ``<a href>`` in document order with its anchor text."""
    parser = _parse(html)
    return [
        RawLink(href=href, anchor_text=collapse_ws("".join(parts)), base=base, position=i)
        for i, (href, parts) in enumerate(parser.links)
    ]


def extract_page_text(html: bytes | str) -> Tuple[str, str]:
    """Return ``(title, body_text)`` with tags stripped and whitespace collapsed."""
    parser = _parse(html)
    return collapse_ws("".join(parser.title_parts)), collapse_ws("".join(parser.body_parts))


def _remove_dot_segments(path: str) -> str:
    if not path:
        return "/"
    out: List[str] = []
    segments = path.split("/")
    for i, seg in enumerate(segments):
        last = i == len(segments) - 1
        if seg == ".":
            if last:
                out.append("")
        elif seg == "..":
            if len(out) > 1:
                out.pop()
            if last:
                out.append("")
        else:
            out.append(seg)
    result = "/".join(out)
    if not result.startswith("/"):
        result = "/" + result
    return result


def normalize_url(base: str, href: str) -> Optional[PageId]:
    """Resolve ``href`` against ``base`` and canonicalize it.

    Returns ``None`` when the reference is not a fetchable http(s) URL.

    >>> normalize_url("http://b.example/x/", "../a.html")
    'http://b.example/a.html'
    >>> normalize_url("http://b.example/", "HTTP://B.Example:80/P#frag")
    'http://b.example/P'
    """
    href = href.strip()
    try:
        joined = urljoin(base, href) if base else href
        parts = urlsplit(joined)
        scheme = parts.scheme.lower()
        if scheme not in FETCHABLE_SCHEMES:
            return None
        host = parts.hostname
        port = parts.port
    except ValueError:
        return None
    if not host:
        return None
    if ":" in host:
        host = f"[{host}]"
    netloc = host
    if port is not None and port != DEFAULT_PORTS[scheme]:
        netloc = f"{host}:{port}"
    if parts.username is not None:
        userinfo = parts.username
        if parts.password is not None:
            userinfo += ":" + parts.password
        netloc = f"{userinfo}@{netloc}"
    path = quote(_remove_dot_segments(parts.path), safe=_PATH_SAFE)
    query = quote(parts.query, safe=_QUERY_SAFE)
    return PageId(urlunsplit((scheme, netloc, path, query, "")))
