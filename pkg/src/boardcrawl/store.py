"""On-disk classified and associated store.

Layout under the store root::

    manifest.json
    pages/<sha256 of url>.json        page metadata
    pages/<sha256 of url>.txt         page body text
    attachments/<class>/<name>.rec    relevance header + original payload

A ``.rec`` file is a UTF-8 header of ``key: value`` lines in a fixed key
order, one empty line, then exactly ``payload-length`` raw payload bytes.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union
from urllib.parse import quote, unquote

from .model import AttachmentClass, AttachmentId, PageId, PageRecord

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
RECORD_MAGIC = "boardcrawl-record"
RECORD_VERSION = "1"
HEADER_KEYS = (
    RECORD_MAGIC,
    "url",
    "class",
    "attachrank",
    "containing-pages",
    "anchor-text",
    "fetched-at",
    "payload-sha256",
    "payload-length",
)

PathLike = Union[str, os.PathLike]


class StoreError(OSError):
    """Filesystem failure while reading or writing the store."""


class CorruptRecordError(ValueError):
    """A .rec file failed to parse or verify. ``field`` names the culprit."""

    def __init__(self, path: PathLike, field: str, message: str):
        super().__init__(f"{path}: {field}: {message}")
        self.path = str(path)
        self.field = field


class MalformedHeaderError(CorruptRecordError):
    pass


class DigestMismatchError(CorruptRecordError):
    pass


@dataclass(frozen=True)
class AttachmentRecord:
    id: AttachmentId
    cls: AttachmentClass
    ar: float
    containing_pages: Tuple[PageId, ...]
    anchor_text: str
    fetched_at: datetime
    payload: bytes
    payload_sha256: str = field(default="")

    def __post_init__(self) -> None:
        digest = hashlib.sha256(self.payload).hexdigest()
        if not self.payload_sha256:
            object.__setattr__(self, "payload_sha256", digest)
        elif self.payload_sha256 != digest:
            raise ValueError(f"payload_sha256 does not match payload of {self.id}")
        object.__setattr__(self, "containing_pages", tuple(self.containing_pages))
        object.__setattr__(self, "cls", AttachmentClass(self.cls))


def _url_digest(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()


_UNSAFE_NAME = re.compile(r"[^A-Za-z0-9._-]+")


def record_name(attachment: AttachmentId) -> str:
    """File name for an attachment: url digest prefix plus a readable basename."""
    base = attachment.url.split("?", 1)[0].rstrip("/").rsplit("/", 1)[-1]
    base = _UNSAFE_NAME.sub("_", base)[:80] or "attachment"
    return f"{_url_digest(attachment.url)[:16]}-{base}.rec"


def _escape_page(url: str) -> str:
    return url.replace("%", "%25").replace(",", "%2C")


def format_attachrank(ar: float) -> str:
    return format(ar, ".17g")


def encode_record(record: AttachmentRecord) -> bytes:
    values = (
        RECORD_VERSION,
        record.id.url,
        record.cls.value,
        format_attachrank(record.ar),
        ",".join(_escape_page(p) for p in record.containing_pages),
        quote(record.anchor_text, safe=""),
        record.fetched_at.isoformat(),
        record.payload_sha256,
        str(len(record.payload)),
    )
    header = "".join(f"{k}: {v}\n" for k, v in zip(HEADER_KEYS, values))
    return header.encode("utf-8") + b"\n" + record.payload


def decode_record(data: bytes, path: PathLike = "<bytes>") -> AttachmentRecord:
    end = data.find(b"\n\n")
    if end < 0:
        raise MalformedHeaderError(path, "header", "no blank line after header")
    try:
        lines = data[:end].decode("utf-8").split("\n")
    except UnicodeDecodeError:
        raise MalformedHeaderError(path, "header", "header is not UTF-8") from None
    header: Dict[str, str] = {}
    for i, key in enumerate(HEADER_KEYS):
        if i >= len(lines):
            raise MalformedHeaderError(path, key, "missing")
        name, sep, value = lines[i].partition(": ")
        if not sep or name != key:
            raise MalformedHeaderError(path, key, f"expected {key!r}, found {lines[i]!r}")
        header[key] = value
    if len(lines) > len(HEADER_KEYS):
        raise MalformedHeaderError(path, "header", f"unexpected line {lines[len(HEADER_KEYS)]!r}")
    if header[RECORD_MAGIC] != RECORD_VERSION:
        raise MalformedHeaderError(path, RECORD_MAGIC, f"unsupported version {header[RECORD_MAGIC]!r}")

    def parse(key, fn):
        try:
            return fn(header[key])
        except ValueError as e:
            raise MalformedHeaderError(path, key, str(e)) from None

    ar = parse("attachrank", float)
    cls_ = parse("class", AttachmentClass)
    fetched_at = parse("fetched-at", datetime.fromisoformat)
    length = parse("payload-length", int)
    payload = data[end + 2:]
    if len(payload) != length:
        raise CorruptRecordError(path, "payload-length",
                                 f"declared {length} bytes, found {len(payload)}")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload-sha256"]:
        raise DigestMismatchError(path, "payload-sha256", "payload digest mismatch")
    pages = header["containing-pages"]
    containing = tuple(PageId(unquote(p)) for p in pages.split(",")) if pages else ()
    return AttachmentRecord(
        id=AttachmentId(header["url"]),
        cls=cls_,
        ar=ar,
        containing_pages=containing,
        anchor_text=unquote(header["anchor-text"]),
        fetched_at=fetched_at,
        payload=payload,
        payload_sha256=digest,
    )


def read_attachment_record(path: PathLike) -> AttachmentRecord:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise StoreError(f"cannot read {path}: {e}") from e
    return decode_record(data, path)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as e:
        raise StoreError(f"cannot write {path}: {e}") from e


def page_to_json(page: PageRecord) -> dict:
    return {
        "id": page.id,
        "title": page.title,
        "fetched_at": page.fetched_at.isoformat(),
        "http_status": page.http_status,
        "outlinks": list(page.outlinks),
        "attachments": [a.url for a in page.attachments],
    }


class Store:
    """Single-writer handle on a store directory.

    Every mutating call rewrites ``manifest.json`` unless it happens inside
    :meth:`batch`, which defers the manifest write to the end of the block.
    """

    def __init__(self, root: PathLike, create: bool = True):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if manifest_path.exists():
            self.manifest = self._load_manifest(manifest_path)
        elif create:
            self.manifest = {
                "version": MANIFEST_VERSION,
                "scope": None,
                "rank_config": None,
                "pages": [],
                "attachments": [],
            }
            try:
                self.root.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise StoreError(f"cannot create store at {self.root}: {e}") from e
            self.save_manifest()
        else:
            raise StoreError(f"no store at {self.root} (missing {MANIFEST_NAME})")
        self._deferred = 0

    @staticmethod
    def _load_manifest(path: Path) -> dict:
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise StoreError(f"cannot read manifest {path}: {e}") from e
        if manifest.get("version") != MANIFEST_VERSION:
            raise StoreError(f"{path}: unsupported manifest version {manifest.get('version')!r}")
        return manifest

    @contextlib.contextmanager
    def batch(self) -> Iterator["Store"]:
        self._deferred += 1
        try:
            yield self
        finally:
            self._deferred -= 1
            if not self._deferred:
                self.save_manifest()

    def _touch(self) -> None:
        if not self._deferred:
            self.save_manifest()

    def save_manifest(self) -> None:
        m = self.manifest
        m["pages"].sort(key=lambda e: e["id"])
        m["attachments"].sort(key=lambda e: e["id"])
        data = json.dumps(m, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        _atomic_write(self.root / MANIFEST_NAME, data.encode("utf-8"))

    def set_rank_config(self, config) -> None:
        self.manifest["rank_config"] = config.as_dict() if config is not None else None
        self._touch()

    def set_scope(self, scope: Optional[str]) -> None:
        self.manifest["scope"] = scope
        self._touch()

    # pages

    def store_page(self, page: PageRecord) -> Path:
        stem = _url_digest(page.id)
        meta_rel = f"pages/{stem}.json"
        text_rel = f"pages/{stem}.txt"
        meta = json.dumps(page_to_json(page), indent=1, ensure_ascii=False) + "\n"
        _atomic_write(self.root / meta_rel, meta.encode("utf-8"))
        _atomic_write(self.root / text_rel, page.body_text.encode("utf-8"))
        entries = [e for e in self.manifest["pages"] if e["id"] != page.id]
        entries.append({"id": page.id, "title": page.title, "path": meta_rel, "text_path": text_rel})
        self.manifest["pages"] = entries
        self._touch()
        return self.root / meta_rel

    def load_page(self, entry: dict) -> PageRecord:
        try:
            meta = json.loads((self.root / entry["path"]).read_text(encoding="utf-8"))
            body = (self.root / entry["text_path"]).read_text(encoding="utf-8")
        except (OSError, ValueError) as e:
            raise StoreError(f"cannot read page {entry.get('id')}: {e}") from e
        return PageRecord(
            id=PageId(meta["id"]),
            title=meta["title"],
            body_text=body,
            fetched_at=datetime.fromisoformat(meta["fetched_at"]),
            http_status=meta["http_status"],
            outlinks=tuple(PageId(u) for u in meta["outlinks"]),
            attachments=tuple(AttachmentId(u) for u in meta["attachments"]),
        )

    def pages(self) -> List[PageRecord]:
        return [self.load_page(e) for e in self.manifest["pages"]]

    # attachments

    def record_path(self, attachment: AttachmentId, cls_: AttachmentClass) -> str:
        return f"attachments/{AttachmentClass(cls_).value}/{record_name(attachment)}"

    def write_attachment_record(self, record: AttachmentRecord) -> Path:
        rel = self.record_path(record.id, record.cls)
        _atomic_write(self.root / rel, encode_record(record))
        entries = [e for e in self.manifest["attachments"] if e["id"] != record.id.url]
        stale = [e["path"] for e in self.manifest["attachments"]
                 if e["id"] == record.id.url and e["path"] != rel]
        for old in stale:
            with contextlib.suppress(FileNotFoundError):
                (self.root / old).unlink()
        entries.append({"id": record.id.url, "class": record.cls.value, "ar": record.ar, "path": rel})
        self.manifest["attachments"] = entries
        self._touch()
        return self.root / rel

    def attachment_records(self) -> Iterator[Tuple[dict, AttachmentRecord]]:
        for entry in self.manifest["attachments"]:
            yield entry, read_attachment_record(self.root / entry["path"])

    def check_completeness(self) -> List[str]:
        """Problems where the manifest and the files on disk disagree (empty = ok)."""
        problems = []
        listed = set()
        seen_ids = set()
        for entry in self.manifest["attachments"]:
            if entry["id"] in seen_ids:
                problems.append(f"duplicate attachment id {entry['id']}")
            seen_ids.add(entry["id"])
            path = self.root / entry["path"]
            listed.add(path.resolve())
            if not path.is_file():
                problems.append(f"missing record {entry['path']}")
                continue
            try:
                rec = read_attachment_record(path)
            except (CorruptRecordError, StoreError) as e:
                problems.append(str(e))
                continue
            if rec.id.url != entry["id"] or rec.cls.value != entry["class"]:
                problems.append(f"{entry['path']}: header disagrees with manifest")
            if Path(entry["path"]).parent.name != rec.cls.value:
                problems.append(f"{entry['path']}: stored outside its class directory")
        for path in sorted((self.root / "attachments").glob("*/*.rec")):
            if path.resolve() not in listed:
                problems.append(f"unlisted record {path.relative_to(self.root)}")
        page_ids = set()
        for entry in self.manifest["pages"]:
            if entry["id"] in page_ids:
                problems.append(f"duplicate page id {entry['id']}")
            page_ids.add(entry["id"])
            for key in ("path", "text_path"):
                if not (self.root / entry[key]).is_file():
                    problems.append(f"missing page file {entry[key]}")
        return problems
