"""Attachment classifier: decide per link between page, attachment and discard."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Optional, Union

from .model import AttachmentClass, AttachmentId, PageId, url_suffix

DEFAULT_CLASS_SUFFIXES: Dict[AttachmentClass, tuple] = {
    AttachmentClass.DOCUMENT: ("doc", "docx", "pdf", "rtf"),
    AttachmentClass.SPREADSHEET: ("xls", "xlsx", "csv"),
    AttachmentClass.PRESENTATION: ("ppt", "pptx"),
    AttachmentClass.TEXT: ("txt",),
    AttachmentClass.ARCHIVE: ("zip", "rar", "7z", "tar", "gz"),
    AttachmentClass.IMAGE: ("jpg", "jpeg", "png", "gif", "bmp"),
}
DEFAULT_PAGE_SUFFIXES = frozenset(("html", "htm", "php", "asp", "aspx", "jsp", "nsf", ""))


@dataclass(frozen=True)
class SuffixTable:
    classes: Mapping[str, AttachmentClass]
    page_suffixes: FrozenSet[str] = DEFAULT_PAGE_SUFFIXES

    def __post_init__(self) -> None:
        classes = {k.lower(): AttachmentClass(v) for k, v in self.classes.items()}
        pages = frozenset(s.lower() for s in self.page_suffixes)
        overlap = set(classes) & pages
        if overlap:
            raise ValueError(f"suffixes both page and attachment: {sorted(overlap)}")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "page_suffixes", pages)

    @classmethod
    def default(cls) -> "SuffixTable":
        return cls(
            {s: c for c, suffixes in DEFAULT_CLASS_SUFFIXES.items() for s in suffixes}
        )

    def with_mapping(self, suffix: str, cls_: AttachmentClass) -> "SuffixTable":
        classes = dict(self.classes)
        classes[suffix.lower()] = AttachmentClass(cls_)
        return SuffixTable(classes, self.page_suffixes - {suffix.lower()})


def load_suffix_table(path: Union[str, Path], base: Optional[SuffixTable] = None) -> SuffixTable:
    """Read a JSON suffix table override.

    Schema::

        {
          "replace": false,
          "classes": {"document": ["wps"], "archive": ["bz2"]},
          "page_suffixes": ["shtml"]
        }

    With ``replace`` false (the default) entries extend ``base``; a suffix
    listed under a class is moved to that class. With ``replace`` true the
    file is the whole table.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: suffix table must be a JSON object")
    if data.get("replace"):
        classes: Dict[str, AttachmentClass] = {}
        pages = set()
    else:
        base = base or SuffixTable.default()
        classes = dict(base.classes)
        pages = set(base.page_suffixes)
    for cls_name, suffixes in data.get("classes", {}).items():
        try:
            cls_ = AttachmentClass(cls_name)
        except ValueError:
            raise ValueError(f"{path}: unknown attachment class {cls_name!r}") from None
        for s in suffixes:
            s = s.lower().lstrip(".")
            classes[s] = cls_
            pages.discard(s)
    for s in data.get("page_suffixes", []):
        s = s.lower().lstrip(".")
        pages.add(s)
        classes.pop(s, None)
    return SuffixTable(classes, frozenset(pages))


@dataclass(frozen=True)
class PageLink:
    url: PageId


@dataclass(frozen=True)
class AttachmentLink:
    id: AttachmentId
    cls: AttachmentClass


@dataclass(frozen=True)
class Discard:
    reason: str = field(default="not a fetchable url")


LinkDecision = Union[PageLink, AttachmentLink, Discard]


def classify_link(url: Optional[str], table: Optional[SuffixTable] = None) -> LinkDecision:
    """Classify a normalized URL (``None`` = rejected by normalization) by suffix."""
    if url is None:
        return Discard()
    table = table or _DEFAULT_TABLE
    suffix = url_suffix(url)
    cls_ = table.classes.get(suffix)
    if cls_ is not None:
        return AttachmentLink(AttachmentId(url), cls_)
    if suffix in table.page_suffixes or suffix == "":
        return PageLink(PageId(url))
    return AttachmentLink(AttachmentId(url), AttachmentClass.OTHER)


def class_of(attachment: AttachmentId, table: Optional[SuffixTable] = None) -> AttachmentClass:
    table = table or _DEFAULT_TABLE
    return table.classes.get(attachment.suffix, AttachmentClass.OTHER)


_DEFAULT_TABLE = SuffixTable.default()
