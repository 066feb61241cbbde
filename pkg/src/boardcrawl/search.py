"""Lexical attachment search with AttachRank score modification.

Each attachment is indexed over its anchor text plus the titles and body
text of the pages that link to it. Scores are TF-IDF::

    lexical(id) = sum over distinct query terms t of tf(t, id) * ln(1 + N / df(t))
    final(id)   = lexical(id) * (1 + lambda * ar(id) / max_ar)
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

from .store import Store, StoreError, read_attachment_record

INDEX_VERSION = 1

DEFAULT_STOPWORDS = frozenset(
    "a an and are as at be by for from has have in is it its of on or that the "
    "this to was were will with".split()
)

_TOKEN = re.compile(r"[^\W_]+")


class IndexBuildError(RuntimeError):
    def __init__(self, paths: List[str]):
        super().__init__("missing or unreadable store files: " + ", ".join(paths))
        self.paths = paths


class EmptyQueryError(ValueError):
    pass


def tokenize(text: str, stopwords: FrozenSet[str] = DEFAULT_STOPWORDS) -> List[str]:
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= 2 and t not in stopwords]


@dataclass(frozen=True)
class DocStats:
    length: int
    cls: str
    page: str
    snippet: str


@dataclass
class SearchIndex:
    postings: Dict[str, List[Tuple[str, int]]]
    doc_stats: Dict[str, DocStats]
    ar_values: Dict[str, float]
    stopwords: FrozenSet[str] = DEFAULT_STOPWORDS

    @property
    def doc_count(self) -> int:
        return len(self.doc_stats)

    @property
    def max_ar(self) -> float:
        return max(self.ar_values.values(), default=0.0)

    def to_json(self) -> dict:
        return {
            "version": INDEX_VERSION,
            "stopwords": sorted(self.stopwords),
            "docs": {
                doc_id: {"length": s.length, "class": s.cls, "page": s.page,
                         "snippet": s.snippet, "ar": self.ar_values[doc_id]}
                for doc_id, s in sorted(self.doc_stats.items())
            },
            "postings": {t: [[d, tf] for d, tf in plist] for t, plist in sorted(self.postings.items())},
        }

    @classmethod
    def from_json(cls, data: dict) -> "SearchIndex":
        if data.get("version") != INDEX_VERSION:
            raise ValueError(f"unsupported index version {data.get('version')!r}")
        docs = data["docs"]
        return cls(
            postings={t: [(d, int(tf)) for d, tf in plist] for t, plist in data["postings"].items()},
            doc_stats={d: DocStats(v["length"], v["class"], v["page"], v["snippet"]) for d, v in docs.items()},
            ar_values={d: float(v["ar"]) for d, v in docs.items()},
            stopwords=frozenset(data["stopwords"]),
        )


def save_index(index: SearchIndex, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(index.to_json(), ensure_ascii=False) + "\n", encoding="utf-8")


def load_index(path: Union[str, Path]) -> SearchIndex:
    return SearchIndex.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def index_documents(docs: Iterable[Tuple[str, str, float, DocStats]],
                    stopwords: Optional[Iterable[str]] = None) -> SearchIndex:
    """Index ``(id, text, ar, stats)`` tuples; ``stats.length`` is recomputed."""
    stop = DEFAULT_STOPWORDS if stopwords is None else frozenset(stopwords)
    postings: Dict[str, List[Tuple[str, int]]] = {}
    doc_stats: Dict[str, DocStats] = {}
    ar_values: Dict[str, float] = {}
    for doc_id, text, ar, stats in sorted(docs, key=lambda d: d[0]):
        tokens = tokenize(text, stop)
        for term, tf in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((doc_id, tf))
        doc_stats[doc_id] = DocStats(len(tokens), stats.cls, stats.page, stats.snippet)
        ar_values[doc_id] = ar
    return SearchIndex(postings, doc_stats, ar_values, stop)


def build_index(store: Store, stopwords: Optional[Iterable[str]] = None) -> SearchIndex:
    pages = {}
    missing = []
    for entry in store.manifest["pages"]:
        text_path = store.root / entry["text_path"]
        try:
            pages[entry["id"]] = (entry["title"], text_path.read_text(encoding="utf-8"))
        except OSError:
            missing.append(str(text_path))
    docs = []
    for entry in store.manifest["attachments"]:
        path = store.root / entry["path"]
        try:
            rec = read_attachment_record(path)
        except (StoreError, ValueError):
            missing.append(str(path))
            continue
        parts = [rec.anchor_text]
        for page_id in rec.containing_pages:
            if page_id not in pages:
                continue
            title, body = pages[page_id]
            parts += [title, body]
        page = rec.containing_pages[0] if rec.containing_pages else ""
        snippet = rec.anchor_text or (pages[page][0] if page in pages else "")
        docs.append((rec.id.url, "\n".join(parts), entry["ar"],
                     DocStats(0, rec.cls.value, page, snippet[:80])))
    if missing:
        raise IndexBuildError(missing)
    return index_documents(docs, stopwords)


def query_terms(index: SearchIndex, text: str) -> List[str]:
    return list(dict.fromkeys(tokenize(text, index.stopwords)))


def lexical_score(index: SearchIndex, terms: Iterable[str], doc_id: str) -> float:
    score = 0.0
    n = index.doc_count
    for term in terms:
        for d, tf in index.postings.get(term, ()):
            if d == doc_id:
                score += tf * math.log(1.0 + n / len(index.postings[term]))
                break
    return score


@dataclass(frozen=True)
class ResultRow:
    id: str
    lexical_score: float
    final_score: float
    cls: str
    page: str
    snippet: str

    def as_dict(self) -> dict:
        return {"id": self.id, "lexical_score": self.lexical_score, "final_score": self.final_score,
                "class": self.cls, "page": self.page, "snippet": self.snippet}


@dataclass(frozen=True)
class QueryResult:
    terms: Tuple[str, ...]
    rows: Tuple[ResultRow, ...]

    def ids(self) -> List[str]:
        return [r.id for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


def query(index: SearchIndex, text: str, k: int = 10, lam: float = 1.0) -> QueryResult:
    """Top ``k`` attachments matching ``text``.

    Only attachments sharing at least one term with the query are returned.
    Ties on final score are broken by attachment id ascending.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = query_terms(index, text)
    if not terms:
        raise EmptyQueryError(f"query {text!r} has no searchable terms")
    n = index.doc_count
    lexical: Dict[str, float] = {}
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = math.log(1.0 + n / len(plist))
        for doc_id, tf in plist:
            lexical[doc_id] = lexical.get(doc_id, 0.0) + tf * idf
    max_ar = index.max_ar
    scored = []
    for doc_id, lex in lexical.items():
        ar_norm = index.ar_values[doc_id] / max_ar if max_ar > 0 else 0.0
        scored.append((lex * (1.0 + lam * ar_norm), lex, doc_id))
    scored.sort(key=lambda s: (-s[0], s[2]))
    rows = []
    for final, lex, doc_id in scored[:k]:
        st = index.doc_stats[doc_id]
        rows.append(ResultRow(doc_id, lex, final, st.cls, st.page, st.snippet))
    return QueryResult(tuple(terms), tuple(rows))


def format_table(result: QueryResult) -> str:
    header = ("rank", "final", "lexical", "class", "attachment", "snippet")
    lines = [header] + [
        (str(i), f"{r.final_score:.4f}", f"{r.lexical_score:.4f}", r.cls, r.id, r.snippet)
        for i, r in enumerate(result.rows, 1)
    ]
    widths = [max(len(line[c]) for line in lines) for c in range(len(header) - 1)]
    out = []
    for line in lines:
        cells = [cell.ljust(w) for cell, w in zip(line, widths)] + [line[-1]]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out)


def format_records(result: QueryResult) -> str:
    return "\n".join(json.dumps(r.as_dict(), ensure_ascii=False) for r in result.rows)
