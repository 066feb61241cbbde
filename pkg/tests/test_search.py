import math
import shutil
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from boardcrawl.fixture import AUDIT_BASE
from boardcrawl.search import (
    DEFAULT_STOPWORDS, DocStats, EmptyQueryError, IndexBuildError, build_index, format_records,
    format_table, index_documents, lexical_score, load_index, query, save_index, tokenize,
)
from boardcrawl.store import Store

from oracles import reference_scores


def corpus(*docs):
    """docs: (id, text, ar)"""
    return index_documents([(d, text, ar, DocStats(0, "document", "http://b/p", text[:20]))
                            for d, text, ar in docs])


def test_tokenize():
    assert tokenize("Exam-Schedule, the 2008 a b x1!") == ["exam", "schedule", "2008", "x1"]
    assert tokenize("the and of") == []


def test_single_attachment_postings():
    idx = corpus(("m1", "exam schedule", 1.0))
    assert idx.postings["exam"] == [("m1", 1)]
    assert idx.postings["schedule"] == [("m1", 1)]
    assert idx.doc_count == 1


def test_empty_store_gives_empty_index(tmp_path):
    idx = build_index(Store(tmp_path))
    assert idx.doc_count == 0 and idx.postings == {}


def test_lexical_formula():
    idx = corpus(("m1", "exam exam exam", 1.0))
    assert lexical_score(idx, ["exam"], "m1") == pytest.approx(3 * math.log(2), abs=1e-15)
    assert lexical_score(idx, ["missing"], "m1") == 0.0


def test_equal_lexical_orders_by_attachrank():
    idx = corpus(("a", "exam", 0.3), ("b", "exam", 0.9))
    res = query(idx, "exam")
    assert res.ids() == ["b", "a"]
    assert res.rows[0].lexical_score == res.rows[1].lexical_score


def test_lambda_zero_is_lexical_order_with_id_tiebreak():
    idx = corpus(("b", "exam", 0.3), ("a", "exam", 0.9), ("c", "exam exam", 0.15))
    res = query(idx, "exam", lam=0.0)
    assert res.ids() == ["c", "a", "b"]
    assert all(r.final_score == r.lexical_score for r in res.rows)


def test_final_formula():
    idx = corpus(("a", "exam", 2.0), ("b", "exam notes", 1.0))
    res = query(idx, "exam", lam=0.5)
    lex = math.log(1 + 2 / 2)
    by_id = {r.id: r for r in res.rows}
    assert by_id["a"].final_score == pytest.approx(lex * 1.5)
    assert by_id["b"].final_score == pytest.approx(lex * 1.25)


def test_empty_query_is_error():
    idx = corpus(("a", "exam", 1.0))
    with pytest.raises(EmptyQueryError):
        query(idx, "the of and")
    with pytest.raises(EmptyQueryError):
        query(idx, "  !! ")


def test_k_limits_results():
    idx = corpus(*[(f"d{i}", "exam", 1.0) for i in range(20)])
    assert len(query(idx, "exam", k=3)) == 3
    with pytest.raises(ValueError):
        query(idx, "exam", k=0)


def test_missing_files_are_listed(small_store, tmp_path):
    root = tmp_path / "copy"
    shutil.copytree(small_store[0], root)
    store = Store(root, create=False)
    victims = [store.manifest["attachments"][0]["path"], store.manifest["pages"][0]["text_path"]]
    for v in victims:
        (root / v).unlink()
    with pytest.raises(IndexBuildError) as exc:
        build_index(store)
    assert len(exc.value.paths) == 2


def test_fixture_index_counts(small_store):
    root, result, ranks, table, truth = small_store
    idx = build_index(Store(root, create=False))
    assert idx.doc_count == len(truth.attachments)
    assert all(tf >= 1 for plist in idx.postings.values() for _, tf in plist)
    assert set(idx.ar_values) == set(idx.doc_stats)


def test_fixture_scores_match_reference_scorer(small_store):
    root, result, ranks, table, truth = small_store
    docs = {}
    for path, att in truth.attachments.items():
        parts = [att["anchor_text"]]
        for page in att["containing_pages"]:
            parts += [truth.pages[page]["title"], truth.pages[page]["body_text"]]
        docs[AUDIT_BASE + path] = "\n".join(parts)
    idx = build_index(Store(root, create=False))
    for q in ("office", "student schedule", "notice attached", "deadline budget seminar", "Notice 3"):
        expected = reference_scores(docs, q, DEFAULT_STOPWORDS)
        terms = list(dict.fromkeys(tokenize(q)))
        for doc_id, score in expected.items():
            assert lexical_score(idx, terms, doc_id) == pytest.approx(score, rel=1e-12, abs=1e-12)


def test_index_persistence_roundtrip(small_store, tmp_path):
    idx = build_index(Store(small_store[0], create=False))
    save_index(idx, tmp_path / "index.json")
    again = load_index(tmp_path / "index.json")
    assert again == idx
    assert query(again, "office notice") == query(idx, "office notice")


def test_output_formats():
    idx = corpus(("http://b/a.doc", "exam", 1.0))
    res = query(idx, "exam")
    table = format_table(res)
    assert table.splitlines()[0].split()[:3] == ["rank", "final", "lexical"]
    assert "http://b/a.doc" in table
    assert '"id": "http://b/a.doc"' in format_records(res)


_docs = st.lists(
    st.tuples(st.sampled_from(["exam", "exam exam", "exam schedule", "room", "exam room room"]),
              st.floats(0.15, 10.0)),
    min_size=1, max_size=12)


@given(_docs, st.floats(0.0, 5.0))
def test_ranking_properties(docs, lam):
    idx = corpus(*[(f"d{i:02d}", text, ar) for i, (text, ar) in enumerate(docs)])
    res = query(idx, "exam room", k=50, lam=lam)
    lexical_only = query(idx, "exam room", k=50, lam=0.0)
    assert res == query(idx, "exam room", k=50, lam=lam)
    keys = [(-r.final_score, r.id) for r in res.rows]
    assert keys == sorted(keys)
    for r in res.rows:
        assert r.final_score >= r.lexical_score >= 0
    lex_keys = [(-r.lexical_score, r.id) for r in lexical_only.rows]
    assert lex_keys == sorted(lex_keys)
    # among equal lexical scores, higher ar never scores or ranks lower
    pos = {r.id: i for i, r in enumerate(res.rows)}
    for a in res.rows:
        for b in res.rows:
            if a.lexical_score == b.lexical_score and idx.ar_values[a.id] > idx.ar_values[b.id]:
                assert a.final_score >= b.final_score
                if a.final_score > b.final_score:
                    assert pos[a.id] < pos[b.id]


def test_query_latency(board_crawl):
    idx = build_index(Store(board_crawl[0], create=False))
    for q in ("office", "notice schedule", "student report deadline"):
        start = time.perf_counter()
        query(idx, q)
        assert time.perf_counter() - start < 0.05
