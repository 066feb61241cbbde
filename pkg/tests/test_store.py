import json
from datetime import datetime, timezone

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from boardcrawl.model import AttachmentClass, AttachmentId, PageId, PageRecord
from boardcrawl.store import (
    AttachmentRecord, CorruptRecordError, DigestMismatchError, MalformedHeaderError, Store,
    StoreError, decode_record, encode_record, read_attachment_record,
)

from oracles import offline_attachrank

WHEN = datetime(2008, 10, 15, 8, 30, 0, 123456, tzinfo=timezone.utc)


def make_record(url="http://b.example/files/notice.doc", payload=b"hello", ar=1.0, **kw):
    fields = dict(
        id=AttachmentId(url),
        cls=AttachmentClass.DOCUMENT,
        ar=ar,
        containing_pages=(PageId("http://b.example/a.html"),),
        anchor_text="exam schedule",
        fetched_at=WHEN,
        payload=payload,
    )
    fields.update(kw)
    return AttachmentRecord(**fields)


def test_record_roundtrip(tmp_path):
    store = Store(tmp_path)
    rec = make_record()
    path = store.write_attachment_record(rec)
    assert path.parent == tmp_path / "attachments" / "document"
    assert path.suffix == ".rec"
    back = read_attachment_record(path)
    assert back == rec
    assert back.ar == 1.0
    raw = path.read_bytes()
    assert raw.endswith(b"\n\nhello")
    assert raw.startswith(b"boardcrawl-record: 1\nurl: http://b.example/files/notice.doc\n")


def test_header_layout():
    text = encode_record(make_record(ar=0.1 + 0.2)).split(b"\n\n", 1)[0].decode()
    keys = [line.split(": ", 1)[0] for line in text.split("\n")]
    assert keys == ["boardcrawl-record", "url", "class", "attachrank", "containing-pages",
                    "anchor-text", "fetched-at", "payload-sha256", "payload-length"]
    assert "attachrank: 0.30000000000000004" in text
    assert "anchor-text: exam%20schedule" in text
    assert "fetched-at: 2008-10-15T08:30:00.123456+00:00" in text


def test_two_attachments_same_class_share_directory(tmp_path):
    store = Store(tmp_path)
    p1 = store.write_attachment_record(make_record("http://b.example/x/notice.doc"))
    p2 = store.write_attachment_record(make_record("http://b.example/y/notice.doc"))
    assert p1 != p2 and p1.parent == p2.parent
    assert len(store.manifest["attachments"]) == 2
    assert store.check_completeness() == []


def test_tampered_payload_is_detected(tmp_path):
    path = Store(tmp_path).write_attachment_record(make_record(payload=b"hello world"))
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(DigestMismatchError) as exc:
        read_attachment_record(path)
    assert exc.value.field == "payload-sha256"


def test_missing_attachrank_line(tmp_path):
    data = encode_record(make_record())
    lines = data.split(b"\n")
    broken = b"\n".join(line for line in lines if not line.startswith(b"attachrank:"))
    with pytest.raises(MalformedHeaderError) as exc:
        decode_record(broken)
    assert exc.value.field == "attachrank"


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.replace(b"payload-length: 5", b"payload-length: 6"), "payload-length"),
    (lambda d: d.replace(b"class: document", b"class: movie"), "class"),
    (lambda d: d.replace(b"attachrank: 1", b"attachrank: one"), "attachrank"),
    (lambda d: d.replace(b"boardcrawl-record: 1", b"boardcrawl-record: 9"), "boardcrawl-record"),
    (lambda d: d.replace(b"\n\n", b"\n"), "header"),
])
def test_corruptions_name_the_field(mutate, field):
    with pytest.raises(CorruptRecordError) as exc:
        decode_record(mutate(encode_record(make_record())))
    assert exc.value.field == field


def test_record_rejects_wrong_digest():
    with pytest.raises(ValueError):
        make_record(payload_sha256="0" * 64)


_text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)
_urls = st.builds(lambda p, q: f"http://b.example/{p}.doc" + (f"?{q}" if q else ""),
                  st.text(alphabet="abcXYZ019%,-_", min_size=1, max_size=12),
                  st.text(alphabet="a=1&,%", max_size=8))
_pages = st.lists(st.builds(lambda s: PageId(f"http://b.example/{s}.html"),
                            st.text(alphabet="abc,%2C-", min_size=1, max_size=8)),
                  min_size=1, max_size=4)


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture], max_examples=60)
@given(url=_urls, payload=st.binary(max_size=300), ar=st.floats(0.15, 1e6),
       pages=_pages, anchor=_text, cls_=st.sampled_from(list(AttachmentClass)))
def test_roundtrip_law(tmp_path, url, payload, ar, pages, anchor, cls_):
    rec = make_record(url, payload, ar, containing_pages=tuple(pages), anchor_text=anchor, cls=cls_)
    path = Store(tmp_path).write_attachment_record(rec)
    assert path.parent.name == cls_.value
    assert read_attachment_record(path) == rec


def test_page_roundtrip_and_overwrite(tmp_path):
    page = PageRecord(
        id=PageId("http://b.example/a.html"), title="Exam notice", body_text="See attached.",
        fetched_at=WHEN, http_status=200, outlinks=(PageId("http://b.example/b.html"),),
        attachments=(AttachmentId("http://b.example/f.doc"),),
    )
    store = Store(tmp_path)
    store.store_page(page)
    store.store_page(page)
    reopened = Store(tmp_path, create=False)
    assert len(reopened.manifest["pages"]) == 1
    assert reopened.pages() == [page]


def test_missing_store(tmp_path):
    with pytest.raises(StoreError):
        Store(tmp_path / "nope", create=False)


def test_unwritable_root(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(StoreError):
        Store(blocker / "store")


def test_completeness_detects_strays(tmp_path):
    store = Store(tmp_path)
    store.write_attachment_record(make_record())
    stray = tmp_path / "attachments" / "text" / "stray.rec"
    stray.parent.mkdir()
    stray.write_bytes(encode_record(make_record("http://b.example/s.txt", cls=AttachmentClass.TEXT)))
    problems = store.check_completeness()
    assert any("unlisted" in p for p in problems)


def test_crawled_store_matches_fixture(small_store):
    root, result, ranks, table, truth = small_store
    store = Store(root, create=False)
    assert len(store.manifest["pages"]) == len(truth.pages)
    assert len(store.manifest["attachments"]) == len(truth.attachments)
    assert store.check_completeness() == []


def test_headers_match_offline_recomputation(small_store):
    root, *_ = small_store
    offline = offline_attachrank(root)
    store = Store(root, create=False)
    for entry, rec in store.attachment_records():
        assert rec.ar == pytest.approx(offline[rec.id.url], abs=1e-8)
        assert entry["ar"] == rec.ar


def test_manifest_is_plain_json(small_store):
    root, *_ = small_store
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["version"] == 1
    assert manifest["rank_config"] == {"d": 0.85, "epsilon": 1e-8, "max_iterations": 200}
    ids = [e["id"] for e in manifest["attachments"]]
    assert ids == sorted(set(ids))
