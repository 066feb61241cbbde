import hashlib
import json
import socket
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

from boardcrawl.fixture import (
    GROUND_TRUTH_NAME, FixtureAuditError, FixtureServer, FixtureSpec, GroundTruth, RelevancePlan,
    audit_site, generate_site, serve,
)


def tree_digest(root):
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode() + b"\0" + path.read_bytes())
    return h.hexdigest()


def test_single_page_site(tmp_path):
    truth = generate_site(FixtureSpec(n_pages=1, n_attachments=0), tmp_path)
    html_files = list(tmp_path.rglob("*.html"))
    assert [p.name for p in html_files] == ["index.html"]
    assert truth.attachments == {}


def test_same_seed_same_bytes(tmp_path):
    spec = FixtureSpec(seed=42, n_pages=40, n_attachments=80)
    generate_site(spec, tmp_path / "a")
    generate_site(spec, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    generate_site(FixtureSpec(seed=43, n_pages=40, n_attachments=80), tmp_path / "c")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_declared_counts(board_site):
    site, truth = board_site
    assert len(truth.pages) == 200
    assert len(truth.attachments) == 500
    assert sum(truth.class_counts().values()) == 500
    assert len(list((Path(site) / "files").iterdir())) == 500
    shared = [a for a in truth.attachments.values() if len(a["containing_pages"]) > 1]
    assert shared, "fixture should exercise multi-page containment"


def test_audit_catches_tampering(tmp_path):
    truth = generate_site(FixtureSpec(seed=3, n_pages=10, n_attachments=10), tmp_path)
    audit_site(tmp_path, truth)
    victim = next(iter(truth.attachments))
    (tmp_path / victim[1:]).write_bytes(b"changed")
    with pytest.raises(FixtureAuditError):
        audit_site(tmp_path, truth)


def test_ground_truth_file_roundtrip(small_site):
    site, truth = small_site
    loaded = GroundTruth.load(site)
    assert loaded.pages == truth.pages and loaded.attachments == truth.attachments
    assert json.loads((site / GROUND_TRUTH_NAME).read_text())["spec"]["seed"] == 7


def test_relevance_plan_plants_queries(tmp_path):
    plan = RelevancePlan(n_queries=3, relevant_per_query=4, decoys_per_query=4, boost=5.0)
    truth = generate_site(FixtureSpec(seed=1, n_pages=60, n_attachments=80, relevance_plan=plan), tmp_path)
    assert len(truth.queries) == 3
    inlinks = {p: 0 for p in truth.pages}
    for page in truth.pages.values():
        for t in page["outlinks"]:
            inlinks[t] += 1
    rel_in, dec_in = [], []
    for q in truth.queries:
        assert len(q["relevant"]) == 4 and len(q["decoys"]) == 4
        for kind, bucket in (("relevant", rel_in), ("decoys", dec_in)):
            for att in q[kind]:
                assert q["query"] in truth.attachments[att]["anchor_text"].split()
                (host,) = truth.attachments[att]["containing_pages"]
                bucket.append(inlinks[host])
    assert sum(rel_in) / len(rel_in) > 2 * sum(dec_in) / len(dec_in)


def test_spec_validation():
    with pytest.raises(ValueError):
        FixtureSpec(class_mix={"document": 0.5})
    with pytest.raises(ValueError):
        FixtureSpec(class_mix={"movies": 1.0})
    with pytest.raises(ValueError):
        FixtureSpec(n_pages=0)
    spec = FixtureSpec.from_json({"seed": 3, "relevance_plan": {"n_queries": 2}})
    assert spec.relevance_plan.n_queries == 2
    assert FixtureSpec.from_json(spec.to_json()) == spec


def test_plan_needs_room(tmp_path):
    with pytest.raises(ValueError):
        generate_site(FixtureSpec(n_pages=10, n_attachments=500, relevance_plan=RelevancePlan()), tmp_path)


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_site(FixtureSpec(n_pages=2, n_attachments=1), blocker / "site")


# server

def get(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return resp.status, resp.headers.get("Content-Type"), resp.read()


def test_serves_pages(board_server, board_site):
    site, _ = board_site
    status, ctype, body = get(board_server.seed_url)
    assert status == 200 and ctype.startswith("text/html")
    assert body == (site / "index.html").read_bytes()


def test_missing_path_is_404(board_server):
    with pytest.raises(urllib.error.HTTPError) as exc:
        get(board_server.base_url + "/nope.html")
    assert exc.value.code == 404


def test_concurrent_fetches_are_byte_identical(board_server, board_site):
    site, truth = board_site
    paths = list(truth.attachments)[:40] + list(truth.pages)[:40]
    with ThreadPoolExecutor(4) as pool:
        bodies = list(pool.map(lambda p: get(board_server.base_url + p)[2], paths))
    for path, body in zip(paths, bodies):
        assert body == (site / path[1:]).read_bytes()


def test_port_in_use_and_clean_shutdown(tmp_path):
    (tmp_path / "index.html").write_text("<p>x</p>")
    server = serve(tmp_path)
    try:
        with pytest.raises(OSError):
            FixtureServer(tmp_path, server.port)
        assert get(server.seed_url)[0] == 200
    finally:
        server.shutdown()
    with socket.socket() as s:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("127.0.0.1", server.port))
