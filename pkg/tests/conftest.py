import pytest

from boardcrawl.crawler import CrawlConfig, crawl
from boardcrawl.fixture import AUDIT_BASE, FixtureServer, FixtureSpec, SiteFetcher, generate_site
from boardcrawl.pipeline import write_store

ACCEPTANCE_SPEC = FixtureSpec(seed=2008, n_pages=200, n_attachments=500)


@pytest.fixture(scope="session")
def small_site(tmp_path_factory):
    site = tmp_path_factory.mktemp("small_site")
    truth = generate_site(FixtureSpec(seed=7, n_pages=30, n_attachments=60), site)
    return site, truth


@pytest.fixture(scope="session")
def small_store(small_site, tmp_path_factory):
    site, truth = small_site
    result = crawl(CrawlConfig(seed=AUDIT_BASE + "/index.html", parallelism=1, per_host_delay=0),
                   SiteFetcher(site))
    root = tmp_path_factory.mktemp("small_store")
    store, graph, ranks, table = write_store(result, root)
    return root, result, ranks, table, truth


@pytest.fixture(scope="session")
def board_site(tmp_path_factory):
    site = tmp_path_factory.mktemp("board_site")
    return site, generate_site(ACCEPTANCE_SPEC, site)


@pytest.fixture(scope="session")
def board_server(board_site):
    site, _ = board_site
    with FixtureServer(site) as server:
        yield server


@pytest.fixture(scope="session")
def board_crawl(board_site, board_server, tmp_path_factory):
    """The 200-page / 500-attachment board crawled over HTTP at parallelism 4."""
    site, truth = board_site
    config = CrawlConfig(seed=board_server.seed_url, parallelism=4, per_host_delay=0, fetch_timeout=5)
    result = crawl(config)
    root = tmp_path_factory.mktemp("board_store")
    store, graph, ranks, table = write_store(result, root)
    return root, result, ranks, table, truth


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
