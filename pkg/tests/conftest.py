import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fakewiki import FakeWiki  # noqa: E402

from wikimemory.client import WikiClient  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def wiki():
    return FakeWiki(page_size=2)


@pytest.fixture
def server(wiki):
    with wiki.serve() as srv:
        yield srv


@pytest.fixture
def sleeps():
    return []


@pytest.fixture
def client(server, sleeps):
    # fast limiter; backoff sleeps are recorded, not slept
    return WikiClient("wikimemory-tests/0.1 (test@example.org)", endpoint=server.endpoint,
                      rate=1000.0, max_retries=3, sleep=sleeps.append)


UA_ENV = {"WIKIMEMORY_USER_AGENT": "wikimemory-tests/0.1 (test@example.org)"}


class World:
    """The frozen fixture wiki served over HTTP, plus CLI argument helpers."""

    def __init__(self, wiki, server, root):
        self.wiki = wiki
        self.server = server
        self.root = root

    def args(self, cache, out, *extra):
        return ["--since", "2011-01", "--until", "2014-06", "--cache-dir", str(cache), "--out-dir", str(out),
                "--endpoint", self.server.endpoint, "--rate", "1000", *extra]


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    from synthetic import build_fixture_wiki

    wiki = FakeWiki(page_size=10)
    build_fixture_wiki(wiki)
    with wiki.serve() as srv:
        yield World(wiki, srv, tmp_path_factory.mktemp("world"))


@pytest.fixture
def ua(monkeypatch):
    for k, v in UA_ENV.items():
        monkeypatch.setenv(k, v)


# acceptance results, printed once at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
