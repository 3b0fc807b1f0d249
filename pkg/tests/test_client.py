from datetime import timedelta

import pytest

from fakewiki import ts
from wikimemory.client import ArticleRef, RateLimiter, WikiClient
from wikimemory.errors import PageMissing, RateLimited, TransportError, Truncated

UA = "wikimemory-tests/0.1 (test@example.org)"
SPRING = ArticleRef("en", "Arab Spring")


@pytest.fixture
def history(wiki):
    texts = ["[[Tunisia]]", "[[Tunisia]] [[Egypt]]", "[[Egypt]]", "[[Egypt]] [[Libya]]", "[[Libya]]"]
    stamps = ["2011-01-27T10:00:00Z", "2011-02-03T12:00:00Z", "2011-02-03T12:00:05Z",
              "2011-05-31T23:59:59Z", "2012-07-01T00:00:00Z"]
    ids = [wiki.add_revision("en", "Arab Spring", s, t) for s, t in zip(stamps, texts)]
    return ids, stamps, texts


def test_three_recorded_revisions_in_order(wiki, client):
    ids = [wiki.add_revision("en", "Arab Spring", s, f"rev {i}")
           for i, s in enumerate(["2011-03-01T00:00:00Z", "2011-01-01T00:00:00Z", "2011-02-01T00:00:00Z"])]
    revs = client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2011-12-31T23:59:59Z"), with_content=True)
    assert [r.rev_id for r in revs] == [ids[1], ids[2], ids[0]]
    assert [r.wikitext for r in revs] == ["rev 1", "rev 2", "rev 0"]
    assert all(r.size_bytes == 5 for r in revs)


def test_empty_range(history, client):
    t = ts("2011-03-01T00:00:00Z")
    assert client.fetch_revisions(SPRING, t, t) == []


def test_continuation_is_merged(history, client, wiki):
    ids, stamps, _ = history
    revs = client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2013-01-01T00:00:00Z"))
    assert [r.rev_id for r in revs] == ids
    assert [r.wikitext for r in revs] == [None] * 5
    rev_calls = [p for _, _, p in wiki.log if p.get("prop") == "revisions"]
    assert len(rev_calls) == 3  # five revisions, two per page
    assert all(p["rvdir"] == "newer" for p in rev_calls)


@pytest.mark.parametrize("cut", ["2011-01-27T10:00:00Z", "2011-02-03T12:00:00Z", "2011-02-03T12:00:04Z",
                                 "2011-05-31T23:59:58Z", "2012-06-30T00:00:00Z"])
def test_split_invariant(history, client, cut):
    lo, hi = ts("2011-01-01T00:00:00Z"), ts("2013-01-01T00:00:00Z")
    t = ts(cut)
    whole = client.fetch_revisions(SPRING, lo, hi, with_content=True)
    parts = (client.fetch_revisions(SPRING, lo, t, with_content=True)
             + client.fetch_revisions(SPRING, t + timedelta(seconds=1), hi, with_content=True))
    assert parts == whole


def test_replay_is_deterministic(history, client):
    lo, hi = ts("2011-01-01T00:00:00Z"), ts("2013-01-01T00:00:00Z")
    a = client.fetch_revisions(SPRING, lo, hi, with_content=True)
    b = client.fetch_revisions(SPRING, lo, hi, with_content=True)
    assert repr(a) == repr(b)


def test_rate_ceiling_from_server_log(history, server, wiki):
    rate = 20.0
    c = WikiClient(UA, endpoint=server.endpoint, rate=rate)
    for _ in range(4):
        c.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2013-01-01T00:00:00Z"))
    stamps = [t for t, _, _ in wiki.log]
    assert len(stamps) == 12
    # any run of requests spans its schedule, give or take one late arrival
    jitter = 0.02
    for i in range(len(stamps)):
        for j in range(i + 1, len(stamps)):
            assert stamps[j] - stamps[i] >= (j - i) / rate - jitter
    assert (len(stamps) - 1) / (stamps[-1] - stamps[0]) <= rate * 1.05


def test_rate_limiter_spacing_with_fake_clock():
    now = [0.0]
    slept = []

    def sleep(d):
        slept.append(d)
        now[0] += d

    lim = RateLimiter(2.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        lim.acquire()
    assert slept == [0.5, 0.5]


def test_retries_on_429_and_503(history, client, wiki, sleeps):
    wiki.fail_with = [429, 503]
    revs = client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2011-01-31T00:00:00Z"))
    assert len(revs) == 1
    assert sleeps == [1.0, 2.0]  # exponential backoff
    assert client.diagnostics["http_429"] == 1 and client.diagnostics["http_503"] == 1


def test_retry_after_is_honoured(history, client, wiki, sleeps):
    wiki.fail_with = [429]
    wiki.retry_after = "7"
    client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2011-01-31T00:00:00Z"))
    assert sleeps == [7.0]


def test_rate_limited_after_retries(history, client, wiki):
    wiki.fail_with = [429] * 10
    with pytest.raises(RateLimited):
        client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2011-01-31T00:00:00Z"))
    assert len(wiki.log) == 4  # first try plus max_retries


def test_persistent_5xx_is_transport_error(history, client, wiki):
    wiki.fail_with = [502] * 10
    with pytest.raises(TransportError):
        client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2011-01-31T00:00:00Z"))


def test_repeated_continuation_is_truncated(history, client, wiki):
    wiki.break_continuation = True
    with pytest.raises(Truncated):
        client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2013-01-01T00:00:00Z"))


def test_missing_page(client):
    with pytest.raises(PageMissing) as info:
        client.fetch_revisions(ArticleRef("en", "No such page"), ts("2011-01-01T00:00:00Z"), ts("2012-01-01T00:00:00Z"))
    assert "No such page" in str(info.value)


def test_hidden_revisions_are_skipped_and_counted(wiki, client):
    wiki.add_revision("en", "Arab Spring", "2011-01-01T00:00:00Z", "a")
    wiki.add_revision("en", "Arab Spring", "2011-01-02T00:00:00Z", "secret", hidden=True)
    wiki.add_revision("en", "Arab Spring", "2011-01-03T00:00:00Z", "c")
    revs = client.fetch_revisions(SPRING, ts("2011-01-01T00:00:00Z"), ts("2011-02-01T00:00:00Z"), with_content=True)
    assert [r.wikitext for r in revs] == ["a", "c"]
    assert client.diagnostics["hidden_revisions"] == 1


def test_langlinks_map(wiki, client):
    wiki.add_revision("en", "Arab Spring", "2011-01-01T00:00:00Z", "x")
    wiki.set_langlinks("en", "Arab Spring", {"ar": "الربيع العربي", "fr": "Printemps arabe"})
    m = client.fetch_langlinks(SPRING)
    assert m.links == {"ar": "الربيع العربي", "fr": "Printemps arabe"}
    assert m.get("ar") == "الربيع العربي"


def test_langlinks_paged(wiki, client):
    wiki.add_revision("en", "Arab Spring", "2011-01-01T00:00:00Z", "x")
    links = {"ar": "الربيع العربي", "de": "Arabischer Frühling", "es": "Primavera Árabe",
             "fr": "Printemps arabe", "tr": "Arap Baharı"}
    wiki.set_langlinks("en", "Arab Spring", links)
    assert client.fetch_langlinks(SPRING).links == links


def test_no_langlinks(wiki, client):
    wiki.add_revision("en", "Lonely", "2011-01-01T00:00:00Z", "x")
    assert client.fetch_langlinks(ArticleRef("en", "Lonely")).links == {}


def test_langlinks_batch_follows_redirects_and_marks_red_links(wiki, client):
    wiki.add_revision("en", "Egypt", "2011-01-01T00:00:00Z", "x")
    wiki.set_langlinks("en", "Egypt", {"ar": "مصر", "fr": "Égypte"})
    wiki.add_redirect("en", "Arab Republic of Egypt", "Egypt")
    wiki.add_revision("en", "Oman", "2011-01-01T00:00:00Z", "x")
    got = client.fetch_langlinks_batch("en", ["Arab Republic of Egypt", "Oman", "Atlantis"], target_lang="ar")
    assert got["Arab Republic of Egypt"].links == {"ar": "مصر"}
    assert got["Oman"].links == {}
    assert got["Atlantis"] is None


def test_resolve_redirect(wiki, client):
    wiki.add_revision("en", "B", "2011-01-01T00:00:00Z", "x")
    wiki.add_redirect("en", "A", "B")
    assert client.resolve_redirect(ArticleRef("en", "A")) == ArticleRef("en", "B")
    assert client.resolve_redirect(ArticleRef("en", "B")) == ArticleRef("en", "B")


def test_redirect_chain_is_one_api_resolution(wiki, client):
    wiki.add_revision("en", "C", "2011-01-01T00:00:00Z", "x")
    wiki.add_redirect("en", "B", "C")
    wiki.add_redirect("en", "A", "B")
    before = len(wiki.log)
    got = client.resolve_redirect(ArticleRef("en", "A"))
    assert len(wiki.log) == before + 1
    # whatever the single call reports is the answer: this server resolves one hop
    assert got == ArticleRef("en", "B")


def test_fetch_redirects(wiki, client):
    wiki.add_revision("en", "Arab Spring", "2011-01-01T00:00:00Z", "x")
    wiki.add_redirect("en", "Arab spring", "Arab Spring")
    wiki.add_redirect("en", "Arab Awakening", "Arab Spring")
    assert client.fetch_redirects(SPRING) == ["Arab Awakening", "Arab spring"]


def test_fetch_contents_by_revid(history, client):
    ids, _, texts = history
    assert client.fetch_contents("en", [ids[4], ids[0]]) == {ids[0]: texts[0], ids[4]: texts[4]}


def test_user_agent_required():
    with pytest.raises(ValueError):
        WikiClient("  ")


def test_article_ref_validation():
    assert ArticleRef.of("en", "arab_spring") == ArticleRef("en", "Arab spring")
    with pytest.raises(ValueError):
        ArticleRef("xx-nope", "Foo")
    with pytest.raises(ValueError):
        ArticleRef("en", "")
