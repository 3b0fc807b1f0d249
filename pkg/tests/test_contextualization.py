import random

import pytest

from synthetic import random_history
from test_store import ART, rev
from wikimemory.client import ArticleRef, LangLinkMap
from wikimemory.contextualization import (
    STATUS_ORDER,
    Diagnostics,
    IllStatus,
    bijective_outlinked_check,
    classify_all,
    classify_outlink,
    ill_table,
    temporal_ill_series,
)
from wikimemory.deliberation import build_inclusion_matrix
from wikimemory.errors import PageMissing
from wikimemory.salience import outlink_count_series
from wikimemory.store import Month, build_series


def fetcher(table):
    def fetch(ref):
        if ref.title not in table:
            raise PageMissing(ref.lang, ref.title)
        return LangLinkMap(ref, table[ref.title])
    return fetch


EN_LL = fetcher({
    "Zeynep Tufekci": {},
    "2011 Egyptian revolution": {"ar": "ثورة 25 يناير", "fr": "Révolution égyptienne de 2011"},
    "Tahrir Square": {"ar": "ميدان التحرير"},
})
AR_CURRENT = {"ثورة 25 يناير", "تونس"}


def test_no_ill():
    assert classify_outlink("Zeynep Tufekci", "en", "ar", EN_LL, AR_CURRENT) is IllStatus.NO_ILL


def test_ill_outlinked():
    assert classify_outlink("2011 Egyptian revolution", "en", "ar", EN_LL, AR_CURRENT) is IllStatus.ILL_OUTLINKED


def test_ill_not_outlinked():
    assert classify_outlink("Tahrir Square", "en", "ar", EN_LL, AR_CURRENT) is IllStatus.ILL_NOT_OUTLINKED


def test_red_link_is_no_ill_with_diagnostic():
    diag = Diagnostics()
    assert classify_outlink("Atlantis Spring", "en", "ar", EN_LL, AR_CURRENT, diagnostics=diag) is IllStatus.NO_ILL
    assert diag.red_links == {"Atlantis Spring"}


def test_redirects_on_the_other_side_are_resolved():
    resolve = {"ثورة يناير": "ثورة 25 يناير"}.get
    got = classify_all(["2011 Egyptian revolution"], "en", "ar", EN_LL, {"ثورة يناير"},
                       resolve=lambda t: resolve(t, t))
    assert got == {"2011 Egyptian revolution": IllStatus.ILL_OUTLINKED}


def test_disjoint_pair_without_ills():
    en = {f"E{i}": {} for i in range(5)}
    ar = {f"A{i}": {} for i in range(3)}
    table = ill_table({
        ("en", "ar"): classify_all(en, "en", "ar", fetcher(en), ar),
        ("ar", "en"): classify_all(ar, "ar", "en", fetcher(ar), en),
    })
    assert [table["en"].counts[s] for s in STATUS_ORDER] == [5, 0, 0]
    assert [table["ar"].counts[s] for s in STATUS_ORDER] == [3, 0, 0]


def _statuses(counts):
    out, i = {}, 0
    for status, n in zip(STATUS_ORDER, counts):
        for _ in range(n):
            out[f"T{i}"] = status
            i += 1
    return out


def test_table_layout_and_reference_percentages():
    table = ill_table({("en", "ar"): _statuses([18, 230, 79]), ("ar", "en"): _statuses([21, 169, 79])})
    assert table["en"].total == 327 and table["ar"].total == 269
    assert table.rows() == [
        ["", "en count", "en fraction", "ar count", "ar fraction"],
        ["No ILL", "18", "5.5%", "21", "7.8%"],
        ["ILL, no outlink", "230", "70.3%", "169", "62.8%"],
        ["ILL, outlinked", "79", "24.2%", "79", "29.4%"],
        ["Total", "327", "--", "269", "--"],
    ]


@pytest.mark.parametrize("seed", range(40))
def test_bijective_ills_give_symmetric_outlinked_counts(seed):
    rng = random.Random(seed)
    en_pool = [f"E{i}" for i in range(40)]
    ar_pool = [f"A{i}" for i in range(40)]
    pairs = dict(zip(rng.sample(en_pool, 25), rng.sample(ar_pool, 25)))
    back = {v: k for k, v in pairs.items()}
    en_links = set(rng.sample(en_pool, rng.randint(1, 40)))
    ar_links = set(rng.sample(ar_pool, rng.randint(1, 40)))
    en_ll = fetcher({t: ({"ar": pairs[t]} if t in pairs else {}) for t in en_pool})
    ar_ll = fetcher({t: ({"en": back[t]} if t in back else {}) for t in ar_pool})
    table = ill_table({
        ("en", "ar"): classify_all(en_links, "en", "ar", en_ll, ar_links),
        ("ar", "en"): classify_all(ar_links, "ar", "en", ar_ll, en_links),
    })
    a, b = bijective_outlinked_check(table, "en", "ar")
    assert a == b
    for d in table.directions:
        assert sum(d.counts.values()) == d.total


def test_temporal_single_status_equals_total():
    revs, _, span = random_history(random.Random(5))
    s = build_series(revs, ART, span)
    m = build_inclusion_matrix(s)
    stacked = temporal_ill_series(m, {t: IllStatus.ILL_NOT_OUTLINKED for t in m.outlinks})
    assert list(stacked.counts[IllStatus.ILL_NOT_OUTLINKED]) == outlink_count_series(s).values
    assert set(stacked.counts[IllStatus.NO_ILL]) == {0}


def test_temporal_one_of_each():
    s = build_series([rev(1, "2011-01-01T00:00:00", "[[A]] [[B]] [[C]]")], ART, (Month(2011, 1), Month(2011, 3)))
    m = build_inclusion_matrix(s)
    stacked = temporal_ill_series(m, dict(zip("ABC", STATUS_ORDER)))
    assert [stacked.counts[st] for st in STATUS_ORDER] == [(1, 1, 1)] * 3


@pytest.mark.parametrize("seed", range(40))
def test_temporal_join_brute_force(seed):
    rng = random.Random(seed)
    revs, _, span = random_history(rng)
    s = build_series(revs, ART, span)
    m = build_inclusion_matrix(s)
    statuses = {t: rng.choice(STATUS_ORDER) for t in m.outlinks}
    stacked = temporal_ill_series(m, statuses)
    for j, snap in enumerate(s):
        for status in STATUS_ORDER:
            assert stacked.counts[status][j] == sum(1 for t in snap.outlinks.titles if statuses[t] is status)
    assert stacked.totals() == outlink_count_series(s).values


def test_temporal_requires_full_classification():
    revs, _, span = random_history(random.Random(1))
    s = build_series(revs, ART, span)
    m = build_inclusion_matrix(s)
    with pytest.raises(ValueError):
        temporal_ill_series(m, {})


def test_langlink_map_get():
    m = LangLinkMap(ArticleRef("en", "Egypt"), {"ar": "مصر"})
    assert m.get("ar") == "مصر" and m.get("fr") is None
