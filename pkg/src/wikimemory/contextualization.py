"""Contextualization: outlinks split by interlanguage-link status.

Interlanguage links only exist as current state, so one fetch per run is
applied to every month of the history. Mapping is a single hop (en→ar), with
no closure through third languages.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .client import ArticleRef, LangLinkMap
from .deliberation import InclusionMatrix
from .errors import PageMissing
from .wikitext import canonicalize_title


class IllStatus(str, enum.Enum):
    NO_ILL = "No ILL"
    ILL_NOT_OUTLINKED = "ILL, no outlink"
    ILL_OUTLINKED = "ILL, outlinked"


STATUS_ORDER = (IllStatus.NO_ILL, IllStatus.ILL_NOT_OUTLINKED, IllStatus.ILL_OUTLINKED)

LangLinkFetcher = Callable[[ArticleRef], LangLinkMap]


@dataclass
class Diagnostics:
    red_links: set[str] = field(default_factory=set)


def classify_outlink(
    outlink: str,
    source_lang: str,
    other_lang: str,
    langlink_fetcher: LangLinkFetcher,
    other_outlinks: Iterable[str],
    resolve: Callable[[str], str] | None = None,
    diagnostics: Diagnostics | None = None,
) -> IllStatus:
    """Status of one outlink relative to the other edition's focal article.

    ``other_outlinks`` is the other focal article's *current* link set,
    already redirect-resolved when ``resolve`` is used. ``resolve`` maps an
    other-edition title to its redirect target. A missing page (red link)
    classifies as No ILL and is recorded in ``diagnostics``.
    """
    try:
        links = langlink_fetcher(ArticleRef(source_lang, outlink))
    except PageMissing:
        if diagnostics is not None:
            diagnostics.red_links.add(outlink)
        return IllStatus.NO_ILL
    mapped = links.get(other_lang)
    if mapped is None:
        return IllStatus.NO_ILL
    mapped = canonicalize_title(mapped, other_lang)
    if resolve is not None:
        mapped = resolve(mapped)
    if mapped in set(other_outlinks):
        return IllStatus.ILL_OUTLINKED
    return IllStatus.ILL_NOT_OUTLINKED


@dataclass(frozen=True)
class DirectionCounts:
    lang: str
    other_lang: str
    counts: dict[IllStatus, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def fraction(self, status: IllStatus) -> float:
        return self.counts[status] / self.total if self.total else 0.0

    def percent(self, status: IllStatus) -> str:
        """Share of the total, in percent to one decimal place."""
        return f"{100 * self.fraction(status):.1f}%"


@dataclass(frozen=True)
class IllTable:
    directions: tuple[DirectionCounts, ...]

    def __getitem__(self, lang: str) -> DirectionCounts:
        for d in self.directions:
            if d.lang == lang:
                return d
        raise KeyError(lang)

    def rows(self) -> list[list[str]]:
        """Table layout: one row per status plus a total row, count/fraction per direction."""
        header = [""]
        for d in self.directions:
            header += [f"{d.lang} count", f"{d.lang} fraction"]
        out = [header]
        for status in STATUS_ORDER:
            row = [status.value]
            for d in self.directions:
                row += [str(d.counts[status]), d.percent(status)]
            out.append(row)
        total = ["Total"]
        for d in self.directions:
            total += [str(d.total), "--"]
        out.append(total)
        return out


def classify_all(
    outlinks: Iterable[str],
    source_lang: str,
    other_lang: str,
    langlink_fetcher: LangLinkFetcher,
    other_outlinks: Iterable[str],
    resolve: Callable[[str], str] | None = None,
    diagnostics: Diagnostics | None = None,
) -> dict[str, IllStatus]:
    other = set(other_outlinks)
    if resolve is not None:
        other = {resolve(t) for t in other}
    return {
        title: classify_outlink(title, source_lang, other_lang, langlink_fetcher, other, resolve, diagnostics)
        for title in sorted(set(outlinks))
    }


def ill_table(classifications: Mapping[tuple[str, str], Mapping[str, IllStatus]]) -> IllTable:
    """Per-direction status counts.

    ``classifications`` maps ``(lang, other_lang)`` to that direction's
    outlink → status map.
    """
    directions = []
    for (lang, other), statuses in classifications.items():
        counts = {s: 0 for s in STATUS_ORDER}
        for status in statuses.values():
            counts[IllStatus(status)] += 1
        directions.append(DirectionCounts(lang, other, counts))
    return IllTable(tuple(directions))


def bijective_outlinked_check(table: IllTable, a: str, b: str) -> tuple[int, int]:
    """Both directed "ILL, outlinked" counts (equal when links are bijective)."""
    return table[a].counts[IllStatus.ILL_OUTLINKED], table[b].counts[IllStatus.ILL_OUTLINKED]


@dataclass(frozen=True)
class StackedSeries:
    months: tuple[str, ...]
    counts: dict[IllStatus, tuple[int, ...]]

    def totals(self) -> list[int]:
        return [sum(self.counts[s][j] for s in STATUS_ORDER) for j in range(len(self.months))]

    def csv_rows(self):
        for j, month in enumerate(self.months):
            for s in STATUS_ORDER:
                yield month, s.value, self.counts[s][j]


def temporal_ill_series(m: InclusionMatrix, classification: Mapping[str, IllStatus]) -> StackedSeries:
    """Per-period count of included outlinks in each status."""
    missing = [t for t in m.outlinks if t not in classification]
    if missing:
        raise ValueError(f"{len(missing)} outlinks lack a status, e.g. {missing[0]!r}")
    status_of = np.array([STATUS_ORDER.index(IllStatus(classification[t])) for t in m.outlinks])
    counts = {}
    for k, status in enumerate(STATUS_ORDER):
        rows = m.cells[status_of == k]
        counts[status] = tuple(int(v) for v in rows.sum(axis=0)) if rows.size else (0,) * len(m.months)
    return StackedSeries(m.months, counts)
