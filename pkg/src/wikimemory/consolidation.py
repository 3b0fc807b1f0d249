"""Consolidation: does each related article link back to the focal one, month by month?"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .client import ArticleRef
from .errors import ConfigError, MissingArticle
from .store import Month, SnapshotSeries, month_range
from .wikitext import canonicalize_title

AUTO = "auto"


class Kind(str, enum.Enum):
    COUNTRY = "country"
    EVENT = "event"


@dataclass(frozen=True)
class RelatedEntry:
    label: str
    kind: Kind
    titles: dict[str, str | None]

    def ref(self, lang: str) -> ArticleRef | None:
        title = self.titles.get(lang)
        if title is None or title == AUTO:
            return None
        return ArticleRef.of(lang, title)

    @property
    def single_language(self) -> bool:
        return sum(t is not None for t in self.titles.values()) == 1


@dataclass(frozen=True)
class EgoConfig:
    focal: dict[str, ArticleRef]
    related: tuple[RelatedEntry, ...]

    @property
    def langs(self) -> tuple[str, ...]:
        return tuple(self.focal)

    def by_kind(self, kind: Kind) -> list[RelatedEntry]:
        return [r for r in self.related if r.kind is kind]

    def with_titles(self, resolved: Mapping[tuple[str, str], str | None]) -> "EgoConfig":
        """Copy with ``auto`` titles filled from ``resolved[(label, lang)]``."""
        entries = []
        for r in self.related:
            titles = dict(r.titles)
            for lang, title in r.titles.items():
                if title == AUTO:
                    titles[lang] = resolved.get((r.label, lang))
            entries.append(RelatedEntry(r.label, r.kind, titles))
        return EgoConfig(self.focal, tuple(entries))


def parse_ego_config(text: str) -> EgoConfig:
    """Parse the YAML ego configuration.

    ``focal`` maps language codes to titles; each ``related`` entry has
    ``label``, ``kind`` (country/event) and ``{lang}_title`` keys. A title of
    ``auto`` is filled from the interlanguage link of another edition's title
    at fetch time; a missing or null title marks the entry single-language.
    """
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"ego config is not valid YAML: {exc}") from exc
    focal_raw = doc.get("focal")
    if not isinstance(focal_raw, dict) or not focal_raw:
        raise ConfigError("ego config needs a 'focal' mapping of language → title")
    try:
        focal = {str(lang): ArticleRef.of(str(lang), str(title)) for lang, title in focal_raw.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    entries = []
    seen = set()
    for i, item in enumerate(doc.get("related") or []):
        label = item.get("label")
        if not label:
            raise ConfigError(f"related entry {i} has no label")
        if label in seen:
            raise ConfigError(f"duplicate related label {label!r}")
        seen.add(label)
        try:
            kind = Kind(str(item.get("kind", "")).lower())
        except ValueError:
            raise ConfigError(f"{label}: kind must be 'country' or 'event'") from None
        titles = {}
        for lang in focal:
            value = item.get(f"{lang}_title")
            titles[lang] = None if value is None else str(value)
        if all(t is None for t in titles.values()):
            raise ConfigError(f"{label}: no title in any language")
        if all(t in (None, AUTO) for t in titles.values()):
            raise ConfigError(f"{label}: 'auto' needs a concrete title in another language")
        entries.append(RelatedEntry(label, kind, titles))
    return EgoConfig(focal, tuple(entries))


def load_ego_config(path: str | Path | None = None) -> EgoConfig:
    """Load a config file, or the bundled default when ``path`` is None."""
    if path is None:
        text = resources.files("wikimemory").joinpath("data").joinpath("ego_default.yaml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_ego_config(text)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EgoTimeline:
    label: str
    lang: str
    points: tuple[tuple[str, bool], ...]

    @property
    def months(self) -> list[str]:
        return [p[0] for p in self.points]

    @property
    def included(self) -> list[bool]:
        return [p[1] for p in self.points]


def focal_title_set(focal: ArticleRef, redirects: Iterable[str] = (), extra: Iterable[str] = ()) -> frozenset[str]:
    """Titles that count as a link to the focal article in ``focal.lang``."""
    titles = {focal.title}
    titles.update(canonicalize_title(t, focal.lang) for t in redirects)
    titles.update(canonicalize_title(t, focal.lang) for t in extra)
    return frozenset(titles)


def ego_timeline(related: SnapshotSeries, focal_titles: Iterable[str], label: str | None = None) -> EgoTimeline:
    """Month → whether the related article links any of ``focal_titles``."""
    focal = frozenset(focal_titles)
    return EgoTimeline(
        label=label or related.article.title,
        lang=related.article.lang,
        points=tuple((s.label, not focal.isdisjoint(s.outlinks.titles)) for s in related),
    )


@dataclass(frozen=True)
class ConsolidationMatrix:
    """Related × month matrix with a separate "article exists" mask."""

    lang: str
    labels: tuple[str, ...]
    kinds: tuple[Kind, ...]
    months: tuple[str, ...]
    included: np.ndarray
    created: np.ndarray

    def __post_init__(self):
        if (self.included & ~self.created).any():
            raise ValueError("a cell cannot be included before its article exists")

    def column(self, month: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.months.index(month)
        return self.included[:, j], self.created[:, j]

    def subset(self, kind: Kind) -> "ConsolidationMatrix":
        rows = [i for i, k in enumerate(self.kinds) if k is kind]
        return ConsolidationMatrix(self.lang, tuple(self.labels[i] for i in rows),
                                   tuple(self.kinds[i] for i in rows), self.months,
                                   self.included[rows], self.created[rows])

    def csv_rows(self):
        for i, label in enumerate(self.labels):
            for j, month in enumerate(self.months):
                state = "included" if self.included[i, j] else ("absent" if self.created[i, j] else "not_created")
                yield label, self.kinds[i].value, month, state


def consolidation_matrix(
    config: EgoConfig,
    lang: str,
    timelines: Mapping[str, EgoTimeline],
    span: tuple[Month, Month],
) -> ConsolidationMatrix:
    """Align each related article's timeline onto the months of ``span``.

    Entries without a title in ``lang`` (single-language entries) stay all
    "not created". ``MissingArticle`` is raised for an entry with no title in
    any language, or with a title in ``lang`` but no timeline.
    """
    months = tuple(str(m) for m in month_range(*span))
    col = {m: j for j, m in enumerate(months)}
    included = np.zeros((len(config.related), len(months)), dtype=bool)
    created = np.zeros_like(included)
    for i, entry in enumerate(config.related):
        if all(t in (None, AUTO) for t in entry.titles.values()):
            raise MissingArticle(f"{entry.label}: resolves in no language")
        if entry.ref(lang) is None:
            continue
        timeline = timelines.get(entry.label)
        if timeline is None:
            raise MissingArticle(f"{entry.label}: no {lang} history for {entry.titles[lang]!r}")
        for month, flag in timeline.points:
            j = col.get(month)
            if j is None:
                continue
            created[i, j] = True
            included[i, j] = flag
    return ConsolidationMatrix(lang, tuple(r.label for r in config.related),
                               tuple(r.kind for r in config.related), months, included, created)
