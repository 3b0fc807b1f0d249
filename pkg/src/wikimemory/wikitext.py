"""Internal-link extraction from raw wikitext.

Links are found with a forward bracket scan over the source after masking
``<!-- -->`` comments, ``<nowiki>`` and ``<pre>`` spans. Templates are not
expanded, so only links written literally in the revision are seen (links a
template definition would contribute stay invisible). Links written inside
template arguments are extracted, because they render as links in the common
case. Redirect targets are kept as written.
"""

from __future__ import annotations

import enum
import html
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from urllib.parse import unquote

__all__ = [
    "LinkClass",
    "Outlink",
    "OutlinkSet",
    "canonicalize_title",
    "classify_link",
    "extract_outlinks",
    "iter_link_targets",
    "count_external_links",
    "load_namespace_aliases",
    "known_languages",
]


class LinkClass(str, enum.Enum):
    ARTICLE = "Article"
    CATEGORY = "Category"
    FILE = "File"
    PORTAL = "Portal"
    TEMPLATE = "Template"
    OTHER = "Other"
    INTERWIKI = "Interwiki"
    EXTERNAL = "External"


NAMESPACE_CLASSES = (
    LinkClass.ARTICLE,
    LinkClass.CATEGORY,
    LinkClass.FILE,
    LinkClass.PORTAL,
    LinkClass.TEMPLATE,
    LinkClass.OTHER,
)


@dataclass(frozen=True, order=True)
class Outlink:
    target: str
    namespace_class: LinkClass = LinkClass.ARTICLE
    anchor_only: bool = False


@dataclass(frozen=True)
class OutlinkSet:
    """Article-namespace links of one revision (set semantics)."""

    links: frozenset[Outlink]
    source_rev: int | None = None

    @property
    def titles(self) -> frozenset[str]:
        return frozenset(link.target for link in self.links)

    def __len__(self) -> int:
        return len(self.links)

    def __contains__(self, title: object) -> bool:
        return title in self.titles

    def __iter__(self):
        return iter(sorted(self.links))


# ---------------------------------------------------------------------------
# data tables

# Editions whose titles are case-sensitive in the first letter.
CASE_SENSITIVE_LANGS = frozenset({"jbo"})


def _data_lines(name: str):
    text = resources.files("wikimemory").joinpath("data").joinpath(name).read_text("utf-8")
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            yield line


@lru_cache(maxsize=None)
def known_languages() -> frozenset[str]:
    return frozenset(code for line in _data_lines("wikipedia_languages.txt") for code in line.split())


@lru_cache(maxsize=None)
def _project_prefixes() -> frozenset[str]:
    return frozenset(p for line in _data_lines("interwiki_projects.txt") for p in line.split())


@lru_cache(maxsize=None)
def load_namespace_aliases(lang: str) -> dict[str, LinkClass]:
    """Alias → class for ``lang`` (canonical English names included).

    Keys are case-folded with spaces for underscores.
    """
    table: dict[str, LinkClass] = {}
    for line in _data_lines("namespaces.tsv"):
        row_lang, alias, cls = line.split("\t")
        if row_lang in ("*", lang):
            table[_fold_prefix(alias)] = LinkClass(cls)
    return table


def _fold_prefix(prefix: str) -> str:
    return " ".join(prefix.replace("_", " ").split()).casefold()


# ---------------------------------------------------------------------------
# canonical titles

# Whitespace MediaWiki turns into a plain space inside titles.
_TITLE_SPACE_RE = re.compile(r"[\s_\u00a0\u1680\u180e\u2000-\u200a\u2028\u2029\u202f\u205f\u3000]+")
# Directional marks MediaWiki strips from titles.
_BIDI_RE = re.compile(r"[\u200e\u200f\u202a-\u202e]")
_PERCENT_RE = re.compile(r"%[0-9A-Fa-f]{2}")


def _decode_once(raw: str) -> str:
    text = html.unescape(raw) if "&" in raw else raw
    if _PERCENT_RE.search(text):
        try:
            text = unquote(text, errors="strict")
        except UnicodeDecodeError:
            pass
    return text


def _decode(raw: str) -> str:
    # Decode to a fixpoint so the canonical form is idempotent ("&amp;amp;").
    text = raw
    while True:
        decoded = _decode_once(text)
        if decoded == text:
            return text
        text = decoded


def _upper_first(text: str, lang: str) -> str:
    if not text or lang in CASE_SENSITIVE_LANGS:
        return text
    first = text[0].upper()
    if len(first) != 1:
        # e.g. "ß" -> "SS"; MediaWiki keeps these as written
        return text
    return first + text[1:]


def canonicalize_title(raw: str, lang: str = "en") -> str:
    """Canonical MediaWiki form of a title as written in a link or API result.

    Entities and percent escapes are decoded, underscores and whitespace runs
    become one space, directional marks go, and the first letter is
    upper-cased (a no-op for uncased scripts such as Arabic).
    """
    text = raw
    while True:
        # stripping a mark can complete an escape ("&#\u200f0"), so repeat
        step = _TITLE_SPACE_RE.sub(" ", _BIDI_RE.sub("", _decode(text))).strip(" ")
        if step == text:
            break
        text = step
    return _upper_first(text, lang)


# ---------------------------------------------------------------------------
# classification

_INVALID_TITLE_CHARS = frozenset("[]{}|<>#\n\x7f")
_BAD_RAW_CHARS = frozenset("[]{}<>\n\x7f")
_URL_RE = re.compile(r"^(?:[a-z][a-z0-9+.-]*:)?//|^(?:mailto|news|urn|tel):", re.I)


def classify_link(raw_target: str, lang: str) -> LinkClass:
    """Namespace class of a bracket-link target, or Interwiki/External."""
    target = _decode(raw_target).strip()
    if _URL_RE.match(target):
        return LinkClass.EXTERNAL
    if target.startswith(":"):
        target = target[1:]
    if ":" not in target:
        return LinkClass.ARTICLE
    prefix = _fold_prefix(target.split(":", 1)[0])
    aliases = load_namespace_aliases(lang)
    if prefix in aliases:
        return aliases[prefix]
    if prefix in known_languages() or prefix in _project_prefixes():
        return LinkClass.INTERWIKI
    return LinkClass.ARTICLE


# ---------------------------------------------------------------------------
# scanning

_MASK = "\x7f"
_OPEN_TAG_RE = re.compile(r"<(nowiki|pre)\b[^>]*?(/?)>", re.I)


def _mask_spans(text: str) -> str:
    """Drop comments; replace nowiki/pre spans by a marker that breaks links.

    Comments are removed outright (the preprocessor does the same, so
    ``[<!-- -->[X]]`` is a link) while nowiki/pre leave a marker, so
    ``[<nowiki/>[X]]`` is not. An unterminated comment hides the rest of the
    page; an unterminated nowiki/pre tag is literal text.
    """
    out: list[str] = []
    pos = 0
    n = len(text)
    while pos < n:
        lt = text.find("<", pos)
        if lt < 0:
            out.append(text[pos:])
            break
        out.append(text[pos:lt])
        if text.startswith("<!--", lt):
            end = text.find("-->", lt + 4)
            if end < 0:
                return "".join(out)
            pos = end + 3
            continue
        m = _OPEN_TAG_RE.match(text, lt)
        if m is None:
            out.append("<")
            pos = lt + 1
            continue
        if m.group(2):
            out.append(_MASK)
            pos = m.end()
            continue
        close_re = re.compile(r"</%s\s*>" % m.group(1), re.I)
        close = close_re.search(text, m.end())
        if close is None:
            out.append("<")
            pos = lt + 1
            continue
        out.append(_MASK)
        pos = close.end()
    return "".join(out)


def _closes(text: str, start: int) -> bool:
    """True if a ``]]`` closes the link whose label starts at ``start``."""
    depth = 0
    i = start
    n = len(text)
    while i < n - 1:
        pair = text[i : i + 2]
        if pair == "[[":
            depth += 1
            i += 2
        elif pair == "]]":
            if depth == 0:
                return True
            depth -= 1
            i += 2
        else:
            i += 1
    return False


def iter_link_targets(wikitext: str):
    """Yield the raw target text of every well-formed ``[[...]]`` link."""
    text = _mask_spans(wikitext)
    i = text.find("[[")
    while i >= 0:
        start = i + 2
        if text.startswith("[", start):
            # a run of brackets: the last two open the link
            i = text.find("[[", start - 1)
            continue
        pipe = text.find("|", start)
        close = text.find("]]", start)
        if close < 0:
            break
        if 0 <= pipe < close:
            raw = text[start:pipe]
            ok = _closes(text, pipe + 1)
        else:
            raw = text[start:close]
            ok = True
        if ok and raw.strip() and not _BAD_RAW_CHARS.intersection(raw):
            yield raw
        i = text.find("[[", start)


def _outlink_from_raw(raw: str, lang: str) -> Outlink | None:
    cls = classify_link(raw, lang)
    decoded = _decode(raw).strip()
    if decoded.startswith(":"):
        decoded = decoded[1:]
    page, hash_, _ = decoded.partition("#")
    if not page.strip():
        if hash_:
            return Outlink(target="", namespace_class=LinkClass.ARTICLE, anchor_only=True)
        return None
    if cls not in NAMESPACE_CLASSES:
        return None
    target = canonicalize_title(page, lang)
    if not target or _INVALID_TITLE_CHARS.intersection(target):
        return None
    return Outlink(target=target, namespace_class=cls)


def extract_outlinks(wikitext: str, lang: str, source_rev: int | None = None) -> OutlinkSet:
    """Article-namespace outlinks of one revision.

    Non-article namespaces, interwiki prefixes, external targets and
    same-page anchors are dropped; labels and section anchors are discarded.
    """
    links = set()
    for raw in iter_link_targets(wikitext or ""):
        link = _outlink_from_raw(raw, lang)
        if link is not None and not link.anchor_only and link.namespace_class is LinkClass.ARTICLE:
            links.add(link)
    return OutlinkSet(links=frozenset(links), source_rev=source_rev)


_EXTERNAL_RE = re.compile(r"(?<!\[)\[(?:https?:)?//[^\s\]]+|(?<![\[\w/])https?://[^\s\]<>|}]+", re.I)


def count_external_links(wikitext: str) -> int:
    """Rough count of bracketed and bare URLs (diagnostics only)."""
    return len(_EXTERNAL_RE.findall(_mask_spans(wikitext or "")))
