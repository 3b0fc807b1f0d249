"""MediaWiki Action API client for revision histories, interlanguage links
and redirects.

One :class:`WikiClient` can be shared between threads. All requests pass
through a single :class:`RateLimiter`, which is the only serialisation point.
"""

from __future__ import annotations

import logging
import re
import threading
import time
from collections import Counter
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

import requests

from .errors import PageMissing, RateLimited, TransportError, Truncated
from .wikitext import canonicalize_title, known_languages

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://{lang}.wikipedia.org/w/api.php"
USER_AGENT_ENV = "WIKIMEMORY_USER_AGENT"

# formatversion=2 caps titles/revids per request at 50 for anonymous clients
MAX_TITLES_PER_QUERY = 50
_RETRYABLE_API_ERRORS = {"maxlag", "ratelimited", "readonly", "internal_api_error_DBQueryTimeoutError"}


@dataclass(frozen=True, order=True)
class ArticleRef:
    """One article in one language edition; ``title`` is canonical (spaces, not underscores)."""

    lang: str
    title: str

    def __post_init__(self):
        if self.lang not in known_languages():
            raise ValueError(f"unknown Wikipedia edition code: {self.lang!r}")
        if not self.title or not self.title.strip():
            raise ValueError("article title must be non-empty")
        if "_" in self.title:
            raise ValueError(f"title must use spaces, not underscores: {self.title!r}")

    @classmethod
    def of(cls, lang: str, raw_title: str) -> "ArticleRef":
        return cls(lang, canonicalize_title(raw_title, lang))

    def __str__(self) -> str:
        return f"{self.lang}:{self.title}"


@dataclass(frozen=True)
class RevisionRecord:
    rev_id: int
    timestamp: datetime
    size_bytes: int
    wikitext: str | None = None

    def __post_init__(self):
        if self.rev_id <= 0:
            raise ValueError(f"rev_id must be positive, got {self.rev_id}")
        if self.size_bytes < 0:
            raise ValueError(f"size_bytes must be non-negative, got {self.size_bytes}")
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware (UTC)")


@dataclass(frozen=True)
class LangLinkMap:
    source: ArticleRef
    links: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.source.lang in self.links:
            raise ValueError("a page cannot carry an interlanguage link to its own edition")

    def get(self, lang: str) -> str | None:
        return self.links.get(lang)


def parse_timestamp(value: str) -> datetime:
    return datetime.strptime(value, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)


def format_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class RateLimiter:
    """Spaces calls at least ``1 / rate`` seconds apart across all threads."""

    def __init__(self, rate: float = 1.0, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = float("-inf")

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next - now
            if wait > 0:
                self._sleep(wait)
                now = self._next
            self._next = now + self.interval


_ENDPOINT_FIELD = re.compile(r"\{lang\}")


class WikiClient:
    """Thin MediaWiki Action API client.

    ``user_agent`` is mandatory (Wikimedia API etiquette). ``endpoint`` is a
    template with a ``{lang}`` field; point it at a local server for tests.
    HTTP 429 and 5xx responses are retried with exponential backoff, honouring
    ``Retry-After`` when the server sends one.
    """

    def __init__(
        self,
        user_agent: str,
        endpoint: str = DEFAULT_ENDPOINT,
        rate: float = 1.0,
        max_retries: int = 5,
        backoff: float = 1.0,
        max_backoff: float = 60.0,
        timeout: float = 30.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if not user_agent or not user_agent.strip():
            raise ValueError(f"a User-Agent identifying the tool is required (set {USER_AGENT_ENV})")
        self.user_agent = user_agent
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self.session.headers["User-Agent"] = user_agent
        self.limiter = RateLimiter(rate, clock=clock, sleep=sleep)
        self._sleep = sleep
        self.diagnostics: Counter[str] = Counter()
        self._diag_lock = threading.Lock()

    def _count(self, key: str, n: int = 1) -> None:
        with self._diag_lock:
            self.diagnostics[key] += n

    def api_url(self, lang: str) -> str:
        return _ENDPOINT_FIELD.sub(lang, self.endpoint)

    # -- transport ---------------------------------------------------------

    def _backoff_delay(self, attempt: int, response: requests.Response | None) -> float:
        if response is not None:
            retry_after = response.headers.get("Retry-After")
            if retry_after and retry_after.strip().isdigit():
                return min(float(retry_after), self.max_backoff)
        return min(self.backoff * (2 ** attempt), self.max_backoff)

    def request(self, lang: str, params: dict[str, Any]) -> dict[str, Any]:
        """One API call with retries; returns the decoded JSON body."""
        query = {"format": "json", "formatversion": "2", **params}
        url = self.api_url(lang)
        last_status = None
        for attempt in range(self.max_retries + 1):
            self.limiter.acquire()
            response = None
            try:
                response = self.session.get(url, params=query, timeout=self.timeout)
            except requests.RequestException as exc:
                self._count("transport_errors")
                if attempt == self.max_retries:
                    raise TransportError(f"{url}: {exc}") from exc
                self._sleep(self._backoff_delay(attempt, None))
                continue
            last_status = response.status_code
            if response.status_code == 429 or response.status_code >= 500:
                self._count(f"http_{response.status_code}")
                if attempt == self.max_retries:
                    break
                self._sleep(self._backoff_delay(attempt, response))
                continue
            if response.status_code >= 400:
                raise TransportError(f"{url}: HTTP {response.status_code}")
            try:
                body = response.json()
            except ValueError as exc:
                raise TransportError(f"{url}: response is not JSON") from exc
            error = body.get("error") if isinstance(body, dict) else None
            if error:
                code = error.get("code", "")
                if code in _RETRYABLE_API_ERRORS and attempt < self.max_retries:
                    self._count(f"api_{code}")
                    self._sleep(self._backoff_delay(attempt, response))
                    continue
                if code in ("ratelimited", "maxlag"):
                    raise RateLimited(f"{url}: API error {code}")
                raise TransportError(f"{url}: API error {code}: {error.get('info', '')}")
            return body
        if last_status == 429:
            raise RateLimited(f"{url}: still rate limited after {self.max_retries} retries")
        raise TransportError(f"{url}: HTTP {last_status} after {self.max_retries} retries")

    def query_pages(self, lang: str, params: dict[str, Any]) -> Iterator[dict[str, Any]]:
        """Yield each ``query`` block of a continued query, following ``continue`` tokens."""
        params = {"action": "query", **params}
        seen: set[tuple] = set()
        cont: dict[str, Any] = {}
        while True:
            body = self.request(lang, {**params, **cont})
            query = body.get("query")
            if query is None and "continue" not in body and "batchcomplete" not in body:
                raise Truncated(f"{lang}: response carried neither results nor a continuation")
            yield query or {}
            if "continue" not in body:
                return
            cont = dict(body["continue"])
            token = tuple(sorted(cont.items()))
            if token in seen:
                raise Truncated(f"{lang}: continuation token repeated: {cont}")
            seen.add(token)

    # -- operations --------------------------------------------------------

    def _single_page(self, article: ArticleRef, query: dict[str, Any]) -> dict[str, Any] | None:
        pages = query.get("pages") or []
        if not pages:
            return None
        page = pages[0]
        if page.get("missing") or page.get("invalid"):
            raise PageMissing(article.lang, article.title)
        return page

    def fetch_revisions(
        self,
        article: ArticleRef,
        since: datetime,
        until: datetime,
        with_content: bool = False,
    ) -> list[RevisionRecord]:
        """Every revision with ``since <= timestamp <= until``, oldest first.

        Deleted or suppressed revisions are skipped and tallied in
        ``diagnostics["hidden_revisions"]``.
        """
        if since > until:
            raise ValueError("since must not be after until")
        rvprop = "ids|timestamp|size" + ("|content" if with_content else "")
        params = {
            "prop": "revisions",
            "titles": article.title,
            "rvprop": rvprop,
            "rvslots": "main",
            "rvlimit": "max",
            "rvdir": "newer",
            "rvstart": format_timestamp(since),
            "rvend": format_timestamp(until),
        }
        out: list[RevisionRecord] = []
        first = True
        for query in self.query_pages(article.lang, params):
            page = self._single_page(article, query)
            if page is None:
                if first:
                    raise TransportError(f"{article}: response has no pages")
                raise Truncated(f"{article}: page vanished from a continuation response")
            first = False
            for rev in page.get("revisions", []):
                record = self._revision(article, rev, with_content)
                if record is None:
                    continue
                if out and (record.timestamp, record.rev_id) < (out[-1].timestamp, out[-1].rev_id):
                    raise Truncated(f"{article}: revisions arrived out of order at {record.rev_id}")
                if since <= record.timestamp <= until:
                    out.append(record)
        return out

    def _revision(self, article: ArticleRef, rev: dict[str, Any], with_content: bool) -> RevisionRecord | None:
        slot = (rev.get("slots") or {}).get("main") or {}
        hidden = rev.get("texthidden") or rev.get("suppressed") or rev.get("sizehidden") \
            or (with_content and (slot.get("texthidden") or slot.get("missing")))
        if hidden or "revid" not in rev or "timestamp" not in rev:
            self._count("hidden_revisions")
            return None
        size = int(rev.get("size", 0))
        text = None
        if with_content:
            text = slot.get("content", "")
            actual = len(text.encode("utf-8"))
            if actual != size:
                self._count("size_mismatch")
                log.debug("%s rev %s: API size %d, content %d bytes", article, rev["revid"], size, actual)
            size = actual
        return RevisionRecord(int(rev["revid"]), parse_timestamp(rev["timestamp"]), size, text)

    def fetch_contents(self, lang: str, rev_ids: Iterable[int]) -> dict[int, str]:
        """Wikitext for specific revisions, batched by ``revids``."""
        ids = sorted(set(rev_ids))
        out: dict[int, str] = {}
        for i in range(0, len(ids), MAX_TITLES_PER_QUERY):
            batch = ids[i : i + MAX_TITLES_PER_QUERY]
            params = {"prop": "revisions", "revids": "|".join(map(str, batch)),
                      "rvprop": "ids|content", "rvslots": "main"}
            for query in self.query_pages(lang, params):
                for page in query.get("pages", []):
                    for rev in page.get("revisions", []):
                        slot = (rev.get("slots") or {}).get("main") or {}
                        if slot.get("texthidden") or "content" not in slot:
                            self._count("hidden_revisions")
                            continue
                        out[int(rev["revid"])] = slot["content"]
        return out

    def fetch_langlinks(self, article: ArticleRef) -> LangLinkMap:
        """Current interlanguage links of ``article`` (no history is available)."""
        links: dict[str, str] = {}
        params = {"prop": "langlinks", "titles": article.title, "lllimit": "max"}
        for query in self.query_pages(article.lang, params):
            page = self._single_page(article, query)
            if page is None:
                continue
            for ll in page.get("langlinks", []):
                lang = ll["lang"]
                if lang == article.lang:
                    continue
                links[lang] = canonicalize_title(ll["title"], lang)
        return LangLinkMap(article, links)

    def fetch_langlinks_batch(self, lang: str, titles: Iterable[str],
                              target_lang: str | None = None) -> dict[str, LangLinkMap | None]:
        """Interlanguage links for many titles, following redirects.

        Keys are the titles as given; ``None`` marks a missing page (red link).
        """
        result: dict[str, LangLinkMap | None] = {}
        titles = sorted(set(titles))
        for i in range(0, len(titles), MAX_TITLES_PER_QUERY):
            batch = titles[i : i + MAX_TITLES_PER_QUERY]
            params = {"prop": "langlinks", "titles": "|".join(batch), "lllimit": "max", "redirects": "1"}
            if target_lang:
                params["lllang"] = target_lang
            aliases: dict[str, str] = {}
            found: dict[str, dict[str, str] | None] = {}
            for query in self.query_pages(lang, params):
                _collect_aliases(query, aliases)
                for page in query.get("pages", []):
                    name = page["title"]
                    if page.get("missing") or page.get("invalid"):
                        found[name] = None
                        continue
                    bucket = found.setdefault(name, {})
                    if bucket is None:
                        continue
                    for ll in page.get("langlinks", []):
                        if ll["lang"] != lang:
                            bucket[ll["lang"]] = canonicalize_title(ll["title"], ll["lang"])
            for title in batch:
                final = _follow(aliases, title)
                links = found.get(final)
                if links is None:
                    result[title] = None
                else:
                    result[title] = LangLinkMap(ArticleRef(lang, final), links)
        return result

    def resolve_redirect(self, article: ArticleRef) -> ArticleRef:
        """Target of ``article`` if it is a redirect, else ``article`` itself.

        The API flattens redirect chains, so A→B→C resolves to C in one call.
        """
        query = next(iter(self.query_pages(article.lang, {"titles": article.title, "redirects": "1"})), {})
        page = self._single_page(article, query)
        if page is None:
            raise TransportError(f"{article}: response has no pages")
        return ArticleRef(article.lang, canonicalize_title(page["title"], article.lang))

    def resolve_redirects_batch(self, lang: str, titles: Iterable[str]) -> dict[str, str | None]:
        """Map each title to its redirect target (itself if not a redirect, ``None`` if missing)."""
        result: dict[str, str | None] = {}
        titles = sorted(set(titles))
        for i in range(0, len(titles), MAX_TITLES_PER_QUERY):
            batch = titles[i : i + MAX_TITLES_PER_QUERY]
            aliases: dict[str, str] = {}
            missing: set[str] = set()
            for query in self.query_pages(lang, {"titles": "|".join(batch), "redirects": "1"}):
                _collect_aliases(query, aliases)
                for page in query.get("pages", []):
                    if page.get("missing") or page.get("invalid"):
                        missing.add(page["title"])
            for title in batch:
                final = _follow(aliases, title)
                result[title] = None if final in missing else final
        return result

    def fetch_redirects(self, article: ArticleRef) -> list[str]:
        """Titles of main-namespace redirects that point at ``article``."""
        params = {"prop": "redirects", "titles": article.title, "rdlimit": "max",
                  "rdnamespace": "0", "rdprop": "title"}
        out: list[str] = []
        for query in self.query_pages(article.lang, params):
            page = self._single_page(article, query)
            if page is None:
                continue
            out.extend(canonicalize_title(r["title"], article.lang) for r in page.get("redirects", []))
        return sorted(set(out))


def _collect_aliases(query: dict[str, Any], aliases: dict[str, str]) -> None:
    for key in ("normalized", "converted", "redirects"):
        for entry in query.get(key) or []:
            if entry.get("from") and entry.get("to"):
                aliases[entry["from"]] = entry["to"]


def _follow(aliases: dict[str, str], title: str) -> str:
    seen = {title}
    while title in aliases:
        title = aliases[title]
        if title in seen:
            break
        seen.add(title)
    return title
