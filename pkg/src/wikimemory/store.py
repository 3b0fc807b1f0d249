"""Revision cache and monthly snapshot series.

Cache layout::

    {root}/{lang}/{title-hash}/revisions.dat   length-prefixed, checksummed records
    {root}/{lang}/{title-hash}/meta.json       title, lang, fetch span, record count

Each record is ``>I`` payload length, 32-byte SHA-256 of the payload, then the
payload (UTF-8 JSON of one revision). The data file is append-only; meta.json is
replaced atomically after the appended records are fsynced, so a crash between
the two leaves a record count that no longer matches and the next read raises
:class:`CorruptRecord` instead of returning a silently shortened history.
"""

from __future__ import annotations

import calendar
import fcntl
import hashlib
import json
import os
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .client import ArticleRef, RevisionRecord, format_timestamp, parse_timestamp
from .errors import CacheMiss, CorruptRecord, MissingContent, NoRevisionInSpan
from .wikitext import OutlinkSet, extract_outlinks

_HEADER = struct.Struct(">I32s")


@dataclass(frozen=True, order=True)
class Month:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "Month":
        year, month = text.strip()[:7].split("-")
        return cls(int(year), int(month))

    @classmethod
    def of(cls, when: datetime) -> "Month":
        when = when.astimezone(timezone.utc)
        return cls(when.year, when.month)

    def start(self) -> datetime:
        return datetime(self.year, self.month, 1, tzinfo=timezone.utc)

    def end(self) -> datetime:
        """23:59:59 UTC on the last calendar day."""
        last = calendar.monthrange(self.year, self.month)[1]
        return datetime(self.year, self.month, last, 23, 59, 59, tzinfo=timezone.utc)

    def next(self) -> "Month":
        return Month(self.year + self.month // 12, self.month % 12 + 1)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(first: Month, last: Month) -> list[Month]:
    out = []
    m = first
    while m <= last:
        out.append(m)
        m = m.next()
    return out


# ---------------------------------------------------------------------------
# snapshots


@dataclass(frozen=True)
class Snapshot:
    article: ArticleRef
    month: Month
    rev: RevisionRecord
    outlinks: OutlinkSet

    @property
    def label(self) -> str:
        return str(self.month)


@dataclass(frozen=True)
class RevisionSnapshot(Snapshot):
    """Per-revision column; several may share one calendar month."""

    @property
    def label(self) -> str:
        return format_timestamp(self.rev.timestamp)


@dataclass(frozen=True)
class SnapshotSeries:
    article: ArticleRef
    snapshots: tuple[Snapshot, ...]
    per_revision: bool = False

    @property
    def span(self) -> tuple[Month, Month]:
        return self.snapshots[0].month, self.snapshots[-1].month

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.snapshots]

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]


class _OutlinkMemo:
    def __init__(self, lang: str, require_content: bool):
        self.lang = lang
        self.require_content = require_content
        self._memo: dict[int, OutlinkSet] = {}

    def __call__(self, rev: RevisionRecord) -> OutlinkSet:
        hit = self._memo.get(rev.rev_id)
        if hit is None:
            if rev.wikitext is None and self.require_content:
                raise MissingContent(f"revision {rev.rev_id} has no cached wikitext")
            hit = extract_outlinks(rev.wikitext or "", self.lang, source_rev=rev.rev_id)
            self._memo[rev.rev_id] = hit
        return hit


def _check_ascending(revisions: list[RevisionRecord]) -> None:
    for a, b in zip(revisions, revisions[1:]):
        if (b.timestamp, b.rev_id) <= (a.timestamp, a.rev_id):
            raise ValueError(f"revisions must be strictly ascending (rev {a.rev_id} then {b.rev_id})")


def build_series(
    revisions: list[RevisionRecord],
    article: ArticleRef,
    span: tuple[Month, Month],
    require_content: bool = True,
) -> SnapshotSeries:
    """Monthly series: each month carries the last revision at or before its end.

    Months before the first revision are omitted; months without a new
    revision carry the previous one forward.
    """
    first, last = span
    if first > last:
        raise ValueError("span must not be empty")
    _check_ascending(revisions)
    outlinks = _OutlinkMemo(article.lang, require_content)
    snaps: list[Snapshot] = []
    i = -1
    for month in month_range(first, last):
        end = month.end()
        while i + 1 < len(revisions) and revisions[i + 1].timestamp <= end:
            i += 1
        if i < 0:
            continue
        rev = revisions[i]
        snaps.append(Snapshot(article, month, rev, outlinks(rev)))
    if not snaps:
        raise NoRevisionInSpan(f"{article}: no revision on or before {last}")
    return SnapshotSeries(article, tuple(snaps))


def build_revision_series(
    revisions: list[RevisionRecord],
    article: ArticleRef,
    span: tuple[Month, Month],
) -> SnapshotSeries:
    """One column per revision inside ``span`` (for per-revision fidelity)."""
    _check_ascending(revisions)
    lo, hi = span[0].start(), span[1].end()
    outlinks = _OutlinkMemo(article.lang, True)
    snaps = tuple(
        RevisionSnapshot(article, Month.of(r.timestamp), r, outlinks(r))
        for r in revisions if lo <= r.timestamp <= hi
    )
    if not snaps:
        raise NoRevisionInSpan(f"{article}: no revision inside {span[0]}..{span[1]}")
    return SnapshotSeries(article, snaps, per_revision=True)


def snapshot_rev_ids(revisions: list[RevisionRecord], span: tuple[Month, Month]) -> list[int]:
    """Revision ids a monthly series over ``span`` would select (no content needed)."""
    ids = []
    i = -1
    for month in month_range(*span):
        end = month.end()
        while i + 1 < len(revisions) and revisions[i + 1].timestamp <= end:
            i += 1
        if i >= 0 and (not ids or ids[-1] != revisions[i].rev_id):
            ids.append(revisions[i].rev_id)
    return ids


# ---------------------------------------------------------------------------
# cache


def _encode(rev: RevisionRecord) -> bytes:
    payload = json.dumps(
        {"rev_id": rev.rev_id, "timestamp": format_timestamp(rev.timestamp),
         "size_bytes": rev.size_bytes, "wikitext": rev.wikitext},
        ensure_ascii=False, separators=(",", ":"),
    ).encode("utf-8")
    return _HEADER.pack(len(payload), hashlib.sha256(payload).digest()) + payload


def _decode_records(data: bytes, path: Path) -> list[RevisionRecord]:
    out = []
    pos = 0
    while pos < len(data):
        if pos + _HEADER.size > len(data):
            raise CorruptRecord(f"{path}: truncated record header at byte {pos}")
        length, digest = _HEADER.unpack_from(data, pos)
        start = pos + _HEADER.size
        payload = data[start : start + length]
        if len(payload) != length:
            raise CorruptRecord(f"{path}: truncated record at byte {pos}")
        if hashlib.sha256(payload).digest() != digest:
            raise CorruptRecord(f"{path}: checksum mismatch at byte {pos}")
        obj = json.loads(payload.decode("utf-8"))
        out.append(RevisionRecord(obj["rev_id"], parse_timestamp(obj["timestamp"]),
                                  obj["size_bytes"], obj["wikitext"]))
        pos = start + length
    return out


@dataclass
class CacheMeta:
    lang: str
    title: str
    since: str | None = None
    until: str | None = None
    record_count: int = 0
    extra: dict = field(default_factory=dict)


class RevisionStore:
    """Append-only per-article revision cache rooted at ``root``."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def article_dir(self, article: ArticleRef) -> Path:
        digest = hashlib.sha256(article.title.encode("utf-8")).hexdigest()[:16]
        return self.root / article.lang / digest

    @contextmanager
    def _lock(self, article: ArticleRef, exclusive: bool):
        d = self.article_dir(article)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / ".lock", "a+") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
            try:
                yield d
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def meta(self, article: ArticleRef) -> CacheMeta:
        path = self.article_dir(article) / "meta.json"
        if not path.exists():
            raise CacheMiss(f"{article} is not cached")
        obj = json.loads(path.read_text("utf-8"))
        return CacheMeta(**obj)

    def _write_meta(self, d: Path, meta: CacheMeta) -> None:
        tmp = d / "meta.json.tmp"
        tmp.write_text(json.dumps(meta.__dict__, ensure_ascii=False, indent=2, sort_keys=True) + "\n", "utf-8")
        os.replace(tmp, d / "meta.json")

    def put(self, article: ArticleRef, revisions: list[RevisionRecord],
            since: datetime | None = None, until: datetime | None = None) -> int:
        """Append revisions newer than the cached tail; returns how many were written."""
        _check_ascending(revisions)
        with self._lock(article, exclusive=True) as d:
            try:
                meta = self.meta(article)
                existing = self._read(d, meta)
            except CacheMiss:
                meta = CacheMeta(article.lang, article.title)
                existing = []
            tail = existing[-1] if existing else None
            fresh = [r for r in revisions
                     if tail is None or (r.timestamp, r.rev_id) > (tail.timestamp, tail.rev_id)]
            if fresh:
                with open(d / "revisions.dat", "ab") as fh:
                    for rev in fresh:
                        fh.write(_encode(rev))
                    fh.flush()
                    os.fsync(fh.fileno())
            meta.record_count = len(existing) + len(fresh)
            if since is not None:
                s = format_timestamp(since)
                meta.since = s if meta.since is None else min(meta.since, s)
            if until is not None:
                u = format_timestamp(until)
                meta.until = u if meta.until is None else max(meta.until, u)
            self._write_meta(d, meta)
            return len(fresh)

    def replace(self, article: ArticleRef, revisions: list[RevisionRecord],
                since: datetime | None = None, until: datetime | None = None) -> None:
        """Discard the cached history and store ``revisions`` instead."""
        with self._lock(article, exclusive=True) as d:
            for name in ("meta.json", "revisions.dat"):
                (d / name).unlink(missing_ok=True)
        self.put(article, revisions, since, until)

    def get(self, article: ArticleRef) -> list[RevisionRecord]:
        with self._lock(article, exclusive=False) as d:
            return self._read(d, self.meta(article))

    def _read(self, d: Path, meta: CacheMeta) -> list[RevisionRecord]:
        path = d / "revisions.dat"
        data = path.read_bytes() if path.exists() else b""
        records = _decode_records(data, path)
        if len(records) != meta.record_count:
            raise CorruptRecord(f"{path}: {len(records)} records on disk, meta.json says {meta.record_count}")
        return records

    def put_json(self, name: str, lang: str, obj) -> None:
        """Side cache for small JSON documents (interlanguage links, redirects)."""
        path = self.root / "_aux" / lang / f"{name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f"{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(json.dumps(obj, ensure_ascii=False, indent=1, sort_keys=True) + "\n", "utf-8")
        os.replace(tmp, path)

    def update_json(self, name: str, lang: str, entries: dict) -> dict:
        """Merge ``entries`` into a side-cache mapping under a lock; returns the result."""
        path = self.root / "_aux" / lang / f"{name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path.with_suffix(".lock"), "a+") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                current = json.loads(path.read_text("utf-8")) if path.exists() else {}
                current.update(entries)
                self.put_json(name, lang, current)
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
        return current

    def get_json(self, name: str, lang: str):
        path = self.root / "_aux" / lang / f"{name}.json"
        if not path.exists():
            raise CacheMiss(f"no cached {name} for {lang}")
        return json.loads(path.read_text("utf-8"))
