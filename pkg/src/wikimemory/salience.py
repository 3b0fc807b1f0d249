"""Salience: article size and outlink count through time."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .client import ArticleRef
from .store import SnapshotSeries


class Metric(str, enum.Enum):
    SIZE_BYTES = "size_bytes"
    OUTLINK_COUNT = "outlink_count"


@dataclass(frozen=True)
class TimeSeries:
    article: ArticleRef
    metric: Metric
    points: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [p[0] for p in self.points]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate period in time series")
        if any(v < 0 for _, v in self.points):
            raise ValueError("time series values must be non-negative")

    @property
    def labels(self) -> list[str]:
        return [p[0] for p in self.points]

    @property
    def values(self) -> list[int]:
        return [p[1] for p in self.points]

    def csv_rows(self) -> list[tuple[str, str, int]]:
        return [(label, self.metric.value, value) for label, value in self.points]


def _require(series: SnapshotSeries) -> None:
    if len(series) == 0:
        raise ValueError("snapshot series is empty")


def size_series(series: SnapshotSeries) -> TimeSeries:
    _require(series)
    return TimeSeries(series.article, Metric.SIZE_BYTES,
                      tuple((s.label, s.rev.size_bytes) for s in series))


def outlink_count_series(series: SnapshotSeries) -> TimeSeries:
    _require(series)
    return TimeSeries(series.article, Metric.OUTLINK_COUNT,
                      tuple((s.label, len(s.outlinks)) for s in series))


def deltas(ts: TimeSeries) -> list[tuple[str, int]]:
    """Change into each period from the one before it."""
    return [(b[0], b[1] - a[1]) for a, b in zip(ts.points, ts.points[1:])]


def delta_report(ts: TimeSeries, top_k: int) -> list[tuple[str, int]]:
    """The ``top_k`` largest non-zero period-over-period changes by magnitude.

    Ties go to the earlier period. Results are listed largest first.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    indexed = [(i, label, d) for i, (label, d) in enumerate(deltas(ts)) if d != 0]
    indexed.sort(key=lambda t: (-abs(t[2]), t[0]))
    return [(label, d) for _, label, d in indexed[:top_k]]
