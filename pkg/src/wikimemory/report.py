"""Deterministic SVG figures and RFC 4180 CSV tables.

Output depends only on the input data: no timestamps, no randomness, floats
printed at fixed precision. Figures are for inspection; the CSV files written
next to them carry the numbers.
"""

from __future__ import annotations

import csv
import enum
import io
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from xml.sax.saxutils import escape

import numpy as np

from .errors import ShapeMismatch


class FigureKind(str, enum.Enum):
    LINE = "line"
    HEATMAP = "heatmap"
    STACKED_AREA = "stacked_area"
    TIMELINE_BARS = "timeline_bars"
    TABLE = "table"


@dataclass(frozen=True)
class LineData:
    series: Mapping[str, Sequence[tuple[str, float]]]
    y_label: str = ""


@dataclass(frozen=True)
class HeatmapData:
    row_labels: Sequence[str]
    col_labels: Sequence[str]
    values: np.ndarray
    boundaries: Sequence[int] = ()


@dataclass(frozen=True)
class StackedData:
    labels: Sequence[str]
    layers: Mapping[str, Sequence[int]]


@dataclass(frozen=True)
class TimelineData:
    row_labels: Sequence[str]
    months: Sequence[str]
    included: np.ndarray
    created: np.ndarray


@dataclass(frozen=True)
class TableData:
    header: Sequence[str]
    rows: Sequence[Sequence[Any]]


@dataclass(frozen=True)
class FigureSpec:
    kind: FigureKind
    title: str
    data: Any
    normalized: bool = False
    extra: dict = field(default_factory=dict)


_EXPECTED = {
    FigureKind.LINE: LineData,
    FigureKind.HEATMAP: HeatmapData,
    FigureKind.STACKED_AREA: StackedData,
    FigureKind.TIMELINE_BARS: TimelineData,
    FigureKind.TABLE: TableData,
}

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
RAMP_LOW = (255, 255, 255)
RAMP_HIGH = (8, 48, 107)

WIDTH = 800
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 160, 40, 50

_RTL_RE = re.compile(r"[\u0590-\u08ff\ufb1d-\ufdff\ufe70-\ufeff]")


def _num(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _text(x: float, y: float, content: str, anchor: str = "start", size: int = 11, extra: str = "") -> str:
    attrs = f'x="{_num(x)}" y="{_num(y)}" font-size="{size}" text-anchor="{anchor}"'
    if _RTL_RE.search(content):
        attrs += ' direction="rtl" unicode-bidi="embed"'
    if extra:
        attrs += " " + extra
    return f"<text {attrs}>{escape(content)}</text>"


def _ramp(v: float) -> str:
    v = min(max(float(v), 0.0), 1.0)
    rgb = [round(lo + (hi - lo) * v) for lo, hi in zip(RAMP_LOW, RAMP_HIGH)]
    return "#%02x%02x%02x" % tuple(rgb)


def _document(width: float, height: float, title: str, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_num(width)}" '
        f'height="{_num(height)}" viewBox="0 0 {_num(width)} {_num(height)}" font-family="sans-serif">\n'
        f"<title>{escape(title)}</title>\n"
        f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="#ffffff"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _x_ticks(labels: Sequence[str]) -> list[tuple[int, str]]:
    """Tick every January when labels are months, else about ten even ticks."""
    if labels and all(re.fullmatch(r"\d{4}-\d{2}", s) for s in labels):
        ticks = [(i, s[:4]) for i, s in enumerate(labels) if s.endswith("-01")]
        if ticks:
            return ticks
    step = max(1, len(labels) // 10)
    return [(i, labels[i]) for i in range(0, len(labels), step)]


def _axes(plot_w: float, plot_h: float, labels: Sequence[str], y_max: float, y_label: str) -> list[str]:
    x0, y0 = MARGIN_LEFT, MARGIN_TOP
    out = [
        f'<line x1="{x0}" y1="{_num(y0 + plot_h)}" x2="{_num(x0 + plot_w)}" y2="{_num(y0 + plot_h)}" stroke="#000000"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{_num(y0 + plot_h)}" stroke="#000000"/>',
    ]
    n = max(len(labels), 1)
    for i, text in _x_ticks(labels):
        x = x0 + (i + 0.5) * plot_w / n
        out.append(f'<line x1="{_num(x)}" y1="{_num(y0 + plot_h)}" x2="{_num(x)}" y2="{_num(y0 + plot_h + 4)}" stroke="#000000"/>')
        out.append(_text(x, y0 + plot_h + 16, text, anchor="middle", size=10))
    for k in range(5):
        v = y_max * k / 4
        y = y0 + plot_h - plot_h * k / 4
        out.append(f'<line x1="{x0 - 4}" y1="{_num(y)}" x2="{x0}" y2="{_num(y)}" stroke="#000000"/>')
        out.append(_text(x0 - 6, y + 3, _num(v), anchor="end", size=10))
    if y_label:
        out.append(_text(14, y0 + plot_h / 2, y_label, anchor="middle", size=11,
                         extra=f'transform="rotate(-90 14 {_num(y0 + plot_h / 2)})"'))
    return out


def _legend(names: Sequence[str], x: float, y: float) -> list[str]:
    out = []
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        yy = y + 16 * i
        out.append(f'<rect x="{_num(x)}" y="{_num(yy - 9)}" width="10" height="10" fill="{color}"/>')
        out.append(_text(x + 14, yy, name, size=11))
    return out


# ---------------------------------------------------------------------------


def _render_line(spec: FigureSpec) -> str:
    data: LineData = spec.data
    labels = sorted({label for pts in data.series.values() for label, _ in pts})
    if not labels:
        raise ShapeMismatch("line figure needs at least one point")
    pos = {label: i for i, label in enumerate(labels)}
    plot_w, plot_h = WIDTH - MARGIN_LEFT - MARGIN_RIGHT, 300
    values = {}
    for name, pts in data.series.items():
        vals = [float(v) for _, v in pts]
        if spec.normalized and vals:
            peak = max(vals) or 1.0
            vals = [v / peak for v in vals]
        values[name] = vals
    y_max = max((max(v) for v in values.values() if v), default=1.0) or 1.0
    body = [_text(WIDTH / 2, 22, spec.title, anchor="middle", size=14)]
    body += _axes(plot_w, plot_h, labels, y_max, data.y_label)
    n = len(labels)
    for k, (name, pts) in enumerate(data.series.items()):
        color = PALETTE[k % len(PALETTE)]
        coords = []
        for (label, _), v in zip(pts, values[name]):
            x = MARGIN_LEFT + (pos[label] + 0.5) * plot_w / n
            y = MARGIN_TOP + plot_h - plot_h * v / y_max
            coords.append((x, y))
        if len(coords) > 1:
            pts_attr = " ".join(f"{_num(x)},{_num(y)}" for x, y in coords)
            body.append(f'<polyline points="{pts_attr}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in coords:
            body.append(f'<circle class="marker" cx="{_num(x)}" cy="{_num(y)}" r="2" fill="{color}"/>')
    body += _legend(list(data.series), WIDTH - MARGIN_RIGHT + 12, MARGIN_TOP + 10)
    return _document(WIDTH, MARGIN_TOP + plot_h + MARGIN_BOTTOM, spec.title, body)


def _render_heatmap(spec: FigureSpec) -> str:
    data: HeatmapData = spec.data
    values = np.asarray(data.values, dtype=float)
    if values.shape != (len(data.row_labels), len(data.col_labels)):
        raise ShapeMismatch(f"heatmap values {values.shape} vs {len(data.row_labels)}×{len(data.col_labels)} labels")
    rows, cols = values.shape
    if spec.normalized and values.size and values.max() > 0:
        values = values / values.max()
    label_w = 220 if rows <= 80 else 20
    cell = max(1.0, min(12.0, 560.0 / max(rows, cols, 1)))
    x0, y0 = label_w, MARGIN_TOP
    body = [_text((label_w + cols * cell + 20) / 2, 22, spec.title, anchor="middle", size=14)]
    for i in range(rows):
        for j in range(cols):
            body.append(f'<rect x="{_num(x0 + j * cell)}" y="{_num(y0 + i * cell)}" width="{_num(cell)}" '
                        f'height="{_num(cell)}" fill="{_ramp(values[i, j])}"/>')
    if rows <= 80:
        for i, label in enumerate(data.row_labels):
            body.append(_text(x0 - 4, y0 + (i + 0.75) * cell, label, anchor="end", size=max(6, int(cell))))
    for b in data.boundaries:
        y = y0 + b * cell
        body.append(f'<line class="boundary" x1="{_num(x0)}" y1="{_num(y)}" x2="{_num(x0 + cols * cell)}" '
                    f'y2="{_num(y)}" stroke="#d62728" stroke-width="1"/>')
        if rows == cols:
            x = x0 + b * cell
            body.append(f'<line class="boundary" x1="{_num(x)}" y1="{_num(y0)}" x2="{_num(x)}" '
                        f'y2="{_num(y0 + rows * cell)}" stroke="#d62728" stroke-width="1"/>')
    width = x0 + cols * cell + 20
    height = y0 + rows * cell + 30
    return _document(width, height, spec.title, body)


def _render_stacked(spec: FigureSpec) -> str:
    data: StackedData = spec.data
    n = len(data.labels)
    if n == 0 or any(len(v) != n for v in data.layers.values()):
        raise ShapeMismatch("every stacked layer needs one value per label")
    plot_w, plot_h = WIDTH - MARGIN_LEFT - MARGIN_RIGHT, 300
    stack = np.cumsum(np.array([list(v) for v in data.layers.values()], dtype=float), axis=0)
    y_max = float(stack[-1].max()) if stack.size else 1.0
    y_max = y_max or 1.0
    body = [_text(WIDTH / 2, 22, spec.title, anchor="middle", size=14)]
    body += _axes(plot_w, plot_h, list(data.labels), y_max, "outlinks")
    xs = [MARGIN_LEFT + (i + 0.5) * plot_w / n for i in range(n)]
    base = np.zeros(n)
    for k, name in enumerate(data.layers):
        top = stack[k]
        upper = [(x, MARGIN_TOP + plot_h - plot_h * v / y_max) for x, v in zip(xs, top)]
        lower = [(x, MARGIN_TOP + plot_h - plot_h * v / y_max) for x, v in zip(xs, base)]
        poly = upper + lower[::-1]
        pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in poly)
        body.append(f'<polygon points="{pts}" fill="{PALETTE[k % len(PALETTE)]}" fill-opacity="0.8" stroke="none"/>')
        base = top
    body += _legend(list(data.layers), WIDTH - MARGIN_RIGHT + 12, MARGIN_TOP + 10)
    return _document(WIDTH, MARGIN_TOP + plot_h + MARGIN_BOTTOM, spec.title, body)


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    out = []
    start = None
    for j, f in enumerate(flags):
        if f and start is None:
            start = j
        elif not f and start is not None:
            out.append((start, j))
            start = None
    if start is not None:
        out.append((start, len(flags)))
    return out


def _render_timeline(spec: FigureSpec) -> str:
    data: TimelineData = spec.data
    inc = np.asarray(data.included, dtype=bool)
    created = np.asarray(data.created, dtype=bool)
    shape = (len(data.row_labels), len(data.months))
    if inc.shape != shape or created.shape != shape:
        raise ShapeMismatch(f"timeline masks must be {shape}")
    label_w = 200
    plot_w = WIDTH - label_w - 40
    bar_h, gap = 14, 6
    n = max(len(data.months), 1)
    cw = plot_w / n
    y0 = MARGIN_TOP
    body = [_text(WIDTH / 2, 22, spec.title, anchor="middle", size=14)]
    for i, label in enumerate(data.row_labels):
        y = y0 + i * (bar_h + gap)
        body.append(_text(label_w - 6, y + bar_h - 3, label, anchor="end", size=11))
        for a, b in _runs(created[i]):
            body.append(f'<rect class="created" x="{_num(label_w + a * cw)}" y="{_num(y)}" '
                        f'width="{_num((b - a) * cw)}" height="{bar_h}" fill="#e0e0e0"/>')
        for a, b in _runs(inc[i]):
            body.append(f'<rect class="included" x="{_num(label_w + a * cw)}" y="{_num(y)}" '
                        f'width="{_num((b - a) * cw)}" height="{bar_h}" fill="#08306b"/>')
    axis_y = y0 + len(data.row_labels) * (bar_h + gap) + 4
    for j, text in _x_ticks(list(data.months)):
        x = label_w + (j + 0.5) * cw
        body.append(_text(x, axis_y + 12, text, anchor="middle", size=10))
    return _document(WIDTH, axis_y + 30, spec.title, body)


def csv_text(header: Sequence[Any] | None, rows: Iterable[Sequence[Any]]) -> str:
    """RFC 4180 CSV (CRLF line ends, minimal quoting)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    if header is not None:
        writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _render_table(spec: FigureSpec) -> str:
    data: TableData = spec.data
    width = len(data.header)
    if any(len(r) != width for r in data.rows):
        raise ShapeMismatch("every table row must match the header width")
    return csv_text(data.header, data.rows)


_RENDERERS = {
    FigureKind.LINE: _render_line,
    FigureKind.HEATMAP: _render_heatmap,
    FigureKind.STACKED_AREA: _render_stacked,
    FigureKind.TIMELINE_BARS: _render_timeline,
    FigureKind.TABLE: _render_table,
}


def render(spec: FigureSpec) -> str:
    """SVG document (or CSV for tables) for ``spec``."""
    kind = FigureKind(spec.kind)
    if not isinstance(spec.data, _EXPECTED[kind]):
        raise ShapeMismatch(f"{kind.value} figure needs {_EXPECTED[kind].__name__}, got {type(spec.data).__name__}")
    return _RENDERERS[kind](spec)


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" keeps CSV CRLFs exactly as rendered
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def write_figure(out_dir: Path, construct: str, name: str, spec: FigureSpec) -> Path:
    ext = "csv" if FigureKind(spec.kind) is FigureKind.TABLE else "svg"
    return write_text(Path(out_dir) / construct / f"{name}.{ext}", render(spec))


def write_csv(out_dir: Path, construct: str, name: str, header: Sequence[Any], rows: Iterable[Sequence[Any]]) -> Path:
    return write_text(Path(out_dir) / construct / f"{name}.csv", csv_text(header, rows))
