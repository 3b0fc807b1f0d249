"""Deliberation: temporal outlink-inclusion vectors, their similarity,
clustering, and the Stable / Debated / Forgotten labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import cut_tree, leaves_list, linkage, optimal_leaf_ordering
from scipy.spatial.distance import squareform

from .errors import DegenerateInput
from .store import SnapshotSeries

DEFAULT_FINAL_FRAC = 0.1
DEFAULT_TOGGLE_THRESHOLD = 2.0
AUTO_K_RANGE = (2, 8)


class SimilarityMetric(str, enum.Enum):
    JACCARD = "jaccard"
    COSINE = "cosine"


class Classification(str, enum.Enum):
    STABLE = "Stable"
    DEBATED = "Debated"
    FORGOTTEN = "Forgotten"


@dataclass(frozen=True)
class InclusionMatrix:
    """Binary outlinks × periods matrix; a row is one outlink's inclusion history."""

    outlinks: tuple[str, ...]
    months: tuple[str, ...]
    cells: np.ndarray

    def __post_init__(self):
        if self.cells.shape != (len(self.outlinks), len(self.months)):
            raise ValueError(f"cells shape {self.cells.shape} does not match labels")
        if len(set(self.outlinks)) != len(self.outlinks):
            raise ValueError("outlink rows must be unique")
        if self.cells.size and not self.cells.any(axis=1).all():
            raise ValueError("every outlink row must be included at least once")

    def row(self, title: str) -> np.ndarray:
        return self.cells[self.outlinks.index(title)]

    def column_counts(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    def csv_rows(self):
        for i, title in enumerate(self.outlinks):
            for j, month in enumerate(self.months):
                yield title, month, int(self.cells[i, j])


@dataclass(frozen=True)
class SimilarityMatrix:
    labels: tuple[str, ...]
    values: np.ndarray
    metric: SimilarityMetric = SimilarityMetric.JACCARD


@dataclass(frozen=True)
class ClusterAssignment:
    labels: dict[str, int]
    order: tuple[str, ...]
    k: int
    silhouettes: dict[int, float] = field(default_factory=dict)

    def members(self, cluster_id: int) -> list[str]:
        """Members of one cluster, in leaf order."""
        return [t for t in self.order if self.labels[t] == cluster_id]


@dataclass(frozen=True)
class ClusterProfile:
    cluster_id: int
    members: tuple[str, ...]
    series: tuple[tuple[str, int], ...]
    classification: Classification
    final_frac: float
    mean_toggles: float
    peak: int

    @property
    def size(self) -> int:
        return len(self.members)

    def normalized_series(self) -> list[tuple[str, float]]:
        peak = self.peak or 1
        return [(m, c / peak) for m, c in self.series]


# ---------------------------------------------------------------------------


def build_inclusion_matrix(series: SnapshotSeries) -> InclusionMatrix:
    """One row per outlink ever present, ordered by first inclusion then title."""
    if len(series) == 0:
        raise ValueError("snapshot series is empty")
    first_seen: dict[str, int] = {}
    for j, snap in enumerate(series):
        for title in snap.outlinks.titles:
            first_seen.setdefault(title, j)
    rows = sorted(first_seen, key=lambda t: (first_seen[t], t))
    index = {t: i for i, t in enumerate(rows)}
    cells = np.zeros((len(rows), len(series)), dtype=np.uint8)
    for j, snap in enumerate(series):
        for title in snap.outlinks.titles:
            cells[index[title], j] = 1
    return InclusionMatrix(tuple(rows), tuple(series.labels), cells)


def pairwise_similarity(m: InclusionMatrix, metric: SimilarityMetric | str = SimilarityMetric.JACCARD) -> SimilarityMatrix:
    """Jaccard ``|a∧b|/|a∨b|`` or cosine ``a·b/(‖a‖‖b‖)`` between all row pairs."""
    metric = SimilarityMetric(metric)
    if len(m.outlinks) < 2:
        raise DegenerateInput("similarity needs at least two outlinks")
    x = m.cells.astype(np.int64)
    inter = x @ x.T
    sizes = np.diag(inter).astype(np.float64)
    inter = inter.astype(np.float64)
    if metric is SimilarityMetric.JACCARD:
        denom = sizes[:, None] + sizes[None, :] - inter
    else:
        denom = np.sqrt(sizes[:, None] * sizes[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(denom > 0, inter / denom, 0.0)
    values = np.clip(values, 0.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(m.outlinks, values, metric)


def silhouette(dist: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient over a precomputed distance matrix."""
    n = len(labels)
    ids = np.unique(labels)
    if not 2 <= len(ids) <= n - 1:
        raise ValueError("silhouette needs 2 <= clusters <= n - 1")
    member = labels[:, None] == ids[None, :]
    sums = dist @ member
    counts = member.sum(axis=0).astype(np.float64)
    own = member.argmax(axis=1)
    own_count = counts[own]
    a = np.where(own_count > 1, sums[np.arange(n), own] / np.maximum(own_count - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(n), own] = np.inf
    b = mean_other.min(axis=1)
    s = np.where(own_count > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def _relabel_by_order(raw: np.ndarray, leaf_order: np.ndarray) -> np.ndarray:
    """Renumber clusters 1..k in the order they first appear along the leaves."""
    mapping: dict[int, int] = {}
    for idx in leaf_order:
        mapping.setdefault(int(raw[idx]), len(mapping) + 1)
    return np.array([mapping[int(c)] for c in raw])


def cluster(s: SimilarityMatrix, k: int | str = "auto", k_range: tuple[int, int] = AUTO_K_RANGE) -> ClusterAssignment:
    """Average-linkage agglomerative clustering on ``1 - similarity``.

    Rows are first put in label order so the result does not depend on the
    order they arrive in. The dendrogram is cut into exactly ``k`` clusters;
    ``k="auto"`` picks the best mean silhouette in ``k_range`` (smallest k on
    ties). Leaves are arranged by optimal leaf ordering.
    """
    n = len(s.labels)
    if n < 2:
        raise DegenerateInput("clustering needs at least two outlinks")
    perm = sorted(range(n), key=lambda i: s.labels[i])
    labels = tuple(s.labels[i] for i in perm)
    sim = s.values[np.ix_(perm, perm)]
    dist = 1.0 - sim
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(dist, 0.0, None)
    condensed = squareform(dist, checks=False)

    if n == 2:
        z = np.array([[0.0, 1.0, condensed[0], 2.0]])
    else:
        z = linkage(condensed, method="average")
        z = optimal_leaf_ordering(z, condensed)
    leaf_order = leaves_list(z)

    scores: dict[int, float] = {}
    if k == "auto":
        lo, hi = k_range
        hi = min(hi, n - 1)
        if hi < lo:
            chosen = min(lo, n)
        else:
            for cand in range(lo, hi + 1):
                cut = cut_tree(z, n_clusters=cand).ravel()
                scores[cand] = silhouette(dist, cut)
            chosen = max(scores, key=lambda c: (round(scores[c], 12), -c))
    else:
        chosen = int(k)
        if chosen < 2:
            raise ValueError("k must be at least 2")
        if chosen > n:
            raise DegenerateInput(f"cannot cut {n} outlinks into {chosen} clusters")
    raw = cut_tree(z, n_clusters=chosen).ravel()
    final = _relabel_by_order(raw, leaf_order)
    return ClusterAssignment(
        labels={labels[i]: int(final[i]) for i in range(n)},
        order=tuple(labels[i] for i in leaf_order),
        k=chosen,
        silhouettes=scores,
    )


def toggles(row: np.ndarray) -> int:
    """Number of 0↔1 transitions along a row."""
    row = np.asarray(row, dtype=np.int8)
    return int(np.count_nonzero(np.diff(row)))


def classify_cluster(
    counts,
    member_rows,
    final_frac: float = DEFAULT_FINAL_FRAC,
    toggle_threshold: float = DEFAULT_TOGGLE_THRESHOLD,
) -> tuple[Classification, float, float]:
    """Label one cluster from its per-period inclusion counts and member rows.

    Forgotten when the last count is at most ``final_frac`` of the peak;
    otherwise Debated when members average ``toggle_threshold`` or more
    transitions; otherwise Stable. Returns the label, the final fraction and
    the mean toggle count.
    """
    counts = np.asarray(counts)
    rows = np.atleast_2d(np.asarray(member_rows))
    if rows.shape[0] == 0 or counts.size == 0:
        raise ValueError("cluster is empty")
    peak = counts.max()
    frac = float(counts[-1] / peak) if peak > 0 else 0.0
    mean_toggles = float(np.mean([toggles(r) for r in rows]))
    if frac <= final_frac:
        label = Classification.FORGOTTEN
    elif mean_toggles >= toggle_threshold:
        label = Classification.DEBATED
    else:
        label = Classification.STABLE
    return label, frac, mean_toggles


def cluster_profiles(
    m: InclusionMatrix,
    a: ClusterAssignment,
    final_frac: float = DEFAULT_FINAL_FRAC,
    toggle_threshold: float = DEFAULT_TOGGLE_THRESHOLD,
) -> list[ClusterProfile]:
    if set(a.labels) != set(m.outlinks):
        raise ValueError("cluster assignment does not cover the matrix rows")
    index = {t: i for i, t in enumerate(m.outlinks)}
    profiles = []
    for cid in range(1, a.k + 1):
        members = a.members(cid)
        rows = m.cells[[index[t] for t in members]]
        counts = rows.sum(axis=0)
        label, frac, mean_toggles = classify_cluster(counts, rows, final_frac, toggle_threshold)
        profiles.append(ClusterProfile(
            cluster_id=cid,
            members=tuple(members),
            series=tuple((month, int(c)) for month, c in zip(m.months, counts)),
            classification=label,
            final_frac=frac,
            mean_toggles=mean_toggles,
            peak=int(counts.max()),
        ))
    return profiles
