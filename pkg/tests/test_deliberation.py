import random

import numpy as np
import pytest

from oracles import cosine, jaccard, last_rev_at_or_before, months_between, transitions
from synthetic import best_permutation_agreement, exemplar_rows, planted_matrix, random_history
from test_store import ART, rev
from wikimemory.deliberation import (
    Classification,
    ClusterAssignment,
    InclusionMatrix,
    SimilarityMetric,
    build_inclusion_matrix,
    classify_cluster,
    cluster,
    cluster_profiles,
    pairwise_similarity,
    silhouette,
    toggles,
)
from wikimemory.errors import DegenerateInput
from wikimemory.store import Month, build_series


def matrix(rows, names=None):
    rows = np.array(rows, dtype=np.uint8)
    names = names or [f"L{i}" for i in range(len(rows))]
    return InclusionMatrix(tuple(names), tuple(f"m{j}" for j in range(rows.shape[1])), rows)


def test_one_month_two_links():
    s = build_series([rev(1, "2011-01-01T00:00:00", "[[A]] [[B]]")], ART, (Month(2011, 1), Month(2011, 1)))
    m = build_inclusion_matrix(s)
    assert m.outlinks == ("A", "B") and m.cells.tolist() == [[1], [1]]


def test_row_definition():
    texts = ["[[A]]", "[[A]]", "[[A]] [[B]]", "[[B]]", "[[A]]"]
    revs = [rev(i + 1, f"2011-0{i + 1}-03T00:00:00", t) for i, t in enumerate(texts)]
    m = build_inclusion_matrix(build_series(revs, ART, (Month(2011, 1), Month(2011, 5))))
    assert m.row("A").tolist() == [1, 1, 1, 0, 1]
    assert m.row("B").tolist() == [0, 0, 1, 1, 0]


@pytest.mark.parametrize("seed", range(30))
def test_inclusion_matrix_brute_force(seed):
    revs, truth, span = random_history(random.Random(seed))
    m = build_inclusion_matrix(build_series(revs, ART, span))
    first, last = span
    cols = []
    for y, mo in months_between((first.year, first.month), (last.year, last.month)):
        r = last_rev_at_or_before(revs, y, mo)
        if r is not None:
            cols.append((f"{y:04d}-{mo:02d}", truth[r.rev_id]))
    assert list(m.months) == [c[0] for c in cols]
    assert set(m.outlinks) == set().union(*(c[1] for c in cols))
    for i, title in enumerate(m.outlinks):
        for j, (_, links) in enumerate(cols):
            assert m.cells[i, j] == (title in links)


def test_invariants_rejected():
    with pytest.raises(ValueError):
        matrix([[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        matrix([[1], [1]], names=["A", "A"])


def test_hand_computed_similarity():
    m = matrix([[1, 1, 0], [1, 0, 1]])
    assert pairwise_similarity(m, "jaccard").values[0, 1] == pytest.approx(1 / 3, abs=1e-9)
    assert pairwise_similarity(m, "cosine").values[0, 1] == pytest.approx(0.5, abs=1e-9)
    assert pairwise_similarity(matrix([[1, 0], [0, 1]]), "jaccard").values[0, 1] == 0.0
    assert pairwise_similarity(matrix([[1, 1], [1, 1]], ["A", "B"]), "cosine").values[0, 1] == pytest.approx(1.0)


def test_similarity_needs_two_rows():
    with pytest.raises(DegenerateInput):
        pairwise_similarity(matrix([[1]]))


@pytest.mark.parametrize("seed", range(50))
def test_similarity_properties_and_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    n, t = rng.integers(2, 12), rng.integers(1, 15)
    rows = rng.integers(0, 2, size=(n, t))
    rows[rows.sum(axis=1) == 0, 0] = 1
    m = matrix(rows)
    j = pairwise_similarity(m, SimilarityMetric.JACCARD).values
    c = pairwise_similarity(m, SimilarityMetric.COSINE).values
    for s in (j, c):
        assert np.array_equal(s, s.T)
        assert np.all(np.diag(s) == 1.0)
        assert s.min() >= 0.0 and s.max() <= 1.0
    assert np.all(j <= c + 1e-12)
    for a in range(n):
        for b in range(n):
            assert j[a, b] == pytest.approx(jaccard(rows[a], rows[b]), abs=1e-12)
            assert c[a, b] == pytest.approx(cosine(rows[a], rows[b]), abs=1e-12)


def test_two_identical_groups():
    m = matrix([[1, 1, 0, 0]] * 3 + [[0, 0, 1, 1]] * 4)
    a = cluster(pairwise_similarity(m), 2)
    groups = {frozenset(a.members(cid)) for cid in (1, 2)}
    assert groups == {frozenset({"L0", "L1", "L2"}), frozenset({"L3", "L4", "L5", "L6"})}


def test_planted_recovery_both_metrics():
    m, truth = planted_matrix()
    for metric in SimilarityMetric:
        a = cluster(pairwise_similarity(m, metric), "auto")
        assert a.k == 5
        assert best_permutation_agreement(truth, a.labels) >= 0.95
        assert sorted(a.silhouettes) == list(range(2, 9))


def test_permutation_equivariance():
    m, _ = planted_matrix(seed=3)
    perm = np.random.default_rng(1).permutation(len(m.outlinks))
    shuffled = InclusionMatrix(tuple(m.outlinks[i] for i in perm), m.months, m.cells[perm])
    a = cluster(pairwise_similarity(m), "auto")
    b = cluster(pairwise_similarity(shuffled), "auto")
    assert a.labels == b.labels and a.order == b.order


def test_every_outlink_gets_one_label():
    m, _ = planted_matrix(seed=9)
    a = cluster(pairwise_similarity(m), 4)
    assert set(a.labels) == set(m.outlinks)
    assert sum(len(a.members(c)) for c in range(1, 5)) == len(m.outlinks)
    assert sorted(a.order) == sorted(m.outlinks)
    # ids follow leaf order
    first_seen = []
    for t in a.order:
        if a.labels[t] not in first_seen:
            first_seen.append(a.labels[t])
    assert first_seen == [1, 2, 3, 4]


def test_cluster_degenerate():
    with pytest.raises(DegenerateInput):
        cluster(pairwise_similarity(matrix([[1], [1]])), 3)


def test_silhouette_matches_definition():
    rng = np.random.default_rng(0)
    pts = rng.random((12, 2))
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    labels = np.array([0] * 4 + [1] * 5 + [2] * 3)
    expected = []
    for i in range(12):
        same = [dist[i, j] for j in range(12) if labels[j] == labels[i] and j != i]
        a = sum(same) / len(same)
        b = min(np.mean([dist[i, j] for j in range(12) if labels[j] == c]) for c in set(labels) - {labels[i]})
        expected.append((b - a) / max(a, b))
    assert silhouette(dist, labels) == pytest.approx(np.mean(expected), abs=1e-12)


@pytest.mark.parametrize("row", [[0], [1, 0, 1, 0, 1], [0, 0, 1, 1], [1, 1, 1]])
def test_toggles(row):
    assert toggles(row) == transitions(row)


@pytest.mark.parametrize("kind", ["Stable", "Debated", "Forgotten"])
@pytest.mark.parametrize("seed", range(10))
def test_classification_exemplars(kind, seed):
    rows = exemplar_rows(kind, random.Random(f"{kind}-{seed}"))
    label, frac, mean_t = classify_cluster(rows.sum(axis=0), rows)
    assert label is Classification(kind)
    assert mean_t == pytest.approx(np.mean([transitions(list(r)) for r in rows]))


def test_classification_boundaries():
    # final_frac exactly 0.1 is Forgotten; just above is not
    rows = np.array([[1, 1]] * 10 + [[1, 0]] * 90)
    assert classify_cluster(rows.sum(0), rows)[0] is Classification.FORGOTTEN
    rows = np.array([[1, 1]] * 11 + [[1, 0]] * 89)
    assert classify_cluster(rows.sum(0), rows)[0] is Classification.STABLE
    # mean toggles exactly 2.0 is Debated
    rows = np.array([[1, 0, 1], [1, 0, 1]])
    assert classify_cluster(rows.sum(0), rows)[0] is Classification.DEBATED
    assert classify_cluster(rows.sum(0), rows, toggle_threshold=2.5)[0] is Classification.STABLE


@pytest.mark.parametrize("seed", range(10))
def test_classification_invariant_to_column_duplication(seed):
    rng = random.Random(seed)
    rows = exemplar_rows(rng.choice(["Stable", "Debated", "Forgotten"]), rng)
    j = rng.randrange(rows.shape[1])
    dup = np.insert(rows, j, rows[:, j], axis=1)
    assert classify_cluster(rows.sum(0), rows) == classify_cluster(dup.sum(0), dup)


def test_cluster_profiles():
    m = matrix([[1, 1, 1, 1]] * 3 + [[1, 1, 0, 0]] * 3 + [[1, 0, 1, 0]] * 2 + [[0, 1, 0, 1]] * 2)
    groups = [1, 1, 1, 2, 2, 2, 3, 3, 3, 3]
    a = ClusterAssignment({t: g for t, g in zip(m.outlinks, groups)}, m.outlinks, 3)
    profiles = cluster_profiles(m, a)
    by_members = {frozenset(p.members): p for p in profiles}
    stable = by_members[frozenset({"L0", "L1", "L2"})]
    assert stable.classification is Classification.STABLE and [c for _, c in stable.series] == [3, 3, 3, 3]
    forgotten = by_members[frozenset({"L3", "L4", "L5"})]
    assert forgotten.classification is Classification.FORGOTTEN and forgotten.final_frac == 0.0
    debated = by_members[frozenset({"L6", "L7", "L8", "L9"})]
    assert debated.classification is Classification.DEBATED and debated.mean_toggles == 3.0
