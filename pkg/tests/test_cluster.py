import numpy as np
import pytest

from fearsource.cluster import (
    ClusterReport,
    FeatureKind,
    StateFeatures,
    build_state_features,
    compare_with_elections,
    kmeans,
    select_k,
    silhouette,
    swing_states,
)
from fearsource.domain import Grouping
from fearsource.errors import ConfigError, InsufficientDataError
from fearsource.ingest import US_STATES, ElectionLabels
from fearsource.scores import StateSummary


def feats_from_matrix(matrix, kind=FeatureKind.USAGE9, grouping=Grouping.UNGROUPED):
    return [
        StateFeatures(f"S{i:02d}", np.asarray(row, dtype=float), kind, grouping)
        for i, row in enumerate(matrix)
    ]


def planted_blobs(seed=0, sigma=0.05, sep=5.0, n=51):
    """Two isotropic blobs with inter-centroid distance sep * sigma."""
    rng = np.random.default_rng(seed)
    c1 = rng.uniform(0.1, 0.5, 9)
    direction = rng.normal(size=9)
    direction /= np.linalg.norm(direction)
    c2 = c1 + sep * sigma * direction
    features, parties = [], {}
    for i, st in enumerate(sorted(US_STATES)[:n]):
        profile = i % 2
        center = c1 if profile == 0 else c2
        features.append(
            StateFeatures(st, center + rng.normal(0, sigma, 9), FeatureKind.USAGE9, Grouping.UNGROUPED)
        )
        parties[st] = "D" if profile == 0 else "R"
    return features, parties


# ---------------------------------------------------------------------------
# Feature building
# ---------------------------------------------------------------------------


def _summary(state, n_strata):
    rng = np.random.default_rng(hash(state) % 2**31)
    return StateSummary(
        state=state,
        usage_mean=rng.uniform(0, 1, (n_strata, 9)),
        fear_mean=rng.uniform(-1, 1, (n_strata, 9)),
        valid_days=100,
    )


def test_feature_dimensions():
    flat = {st: _summary(st, 1) for st in ("CA", "TX")}
    strat = {st: _summary(st, 3) for st in ("CA", "TX")}
    for kind, grouping, summaries in (
        (FeatureKind.USAGE9, Grouping.UNGROUPED, flat),
        (FeatureKind.FEAR9, Grouping.UNGROUPED, flat),
        (FeatureKind.COMBINED18, Grouping.UNGROUPED, flat),
        (FeatureKind.USAGE27, Grouping.BY_AGE, strat),
        (FeatureKind.FEAR27, Grouping.BY_EDUCATION, strat),
        (FeatureKind.COMBINED54, Grouping.BY_AGE, strat),
    ):
        features = build_state_features(summaries, kind, grouping)
        assert all(f.vector.size == kind.dimension for f in features)
        assert [f.state for f in features] == ["CA", "TX"]


def test_combined18_orders_usage_before_fear():
    flat = {"CA": _summary("CA", 1)}
    combined = build_state_features(flat, FeatureKind.COMBINED18, Grouping.UNGROUPED)[0]
    np.testing.assert_array_equal(combined.vector[:9], flat["CA"].usage_mean[0])
    np.testing.assert_array_equal(combined.vector[9:], flat["CA"].fear_mean[0])


def test_feature_grouping_mismatch_errors():
    flat = {"CA": _summary("CA", 1)}
    with pytest.raises(ConfigError):
        build_state_features(flat, FeatureKind.USAGE27, Grouping.UNGROUPED)
    with pytest.raises(ConfigError):
        build_state_features(flat, FeatureKind.USAGE9, Grouping.BY_AGE)


def test_standardize_flag():
    flat = {st: _summary(st, 1) for st in ("CA", "TX", "NY")}
    features = build_state_features(flat, FeatureKind.USAGE9, Grouping.UNGROUPED, standardize=True)
    matrix = np.stack([f.vector for f in features])
    np.testing.assert_allclose(matrix.mean(axis=0), 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# K-means and silhouette
# ---------------------------------------------------------------------------


def test_planted_partition_recovered_exactly():
    features, parties = planted_blobs(seed=0)
    report = kmeans(features, 2, seed=7)
    split = {st for st, c in report.assignments.items() if c == 0}
    planted = {st for st, p in parties.items() if p == "D"}
    assert split in (planted, set(parties) - planted)


def test_kmeans_determinism_and_errors():
    features, _ = planted_blobs(seed=1, n=12)
    a = kmeans(features, 3, seed=5)
    b = kmeans(features, 3, seed=5)
    assert a.assignments == b.assignments
    assert a.inertia == b.inertia
    with pytest.raises(InsufficientDataError):
        kmeans(features, 13, seed=5)
    with pytest.raises(ConfigError):
        kmeans(features, 1, seed=5)


def test_identical_vectors_degenerate():
    features = feats_from_matrix(np.ones((8, 9)))
    report = kmeans(features, 2, seed=3)
    assert report.silhouette is None  # single effective cluster
    assert set(report.assignments.values()) == {0}


def test_silhouette_tight_blobs_high():
    rng = np.random.default_rng(3)
    matrix = [
        (np.zeros(9) if i % 2 == 0 else np.full(9, 3.0)) + rng.normal(0, 0.05, 9)
        for i in range(20)
    ]
    features = feats_from_matrix(matrix)
    report = kmeans(features, 2, seed=1)
    assert report.silhouette > 0.8


def test_silhouette_uniform_noise_near_zero():
    rng = np.random.default_rng(2)
    features = feats_from_matrix(rng.uniform(0, 1, (51, 9)))
    report = kmeans(features, 2, seed=77)
    assert abs(report.silhouette) < 0.3


def test_silhouette_equidistant_point_contributes_zero():
    # two pairs at x=0 and x=1, plus one point exactly halfway between clusters at x=0.5
    matrix = np.zeros((5, 9))
    matrix[2, 0] = 1.0
    matrix[3, 0] = 1.0
    matrix[4, 0] = 0.5
    features = feats_from_matrix(matrix)
    assignments = {"S00": 0, "S01": 0, "S02": 1, "S03": 1, "S04": 0}
    # hand-computed: S00/S01 score 0.75, S02/S03 score 1.0, midpoint scores 0
    assert silhouette(features, assignments) == pytest.approx(3.5 / 5.0, abs=1e-12)


def test_silhouette_single_cluster_undefined():
    features = feats_from_matrix(np.arange(18).reshape(2, 9))
    assert silhouette(features, {"S00": 0, "S01": 0}) is None


def test_select_k_finds_planted_two_and_three():
    features, _ = planted_blobs(seed=0)
    k, report = select_k(features, (2, 10), seed=1234)
    assert k == 2

    rng = np.random.default_rng(5)
    centers = np.array(
        [[0, 0, 0, 0, 0, 0, 0, 0, 0], [1, 1, 1, 0, 0, 0, 0, 0, 0], [0, 0, 0, 1, 1, 1, 1, 0, 0]],
        dtype=float,
    )
    matrix = [centers[i % 3] + rng.normal(0, 0.05, 9) for i in range(60)]
    k, _ = select_k(feats_from_matrix(matrix), (2, 10), seed=42)
    assert k == 3


def test_select_k_tie_breaks_small(monkeypatch):
    # force identical silhouettes: a diamond of points is symmetric for k=2..3
    features, _ = planted_blobs(seed=0, n=12)
    import fearsource.cluster as cluster_mod

    calls = []
    original = cluster_mod.kmeans

    def fake_kmeans(feats, k, seed):
        report = original(feats, k, seed)
        calls.append(k)
        return ClusterReport(
            assignments=report.assignments,
            k=k,
            silhouette=0.5,  # exact tie across k
            centroid_vectors=report.centroid_vectors,
            seed=seed,
            inertia=report.inertia,
        )

    monkeypatch.setattr(cluster_mod, "kmeans", fake_kmeans)
    k, _ = cluster_mod.select_k(features, (2, 5), seed=9)
    assert k == 2  # smallest k wins exact ties


def test_select_k_range_validation():
    features, _ = planted_blobs(seed=0, n=5)
    with pytest.raises(ConfigError):
        select_k(features, (1, 4), seed=0)
    with pytest.raises(InsufficientDataError):
        select_k(features, (6, 8), seed=0)


# ---------------------------------------------------------------------------
# Election comparison
# ---------------------------------------------------------------------------


def labels_for(parties, year=2020):
    return ElectionLabels(year=year, labels=dict(parties))


def test_perfect_clusters_have_full_accuracy():
    features, parties = planted_blobs(seed=0)
    _, report = select_k(features, (2, 10), seed=1234)
    comparison = compare_with_elections(report, labels_for(parties))
    assert comparison.misclassified == []
    assert comparison.accuracy == 1.0


def test_flipped_states_are_listed_exactly():
    features, parties = planted_blobs(seed=0)
    report = kmeans(features, 2, seed=7)
    flip = {"D": "R", "R": "D"}
    for flips in (["AL"], ["AL", "CA", "DE"]):
        flipped = dict(parties)
        for st in flips:
            flipped[st] = flip[flipped[st]]
        comparison = compare_with_elections(report, labels_for(flipped))
        assert comparison.misclassified == sorted(flips)
        assert comparison.accuracy == pytest.approx(1.0 - len(flips) / len(parties))


def test_accuracy_at_least_half(rng):
    features, parties = planted_blobs(seed=0, n=20)
    report = kmeans(features, 2, seed=7)
    for _ in range(10):
        random_parties = {st: rng.choice(["D", "R"]) for st in parties}
        comparison = compare_with_elections(report, labels_for(random_parties))
        assert comparison.accuracy >= 0.5


def test_comparison_requires_two_clusters():
    features, parties = planted_blobs(seed=0, n=12)
    report = kmeans(features, 3, seed=7)
    with pytest.raises(ConfigError):
        compare_with_elections(report, labels_for(parties))


def test_comparison_skips_unlabeled_states():
    features, parties = planted_blobs(seed=0, n=10)
    report = kmeans(features, 2, seed=7)
    partial = dict(list(parties.items())[:6])
    comparison = compare_with_elections(report, labels_for(partial))
    assert comparison.compared_states == sorted(partial)


def test_swing_states():
    a = labels_for({"CA": "D", "TX": "R", "GA": "R"}, 2020)
    b = labels_for({"CA": "D", "TX": "R", "GA": "D"}, 2024)
    assert swing_states(a, a) == []
    assert swing_states(a, b) == ["GA"]
    disjoint = labels_for({"NY": "D"}, 2024)
    assert swing_states(a, disjoint) == []


def test_kmeans_invariant_to_input_order():
    features, _ = planted_blobs(seed=1, n=20)
    shuffled = list(reversed(features))
    a = kmeans(features, 2, seed=5)
    b = kmeans(shuffled, 2, seed=5)
    assert a.assignments == b.assignments
    assert a.inertia == b.inertia
