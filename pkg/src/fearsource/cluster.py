"""K-means clustering of states by information-source behavior, with
silhouette-guided selection of k and comparison against election labels.

Feature vectors are raw date-averaged singleton usage and/or fear values
(optionally per stratum, concatenated stratum-major); no standardization by
default, with an opt-in z-score flag for sensitivity runs.  Clustering uses
k-means++ seeding from a seeded generator, Lloyd iterations with an
asserted monotone-descent inertia, and farthest-point reseeding of empty
clusters, so a (features, k, seed) triple is fully reproducible.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import Grouping
from .errors import ConfigError, InsufficientDataError
from .ingest import ElectionLabels
from .scores import StateSummary

logger = logging.getLogger(__name__)


class FeatureKind(enum.Enum):
    USAGE9 = "usage9"
    FEAR9 = "fear9"
    COMBINED18 = "combined18"
    USAGE27 = "usage27"
    FEAR27 = "fear27"
    COMBINED54 = "combined54"

    @property
    def dimension(self) -> int:
        return {"usage9": 9, "fear9": 9, "combined18": 18,
                "usage27": 27, "fear27": 27, "combined54": 54}[self.value]

    @property
    def stratified(self) -> bool:
        return self in (FeatureKind.USAGE27, FeatureKind.FEAR27, FeatureKind.COMBINED54)

    @staticmethod
    def parse(text: str) -> "FeatureKind":
        for kind in FeatureKind:
            if kind.value == text:
                return kind
        raise ConfigError(f"unknown feature kind {text!r}")


@dataclass(frozen=True)
class StateFeatures:
    state: str
    vector: np.ndarray
    feature_kind: FeatureKind
    grouping: Grouping


def build_state_features(
    summaries: Mapping[str, StateSummary],
    feature_kind: FeatureKind,
    grouping: Grouping,
    standardize: bool = False,
) -> list[StateFeatures]:
    """Assemble per-state vectors from date-averaged summaries.

    Unstratified kinds need ungrouped summaries; stratified kinds need a
    3-stratum grouping and concatenate strata in stratum order (usage block
    before fear block for the combined kinds).
    """
    if feature_kind.stratified and grouping is Grouping.UNGROUPED:
        raise ConfigError(f"{feature_kind.value} needs an age or education grouping")
    if not feature_kind.stratified and grouping is not Grouping.UNGROUPED:
        raise ConfigError(f"{feature_kind.value} needs ungrouped summaries")
    out = []
    for state in sorted(summaries):
        summary = summaries[state]
        parts = []
        if feature_kind in (FeatureKind.USAGE9, FeatureKind.COMBINED18):
            parts.append(summary.usage_mean[0])
        if feature_kind in (FeatureKind.FEAR9, FeatureKind.COMBINED18):
            parts.append(summary.fear_mean[0])
        if feature_kind in (FeatureKind.USAGE27, FeatureKind.COMBINED54):
            parts.extend(summary.usage_mean)
        if feature_kind in (FeatureKind.FEAR27, FeatureKind.COMBINED54):
            parts.extend(summary.fear_mean)
        vector = np.concatenate(parts)
        if vector.size != feature_kind.dimension:
            raise ConfigError(
                f"{state}: expected {feature_kind.dimension} features, built {vector.size}"
            )
        out.append(StateFeatures(state, vector, feature_kind, grouping))
    if standardize and out:
        matrix = np.stack([f.vector for f in out])
        sd = matrix.std(axis=0)
        sd[sd == 0] = 1.0
        matrix = (matrix - matrix.mean(axis=0)) / sd
        out = [
            StateFeatures(f.state, matrix[i], feature_kind, grouping)
            for i, f in enumerate(out)
        ]
    return out


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------


@dataclass
class ClusterReport:
    assignments: dict[str, int]
    k: int
    silhouette: float | None
    centroid_vectors: np.ndarray
    seed: int
    inertia: float
    feature_kind: FeatureKind | None = None
    grouping: Grouping | None = None


def _as_matrix(features: Sequence[StateFeatures]) -> tuple[list[str], np.ndarray]:
    ordered = sorted(features, key=lambda f: f.state)
    return [f.state for f in ordered], np.stack([f.vector for f in ordered])


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    dist2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = dist2.sum()
        if total > 0:
            probs = dist2 / total
            centers[i] = x[rng.choice(n, p=probs)]
        else:  # all points coincide with chosen centers
            centers[i] = x[rng.integers(n)]
        dist2 = np.minimum(dist2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(features: Sequence[StateFeatures], k: int, seed: int) -> ClusterReport:
    """Lloyd iterations from a k-means++ start until assignments stabilize.

    Empty clusters are reseeded at the point farthest from its centroid.
    Inertia is asserted non-increasing across iterations.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    states, x = _as_matrix(features)
    n = x.shape[0]
    if k > n:
        raise InsufficientDataError(f"k={k} exceeds the {n} available states")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(x, k, rng)

    prev_assign = None
    prev_inertia = np.inf
    for _ in range(300):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        for cluster in range(k):
            if not (assign == cluster).any():
                farthest = int(d2[np.arange(n), assign].argmax())
                centers[cluster] = x[farthest]
                d2[:, cluster] = ((x - centers[cluster]) ** 2).sum(axis=1)
                assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        assert inertia <= prev_inertia + 1e-9 * max(1.0, abs(prev_inertia if np.isfinite(prev_inertia) else 1.0)), (
            "k-means inertia increased"
        )
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        prev_inertia = inertia
        for cluster in range(k):
            members = x[assign == cluster]
            if len(members):
                centers[cluster] = members.mean(axis=0)

    assignments = {st: int(c) for st, c in zip(states, assign)}
    return ClusterReport(
        assignments=assignments,
        k=k,
        silhouette=silhouette(features, assignments),
        centroid_vectors=centers,
        seed=seed,
        inertia=inertia,
    )


def silhouette(features: Sequence[StateFeatures], assignments: Mapping[str, int]) -> float | None:
    """Mean of (b - a) / max(a, b); None when fewer than two clusters have
    members.  Singleton clusters contribute 0."""
    states, x = _as_matrix(features)
    labels = np.array([assignments[st] for st in states])
    present = np.unique(labels)
    if present.size < 2:
        return None
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    n = len(states)
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        sizes = own.sum()
        if sizes <= 1:
            continue  # singleton cluster contributes 0
        a = dist[i, own].sum() / (sizes - 1)
        b = min(dist[i, labels == other].mean() for other in present if other != labels[i])
        top = max(a, b)
        scores[i] = 0.0 if top == 0 else (b - a) / top
    return float(scores.mean())


def select_k(
    features: Sequence[StateFeatures],
    k_range: tuple[int, int] = (2, 10),
    seed: int = 0,
    restarts: int = 10,
) -> tuple[int, ClusterReport]:
    """Try each k with `restarts` seeded runs, keep the best-inertia run per
    k, and return the k with the highest silhouette (ties go to smaller k)."""
    k_lo, k_hi = k_range
    n = len(features)
    if k_lo < 2 or k_hi < k_lo:
        raise ConfigError(f"bad k range {k_range}")
    k_hi = min(k_hi, n)
    if k_lo > k_hi:
        raise InsufficientDataError(f"k range {k_range} exceeds the {n} available states")
    child_seeds = np.random.SeedSequence(seed).spawn((k_hi - k_lo + 1) * restarts)
    best: tuple[int, ClusterReport] | None = None
    pos = 0
    for k in range(k_lo, k_hi + 1):
        run_best: ClusterReport | None = None
        for _ in range(restarts):
            run_seed = int(child_seeds[pos].generate_state(1)[0])
            pos += 1
            report = kmeans(features, k, run_seed)
            if run_best is None or report.inertia < run_best.inertia:
                run_best = report
        score = -np.inf if run_best.silhouette is None else run_best.silhouette
        if best is None:
            best = (k, run_best)
        else:
            incumbent = -np.inf if best[1].silhouette is None else best[1].silhouette
            if score > incumbent + 1e-12:
                best = (k, run_best)
    return best


# ---------------------------------------------------------------------------
# Election comparison
# ---------------------------------------------------------------------------


@dataclass
class ElectionComparison:
    year: int
    mapping: dict[int, str]  # cluster id -> party
    misclassified: list[str]
    accuracy: float
    compared_states: list[str]
    swing_states: list[str] = field(default_factory=list)


def compare_with_elections(report: ClusterReport, labels: ElectionLabels) -> ElectionComparison:
    """Pick the cluster->party bijection with the higher agreement (only
    defined for k = 2) and list the disagreeing states."""
    if report.k != 2:
        raise ConfigError(f"election comparison needs k = 2, got k = {report.k}")
    common = sorted(set(report.assignments) & set(labels.labels))
    if not common:
        raise InsufficientDataError("no states shared between clusters and labels")
    skipped = sorted(set(report.assignments) - set(labels.labels))
    if skipped:
        logger.warning("election comparison skipping %d unlabeled state(s)", len(skipped))
    best = None
    for mapping in ({0: "D", 1: "R"}, {0: "R", 1: "D"}):
        miss = [st for st in common if mapping[report.assignments[st]] != labels.labels[st]]
        accuracy = 1.0 - len(miss) / len(common)
        if best is None or accuracy > best.accuracy:
            best = ElectionComparison(
                year=labels.year,
                mapping=mapping,
                misclassified=sorted(miss),
                accuracy=accuracy,
                compared_states=common,
            )
    return best


def swing_states(labels_a: ElectionLabels, labels_b: ElectionLabels) -> list[str]:
    """States whose party label differs between the two years."""
    common = set(labels_a.labels) & set(labels_b.labels)
    if not common:
        logger.warning("no states shared between %d and %d labels", labels_a.year, labels_b.year)
        return []
    return sorted(st for st in common if labels_a.labels[st] != labels_b.labels[st])
