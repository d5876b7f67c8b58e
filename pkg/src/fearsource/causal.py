"""Variance attribution of fear over the fixed four-variable causal graph.

The graph has Age, Education, and Source as categorical causes of the
continuous Fear outcome, with Age -> Education and both demographics also
feeding Source.  Attribution runs weighted least squares of fear on one-hot
main effects for every predictor subset and allocates the full-model
R-squared across predictors by exact Shapley values, so shares are
order-independent and sum to the explained fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .domain import FEAR_WEIGHT_VECTOR, Singleton, membership_matrix
from .errors import DegenerateSampleError, InsufficientDataError
from .ingest import SurveyPanel
from .scores import SingletonFearScore

NODES = ("Age", "Education", "Source", "Fear")
EDGES = frozenset(
    {
        ("Age", "Education"),
        ("Age", "Source"),
        ("Education", "Source"),
        ("Age", "Fear"),
        ("Education", "Fear"),
        ("Source", "Fear"),
    }
)

PREDICTORS = ("age", "education", "source")
_LEVELS = {"age": 3, "education": 3, "source": 9}


@dataclass(frozen=True)
class CausalDag:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]


def default_dag() -> CausalDag:
    return CausalDag(nodes=frozenset(NODES), edges=EDGES)


def _is_acyclic(dag: CausalDag) -> bool:
    indeg = {n: 0 for n in dag.nodes}
    for a, b in dag.edges:
        if a not in indeg or b not in indeg:
            return False
        indeg[b] += 1
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for a, b in dag.edges:
            if a == node:
                indeg[b] -= 1
                if indeg[b] == 0:
                    queue.append(b)
    return seen == len(dag.nodes)


def validate_dag(dag: CausalDag) -> bool:
    """True iff the graph is exactly the canonical four-variable DAG."""
    return dag.nodes == frozenset(NODES) and dag.edges == EDGES and _is_acyclic(dag)


def edge_list_text(dag: CausalDag) -> str:
    return "\n".join(f"{a} -> {b}" for a, b in sorted(dag.edges)) + "\n"


# ---------------------------------------------------------------------------
# Observation table
# ---------------------------------------------------------------------------


@dataclass
class ObservationTable:
    """Weighted rows of (age, education, source, fear)."""

    age: np.ndarray  # int, 1..3
    education: np.ndarray  # int, 1..3
    source: np.ndarray  # int, 1..9
    fear: np.ndarray  # float
    weight: np.ndarray  # float >= 0

    def __post_init__(self):
        n = self.fear.size
        if not all(a.shape == (n,) for a in (self.age, self.education, self.source, self.weight)):
            raise ValueError("observation columns must share one length")
        if (self.weight < 0).any():
            raise ValueError("weights must be nonnegative")

    def __len__(self) -> int:
        return int(self.fear.size)


def build_observations(panel: SurveyPanel, singleton_scores: SingletonFearScore) -> ObservationTable:
    """One row per (date, state, age, education, singleton) cell.

    The row's fear value is the cell's own fear score over the combos that
    contain the singleton, and its weight is the cell's singleton-attributed
    respondent mass (membership sum).  `singleton_scores` fixes the date
    window; cells outside the overlap are dropped, zero-mass cells emit no
    row.
    """
    window = np.intersect1d(panel.dates, singleton_scores.dates.astype("datetime64[D]"))
    if window.size == 0:
        raise InsufficientDataError("panel and singleton scores share no dates")
    frame = panel.frame
    dates = frame["date"].to_numpy().astype("datetime64[D]")
    in_window = np.isin(dates, window)
    if not in_window.any():
        raise InsufficientDataError("no panel rows inside the score window")

    states = panel.states
    state_idx = np.searchsorted(np.array(states), frame["state"].to_numpy())[in_window]
    day_idx = np.searchsorted(window, dates[in_window])
    age = frame["age"].to_numpy(dtype=np.int64)[in_window]
    edu = frame["edu"].to_numpy(dtype=np.int64)[in_window]
    mask = frame["combo_mask"].to_numpy(dtype=np.int64)[in_window]
    fear_level = frame["fear_level"].to_numpy(dtype=np.int64)[in_window]
    w = frame["weighted_count"].to_numpy()[in_window]
    w_scored = w * FEAR_WEIGHT_VECTOR[fear_level - 1]

    member = membership_matrix(np.arange(256))  # [256, 9]
    base = ((day_idx * len(states) + state_idx) * 3 + (age - 1)) * 3 + (edu - 1)
    size = window.size * len(states) * 9 * 9
    denom = np.zeros(size)
    numer = np.zeros(size)
    for code in Singleton:
        has = member[mask, code - 1]
        keys = base[has] * 9 + (code - 1)
        denom += np.bincount(keys, weights=w[has], minlength=size)
        numer += np.bincount(keys, weights=w_scored[has], minlength=size)

    rows = np.flatnonzero(denom > 0)
    decoded = rows.copy()
    source = decoded % 9 + 1
    decoded //= 9
    education = decoded % 3 + 1
    decoded //= 3
    age_out = decoded % 3 + 1
    return ObservationTable(
        age=age_out.astype(np.int64),
        education=education.astype(np.int64),
        source=source.astype(np.int64),
        fear=numer[rows] / denom[rows],
        weight=denom[rows],
    )


# ---------------------------------------------------------------------------
# Explained variance and Shapley attribution
# ---------------------------------------------------------------------------


def fit_explained_variance(obs: ObservationTable, predictors) -> float:
    """Weighted R-squared of fear on one-hot main effects of `predictors`."""
    predictors = tuple(predictors)
    unknown = set(predictors) - set(PREDICTORS)
    if unknown:
        raise ValueError(f"unknown predictors: {sorted(unknown)}")
    if len(obs) == 0:
        raise InsufficientDataError("empty observation table")
    w = obs.weight
    total_w = float(w.sum())
    if total_w <= 0:
        raise InsufficientDataError("observation table has zero total weight")
    y = obs.fear
    ybar = float((w * y).sum()) / total_w
    sst = float((w * (y - ybar) ** 2).sum())
    if sst <= 0:
        raise DegenerateSampleError("fear has zero weighted variance")
    if not predictors:
        return 0.0

    columns = [np.ones(len(obs))]
    for name in predictors:
        values = getattr(obs, name)
        for level in range(1, _LEVELS[name] + 1):
            columns.append((values == level).astype(float))
    design = np.column_stack(columns)
    sw = np.sqrt(w)
    coef, _, _, _ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    resid = y - design @ coef
    ssr = float((w * resid**2).sum())
    return min(max(1.0 - ssr / sst, 0.0), 1.0)


def subset_r2(obs: ObservationTable) -> dict[frozenset, float]:
    """R-squared of every predictor subset (the Shapley coalition values)."""
    out: dict[frozenset, float] = {}
    for size in range(len(PREDICTORS) + 1):
        for combo in combinations(PREDICTORS, size):
            out[frozenset(combo)] = fit_explained_variance(obs, combo)
    return out


@dataclass
class AttributionResult:
    shares: dict[str, float]
    residual: float
    r2_full: float
    r2_subsets: dict[tuple[str, ...], float] = field(default_factory=dict)
    clamped: list[str] = field(default_factory=list)


def shapley_attribution(obs: ObservationTable) -> AttributionResult:
    """Exact Shapley allocation of the full-model R-squared.

    share(X) averages the marginal R-squared gain of adding X over all
    predictor orderings; the residual is 1 - R-squared(full), so shares plus
    residual account for all variance.  Negative shares below 1e-9 in
    magnitude are numeric noise and get clamped to zero (recorded).
    """
    values = subset_r2(obs)
    p = len(PREDICTORS)
    shares: dict[str, float] = {}
    for x in PREDICTORS:
        others = [q for q in PREDICTORS if q != x]
        total = 0.0
        for size in range(p):
            coeff = math.factorial(size) * math.factorial(p - 1 - size) / math.factorial(p)
            for subset in combinations(others, size):
                base = frozenset(subset)
                total += coeff * (values[base | {x}] - values[base])
        shares[x] = total
    clamped = [x for x, v in shares.items() if -1e-9 < v < 0.0]
    for x in clamped:
        shares[x] = 0.0
    r2_full = values[frozenset(PREDICTORS)]
    return AttributionResult(
        shares=shares,
        residual=1.0 - r2_full,
        r2_full=r2_full,
        r2_subsets={tuple(sorted(k)): v for k, v in values.items()},
        clamped=clamped,
    )


def sequential_attribution(obs: ObservationTable, order=PREDICTORS) -> dict[str, float]:
    """Order-dependent incremental R-squared gains (diagnostic only)."""
    order = tuple(order)
    if sorted(order) != sorted(PREDICTORS):
        raise ValueError(f"order must be a permutation of {PREDICTORS}")
    values = subset_r2(obs)
    out: dict[str, float] = {}
    seen: frozenset = frozenset()
    for name in order:
        out[name] = values[seen | {name}] - values[seen]
        seen = seen | {name}
    out["residual"] = 1.0 - values[frozenset(PREDICTORS)]
    return out
