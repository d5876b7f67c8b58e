"""Usage normalization, fear scoring, and the per-combo least-squares
disentanglement of singleton source contributions.

All series are dense arrays over [geo, stratum, day, combo(, fear-level)].
Absent observations are explicit: usage carries a per-day validity mask
(days with zero total mass), fear shares and scores carry NaN wherever a
combo had no respondents.  Regressions exclude absent days rather than
treating them as zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .domain import (
    FEAR_WEIGHT_VECTOR,
    Grouping,
    Singleton,
    membership_matrix,
    singleton_combo_mask,
)
from .epi import DailySeries
from .errors import ConfigError, InsufficientDataError
from .ingest import SurveyPanel


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class PanelAggregates:
    """Weighted respondent mass binned by (geo, stratum, day, combo, fear).

    geos is ["*"] when the panel is pooled across states.  Memory scales
    with n_geos * n_strata * n_days * n_combos, so per-state stratified
    aggregation is the expensive variant on combo-rich panels.
    """

    grouping: Grouping
    geos: list[str]
    dates: np.ndarray  # datetime64[D], sorted
    masks: np.ndarray  # distinct combo masks present, sorted
    fear_mass: np.ndarray  # [G, S, T, C, 4]

    @property
    def usage_mass(self) -> np.ndarray:
        return self.fear_mass.sum(axis=-1)

    @property
    def strata(self) -> tuple[int, ...]:
        return self.grouping.strata


def aggregate_panel(
    panel: SurveyPanel, grouping: Grouping, by_state: bool = False
) -> PanelAggregates:
    if len(panel) == 0:
        raise InsufficientDataError("cannot aggregate an empty panel")
    frame = panel.frame
    dates = panel.dates
    masks = np.sort(frame["combo_mask"].unique()).astype(np.int64)

    if by_state:
        geos = panel.states
        geo_idx = pd.Categorical(frame["state"], categories=geos).codes.astype(np.int64)
    else:
        geos = ["*"]
        geo_idx = np.zeros(len(frame), dtype=np.int64)
    if grouping is Grouping.UNGROUPED:
        stratum_idx = np.zeros(len(frame), dtype=np.int64)
        n_strata = 1
    else:
        col = "age" if grouping is Grouping.BY_AGE else "edu"
        stratum_idx = frame[col].to_numpy(dtype=np.int64) - 1
        n_strata = 3
    day_idx = np.searchsorted(dates, frame["date"].to_numpy().astype("datetime64[D]"))
    combo_idx = np.searchsorted(masks, frame["combo_mask"].to_numpy(dtype=np.int64))
    fear_idx = frame["fear_level"].to_numpy(dtype=np.int64) - 1

    g, s, t, c = len(geos), n_strata, dates.size, masks.size
    flat = (((geo_idx * s + stratum_idx) * t + day_idx) * c + combo_idx) * 4 + fear_idx
    mass = np.bincount(
        flat, weights=frame["weighted_count"].to_numpy(), minlength=g * s * t * c * 4
    ).reshape(g, s, t, c, 4)
    return PanelAggregates(grouping=grouping, geos=list(geos), dates=dates, masks=masks, fear_mass=mass)


# ---------------------------------------------------------------------------
# Normalized usage and fear scores
# ---------------------------------------------------------------------------


@dataclass
class UsageSeries:
    """Per-combo usage shares; rows sum to 1 on valid days, zeros elsewhere."""

    grouping: Grouping
    geos: list[str]
    dates: np.ndarray
    masks: np.ndarray
    values: np.ndarray  # [G, S, T, C]
    valid: np.ndarray  # [G, S, T] bool; False marks all-absent days


@dataclass
class FearLevelShares:
    """Per-combo distribution over the four fear levels (NaN where absent)."""

    grouping: Grouping
    geos: list[str]
    dates: np.ndarray
    masks: np.ndarray
    values: np.ndarray  # [G, S, T, C, 4]


@dataclass
class ComboScoreSeries:
    """Fear score per combo in [-1, 1]; NaN where the combo had no mass."""

    grouping: Grouping
    geos: list[str]
    dates: np.ndarray
    masks: np.ndarray
    values: np.ndarray  # [G, S, T, C]


@dataclass
class SingletonSeries:
    """Per-singleton daily values (usage sums, proxies, or final scores)."""

    grouping: Grouping
    geos: list[str]
    dates: np.ndarray
    values: np.ndarray  # [G, S, T, 9]


def normalize_usage(agg: PanelAggregates) -> UsageSeries:
    mass = agg.usage_mass
    total = mass.sum(axis=-1)
    valid = total > 0
    values = np.divide(
        mass, total[..., None], out=np.zeros_like(mass), where=total[..., None] > 0
    )
    return UsageSeries(agg.grouping, agg.geos, agg.dates, agg.masks, values, valid)


def fear_level_shares(agg: PanelAggregates) -> FearLevelShares:
    mass = agg.fear_mass
    denom = mass.sum(axis=-1, keepdims=True)
    values = np.divide(mass, denom, out=np.full_like(mass, np.nan), where=denom > 0)
    return FearLevelShares(agg.grouping, agg.geos, agg.dates, agg.masks, values)


def combo_fear_score(shares: FearLevelShares, weights: np.ndarray | None = None) -> ComboScoreSeries:
    w = FEAR_WEIGHT_VECTOR if weights is None else np.asarray(weights, dtype=float)
    values = shares.values @ w
    return ComboScoreSeries(shares.grouping, shares.geos, shares.dates, shares.masks, values)


def singleton_usage(usage: UsageSeries) -> SingletonSeries:
    """Sum of usage shares over every combo containing each singleton.

    Sums across singletons may exceed 1 because multi-source combos count
    once per member.  Invalid days are NaN.
    """
    member = membership_matrix(usage.masks).astype(float)
    values = usage.values @ member
    values[~usage.valid] = np.nan
    return SingletonSeries(usage.grouping, usage.geos, usage.dates, values)


def singleton_proxies(scores: ComboScoreSeries) -> SingletonSeries:
    """Fear score of each exact singleton combo (the regression proxies).

    A singleton whose one-source combo never appears in the panel gets an
    all-NaN column.
    """
    g, s, t, _ = scores.values.shape
    values = np.full((g, s, t, 9), np.nan)
    for code in Singleton:
        mask = singleton_combo_mask(code)
        pos = np.searchsorted(scores.masks, mask)
        if pos < scores.masks.size and scores.masks[pos] == mask:
            values[..., code - 1] = scores.values[..., pos]
    return SingletonSeries(scores.grouping, scores.geos, scores.dates, values)


# ---------------------------------------------------------------------------
# Disentanglement (per-combo least squares) and singleton fear scores
# ---------------------------------------------------------------------------


@dataclass
class DisentangleWeights:
    """Fitted per-combo member weights for one (geo, stratum) slice."""

    grouping: Grouping
    geo: str
    stratum: int
    weights: dict[int, dict[int, float]] = field(default_factory=dict)
    residuals: dict[int, float] = field(default_factory=dict)
    n_days: dict[int, int] = field(default_factory=dict)
    skipped: dict[int, str] = field(default_factory=dict)


def _combo_members(mask: int) -> list[int]:
    if mask == 0:
        return [int(Singleton.NONE_OF_THE_ABOVE)]
    return [int(s) for s in Singleton if s != Singleton.NONE_OF_THE_ABOVE and mask >> (s - 1) & 1]


def fit_disentangle_weights(
    combo_scores: np.ndarray,
    masks: Iterable[int],
    proxies: np.ndarray,
    grouping: Grouping = Grouping.UNGROUPED,
    geo: str = "*",
    stratum: int = 0,
) -> DisentangleWeights:
    """Ordinary least squares of each combo's daily score on its members'
    proxy scores; minimum-norm solution on rank deficiency.

    combo_scores is [n_days, n_combos] and proxies [n_days, 9], both NaN
    where absent.  Days missing either side are dropped per combo; a combo
    with fewer usable days than members is skipped and flagged.
    """
    combo_scores = np.asarray(combo_scores, dtype=float)
    proxies = np.asarray(proxies, dtype=float)
    masks = list(masks)
    out = DisentangleWeights(grouping=grouping, geo=geo, stratum=stratum)
    for ci, mask in enumerate(masks):
        y = combo_scores[:, ci]
        if not np.isfinite(y).any():
            continue  # combo never observed in this slice
        members = _combo_members(int(mask))
        x = proxies[:, [m - 1 for m in members]]
        rows = np.isfinite(y) & np.isfinite(x).all(axis=1)
        n = int(rows.sum())
        if n < len(members):
            out.skipped[int(mask)] = f"{n} usable day(s) for {len(members)} member(s)"
            continue
        coef, _, _, _ = np.linalg.lstsq(x[rows], y[rows], rcond=None)
        resid = y[rows] - x[rows] @ coef
        out.weights[int(mask)] = {m: float(w) for m, w in zip(members, coef)}
        out.residuals[int(mask)] = float(resid @ resid)
        out.n_days[int(mask)] = n
    return out


@dataclass
class SingletonFearScore:
    """Disentangled per-singleton fear scores for one (geo, stratum) slice."""

    grouping: Grouping
    geo: str
    stratum: int
    mode: str
    dates: np.ndarray
    series: np.ndarray  # [n_days, 9], NaN where undefined
    aggregate: np.ndarray  # [9] date-free mean; 0 where no_data
    no_data: np.ndarray  # [9] bool: singleton absent from every fitted combo


DISENTANGLE_MODES = ("verbatim", "combo_weighted")


def singleton_fear_score(
    weights: DisentangleWeights,
    proxies: np.ndarray,
    combo_scores: np.ndarray | None = None,
    masks: Iterable[int] | None = None,
    mode: str = "verbatim",
    dates: np.ndarray | None = None,
) -> SingletonFearScore:
    """Combine fitted weights into one score per singleton.

    verbatim:       phi_j(t) = (sum over fitted combos containing j of
                    w_{j|combo}) * proxy_j(t).
    combo_weighted: phi_j(t) = sum over fitted combos containing j of
                    w_{j|combo} * combo_score(t), skipping combos absent
                    on day t.

    A singleton appearing in no fitted combo scores 0 and is flagged.
    """
    if mode not in DISENTANGLE_MODES:
        raise ConfigError(f"unknown disentangle mode {mode!r}; expected {DISENTANGLE_MODES}")
    proxies = np.asarray(proxies, dtype=float)
    n_days = proxies.shape[0]
    series = np.zeros((n_days, 9))
    no_data = np.ones(9, dtype=bool)

    if mode == "verbatim":
        multiplier = np.zeros(9)
        for mask, wmap in weights.weights.items():
            for code, w in wmap.items():
                multiplier[code - 1] += w
                no_data[code - 1] = False
        series = multiplier[None, :] * proxies
        series[:, no_data] = 0.0
    else:
        if combo_scores is None or masks is None:
            raise ConfigError("combo_weighted mode needs combo_scores and masks")
        combo_scores = np.asarray(combo_scores, dtype=float)
        mask_list = list(masks)
        col = {int(m): i for i, m in enumerate(mask_list)}
        total = np.zeros((n_days, 9))
        have = np.zeros((n_days, 9), dtype=bool)
        for mask, wmap in weights.weights.items():
            y = combo_scores[:, col[mask]]
            ok = np.isfinite(y)
            for code, w in wmap.items():
                total[ok, code - 1] += w * y[ok]
                have[ok, code - 1] = True
                no_data[code - 1] = False
        series = np.where(have, total, np.nan)
        series[:, no_data] = 0.0

    finite = np.isfinite(series)
    counts = finite.sum(axis=0)
    sums = np.where(finite, series, 0.0).sum(axis=0)
    aggregate = np.divide(sums, counts, out=np.zeros(9), where=counts > 0)
    aggregate[no_data] = 0.0
    if dates is None:
        dates = np.arange(n_days).astype("datetime64[D]")
    return SingletonFearScore(
        grouping=weights.grouping,
        geo=weights.geo,
        stratum=weights.stratum,
        mode=mode,
        dates=dates,
        series=series,
        aggregate=aggregate,
        no_data=no_data,
    )


# ---------------------------------------------------------------------------
# Descriptive helpers
# ---------------------------------------------------------------------------


def coefficient_of_variation(series) -> float:
    """Population standard deviation over |mean|; NaN flags a zero mean."""
    values = series.values if isinstance(series, DailySeries) else np.asarray(series, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise InsufficientDataError("coefficient_of_variation needs data")
    mean = float(values.mean())
    if mean == 0.0:
        return float("nan")
    return float(values.std()) / abs(mean)


def boxplot_summary(values: np.ndarray) -> dict[str, float] | None:
    """Tukey five-number summary (whiskers at the most extreme points within
    1.5 IQR of the quartiles); None for an empty series."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return None
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    inside = values[(values >= q1 - 1.5 * iqr) & (values <= q3 + 1.5 * iqr)]
    return {
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
    }


# ---------------------------------------------------------------------------
# Per-state summaries feeding the clustering stage
# ---------------------------------------------------------------------------


@dataclass
class StateSummary:
    """Date-averaged singleton usage and fear per stratum for one state."""

    state: str
    usage_mean: np.ndarray  # [n_strata, 9]
    fear_mean: np.ndarray  # [n_strata, 9]
    valid_days: int


def state_summaries(
    panel: SurveyPanel, grouping: Grouping, mode: str = "verbatim"
) -> tuple[dict[str, StateSummary], list[str]]:
    """Per-state time averages of singleton usage and disentangled fear.

    Disentangle weights are refitted per state and stratum.  States with no
    valid day in any stratum are excluded and returned separately.
    """
    agg = aggregate_panel(panel, grouping, by_state=True)
    usage = normalize_usage(agg)
    su = singleton_usage(usage)
    scores = combo_fear_score(fear_level_shares(agg))
    proxies = singleton_proxies(scores)
    n_strata = len(agg.strata)

    summaries: dict[str, StateSummary] = {}
    excluded: list[str] = []
    for gi, geo in enumerate(agg.geos):
        if not usage.valid[gi].any():
            excluded.append(geo)
            continue
        usage_mean = np.zeros((n_strata, 9))
        fear_mean = np.zeros((n_strata, 9))
        for si, stratum in enumerate(agg.strata):
            block = su.values[gi, si]
            finite = np.isfinite(block)
            counts = finite.sum(axis=0)
            usage_mean[si] = np.divide(
                np.where(finite, block, 0.0).sum(axis=0),
                counts,
                out=np.zeros(9),
                where=counts > 0,
            )
            fitted = fit_disentangle_weights(
                scores.values[gi, si],
                agg.masks,
                proxies.values[gi, si],
                grouping=grouping,
                geo=geo,
                stratum=stratum,
            )
            result = singleton_fear_score(
                fitted,
                proxies.values[gi, si],
                combo_scores=scores.values[gi, si],
                masks=agg.masks,
                mode=mode,
                dates=agg.dates,
            )
            fear_mean[si] = result.aggregate
        summaries[geo] = StateSummary(
            state=geo,
            usage_mean=usage_mean,
            fear_mean=fear_mean,
            valid_days=int(usage.valid[gi].any(axis=0).sum()),
        )
    return summaries, excluded
