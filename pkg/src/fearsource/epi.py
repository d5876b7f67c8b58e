"""Daily infection series reconstruction from cumulative surveillance counts.

The active-infection estimate uses a fixed-duration cohort window: a case
counts as infectious for exactly `recovery_days` days unless it appears in
the death counts inside that window.  This is a transparent stand-in for a
full compartmental fit and is deterministic and exactly testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError


@dataclass(frozen=True)
class DailySeries:
    """One value per day for one geography; dates strictly increasing."""

    geography: str
    dates: np.ndarray  # datetime64[D]
    values: np.ndarray  # float64

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise AlignmentError("dates and values must be 1-d and equal length")
        if dates.size > 1 and not (np.diff(dates) > np.timedelta64(0, "D")).all():
            raise AlignmentError("dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.dates.size)

    def with_values(self, values: np.ndarray) -> "DailySeries":
        return DailySeries(self.geography, self.dates, values)


def _require_contiguous(series: DailySeries) -> None:
    if len(series) > 1:
        gaps = np.diff(series.dates) != np.timedelta64(1, "D")
        if gaps.any():
            where = series.dates[:-1][gaps][0]
            raise AlignmentError(
                f"{series.geography}: date gap after {where}; daily windows need contiguous days"
            )


def daily_increments(cumulative: DailySeries) -> DailySeries:
    """First differences of a cumulative series; the first day keeps its own total."""
    v = cumulative.values
    out = np.empty_like(v)
    out[0] = v[0]
    out[1:] = np.diff(v)
    return cumulative.with_values(out)


def _window_sum(values: np.ndarray, window: int) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(values.size)
    lo = np.maximum(idx - window + 1, 0)
    return csum[idx + 1] - csum[lo]


def reconstruct_active_infections(
    new_cases: DailySeries,
    new_deaths: DailySeries,
    recovery_days: int = 14,
) -> DailySeries:
    """Active infections per day under a fixed infectious window.

    active[t] = sum of new cases over the trailing `recovery_days` window
    minus new deaths over the same window, floored at zero.
    """
    if recovery_days < 1:
        raise ConfigError(f"recovery_days must be >= 1, got {recovery_days}")
    if new_cases.geography != new_deaths.geography or not np.array_equal(
        new_cases.dates, new_deaths.dates
    ):
        raise AlignmentError("case and death series must share geography and dates")
    _require_contiguous(new_cases)
    active = _window_sum(new_cases.values, recovery_days) - _window_sum(
        new_deaths.values, recovery_days
    )
    return new_cases.with_values(np.maximum(active, 0.0))


def rolling_mean(series: DailySeries, window_days: int = 61) -> DailySeries:
    """Centered rolling mean, window clipped to the series bounds near the edges.

    NaN entries are ignored (a position with no finite neighbours stays NaN),
    so score series with absent days can be smoothed directly.
    """
    if window_days < 1 or window_days % 2 == 0:
        raise ConfigError(f"window_days must be odd and >= 1, got {window_days}")
    v = series.values
    finite = np.isfinite(v)
    filled = np.where(finite, v, 0.0)
    half = window_days // 2
    n = v.size
    csum = np.concatenate([[0.0], np.cumsum(filled)])
    ccnt = np.concatenate([[0.0], np.cumsum(finite.astype(float))])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    sums = csum[hi + 1] - csum[lo]
    cnts = ccnt[hi + 1] - ccnt[lo]
    out = np.divide(sums, cnts, out=np.full(n, np.nan), where=cnts > 0)
    return series.with_values(out)
