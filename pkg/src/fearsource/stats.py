"""Nonparametric test battery: Shapiro-Wilk, two-sample KS, Mann-Whitney U,
Spearman correlation, and the intra/inter-stratum comparison harness.

Statistics (W, D, U, rho) are computed exactly from order statistics and
rank sums; only p-values use the standard large-sample approximations
(Royston's normalizing transform for W, the asymptotic Kolmogorov
distribution for D, and a tie-corrected normal approximation for U).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import ndtri  # inverse normal CDF, used by the W coefficients

from .domain import Grouping, Singleton
from .epi import DailySeries
from .errors import DegenerateSampleError, InsufficientDataError


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    sample_sizes: tuple[int, int]


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Shapiro-Wilk (AS R94, Royston 1995)
# ---------------------------------------------------------------------------

# Polynomial corrections for the two largest coefficients, ascending powers
# of 1/sqrt(n).
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
# Normalizing transform parameters: mean/sd polynomials in n (small samples)
# or log n (large samples).
_C3 = (0.5440, -0.39978, 0.025054, -0.0006714)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)


def _poly(coeffs, x: float) -> float:
    return sum(c * x**i for i, c in enumerate(coeffs))


def shapiro_wilk(sample) -> TestResult:
    """W statistic and upper-tail p-value for normality of `sample`.

    Valid for 3 <= n <= 5000.  Coefficients follow the AS R94 approximation;
    the p-value uses Royston's transform of 1 - W to an approximate normal.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 3:
        raise InsufficientDataError(f"shapiro_wilk needs n >= 3, got {n}")
    if n > 5000:
        raise InsufficientDataError(f"shapiro_wilk caps at n = 5000, got {n}")
    if x[-1] - x[0] <= 0.0:
        raise DegenerateSampleError("shapiro_wilk: all sample values identical")

    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    ssq = float(m @ m)
    rsn = 1.0 / math.sqrt(n)
    a = np.empty(n)
    if n == 3:
        a = np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    else:
        an = m[-1] / math.sqrt(ssq) + _poly(_C1, rsn)
        if n > 5:
            an1 = m[-2] / math.sqrt(ssq) + _poly(_C2, rsn)
            phi = (ssq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (
                1.0 - 2.0 * an**2 - 2.0 * an1**2
            )
            a[2:-2] = m[2:-2] / math.sqrt(phi)
            a[-1], a[-2] = an, an1
            a[0], a[1] = -an, -an1
        else:
            phi = (ssq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * an**2)
            a[1:-1] = m[1:-1] / math.sqrt(phi)
            a[-1] = an
            a[0] = -an
    w_num = float(a @ x) ** 2
    w_den = float(np.sum((x - x.mean()) ** 2))
    w = min(w_num / w_den, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        p = min(max(p, 0.0), 1.0)
    elif n <= 11:
        gamma = -2.273 + 0.459 * n
        y = -math.log(gamma - math.log1p(-w))
        mu = _poly(_C3, float(n))
        sigma = math.exp(_poly(_C4, float(n)))
        p = _normal_sf((y - mu) / sigma)
    else:
        ln_n = math.log(n)
        y = math.log1p(-w)
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
        p = _normal_sf((y - mu) / sigma)
    return TestResult(w, p, "shapiro_wilk", (n, 0))


# ---------------------------------------------------------------------------
# Two-sample Kolmogorov-Smirnov
# ---------------------------------------------------------------------------


def _kolmogorov_sf(z: float) -> float:
    """Asymptotic survival function 2 * sum (-1)^{k-1} exp(-2 k^2 z^2)."""
    if z <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 101):
        term = math.exp(-2.0 * (k * z) ** 2)
        total += sign * term
        if term <= 1e-16 * max(total, 1e-300):
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


def ks_two_sample(a, b) -> TestResult:
    """Exact sup-distance D between the two empirical CDFs.

    p-value from the asymptotic Kolmogorov distribution at
    sqrt(nm / (n + m)) * D.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise InsufficientDataError("ks_two_sample needs nonempty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / n
    cdf_b = np.searchsorted(b, grid, side="right") / m
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    effective = n * m / (n + m)
    p = _kolmogorov_sf(math.sqrt(effective) * d)
    return TestResult(d, p, "ks", (n, m))


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------


def _midranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=float)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_u(a, b) -> TestResult:
    """U statistic (reported as min(U, nm - U)) with a tie- and
    continuity-corrected normal p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise InsufficientDataError("mann_whitney_u needs nonempty samples")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    rank_sum_a = float(ranks[:n].sum())
    u_a = rank_sum_a - n * (n + 1) / 2.0  # wins of a over b, ties counted half
    u_rep = min(u_a, n * m - u_a)

    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts))
    total = n + m
    var = n * m / 12.0 * ((total + 1) - tie_term / (total * (total - 1)))
    if var <= 0.0:
        p = 1.0
    else:
        z = (u_rep - n * m / 2.0 + 0.5) / math.sqrt(var)
        p = min(max(2.0 * _normal_cdf(z), 0.0), 1.0)
    return TestResult(u_rep, p, "mwu", (n, m))


# ---------------------------------------------------------------------------
# Spearman correlation
# ---------------------------------------------------------------------------


def spearman_rho(x, y) -> float:
    """Pearson correlation of midranks; NaN when either input is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise InsufficientDataError("spearman_rho needs equal-length inputs")
    if x.size < 2:
        raise InsufficientDataError("spearman_rho needs n >= 2")
    rx = _midranks(x)
    ry = _midranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return float("nan")
    return float(rx @ ry) / denom


def correlation_matrix(series: Mapping[str, DailySeries]) -> tuple[list[str], np.ndarray]:
    """Pairwise Spearman matrix over the dates shared by every series.

    Dates where any series is NaN are dropped before ranking; fewer than two
    shared dates is an error.
    """
    names = list(series)
    if not names:
        raise InsufficientDataError("correlation_matrix needs at least one series")
    common = None
    for name in names:
        s = series[name]
        valid = s.dates[np.isfinite(s.values)]
        common = valid if common is None else np.intersect1d(common, valid)
    if common is None or common.size < 2:
        raise InsufficientDataError("correlation_matrix needs >= 2 common dates")
    columns = []
    for name in names:
        s = series[name]
        idx = np.searchsorted(s.dates, common)
        columns.append(s.values[idx])
    k = len(names)
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            rho = spearman_rho(columns[i], columns[j])
            out[i, j] = out[j, i] = rho
    return names, out


# ---------------------------------------------------------------------------
# Comparison battery
# ---------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    """All battery outcomes, keyed so failures stay local to one cell.

    normality:  (stratum, singleton) -> TestResult
    intra:      (stratum, singleton_a, singleton_b, method) -> TestResult
    inter:      (singleton, stratum_a, stratum_b, method) -> TestResult
    errors:     same keys -> message, for cells that could not run
    """

    grouping: Grouping
    normality: dict = field(default_factory=dict)
    intra: dict = field(default_factory=dict)
    inter: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def _clean(series: np.ndarray) -> np.ndarray:
    return series[np.isfinite(series)]


def significance_flags(
    report: "ComparisonReport", alpha: float = 0.05, bonferroni: bool = False
) -> dict:
    """p < alpha per battery cell, optionally Bonferroni-corrected across the
    whole battery.  The threshold is a reporting default, not a finding."""
    n_cells = len(report.normality) + len(report.intra) + len(report.inter)
    threshold = alpha / n_cells if (bonferroni and n_cells) else alpha
    out = {}
    for section_name, section in (
        ("normality", report.normality),
        ("intra", report.intra),
        ("inter", report.inter),
    ):
        for key, result in section.items():
            out[(section_name,) + key] = result.p_value < threshold
    return out


def run_test_battery(
    series_by_stratum: Mapping[int, np.ndarray], grouping: Grouping
) -> ComparisonReport:
    """Normality per series, KS and MWU across the 36 singleton pairs within
    each stratum, and per-singleton comparisons across strata.

    `series_by_stratum` maps stratum id to a [n_days, 9] array (NaN marks
    absent days).  Component-test errors are recorded per cell instead of
    aborting the battery.
    """
    report = ComparisonReport(grouping=grouping)
    strata = sorted(series_by_stratum)
    for stratum in strata:
        block = np.asarray(series_by_stratum[stratum], dtype=float)
        if block.ndim != 2 or block.shape[1] != 9:
            raise InsufficientDataError("battery expects [n_days, 9] score arrays")
        samples = {s: _clean(block[:, s - 1]) for s in Singleton}
        for s in Singleton:
            key = (stratum, int(s))
            try:
                report.normality[key] = shapiro_wilk(samples[s])
            except Exception as exc:  # recorded, not raised
                report.errors[("normality",) + key] = str(exc)
        for i, si in enumerate(Singleton):
            for sj in list(Singleton)[i + 1 :]:
                for method, fn in (("ks", ks_two_sample), ("mwu", mann_whitney_u)):
                    key = (stratum, int(si), int(sj), method)
                    try:
                        report.intra[key] = fn(samples[si], samples[sj])
                    except Exception as exc:
                        report.errors[("intra",) + key] = str(exc)
    if len(strata) > 1:
        for s in Singleton:
            for i, sa in enumerate(strata):
                for sb in strata[i + 1 :]:
                    xa = _clean(np.asarray(series_by_stratum[sa])[:, s - 1])
                    xb = _clean(np.asarray(series_by_stratum[sb])[:, s - 1])
                    for method, fn in (("ks", ks_two_sample), ("mwu", mann_whitney_u)):
                        key = (int(s), sa, sb, method)
                        try:
                            report.inter[key] = fn(xa, xb)
                        except Exception as exc:
                            report.errors[("inter",) + key] = str(exc)
    return report
