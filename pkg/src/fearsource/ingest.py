"""Loading, validation, and serialization of the three input tables.

Survey CSV:        date,state,age,edu,combo_mask,fear_level,weighted_count
Surveillance CSV:  date,geo,cum_cases,cum_deaths,population
Elections CSV:     year,state,party        (party D or R)

Leading lines starting with '#' are metadata comments and are skipped.
Validation is fail-fast with 1-based line numbers where applicable; the one
silent-looking fixup (clamping a cumulative decrease back to the running
maximum) is flagged on the returned object.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .domain import SourceCombo
from .epi import DailySeries
from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

PANEL_COLUMNS = ["date", "state", "age", "edu", "combo_mask", "fear_level", "weighted_count"]
PANEL_KEY = ["date", "state", "age", "edu", "combo_mask", "fear_level"]
SURVEILLANCE_COLUMNS = ["date", "geo", "cum_cases", "cum_deaths", "population"]
ELECTION_COLUMNS = ["year", "state", "party"]

# 50 states plus DC; the default reference set for completeness reporting and
# for synthetic panels.
US_STATES = (
    "AK AL AR AZ CA CO CT DC DE FL GA HI IA ID IL IN KS KY LA MA MD ME MI MN "
    "MO MS MT NC ND NE NH NJ NM NV NY OH OK OR PA RI SC SD TN TX UT VA VT WA "
    "WI WV WY"
).split()


def _read_csv(path: str | Path, columns: list[str]) -> tuple[pd.DataFrame, int]:
    """Read a CSV with optional leading '#' comment lines.

    Returns the frame (all columns as strings) and the 1-based line number of
    the first data row, for error reporting.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    n_comments = 0
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            if raw.startswith("#"):
                n_comments += 1
            else:
                break
    try:
        df = pd.read_csv(path, skiprows=n_comments, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=columns), n_comments + 2
    if list(df.columns) != columns:
        raise ParseError(
            f"{path.name}: expected columns {columns}, found {list(df.columns)}",
            line=n_comments + 1,
        )
    return df, n_comments + 2


def _first_bad_line(bad_mask: np.ndarray, first_data_line: int) -> int:
    return int(np.flatnonzero(bad_mask)[0]) + first_data_line


def _to_numeric(df: pd.DataFrame, col: str, first_line: int) -> np.ndarray:
    vals = pd.to_numeric(df[col], errors="coerce").to_numpy()
    bad = ~np.isfinite(vals)
    if bad.any():
        raise ParseError(
            f"column {col!r}: non-numeric value {df[col].iloc[np.flatnonzero(bad)[0]]!r}",
            line=_first_bad_line(bad, first_line),
        )
    return vals


def _check_int_range(values: np.ndarray, col: str, lo: int, hi: int, first_line: int) -> np.ndarray:
    ints = values.astype(np.int64)
    bad = (ints != values) | (ints < lo) | (ints > hi)
    if bad.any():
        raise ParseError(
            f"column {col!r}: value out of range [{lo}, {hi}]",
            line=_first_bad_line(bad, first_line),
        )
    return ints


# ---------------------------------------------------------------------------
# Survey panel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurveyCell:
    """One weighted aggregate: respondents of one demographic cell, on one
    day in one state, who picked one source combo and one fear level."""

    date: Date
    state: str
    age: int
    education: int
    combo: SourceCombo
    fear: int
    weighted_count: float


@dataclass
class SurveyPanel:
    """Validated survey aggregates backed by a canonical-ordered frame."""

    frame: pd.DataFrame
    gap_flags: list[tuple[str, str, int]] = field(default_factory=list)

    @property
    def states(self) -> list[str]:
        return sorted(self.frame["state"].unique())

    @property
    def date_range(self) -> tuple[Date, Date]:
        dates = self.frame["date"]
        return dates.min().date(), dates.max().date()

    @property
    def dates(self) -> np.ndarray:
        return np.sort(self.frame["date"].unique()).astype("datetime64[D]")

    def row_counts(self) -> dict[str, int]:
        return self.frame.groupby("state", sort=True).size().to_dict()

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def cells(self) -> Iterator[SurveyCell]:
        for row in self.frame.itertuples(index=False):
            yield SurveyCell(
                date=row.date.date(),
                state=row.state,
                age=int(row.age),
                education=int(row.edu),
                combo=SourceCombo(int(row.combo_mask)),
                fear=int(row.fear_level),
                weighted_count=float(row.weighted_count),
            )

    @staticmethod
    def from_frame(frame: pd.DataFrame) -> "SurveyPanel":
        """Validate and canonicalize an in-memory frame (same checks as loading)."""
        return _validate_panel_frame(frame.copy())


def _validate_panel_frame(df: pd.DataFrame) -> SurveyPanel:
    if len(df) == 0:
        raise ValidationError("survey panel is empty")
    dup = df.duplicated(subset=PANEL_KEY)
    if dup.any():
        row = df[dup].iloc[0]
        raise ValidationError(
            "duplicate survey key: "
            f"({row.date.date()}, {row.state}, age={row.age}, edu={row.edu}, "
            f"mask={row.combo_mask}, fear={row.fear_level})"
        )
    if (df["weighted_count"] < 0).any() or not np.isfinite(df["weighted_count"]).all():
        raise ValidationError("weighted_count must be finite and >= 0")
    for col, dtype in (("age", np.int8), ("edu", np.int8), ("combo_mask", np.int16),
                       ("fear_level", np.int8), ("weighted_count", np.float64)):
        values = df[col].to_numpy()
        lo, hi = {"age": (1, 3), "edu": (1, 3), "combo_mask": (0, 255),
                  "fear_level": (1, 4), "weighted_count": (0, np.inf)}[col]
        if (values < lo).any() or (values > hi).any():
            raise ValidationError(f"column {col!r} outside [{lo}, {hi}]")
        df[col] = values.astype(dtype)
    df["state"] = df["state"].astype(str)
    df["date"] = pd.to_datetime(df["date"])
    df = df.sort_values(PANEL_KEY, kind="mergesort").reset_index(drop=True)

    gaps: list[tuple[str, str, int]] = []
    for state, grp in df.groupby("state", sort=True):
        days = np.sort(grp["date"].unique()).astype("datetime64[D]")
        if days.size > 1:
            deltas = np.diff(days).astype(int)
            for pos in np.flatnonzero(deltas > 1):
                gaps.append((state, str(days[pos]), int(deltas[pos] - 1)))
    if gaps:
        logger.warning("survey panel has %d date gap(s), e.g. %s", len(gaps), gaps[0])
    return SurveyPanel(frame=df, gap_flags=gaps)


def load_survey_panel(path: str | Path) -> SurveyPanel:
    """Load and validate a survey CSV; reports row counts per state at INFO."""
    raw, first_line = _read_csv(path, PANEL_COLUMNS)
    if len(raw) == 0:
        raise ValidationError(f"{Path(path).name}: survey panel is empty")
    dates = pd.to_datetime(raw["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        raise ParseError(
            f"column 'date': invalid ISO date {raw['date'][dates.isna()].iloc[0]!r}",
            line=_first_bad_line(dates.isna().to_numpy(), first_line),
        )
    age = _check_int_range(_to_numeric(raw, "age", first_line), "age", 1, 3, first_line)
    edu = _check_int_range(_to_numeric(raw, "edu", first_line), "edu", 1, 3, first_line)
    mask = _check_int_range(
        _to_numeric(raw, "combo_mask", first_line), "combo_mask", 0, 255, first_line
    )
    fear = _check_int_range(
        _to_numeric(raw, "fear_level", first_line), "fear_level", 1, 4, first_line
    )
    weight = _to_numeric(raw, "weighted_count", first_line)
    if (weight < 0).any():
        raise ParseError(
            "column 'weighted_count': negative value",
            line=_first_bad_line(weight < 0, first_line),
        )
    df = pd.DataFrame(
        {
            "date": dates,
            "state": raw["state"].astype(str),
            "age": age.astype(np.int8),
            "edu": edu.astype(np.int8),
            "combo_mask": mask.astype(np.int16),
            "fear_level": fear.astype(np.int8),
            "weighted_count": weight,
        }
    )
    panel = _validate_panel_frame(df)
    for state, count in panel.row_counts().items():
        logger.info("survey rows: %s -> %d", state, count)
    return panel


def write_panel(panel: SurveyPanel, path: str | Path, header: str | None = None) -> None:
    """Write a panel in canonical row order; round-trips through load_survey_panel."""
    df = panel.frame.copy()
    df["date"] = df["date"].dt.strftime("%Y-%m-%d")
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        df.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")


# ---------------------------------------------------------------------------
# Surveillance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurveillanceRecord:
    date: Date
    geography: str
    cumulative_cases: int
    cumulative_deaths: int
    population: int


@dataclass
class SurveillanceData:
    """Per-geography date-sorted cumulative series, decreases clamped."""

    frame: pd.DataFrame
    flags: list[str] = field(default_factory=list)

    @property
    def geographies(self) -> list[str]:
        return sorted(self.frame["geo"].unique()) if len(self.frame) else []

    def population(self, geo: str) -> int:
        grp = self.frame[self.frame["geo"] == geo]
        return int(grp["population"].iloc[-1])

    def cumulative_series(self, geo: str) -> tuple[DailySeries, DailySeries]:
        grp = self.frame[self.frame["geo"] == geo]
        if len(grp) == 0:
            raise ValidationError(f"no surveillance rows for geography {geo!r}")
        dates = grp["date"].to_numpy().astype("datetime64[D]")
        cases = DailySeries(geo, dates, grp["cum_cases"].to_numpy(dtype=float))
        deaths = DailySeries(geo, dates, grp["cum_deaths"].to_numpy(dtype=float))
        return cases, deaths

    def records(self) -> Iterator[SurveillanceRecord]:
        for row in self.frame.itertuples(index=False):
            yield SurveillanceRecord(
                date=row.date.date(),
                geography=row.geo,
                cumulative_cases=int(row.cum_cases),
                cumulative_deaths=int(row.cum_deaths),
                population=int(row.population),
            )


def load_surveillance(path: str | Path) -> SurveillanceData:
    raw, first_line = _read_csv(path, SURVEILLANCE_COLUMNS)
    if len(raw) == 0:
        logger.warning("surveillance file %s is empty", path)
        return SurveillanceData(frame=pd.DataFrame(columns=SURVEILLANCE_COLUMNS), flags=["empty file"])
    dates = pd.to_datetime(raw["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        raise ParseError(
            "column 'date': invalid ISO date",
            line=_first_bad_line(dates.isna().to_numpy(), first_line),
        )
    cases = _to_numeric(raw, "cum_cases", first_line)
    deaths = _to_numeric(raw, "cum_deaths", first_line)
    pop = _to_numeric(raw, "population", first_line)
    if (cases < 0).any() or (deaths < 0).any():
        raise ValidationError("cumulative counts must be nonnegative")
    if (pop <= 0).any():
        raise ValidationError("population must be positive")
    df = pd.DataFrame(
        {
            "date": dates,
            "geo": raw["geo"].astype(str),
            "cum_cases": cases,
            "cum_deaths": deaths,
            "population": pop,
        }
    ).sort_values(["geo", "date"], kind="mergesort").reset_index(drop=True)
    dup = df.duplicated(subset=["geo", "date"])
    if dup.any():
        row = df[dup].iloc[0]
        raise ValidationError(f"duplicate surveillance key ({row.date.date()}, {row.geo})")

    flags: list[str] = []
    for col in ("cum_cases", "cum_deaths"):
        clamped = df.groupby("geo", sort=False)[col].cummax()
        dropped = df[col] < clamped
        if dropped.any():
            for idx in np.flatnonzero(dropped.to_numpy()):
                row = df.iloc[idx]
                flags.append(
                    f"{row.geo} {row.date.date()}: {col} decreased "
                    f"({row[col]:.0f} < running max {clamped.iloc[idx]:.0f}); clamped"
                )
            df[col] = clamped
    if flags:
        logger.warning("surveillance: %d monotonicity violation(s) clamped", len(flags))
    return SurveillanceData(frame=df, flags=flags)


# ---------------------------------------------------------------------------
# Election labels
# ---------------------------------------------------------------------------


@dataclass
class ElectionLabels:
    year: int
    labels: dict[str, str]  # state -> "D" | "R"
    missing_states: list[str] = field(default_factory=list)


def load_elections(path: str | Path, reference_states=US_STATES) -> dict[int, ElectionLabels]:
    """Load labels for any years present; missing states are reported, not fatal."""
    raw, first_line = _read_csv(path, ELECTION_COLUMNS)
    if len(raw) == 0:
        raise ValidationError(f"{Path(path).name}: elections file is empty")
    year = _check_int_range(
        _to_numeric(raw, "year", first_line), "year", 1788, 9999, first_line
    )
    bad_party = ~raw["party"].isin(["D", "R"]).to_numpy()
    if bad_party.any():
        raise ParseError(
            f"column 'party': expected D or R, found {raw['party'][bad_party].iloc[0]!r}",
            line=_first_bad_line(bad_party, first_line),
        )
    out: dict[int, ElectionLabels] = {}
    df = pd.DataFrame({"year": year, "state": raw["state"].astype(str), "party": raw["party"]})
    for yr, grp in df.groupby("year", sort=True):
        dup = grp.duplicated(subset=["state"])
        if dup.any():
            raise ValidationError(f"duplicate state {grp[dup]['state'].iloc[0]!r} for year {yr}")
        labels = dict(zip(grp["state"], grp["party"]))
        missing = sorted(set(reference_states) - set(labels))
        if missing:
            logger.warning("elections %d: %d state(s) missing (e.g. %s)", yr, len(missing), missing[0])
        out[int(yr)] = ElectionLabels(year=int(yr), labels=labels, missing_states=missing)
    return out
