"""Core domain values: information sources, source combinations, fear levels.

Respondents report the sources they got news from as any subset of eight
named categories; "None of the above" is mutually exclusive with all of
them.  A combination is therefore an 8-bit mask over the named sources,
with the empty mask standing for "None of the above" -- 256 distinct
combinations in total.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError


class Singleton(enum.IntEnum):
    """The nine individual source categories, in stable serialization order."""

    DOCTORS = 1
    SCIENTISTS = 2
    CDC = 3
    GOVERNMENT = 4
    POLITICIANS = 5
    JOURNALISTS = 6
    FRIENDS_FAMILY = 7
    RELIGIOUS_LEADERS = 8
    NONE_OF_THE_ABOVE = 9

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Singleton.DOCTORS: "doctors",
    Singleton.SCIENTISTS: "scientists",
    Singleton.CDC: "cdc",
    Singleton.GOVERNMENT: "government",
    Singleton.POLITICIANS: "politicians",
    Singleton.JOURNALISTS: "journalists",
    Singleton.FRIENDS_FAMILY: "friends_family",
    Singleton.RELIGIOUS_LEADERS: "religious_leaders",
    Singleton.NONE_OF_THE_ABOVE: "none_of_the_above",
}

NAMED_SOURCES = tuple(s for s in Singleton if s != Singleton.NONE_OF_THE_ABOVE)
N_COMBOS = 256

# Fear levels 1..4 ("a great deal" .. "not at all") and their score weights.
# The weights are antisymmetric so the two extreme levels counterbalance each
# other, as do the two middle levels; scores always land in [-1, 1].
FEAR_LEVELS = (1, 2, 3, 4)
FEAR_WEIGHTS: Mapping[int, float] = {1: 1.0, 2: 0.34, 3: -0.34, 4: -1.0}
FEAR_WEIGHT_VECTOR = np.array([1.0, 0.34, -0.34, -1.0])


@dataclass(frozen=True, order=True)
class SourceCombo:
    """A subset of the eight named sources; mask 0 means "None of the above"."""

    mask: int

    def __post_init__(self):
        if not 0 <= self.mask < N_COMBOS:
            raise ValueError(f"combo mask out of range: {self.mask}")

    def members(self) -> tuple[Singleton, ...]:
        """Singletons contained in this combo (mask 0 -> NONE_OF_THE_ABOVE)."""
        if self.mask == 0:
            return (Singleton.NONE_OF_THE_ABOVE,)
        return tuple(s for s in NAMED_SOURCES if self.mask >> (s - 1) & 1)

    def size(self) -> int:
        return len(self.members())


def combo_contains(combo: SourceCombo, s: Singleton) -> bool:
    """True iff s is in the combo; the empty mask contains exactly NONE_OF_THE_ABOVE."""
    if s == Singleton.NONE_OF_THE_ABOVE:
        return combo.mask == 0
    return bool(combo.mask >> (s - 1) & 1)


def enumerate_combos() -> list[SourceCombo]:
    """All 256 combos in ascending mask order (mask 0 first)."""
    return [SourceCombo(m) for m in range(N_COMBOS)]


def singleton_combo_mask(s: Singleton) -> int:
    """Mask of the combo in which s is the only selected source."""
    if s == Singleton.NONE_OF_THE_ABOVE:
        return 0
    return 1 << (s - 1)


def fear_weight(level: int, weights: Mapping[int, float] | None = None) -> float:
    """Score weight of a fear level.

    `weights` overrides the canonical constants for sensitivity runs; the
    defaults are authoritative everywhere else.
    """
    table = FEAR_WEIGHTS if weights is None else weights
    if level not in table:
        raise ConfigError(f"fear level out of range: {level!r}")
    return table[level]


class Grouping(enum.Enum):
    """How respondents are stratified before scoring."""

    UNGROUPED = "none"
    BY_AGE = "age"
    BY_EDUCATION = "edu"

    @property
    def strata(self) -> tuple[int, ...]:
        """Stratum ids: 0 for the single ungrouped stratum, 1..3 otherwise."""
        if self is Grouping.UNGROUPED:
            return (0,)
        return (1, 2, 3)

    @staticmethod
    def parse(text: str) -> "Grouping":
        for g in Grouping:
            if g.value == text:
                return g
        raise ConfigError(f"unknown grouping {text!r} (expected none/age/edu)")


AGE_GROUPS = (1, 2, 3)
EDU_GROUPS = (1, 2, 3)


@dataclass(frozen=True)
class DemographicCell:
    """Joint age/education coordinates of a raw survey cell."""

    age: int
    education: int

    def __post_init__(self):
        if self.age not in AGE_GROUPS:
            raise ValueError(f"age group out of range: {self.age}")
        if self.education not in EDU_GROUPS:
            raise ValueError(f"education group out of range: {self.education}")


def membership_matrix(masks: Iterable[int]) -> np.ndarray:
    """Boolean [n_combos, 9] matrix: column j-1 marks combos containing singleton j."""
    masks = np.asarray(list(masks), dtype=np.int64)
    out = np.zeros((masks.size, 9), dtype=bool)
    for s in NAMED_SOURCES:
        out[:, s - 1] = (masks >> (s - 1) & 1).astype(bool)
    out[:, Singleton.NONE_OF_THE_ABOVE - 1] = masks == 0
    return out


def stratum_name(grouping: Grouping, stratum: int) -> str:
    """Human-readable stratum id used in emitted tables ("all", "age_2", ...)."""
    if grouping is Grouping.UNGROUPED:
        return "all"
    prefix = "age" if grouping is Grouping.BY_AGE else "edu"
    return f"{prefix}_{stratum}"
