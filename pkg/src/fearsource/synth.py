"""Synthetic survey panels with planted ground truth.

The generator is a pure function of (config, seed).  It plants:

  * a latent daily fear signal per singleton source (sinusoid with drawn
    offset/amplitude/period/phase),
  * convex per-combo mixing weights, so every multi-source combo's fear
    score is exactly the weighted sum of its members' latent signals,
  * additive age/education score offsets,
  * per-state combo usage propensities organized into a configurable number
    of cluster profiles,
  * election labels derived from the profiles, with optional flipped and
    swing states.

Every planted quantity is returned in a PlantedTruth record so tests can
check pipeline outputs against the generating values.  Fear scores are
realized as mass on the two extreme levels plus a score-neutral sideband
split evenly over the two middle levels, which keeps each cell's score
exactly equal to the planted value.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .domain import NAMED_SOURCES, Singleton, membership_matrix, singleton_combo_mask
from .errors import ConfigError
from .ingest import US_STATES, SurveyPanel

SINGLETON_MASKS = tuple(singleton_combo_mask(s) for s in Singleton)


@dataclass
class SynthConfig:
    states: tuple[str, ...] = tuple(US_STATES)
    n_days: int = 400
    start_date: str = "2021-05-01"
    n_multi_combos: int = 12
    combo_masks: tuple[int, ...] | None = None  # explicit override of the combo set
    respondents_per_day: float = 2000.0
    usage_concentration: float = 1.0
    signal_offset: tuple[float, float] = (-0.15, 0.15)
    signal_amp: tuple[float, float] = (0.08, 0.22)
    signal_period: tuple[float, float] = (40.0, 160.0)
    age_effect_scale: float = 0.05
    edu_effect_scale: float = 0.05
    age_props: tuple[float, float, float] = (0.30, 0.45, 0.25)
    edu_props: tuple[float, float, float] = (0.20, 0.55, 0.25)
    noise_sd: float = 0.0
    fear_sideband: float = 0.2
    cell_coverage: float = 1.0
    n_profiles: int = 2
    profile_separation: float = 0.8
    profile_jitter: float = 0.03
    election_flips_2020: int = 0
    election_swings_2024: int = 0

    def validate(self) -> None:
        if not self.states or len(set(self.states)) != len(self.states):
            raise ConfigError("states must be a nonempty list of distinct codes")
        if self.n_days < 1:
            raise ConfigError("n_days must be >= 1")
        if self.respondents_per_day <= 0:
            raise ConfigError("respondents_per_day must be positive")
        if self.usage_concentration <= 0:
            raise ConfigError("usage_concentration must be positive")
        if self.combo_masks is not None:
            masks = list(self.combo_masks)
            if len(set(masks)) != len(masks) or any(not 0 <= m <= 255 for m in masks):
                raise ConfigError("combo_masks must be distinct values in 0..255")
        elif not 0 <= self.n_multi_combos <= 247:
            raise ConfigError("n_multi_combos must be in 0..247")
        for name in ("age_props", "edu_props"):
            props = getattr(self, name)
            if len(props) != 3 or any(p < 0 for p in props) or sum(props) <= 0:
                raise ConfigError(f"{name} must be 3 nonnegative shares with positive sum")
        if not 0.0 <= self.fear_sideband < 1.0:
            raise ConfigError("fear_sideband must be in [0, 1)")
        if not 0.0 < self.cell_coverage <= 1.0:
            raise ConfigError("cell_coverage must be in (0, 1]")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")
        if not 1 <= self.n_profiles <= len(self.states):
            raise ConfigError("n_profiles must be in 1..len(states)")
        if self.election_flips_2020 + self.election_swings_2024 > len(self.states):
            raise ConfigError("flips + swings exceed the number of states")
        amp_hi = max(abs(self.signal_amp[0]), abs(self.signal_amp[1]))
        off_hi = max(abs(self.signal_offset[0]), abs(self.signal_offset[1]))
        bound = off_hi + amp_hi + abs(self.age_effect_scale) + abs(self.edu_effect_scale)
        if bound > 1.0 - self.fear_sideband + 1e-12:
            raise ConfigError(
                f"planted score bound {bound:.3f} exceeds the representable "
                f"range 1 - fear_sideband = {1.0 - self.fear_sideband:.3f}"
            )


@dataclass
class PlantedTruth:
    """Everything the generator planted, for oracle comparisons."""

    seed: int
    dates: list[str]
    combo_masks: list[int]
    singleton_signals: dict[int, list[float]]  # singleton code -> daily latent score
    age_effects: list[float]
    edu_effects: list[float]
    weights: dict[int, dict[int, float]]  # mask -> {singleton code: convex weight}
    usage_propensities: dict[str, dict[int, float]]
    cluster_memberships: dict[str, int]
    elections: dict[int, dict[str, str]]
    flipped_2020: list[str]
    swing_2024: list[str]
    causal_shares: dict[str, float] | None
    causal_shares_exact: bool
    clipped_scores: int
    config: dict = field(default_factory=dict)

    def to_json(self, path: str | Path) -> None:
        payload = asdict(self)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_json(path: str | Path) -> "PlantedTruth":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        for key in ("singleton_signals", "weights"):
            payload[key] = {int(k): v for k, v in payload[key].items()}
        payload["weights"] = {
            m: {int(c): w for c, w in ws.items()} for m, ws in payload["weights"].items()
        }
        payload["usage_propensities"] = {
            st: {int(m): p for m, p in d.items()}
            for st, d in payload["usage_propensities"].items()
        }
        payload["elections"] = {int(y): d for y, d in payload["elections"].items()}
        return PlantedTruth(**payload)


def _combo_set(config: SynthConfig, rng: np.random.Generator) -> list[int]:
    if config.combo_masks is not None:
        return sorted(config.combo_masks)
    multi_pool = np.array(
        [m for m in range(256) if bin(m).count("1") >= 2], dtype=np.int64
    )
    picked = rng.choice(multi_pool, size=config.n_multi_combos, replace=False)
    return sorted(set(SINGLETON_MASKS) | set(int(m) for m in picked))


def _draw_weights(masks, rng: np.random.Generator) -> dict[int, dict[int, float]]:
    weights: dict[int, dict[int, float]] = {}
    for mask in masks:
        members = (
            [int(Singleton.NONE_OF_THE_ABOVE)]
            if mask == 0
            else [int(s) for s in NAMED_SOURCES if mask >> (s - 1) & 1]
        )
        if len(members) == 1:
            weights[mask] = {members[0]: 1.0}
        else:
            draw = rng.dirichlet(np.ones(len(members)))
            weights[mask] = {code: float(w) for code, w in zip(members, draw)}
    return weights


def _causal_shares(
    pi: np.ndarray,  # [n_states, n_combos] propensities
    member: np.ndarray,  # [n_combos, 9] bool
    y_base: np.ndarray,  # [n_days, n_combos] noiseless combo scores
    age_effects: np.ndarray,
    edu_effects: np.ndarray,
    age_props: np.ndarray,
    edu_props: np.ndarray,
    noise_sd: float,
) -> dict[str, float] | None:
    """Population variance decomposition of the generating model.

    Independence of the demographic mix from (state, combo, day) makes the
    three predictors orthogonal, so each subset R-squared is the plain sum of
    component variance shares and the Shapley share of a predictor equals its
    own variance share.
    """
    a = pi @ member.astype(float)  # [n_states, 9] singleton-attributed mass share
    with np.errstate(invalid="ignore", divide="ignore"):
        ybar = np.einsum("sc,tc,cj->sjt", pi, y_base, member.astype(float))
        ybar = np.divide(ybar, a[:, :, None], out=np.zeros_like(ybar), where=a[:, :, None] > 0)
    total_mass = a.sum()
    if total_mass <= 0:
        return None
    p_sj = a / total_mass
    mu_j_num = (p_sj * ybar.mean(axis=2)).sum(axis=0)
    p_j = p_sj.sum(axis=0)
    mu_j = np.divide(mu_j_num, p_j, out=np.zeros_like(mu_j_num), where=p_j > 0)
    mu_all = float((p_j * mu_j).sum())
    v_src = float((p_j * (mu_j - mu_all) ** 2).sum())
    v_within = float((p_sj * ((ybar - mu_j[None, :, None]) ** 2).mean(axis=2)).sum())

    age_props = age_props / age_props.sum()
    edu_props = edu_props / edu_props.sum()
    v_age = float(age_props @ (age_effects - age_props @ age_effects) ** 2)
    v_edu = float(edu_props @ (edu_effects - edu_props @ edu_effects) ** 2)

    v_noise = 0.0
    if noise_sd > 0:
        h = np.einsum("sc,cj->sj", pi**2, member.astype(float))
        h = np.divide(h, a**2, out=np.zeros_like(h), where=a > 0)
        v_noise = float(noise_sd**2 * (p_sj * h).sum())

    total = v_src + v_age + v_edu + v_within + v_noise
    if total <= 0:
        return None
    return {
        "source": v_src / total,
        "age": v_age / total,
        "education": v_edu / total,
        "residual": (v_within + v_noise) / total,
    }


def generate_synthetic_panel(config: SynthConfig, seed: int) -> tuple[SurveyPanel, PlantedTruth]:
    """Deterministic synthetic panel plus the record of what was planted."""
    config.validate()
    rng = np.random.default_rng(seed)
    states = sorted(config.states)
    n_states = len(states)
    n_days = config.n_days
    dates = np.datetime64(config.start_date, "D") + np.arange(n_days)

    masks = _combo_set(config, rng)
    n_combos = len(masks)
    member = membership_matrix(masks)  # [C, 9]
    weights = _draw_weights(masks, rng)

    # Latent per-singleton daily signals.
    t = np.arange(n_days, dtype=float)
    signals = np.empty((9, n_days))
    for j in range(9):
        offset = rng.uniform(*config.signal_offset)
        amp = rng.uniform(*config.signal_amp)
        period = rng.uniform(*config.signal_period)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        signals[j] = offset + amp * np.sin(2.0 * np.pi * t / period + phase)

    # Noiseless combo scores: convex mixes of member signals.
    w_matrix = np.zeros((n_combos, 9))
    for ci, mask in enumerate(masks):
        for code, w in weights[mask].items():
            w_matrix[ci, code - 1] = w
    y_base = signals.T @ w_matrix.T  # [T, C]

    age_effects = rng.uniform(-config.age_effect_scale, config.age_effect_scale, 3)
    edu_effects = rng.uniform(-config.edu_effect_scale, config.edu_effect_scale, 3)

    # Cluster profiles and per-state usage propensities.
    affinity = np.exp(config.profile_separation * rng.normal(size=(config.n_profiles, 9)))
    base = rng.gamma(config.usage_concentration, 1.0, n_combos) + 1e-9
    profile_pi = base[None, :] * np.exp(member.astype(float) @ np.log(affinity).T).T
    profile_pi /= profile_pi.sum(axis=1, keepdims=True)
    perm = rng.permutation(n_states)
    memberships = {states[idx]: int(rank % config.n_profiles) for rank, idx in enumerate(perm)}
    jitter = np.exp(config.profile_jitter * rng.normal(size=(n_states, n_combos)))
    pi = np.empty((n_states, n_combos))
    for si, st in enumerate(states):
        pi[si] = profile_pi[memberships[st]] * jitter[si]
        pi[si] /= pi[si].sum()

    noise = None
    if config.noise_sd > 0:
        noise = rng.normal(0.0, config.noise_sd, size=(n_states, n_days, n_combos))

    # Assemble rows cell-by-demographic-cell to bound memory.
    beta = config.fear_sideband
    bound = 1.0 - beta
    age_props = np.asarray(config.age_props, dtype=float)
    age_props = age_props / age_props.sum()
    edu_props = np.asarray(config.edu_props, dtype=float)
    edu_props = edu_props / edu_props.sum()
    mass_stc = config.respondents_per_day * pi  # [S, C], constant over days

    frames = []
    clipped = 0
    day_grid, combo_grid = np.meshgrid(np.arange(n_days), np.arange(n_combos), indexing="ij")
    for ai in range(3):
        for ei in range(3):
            share = age_props[ai] * edu_props[ei]
            if share <= 0:
                continue
            for si, st in enumerate(states):
                score = y_base + (age_effects[ai] + edu_effects[ei])
                if noise is not None:
                    score = score + noise[si]
                over = np.abs(score) > bound
                if over.any():
                    clipped += int(over.sum())
                    score = np.clip(score, -bound, bound)
                mass = np.full((n_days, n_combos), share)[:, :] * mass_stc[si][None, :]
                if config.cell_coverage < 1.0:
                    keep = rng.random((n_days, n_combos)) < config.cell_coverage
                    mass = np.where(keep, mass / config.cell_coverage, 0.0)
                present = mass > 0
                if not present.any():
                    continue
                m = mass[present]
                y = score[present]
                d_idx = day_grid[present]
                c_idx = combo_grid[present]
                level_shares = {
                    1: (bound + y) / 2.0,
                    2: np.full_like(y, beta / 2.0),
                    3: np.full_like(y, beta / 2.0),
                    4: (bound - y) / 2.0,
                }
                for level, shares in level_shares.items():
                    w = m * shares
                    keep_rows = w > 0
                    if not keep_rows.any():
                        continue
                    frames.append(
                        pd.DataFrame(
                            {
                                "date": dates[d_idx[keep_rows]],
                                "state": st,
                                "age": np.int8(ai + 1),
                                "edu": np.int8(ei + 1),
                                "combo_mask": np.asarray(masks, dtype=np.int16)[
                                    c_idx[keep_rows]
                                ],
                                "fear_level": np.int8(level),
                                "weighted_count": w[keep_rows],
                            }
                        )
                    )
    frame = pd.concat(frames, ignore_index=True)
    frame["date"] = pd.to_datetime(frame["date"])
    panel = SurveyPanel.from_frame(frame)

    shares = _causal_shares(
        pi, member, y_base, age_effects, edu_effects, age_props, edu_props, config.noise_sd
    )
    base_party = {st: ("D" if memberships[st] % 2 == 0 else "R") for st in states}
    special = list(rng.choice(np.array(states), size=config.election_flips_2020
                              + config.election_swings_2024, replace=False))
    flipped = sorted(str(s) for s in special[: config.election_flips_2020])
    swings = sorted(str(s) for s in special[config.election_flips_2020 :])
    flip = {"D": "R", "R": "D"}
    labels_2020 = {st: (flip[p] if st in flipped else p) for st, p in base_party.items()}
    labels_2024 = {st: (flip[p] if st in swings else p) for st, p in base_party.items()}

    truth = PlantedTruth(
        seed=seed,
        dates=[str(d) for d in dates],
        combo_masks=list(masks),
        singleton_signals={j + 1: signals[j].tolist() for j in range(9)},
        age_effects=age_effects.tolist(),
        edu_effects=edu_effects.tolist(),
        weights=weights,
        usage_propensities={
            st: {int(m): float(p) for m, p in zip(masks, pi[si])}
            for si, st in enumerate(states)
        },
        cluster_memberships=memberships,
        elections={2020: labels_2020, 2024: labels_2024},
        flipped_2020=flipped,
        swing_2024=swings,
        causal_shares=shares,
        causal_shares_exact=(config.cell_coverage == 1.0 and config.noise_sd == 0.0),
        clipped_scores=clipped,
        config=asdict(config),
    )
    return panel, truth


# ---------------------------------------------------------------------------
# Synthetic surveillance (two-wave epidemic) for end-to-end runs
# ---------------------------------------------------------------------------


def generate_synthetic_surveillance(config: SynthConfig, seed: int) -> pd.DataFrame:
    """Cumulative cases/deaths per state plus a "US" aggregate, two-wave shape."""
    config.validate()
    rng = np.random.default_rng(seed + 1)
    states = sorted(config.states)
    n_days = config.n_days
    dates = np.datetime64(config.start_date, "D") + np.arange(n_days)
    t = np.arange(n_days, dtype=float)

    rows = []
    us_cases = np.zeros(n_days)
    us_deaths = np.zeros(n_days)
    us_pop = 0
    for st in states:
        pop = int(rng.integers(800_000, 30_000_000))
        peak1, peak2 = rng.uniform(0.2, 0.4) * n_days, rng.uniform(0.6, 0.9) * n_days
        width1, width2 = rng.uniform(0.05, 0.1) * n_days, rng.uniform(0.05, 0.12) * n_days
        scale = pop * rng.uniform(2e-4, 8e-4)
        incidence = scale * (
            np.exp(-(((t - peak1) / width1) ** 2)) + 1.4 * np.exp(-(((t - peak2) / width2) ** 2))
        )
        cases_inc = np.floor(incidence)
        deaths_inc = np.floor(0.015 * np.roll(cases_inc, 7))
        deaths_inc[:7] = 0
        cum_cases = np.cumsum(cases_inc)
        cum_deaths = np.cumsum(deaths_inc)
        us_cases += cum_cases
        us_deaths += cum_deaths
        us_pop += pop
        rows.append(
            pd.DataFrame(
                {
                    "date": dates,
                    "geo": st,
                    "cum_cases": cum_cases.astype(np.int64),
                    "cum_deaths": cum_deaths.astype(np.int64),
                    "population": np.int64(pop),
                }
            )
        )
    rows.append(
        pd.DataFrame(
            {
                "date": dates,
                "geo": "US",
                "cum_cases": us_cases.astype(np.int64),
                "cum_deaths": us_deaths.astype(np.int64),
                "population": np.int64(us_pop),
            }
        )
    )
    return pd.concat(rows, ignore_index=True)


# ---------------------------------------------------------------------------
# Key-value config files
# ---------------------------------------------------------------------------

_TUPLE_FIELDS = {"signal_offset", "signal_amp", "signal_period", "age_props", "edu_props"}
_INT_FIELDS = {
    "n_days", "n_multi_combos", "n_profiles", "election_flips_2020", "election_swings_2024",
}
_FLOAT_FIELDS = {
    "respondents_per_day", "usage_concentration", "age_effect_scale", "edu_effect_scale",
    "noise_sd", "fear_sideband", "cell_coverage", "profile_separation", "profile_jitter",
}


def save_synth_config(config: SynthConfig, path: str | Path) -> None:
    """Write every parameter as key=value so the planted setup is documented."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in asdict(config).items():
            if value is None:
                continue
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            fh.write(f"{key}={value}\n")


def load_synth_config(path: str | Path) -> SynthConfig:
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{Path(path).name} line {lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "states":
                values[key] = tuple(US_STATES) if val.upper() == "ALL" else tuple(val.split(","))
            elif key == "combo_masks":
                values[key] = tuple(int(v) for v in val.split(",")) if val else None
            elif key in _TUPLE_FIELDS:
                values[key] = tuple(float(v) for v in val.split(","))
            elif key in _INT_FIELDS:
                values[key] = int(val)
            elif key in _FLOAT_FIELDS:
                values[key] = float(val)
            elif key == "start_date":
                values[key] = val
            else:
                raise ConfigError(f"{Path(path).name} line {lineno}: unknown key {key!r}")
    config = SynthConfig(**values)  # type: ignore[arg-type]
    config.validate()
    return config
