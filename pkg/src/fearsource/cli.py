"""Command-line orchestration of the full pipeline.

Subcommands map to pipeline stages so each can be rerun in isolation:

  synth     write a synthetic survey/surveillance/elections input set
  validate  load and validate inputs, reporting counts and flags
  epi       reconstructed active-infection series
  score     usage/fear singleton series and disentangled scores
  stats     test battery, correlation matrices, coefficients of variation
  causal    variance attribution over the causal graph
  cluster   state clustering and election comparison
  run-all   every stage in order plus a checksum manifest
  report    human-readable digest of a finished output directory

Outputs are plain CSV for tabular data and JSON for nested reports; every
file carries the tool version, seed, and config hash.  Runs are
deterministic for fixed inputs and seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, causal
from .artifacts import (
    Manifest,
    config_hash,
    output_header,
    write_csv,
    write_json,
    write_matrix_csv,
    write_text,
)
from .cluster import (
    FeatureKind,
    build_state_features,
    compare_with_elections,
    select_k,
    swing_states,
)
from .domain import Grouping, Singleton, stratum_name
from .epi import DailySeries, daily_increments, reconstruct_active_infections, rolling_mean
from .errors import ConfigError, FearsourceError
from .ingest import (
    ElectionLabels,
    SurveillanceData,
    load_elections,
    load_surveillance,
    load_survey_panel,
    write_panel,
)
from .scores import (
    DisentangleWeights,
    SingletonFearScore,
    aggregate_panel,
    boxplot_summary,
    coefficient_of_variation,
    combo_fear_score,
    fear_level_shares,
    fit_disentangle_weights,
    normalize_usage,
    singleton_fear_score,
    singleton_proxies,
    singleton_usage,
    state_summaries,
)
from .synth import (
    PlantedTruth,
    SynthConfig,
    generate_synthetic_panel,
    generate_synthetic_surveillance,
    load_synth_config,
    save_synth_config,
)

logger = logging.getLogger(__name__)

GROUPINGS = (Grouping.UNGROUPED, Grouping.BY_AGE, Grouping.BY_EDUCATION)


@dataclass
class PipelineConfig:
    survey: Path | None = None
    surveillance: Path | None = None
    elections: Path | None = None
    out: Path = Path("out")
    seed: int = 0
    grouping: Grouping = Grouping.BY_AGE
    window: int = 61
    disentangle_mode: str = "verbatim"
    k_min: int = 2
    k_max: int = 10
    alpha: float = 0.05
    bonferroni: bool = False

    def hash(self) -> str:
        # Only analytic settings: the same inputs and seed must hash the same
        # regardless of where files live, so output manifests stay
        # byte-identical across runs into different directories.
        payload = {
            "seed": self.seed,
            "grouping": self.grouping.value,
            "window": self.window,
            "disentangle_mode": self.disentangle_mode,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "alpha": self.alpha,
            "bonferroni": self.bonferroni,
        }
        return config_hash(payload)


_CONFIG_KEYS = {
    "survey", "surveillance", "elections", "out", "seed", "grouping",
    "window", "disentangle_mode", "k_min", "k_max", "alpha", "bonferroni",
}


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    values: dict = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path.name} line {lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path.name} line {lineno}: unknown key {key!r}")
            if key in ("survey", "surveillance", "elections", "out"):
                values[key] = Path(val)
            elif key in ("seed", "window", "k_min", "k_max"):
                values[key] = int(val)
            elif key == "grouping":
                values[key] = Grouping.parse(val)
            elif key == "alpha":
                values[key] = float(val)
            elif key == "bonferroni":
                values[key] = val.lower() in ("1", "true", "yes")
            else:
                values[key] = val
    return PipelineConfig(**values)


def _apply_flag_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "survey", None):
        config.survey = Path(args.survey)
    if getattr(args, "surveillance", None):
        config.surveillance = Path(args.surveillance)
    if getattr(args, "elections", None):
        config.elections = Path(args.elections)
    if getattr(args, "out", None):
        config.out = Path(args.out)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "grouping", None):
        config.grouping = Grouping.parse(args.grouping)
    if getattr(args, "window", None) is not None:
        config.window = args.window
    if getattr(args, "disentangle_mode", None):
        config.disentangle_mode = args.disentangle_mode.replace("-", "_")
    if getattr(args, "k_min", None) is not None:
        config.k_min = args.k_min
    if getattr(args, "k_max", None) is not None:
        config.k_max = args.k_max
    if getattr(args, "alpha", None) is not None:
        config.alpha = args.alpha
    if getattr(args, "bonferroni", False):
        config.bonferroni = True
    if config.disentangle_mode not in ("verbatim", "combo_weighted"):
        raise ConfigError(f"unknown disentangle_mode {config.disentangle_mode!r}")
    return config


# ---------------------------------------------------------------------------
# Score computation shared by several stages
# ---------------------------------------------------------------------------


@dataclass
class GroupScores:
    """National (state-pooled) score series for one grouping."""

    grouping: Grouping
    dates: np.ndarray
    masks: np.ndarray
    usage_singleton: np.ndarray  # [n_strata, T, 9]
    combo_scores: np.ndarray  # [n_strata, T, C]
    proxies: np.ndarray  # [n_strata, T, 9]
    weights: dict[int, DisentangleWeights]
    fear: dict[int, SingletonFearScore]


def compute_group_scores(panel, grouping: Grouping, mode: str) -> GroupScores:
    agg = aggregate_panel(panel, grouping)
    usage = normalize_usage(agg)
    su = singleton_usage(usage)
    cscores = combo_fear_score(fear_level_shares(agg))
    prox = singleton_proxies(cscores)
    weights: dict[int, DisentangleWeights] = {}
    fear: dict[int, SingletonFearScore] = {}
    for si, stratum in enumerate(agg.strata):
        fitted = fit_disentangle_weights(
            cscores.values[0, si], agg.masks, prox.values[0, si],
            grouping=grouping, geo="*", stratum=stratum,
        )
        weights[stratum] = fitted
        fear[stratum] = singleton_fear_score(
            fitted, prox.values[0, si], combo_scores=cscores.values[0, si],
            masks=agg.masks, mode=mode, dates=agg.dates,
        )
    return GroupScores(
        grouping=grouping,
        dates=agg.dates,
        masks=agg.masks,
        usage_singleton=su.values[0],
        combo_scores=cscores.values[0],
        proxies=prox.values[0],
        weights=weights,
        fear=fear,
    )


def _long_frame(dates, blocks: dict[int, np.ndarray], grouping: Grouping, value: str) -> pd.DataFrame:
    parts = []
    for stratum in sorted(blocks):
        name = stratum_name(grouping, stratum)
        block = blocks[stratum]
        for s in Singleton:
            parts.append(
                pd.DataFrame(
                    {
                        "date": np.datetime_as_string(dates, unit="D"),
                        "stratum": name,
                        "singleton": s.label,
                        value: block[:, s - 1],
                    }
                )
            )
    return pd.concat(parts, ignore_index=True)


def _smooth_blocks(dates, blocks: dict[int, np.ndarray], window: int) -> dict[int, np.ndarray]:
    out = {}
    for stratum, block in blocks.items():
        smoothed = np.empty_like(block)
        for j in range(block.shape[1]):
            smoothed[:, j] = rolling_mean(DailySeries("*", dates, block[:, j]), window).values
        out[stratum] = smoothed
    return out


def _boxplot_frame(blocks: dict[int, np.ndarray], grouping: Grouping) -> pd.DataFrame:
    rows = []
    for stratum in sorted(blocks):
        name = stratum_name(grouping, stratum)
        for s in Singleton:
            summary = boxplot_summary(blocks[stratum][:, s - 1])
            if summary is None:
                continue
            rows.append({"stratum": name, "singleton": s.label, **summary})
    return pd.DataFrame(rows, columns=["stratum", "singleton", "q1", "median", "q3", "whisker_lo", "whisker_hi"])


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_epi(surv: SurveillanceData, outdir: Path, header: str) -> list[Path]:
    rows = []
    for geo in surv.geographies:
        cases, deaths = surv.cumulative_series(geo)
        active = reconstruct_active_infections(daily_increments(cases), daily_increments(deaths))
        rows.append(
            pd.DataFrame(
                {
                    "date": np.datetime_as_string(active.dates, unit="D"),
                    "geo": geo,
                    "active_infections": active.values,
                }
            )
        )
    path = outdir / "active_infections.csv"
    write_csv(path, pd.concat(rows, ignore_index=True), header)
    return [path]


def stage_score(gscores: dict[Grouping, GroupScores], window: int, outdir: Path, header: str) -> list[Path]:
    files = []
    for grouping, gs in gscores.items():
        tag = grouping.value
        usage_blocks = {st: gs.usage_singleton[si] for si, st in enumerate(grouping.strata)}
        fear_blocks = {st: gs.fear[st].series for st in grouping.strata}

        for name, blocks, value in (
            (f"singleton_usage_{tag}.csv", usage_blocks, "usage"),
            (f"singleton_fear_{tag}.csv", fear_blocks, "fear_score"),
        ):
            path = outdir / name
            write_csv(path, _long_frame(gs.dates, blocks, grouping, value), header)
            files.append(path)
        for name, blocks, value in (
            (f"singleton_usage_smoothed_{tag}.csv", _smooth_blocks(gs.dates, usage_blocks, window), "usage"),
            (f"singleton_fear_smoothed_{tag}.csv", _smooth_blocks(gs.dates, fear_blocks, window), "fear_score"),
        ):
            path = outdir / name
            write_csv(path, _long_frame(gs.dates, blocks, grouping, value), header)
            files.append(path)

        for name, blocks in (
            (f"usage_boxplot_{tag}.csv", usage_blocks),
            (f"fear_boxplot_{tag}.csv", fear_blocks),
        ):
            path = outdir / name
            write_csv(path, _boxplot_frame(blocks, grouping), header)
            files.append(path)

        weight_rows, fit_rows = [], []
        for stratum in grouping.strata:
            fitted = gs.weights[stratum]
            sname = stratum_name(grouping, stratum)
            for mask in sorted(fitted.weights):
                for code, w in sorted(fitted.weights[mask].items()):
                    weight_rows.append(
                        {"stratum": sname, "combo_mask": mask,
                         "singleton": Singleton(code).label, "weight": w}
                    )
                fit_rows.append(
                    {"stratum": sname, "combo_mask": mask, "status": "ok",
                     "n_days": fitted.n_days[mask], "residual_ss": fitted.residuals[mask]}
                )
            for mask in sorted(fitted.skipped):
                fit_rows.append(
                    {"stratum": sname, "combo_mask": mask, "status": "skipped",
                     "n_days": 0, "residual_ss": np.nan}
                )
        path = outdir / f"disentangle_weights_{tag}.csv"
        write_csv(path, pd.DataFrame(weight_rows, columns=["stratum", "combo_mask", "singleton", "weight"]), header)
        files.append(path)
        path = outdir / f"disentangle_fit_{tag}.csv"
        write_csv(path, pd.DataFrame(fit_rows, columns=["stratum", "combo_mask", "status", "n_days", "residual_ss"]), header)
        files.append(path)
    return files


def _battery_frame(report, alpha: float, bonferroni: bool) -> pd.DataFrame:
    from .stats import significance_flags

    flags = significance_flags(report, alpha=alpha, bonferroni=bonferroni)
    rows = []
    for (stratum, code), res in sorted(report.normality.items()):
        rows.append(
            {"stratum": stratum_name(report.grouping, stratum), "test": "shapiro",
             "series_a": Singleton(code).label, "series_b": "",
             "statistic": res.statistic, "p_value": res.p_value,
             "significant": flags[("normality", stratum, code)]}
        )
    for (stratum, ca, cb, method), res in sorted(report.intra.items()):
        rows.append(
            {"stratum": stratum_name(report.grouping, stratum), "test": method,
             "series_a": Singleton(ca).label, "series_b": Singleton(cb).label,
             "statistic": res.statistic, "p_value": res.p_value,
             "significant": flags[("intra", stratum, ca, cb, method)]}
        )
    for (code, sa, sb, method), res in sorted(report.inter.items()):
        pair = f"{stratum_name(report.grouping, sa)}|{stratum_name(report.grouping, sb)}"
        rows.append(
            {"stratum": pair, "test": method,
             "series_a": Singleton(code).label, "series_b": Singleton(code).label,
             "statistic": res.statistic, "p_value": res.p_value,
             "significant": flags[("inter", code, sa, sb, method)]}
        )
    for key, message in sorted(report.errors.items(), key=str):
        rows.append(
            {"stratum": "error", "test": str(key), "series_a": message,
             "series_b": "", "statistic": np.nan, "p_value": np.nan,
             "significant": False}
        )
    return pd.DataFrame(
        rows,
        columns=["stratum", "test", "series_a", "series_b", "statistic", "p_value", "significant"],
    )


def stage_stats(
    gscores: dict[Grouping, GroupScores],
    surv: SurveillanceData | None,
    config: PipelineConfig,
    outdir: Path,
    header: str,
) -> list[Path]:
    from .stats import correlation_matrix, run_test_battery

    files = []
    for grouping, gs in gscores.items():
        tag = grouping.value
        fear_blocks = {st: gs.fear[st].series for st in grouping.strata}
        usage_blocks = {st: gs.usage_singleton[si] for si, st in enumerate(grouping.strata)}
        for name, blocks in (
            (f"test_battery_fear_{tag}.csv", fear_blocks),
            (f"test_battery_usage_{tag}.csv", usage_blocks),
        ):
            report = run_test_battery(blocks, grouping)
            path = outdir / name
            write_csv(path, _battery_frame(report, config.alpha, config.bonferroni), header)
            files.append(path)

    # National correlation matrices over the smoothed ungrouped series,
    # alongside reconstructed infections when surveillance covers "US".
    gs = gscores[Grouping.UNGROUPED]
    window = config.window
    infections = None
    if surv is not None and "US" in surv.geographies:
        cases, deaths = surv.cumulative_series("US")
        active = reconstruct_active_infections(daily_increments(cases), daily_increments(deaths))
        infections = rolling_mean(active, window)
    for name, block in (
        ("correlation_fear_none.csv", gs.fear[0].series),
        ("correlation_usage_none.csv", gs.usage_singleton[0]),
    ):
        named: dict[str, DailySeries] = {}
        for s in Singleton:
            smoothed = rolling_mean(DailySeries("US", gs.dates, block[:, s - 1]), window)
            named[s.label] = smoothed
        if infections is not None:
            named["infections"] = infections
        names, matrix = correlation_matrix(named)
        path = outdir / name
        write_matrix_csv(path, names, matrix, header)
        files.append(path)

    cv_rows = []
    for kind, block in (("fear", gs.fear[0].series), ("usage", gs.usage_singleton[0])):
        for s in Singleton:
            values = block[:, s - 1]
            cv = coefficient_of_variation(values) if np.isfinite(values).any() else np.nan
            cv_rows.append({"kind": kind, "stratum": "all", "singleton": s.label, "cv": cv})
    path = outdir / "coefficient_of_variation.csv"
    write_csv(path, pd.DataFrame(cv_rows, columns=["kind", "stratum", "singleton", "cv"]), header)
    files.append(path)
    return files


def stage_causal(panel, gscores: dict[Grouping, GroupScores], outdir: Path, header: str,
                 seed: int, cfg_hash: str) -> list[Path]:
    scores = gscores[Grouping.UNGROUPED].fear[0]
    obs = causal.build_observations(panel, scores)
    result = causal.shapley_attribution(obs)
    sequential = causal.sequential_attribution(obs)

    files = []
    path = outdir / "attribution.json"
    write_json(
        path,
        {
            "shares": result.shares,
            "residual": result.residual,
            "r2_full": result.r2_full,
            "r2_subsets": {"+".join(k) if k else "(none)": v for k, v in result.r2_subsets.items()},
            "clamped": result.clamped,
            "sequential_diagnostic": sequential,
            "n_observations": len(obs),
        },
        seed,
        cfg_hash,
    )
    files.append(path)

    rows = [{"driver": name, "share": share} for name, share in result.shares.items()]
    rows.append({"driver": "residual", "share": result.residual})
    path = outdir / "attribution.csv"
    write_csv(path, pd.DataFrame(rows, columns=["driver", "share"]), header)
    files.append(path)

    path = outdir / "causal_dag.txt"
    write_text(path, causal.edge_list_text(causal.default_dag()), header)
    files.append(path)
    return files


def stage_cluster(
    panel,
    elections: dict[int, ElectionLabels],
    config: PipelineConfig,
    outdir: Path,
    header: str,
) -> list[Path]:
    mode = config.disentangle_mode
    stratified_grouping = (
        config.grouping if config.grouping is not Grouping.UNGROUPED else Grouping.BY_AGE
    )
    flat_summaries, flat_excluded = state_summaries(panel, Grouping.UNGROUPED, mode)
    strat_summaries, strat_excluded = state_summaries(panel, stratified_grouping, mode)

    years = sorted(elections)
    swing = []
    if len(years) >= 2:
        swing = swing_states(elections[years[0]], elections[years[-1]])

    files = []
    summary: dict = {
        "k_range": [config.k_min, config.k_max],
        "stratified_grouping": stratified_grouping.value,
        "excluded_states": sorted(set(flat_excluded) | set(strat_excluded)),
        "swing_states": swing,
        "kinds": {},
    }
    for kind in FeatureKind:
        grouping = Grouping.UNGROUPED if not kind.stratified else stratified_grouping
        summaries = flat_summaries if not kind.stratified else strat_summaries
        features = build_state_features(summaries, kind, grouping)
        k, report = select_k(features, (config.k_min, config.k_max), seed=config.seed)
        kind_summary: dict = {
            "k": k,
            "silhouette": report.silhouette,
            "grouping": grouping.value,
            "years": {},
        }
        for year in years:
            comparison = None
            if k == 2:
                comparison = compare_with_elections(report, elections[year])
                comparison.swing_states = swing
                kind_summary["years"][str(year)] = {
                    "accuracy": comparison.accuracy,
                    "misclassified": comparison.misclassified,
                    "mapping": {str(c): p for c, p in comparison.mapping.items()},
                }
            else:
                kind_summary["years"][str(year)] = {"note": f"selected k={k}, no party mapping"}
            rows = []
            for state in sorted(report.assignments):
                cluster_id = report.assignments[state]
                rows.append(
                    {
                        "state": state,
                        "cluster": cluster_id,
                        "party_mapped": comparison.mapping[cluster_id] if comparison else "",
                        "misclassified": state in comparison.misclassified if comparison else "",
                        "swing": state in swing,
                    }
                )
            path = outdir / f"clusters_{kind.value}_{year}.csv"
            write_csv(
                path,
                pd.DataFrame(rows, columns=["state", "cluster", "party_mapped", "misclassified", "swing"]),
                header,
            )
            files.append(path)
        summary["kinds"][kind.value] = kind_summary
    path = outdir / "cluster_summary.json"
    write_json(path, summary, config.seed, config.hash())
    files.append(path)
    return files


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = load_synth_config(args.config) if args.config else SynthConfig()
    seed = args.seed if args.seed is not None else 0
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    panel, truth = generate_synthetic_panel(config, seed)
    cfg_hash = config_hash(dataclasses.asdict(config))
    header = output_header(seed, cfg_hash)

    write_panel(panel, outdir / "survey.csv", header=header)
    surv_frame = generate_synthetic_surveillance(config, seed)
    surv_frame = surv_frame.assign(date=surv_frame["date"].astype(str))
    write_csv(outdir / "surveillance.csv", surv_frame, header, float_format="%d")
    election_rows = [
        {"year": year, "state": st, "party": party}
        for year in sorted(truth.elections)
        for st, party in sorted(truth.elections[year].items())
    ]
    write_csv(outdir / "elections.csv", pd.DataFrame(election_rows), header)
    truth.to_json(outdir / "planted_truth.json")
    save_synth_config(config, outdir / "synth_config.txt")
    print(f"synthetic inputs written to {outdir} ({len(panel)} survey rows)")
    return 0


def cmd_validate(config: PipelineConfig) -> int:
    status = 0
    if config.survey is None:
        print("validate: no survey file configured")
        return 1
    panel = load_survey_panel(config.survey)
    counts = panel.row_counts()
    print(f"survey: {len(panel)} rows, {len(counts)} state(s), dates {panel.date_range[0]}..{panel.date_range[1]}")
    if panel.gap_flags:
        print(f"survey: {len(panel.gap_flags)} date gap(s), e.g. {panel.gap_flags[0]}")
    if config.surveillance is not None:
        surv = load_surveillance(config.surveillance)
        print(f"surveillance: {len(surv.frame)} rows, {len(surv.geographies)} geographies")
        for flag in surv.flags[:5]:
            print(f"  flag: {flag}")
        if len(surv.flags) > 5:
            print(f"  ... and {len(surv.flags) - 5} more")
    if config.elections is not None:
        elections = load_elections(config.elections)
        for year, labels in sorted(elections.items()):
            print(f"elections {year}: {len(labels.labels)} states, {len(labels.missing_states)} missing")
    return status


def _run_stages(config: PipelineConfig, stages: list[str]) -> int:
    outdir = config.out
    outdir.mkdir(parents=True, exist_ok=True)
    cfg_hash = config.hash()
    header = output_header(config.seed, cfg_hash)
    manifest = Manifest(config.seed, cfg_hash)

    surv = None
    if config.surveillance is not None and Path(config.surveillance).exists():
        surv = load_surveillance(config.surveillance)

    panel = None
    gscores: dict[Grouping, GroupScores] = {}

    def need_panel():
        nonlocal panel
        if panel is None:
            if config.survey is None:
                raise ConfigError("no survey input configured")
            panel = load_survey_panel(config.survey)
        return panel

    def need_scores():
        if not gscores:
            p = need_panel()
            for grouping in GROUPINGS:
                gscores[grouping] = compute_group_scores(p, grouping, config.disentangle_mode)
        return gscores

    failed = False
    for stage in stages:
        try:
            if stage == "epi":
                if surv is None or not surv.geographies:
                    manifest.record("epi", "skipped", note="no surveillance input")
                    continue
                manifest.record("epi", "ok", stage_epi(surv, outdir, header))
            elif stage == "score":
                manifest.record("score", "ok", stage_score(need_scores(), config.window, outdir, header))
            elif stage == "stats":
                manifest.record("stats", "ok", stage_stats(need_scores(), surv, config, outdir, header))
            elif stage == "causal":
                manifest.record(
                    "causal",
                    "ok",
                    stage_causal(need_panel(), need_scores(), outdir, header, config.seed, cfg_hash),
                )
            elif stage == "cluster":
                if config.elections is None or not Path(config.elections).exists():
                    manifest.record("cluster", "skipped", note="no elections input")
                    continue
                elections = load_elections(config.elections)
                manifest.record(
                    "cluster", "ok", stage_cluster(need_panel(), elections, config, outdir, header)
                )
        except Exception as exc:
            logger.error("stage %s failed: %s", stage, exc)
            manifest.record(stage, "failed", note=str(exc))
            failed = True
            break
    manifest.write(outdir / "manifest.json")
    print(f"manifest written to {outdir / 'manifest.json'}")
    for name, entry in manifest.stages.items():
        note = f" ({entry['note']})" if "note" in entry else ""
        print(f"  {name}: {entry['status']}{note}")
    return 1 if failed else 0


def cmd_report(config: PipelineConfig) -> int:
    import json

    outdir = config.out
    manifest_path = outdir / "manifest.json"
    if not manifest_path.exists():
        print(f"report: no manifest at {manifest_path}")
        return 1
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    print(f"run: {manifest['tool']} seed={manifest['seed']} config={manifest['config']}")
    for stage, entry in manifest["stages"].items():
        n_files = len(entry.get("files", {}))
        print(f"  {stage}: {entry['status']} ({n_files} file(s))")

    attribution = outdir / "attribution.json"
    if attribution.exists():
        with open(attribution, "r", encoding="utf-8") as fh:
            att = json.load(fh)
        shares = ", ".join(f"{k}={v:.1%}" for k, v in att["shares"].items())
        print(f"attribution: {shares}, residual={att['residual']:.1%}")
    cluster_summary = outdir / "cluster_summary.json"
    if cluster_summary.exists():
        with open(cluster_summary, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        for kind, entry in summary["kinds"].items():
            sil = entry["silhouette"]
            sil_text = f"{sil:.3f}" if sil is not None else "undefined"
            years = entry.get("years", {})
            accs = ", ".join(
                f"{year}: {info['accuracy']:.0%}" for year, info in years.items() if "accuracy" in info
            )
            print(f"  {kind}: k={entry['k']} silhouette={sil_text} {accs}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fearsource", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"fearsource {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write synthetic inputs with planted truth")
    synth.add_argument("--config", help="synth config file (key=value)")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    def add_pipeline_flags(p, include_cluster=True):
        p.add_argument("--config", help="pipeline config file (key=value)")
        p.add_argument("--survey")
        p.add_argument("--surveillance")
        p.add_argument("--elections")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--grouping", choices=["none", "age", "edu"])
        p.add_argument("--disentangle-mode", choices=["verbatim", "combo-weighted"],
                       dest="disentangle_mode")
        p.add_argument("--window", type=int, help="smoothing window in days (odd)")
        p.add_argument("--alpha", type=float, help="significance threshold (default 0.05)")
        p.add_argument("--bonferroni", action="store_true",
                       help="Bonferroni-correct the battery threshold")
        if include_cluster:
            p.add_argument("--k-min", type=int, dest="k_min")
            p.add_argument("--k-max", type=int, dest="k_max")

    for name, help_text in (
        ("validate", "validate inputs and report counts/flags"),
        ("epi", "emit reconstructed active infections"),
        ("score", "emit usage/fear singleton series and weights"),
        ("stats", "emit test battery and correlation matrices"),
        ("causal", "emit variance attribution"),
        ("cluster", "emit cluster reports and election comparison"),
        ("run-all", "run every stage and write a manifest"),
        ("report", "summarize a finished output directory"),
    ):
        p = sub.add_parser(name, help=help_text)
        add_pipeline_flags(p)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FEARSOURCE_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        config = load_pipeline_config(args.config) if args.config else PipelineConfig()
        config = _apply_flag_overrides(config, args)
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "report":
            return cmd_report(config)
        stage_sets = {
            "epi": ["epi"],
            "score": ["score"],
            "stats": ["stats"],
            "causal": ["causal"],
            "cluster": ["cluster"],
            "run-all": ["epi", "score", "stats", "causal", "cluster"],
        }
        return _run_stages(config, stage_sets[args.command])
    except FearsourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
