import json
from pathlib import Path

import pytest

from fearsource.cli import PipelineConfig, load_pipeline_config, main
from fearsource.domain import Grouping
from fearsource.errors import ConfigError

SYNTH_CFG = """\
states=CA,TX,NY,FL,OH,WA
n_days=40
n_multi_combos=4
respondents_per_day=300
noise_sd=0.002
n_profiles=2
election_flips_2020=1
"""


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli_inputs")
    cfg = base / "synth.cfg"
    cfg.write_text(SYNTH_CFG)
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(base)]) == 0
    return base


def run_all_args(inputs, out, extra=()):
    return [
        "run-all",
        "--survey", str(inputs / "survey.csv"),
        "--surveillance", str(inputs / "surveillance.csv"),
        "--elections", str(inputs / "elections.csv"),
        "--out", str(out),
        "--seed", "7",
        *extra,
    ]


def test_synth_outputs_exist(inputs):
    for name in ("survey.csv", "surveillance.csv", "elections.csv",
                 "planted_truth.json", "synth_config.txt"):
        assert (inputs / name).exists()
    first = (inputs / "survey.csv").read_text().splitlines()[0]
    assert first.startswith("# fearsource 0.1.0 seed=7")


def test_synth_determinism(inputs, tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG)
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "survey.csv").read_bytes() == (inputs / "survey.csv").read_bytes()
    assert (tmp_path / "planted_truth.json").read_bytes() == (inputs / "planted_truth.json").read_bytes()


def test_synth_invalid_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("respondents_per_day=-5\n")
    assert main(["synth", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path)]) == 1
    assert "respondents_per_day" in capsys.readouterr().err


def test_run_all_writes_manifest_and_all_stages(inputs, tmp_path):
    out = tmp_path / "out"
    assert main(run_all_args(inputs, out)) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {name: entry["status"] for name, entry in manifest["stages"].items()} == {
        "epi": "ok", "score": "ok", "stats": "ok", "causal": "ok", "cluster": "ok",
    }
    # spot-check a few artifacts
    for name in (
        "active_infections.csv",
        "singleton_fear_none.csv",
        "test_battery_fear_age.csv",
        "correlation_fear_none.csv",
        "attribution.json",
        "clusters_usage9_2020.csv",
        "cluster_summary.json",
    ):
        assert (out / name).exists(), name
    header = (out / "attribution.csv").read_text().splitlines()[0]
    assert header.startswith("# fearsource 0.1.0 seed=7 config=")


def test_run_all_deterministic_manifests(inputs, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(run_all_args(inputs, out1)) == 0
    assert main(run_all_args(inputs, out2)) == 0
    assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()


def test_missing_elections_skips_cluster(inputs, tmp_path):
    out = tmp_path / "out"
    args = [
        "run-all",
        "--survey", str(inputs / "survey.csv"),
        "--surveillance", str(inputs / "surveillance.csv"),
        "--out", str(out),
        "--seed", "7",
    ]
    assert main(args) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["stages"]["cluster"]["status"] == "skipped"
    assert "elections" in manifest["stages"]["cluster"]["note"]


def test_missing_survey_fails_with_partial_manifest(inputs, tmp_path):
    out = tmp_path / "out"
    args = [
        "run-all",
        "--surveillance", str(inputs / "surveillance.csv"),
        "--out", str(out),
        "--seed", "7",
    ]
    assert main(args) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["stages"]["epi"]["status"] == "ok"
    assert manifest["stages"]["score"]["status"] == "failed"


def test_single_stage_commands(inputs, tmp_path):
    out = tmp_path / "epi_only"
    args = ["epi", "--surveillance", str(inputs / "surveillance.csv"), "--out", str(out)]
    assert main(args) == 0
    assert (out / "active_infections.csv").exists()
    assert not (out / "singleton_fear_none.csv").exists()

    out2 = tmp_path / "causal_only"
    args = ["causal", "--survey", str(inputs / "survey.csv"), "--out", str(out2)]
    assert main(args) == 0
    assert (out2 / "attribution.json").exists()


def test_validate_and_report(inputs, tmp_path, capsys):
    args = [
        "validate",
        "--survey", str(inputs / "survey.csv"),
        "--surveillance", str(inputs / "surveillance.csv"),
        "--elections", str(inputs / "elections.csv"),
    ]
    assert main(args) == 0
    text = capsys.readouterr().out
    assert "survey:" in text and "elections 2020" in text

    out = tmp_path / "out"
    assert main(run_all_args(inputs, out)) == 0
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "attribution:" in text and "usage9" in text
    assert main(["report", "--out", str(tmp_path / "nowhere")]) == 1


def test_pipeline_config_file_and_overrides(inputs, tmp_path):
    cfg = tmp_path / "pipeline.cfg"
    cfg.write_text(
        f"survey={inputs / 'survey.csv'}\n"
        f"elections={inputs / 'elections.csv'}\n"
        f"out={tmp_path / 'from_cfg'}\n"
        "seed=9\n"
        "grouping=edu\n"
        "window=31\n"
        "k_min=2\n"
        "k_max=4\n"
        "disentangle_mode=combo_weighted\n"
    )
    config = load_pipeline_config(cfg)
    assert config.seed == 9
    assert config.grouping is Grouping.BY_EDUCATION
    assert config.window == 31
    assert config.disentangle_mode == "combo_weighted"

    out = tmp_path / "cfg_run"
    assert main(["run-all", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3  # flag overrides file

    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown=1\n")
    with pytest.raises(ConfigError):
        load_pipeline_config(bad)


def test_bad_disentangle_mode_flag(inputs, tmp_path, capsys):
    config = PipelineConfig()
    config.disentangle_mode = "bogus"
    import argparse

    from fearsource.cli import _apply_flag_overrides

    with pytest.raises(ConfigError):
        _apply_flag_overrides(config, argparse.Namespace())
