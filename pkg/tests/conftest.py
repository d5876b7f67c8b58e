import numpy as np
import pandas as pd
import pytest

from fearsource.ingest import SurveyPanel

PANEL_COLUMNS = ["date", "state", "age", "edu", "combo_mask", "fear_level", "weighted_count"]


def make_panel(rows) -> SurveyPanel:
    """Build a validated panel from (date, state, age, edu, mask, fear, weight) tuples."""
    df = pd.DataFrame(rows, columns=PANEL_COLUMNS)
    df["date"] = pd.to_datetime(df["date"])
    return SurveyPanel.from_frame(df)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope="session")
def small_noiseless_panel():
    """One state, 120 days, 5 multi combos, no noise: exact-recovery territory."""
    from fearsource.synth import SynthConfig, generate_synthetic_panel

    config = SynthConfig(
        states=("CA",),
        n_days=120,
        n_multi_combos=5,
        respondents_per_day=500.0,
        noise_sd=0.0,
        cell_coverage=1.0,
        n_profiles=1,
    )
    return generate_synthetic_panel(config, seed=11)
