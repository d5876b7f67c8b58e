import math

import numpy as np
import pytest

from fearsource.domain import Grouping, Singleton, SourceCombo, combo_contains
from fearsource.errors import ConfigError, InsufficientDataError
from fearsource.scores import (
    SingletonFearScore,
    UsageSeries,
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
from fearsource.synth import SynthConfig, generate_synthetic_panel
from tests.conftest import make_panel

DAY = "2021-05-01"


def one_day_usage(mass_by_mask) -> UsageSeries:
    """UsageSeries for a single (geo, stratum, day) built from raw masses."""
    rows = [(DAY, "CA", 1, 1, mask, 1, mass) for mask, mass in mass_by_mask.items()]
    agg = aggregate_panel(make_panel(rows), Grouping.UNGROUPED)
    return normalize_usage(agg)


# ---------------------------------------------------------------------------
# Eq. 1: normalization
# ---------------------------------------------------------------------------


def test_normalize_usage_symmetry_and_hand_values():
    usage = one_day_usage({1: 2.0, 2: 2.0})
    np.testing.assert_allclose(usage.values[0, 0, 0], [0.5, 0.5])
    usage = one_day_usage({5: 7.0})
    assert usage.values[0, 0, 0].tolist() == [1.0]
    usage = one_day_usage({1: 1.0, 2: 3.0})
    np.testing.assert_allclose(usage.values[0, 0, 0], [0.25, 0.75])


def test_normalize_usage_sums_to_one(small_noiseless_panel):
    panel, _ = small_noiseless_panel
    for grouping in (Grouping.UNGROUPED, Grouping.BY_AGE, Grouping.BY_EDUCATION):
        usage = normalize_usage(aggregate_panel(panel, grouping))
        sums = usage.values.sum(axis=-1)[usage.valid]
        np.testing.assert_allclose(sums, 1.0, atol=1e-9)


def test_zero_mass_day_marked_absent_not_nan():
    rows = [
        (DAY, "CA", 1, 1, 1, 1, 3.0),
        ("2021-05-02", "CA", 1, 1, 1, 1, 0.0),  # day with zero total mass
    ]
    usage = normalize_usage(aggregate_panel(make_panel(rows), Grouping.UNGROUPED))
    assert usage.valid[0, 0, 0]
    assert not usage.valid[0, 0, 1]
    assert np.isfinite(usage.values).all()
    assert usage.values[0, 0, 1].sum() == 0.0


# ---------------------------------------------------------------------------
# Eq. 2: singleton usage
# ---------------------------------------------------------------------------


def test_singleton_usage_hand_example():
    mask_a = 1  # doctors
    mask_b = 2  # scientists
    usage = one_day_usage({mask_a: 0.2, mask_b: 0.3, mask_a | mask_b: 0.5})
    out = singleton_usage(usage).values[0, 0, 0]
    assert out[Singleton.DOCTORS - 1] == pytest.approx(0.7, abs=1e-12)
    assert out[Singleton.SCIENTISTS - 1] == pytest.approx(0.8, abs=1e-12)
    assert out.sum() == pytest.approx(1.5, abs=1e-12)  # exceeds 1 by design


def test_singleton_usage_all_mass_on_none():
    out = singleton_usage(one_day_usage({0: 4.0})).values[0, 0, 0]
    assert out[Singleton.NONE_OF_THE_ABOVE - 1] == 1.0
    assert out[: Singleton.NONE_OF_THE_ABOVE - 1].sum() == 0.0


def test_singleton_usage_uniform_over_all_256():
    usage = one_day_usage({mask: 1.0 for mask in range(256)})
    out = singleton_usage(usage).values[0, 0, 0]
    for s in Singleton:
        expected = 0.5 if s != Singleton.NONE_OF_THE_ABOVE else 1.0 / 256.0
        assert out[s - 1] == pytest.approx(expected, abs=1e-12)


def test_singleton_usage_matches_brute_force(rng):
    masks = np.arange(256)
    values = rng.exponential(size=(1, 1, 50, 256))
    values /= values.sum(axis=-1, keepdims=True)
    usage = UsageSeries(
        grouping=Grouping.UNGROUPED,
        geos=["*"],
        dates=np.datetime64(DAY, "D") + np.arange(50),
        masks=masks,
        values=values,
        valid=np.ones((1, 1, 50), dtype=bool),
    )
    got = singleton_usage(usage).values[0, 0]
    for s in Singleton:
        brute = sum(
            values[0, 0, :, m] for m in range(256) if combo_contains(SourceCombo(m), s)
        )
        np.testing.assert_allclose(got[:, s - 1], brute, atol=1e-12)


# ---------------------------------------------------------------------------
# Eq. 3: combo fear score
# ---------------------------------------------------------------------------


def score_of(fear_shares):
    rows = [
        (DAY, "CA", 1, 1, 1, level, share) for level, share in enumerate(fear_shares, start=1)
        if share > 0
    ]
    agg = aggregate_panel(make_panel(rows), Grouping.UNGROUPED)
    return float(combo_fear_score(fear_level_shares(agg)).values[0, 0, 0, 0])


def test_combo_fear_score_extremes_and_uniform():
    assert score_of([1.0, 0, 0, 0]) == 1.0
    assert abs(score_of([0.25, 0.25, 0.25, 0.25])) <= 1e-12
    assert score_of([0.5, 0.3, 0.2, 0.0]) == pytest.approx(0.534, abs=1e-12)


def test_combo_fear_score_reversal_negates(rng):
    for _ in range(25):
        shares = rng.dirichlet(np.ones(4))
        forward = score_of(shares)
        backward = score_of(shares[::-1])
        assert abs(forward + backward) <= 1e-12
        assert -1.0 <= forward <= 1.0


# ---------------------------------------------------------------------------
# Eq. 4: disentanglement
# ---------------------------------------------------------------------------


def test_self_regression_of_singleton_combo(small_noiseless_panel):
    panel, _ = small_noiseless_panel
    agg = aggregate_panel(panel, Grouping.UNGROUPED)
    scores = combo_fear_score(fear_level_shares(agg))
    proxies = singleton_proxies(scores)
    fitted = fit_disentangle_weights(scores.values[0, 0], agg.masks, proxies.values[0, 0])
    for s in Singleton:
        mask = 0 if s == Singleton.NONE_OF_THE_ABOVE else 1 << (s - 1)
        if mask in fitted.weights:
            assert fitted.weights[mask][int(s)] == pytest.approx(1.0, abs=1e-9)
            assert fitted.residuals[mask] == pytest.approx(0.0, abs=1e-12)


def test_noiseless_recovery(small_noiseless_panel):
    panel, truth = small_noiseless_panel
    agg = aggregate_panel(panel, Grouping.UNGROUPED)
    scores = combo_fear_score(fear_level_shares(agg))
    proxies = singleton_proxies(scores)
    fitted = fit_disentangle_weights(scores.values[0, 0], agg.masks, proxies.values[0, 0])
    assert not fitted.skipped
    for mask, planted in truth.weights.items():
        for code, w in planted.items():
            assert fitted.weights[mask][code] == pytest.approx(w, abs=1e-6)


def test_noiseless_recovery_within_strata(small_noiseless_panel):
    panel, truth = small_noiseless_panel
    agg = aggregate_panel(panel, Grouping.BY_AGE)
    scores = combo_fear_score(fear_level_shares(agg))
    proxies = singleton_proxies(scores)
    for si in range(3):
        fitted = fit_disentangle_weights(scores.values[0, si], agg.masks, proxies.values[0, si])
        for mask, planted in truth.weights.items():
            for code, w in planted.items():
                assert fitted.weights[mask][code] == pytest.approx(w, abs=1e-6)


def test_noisy_recovery_within_tolerance():
    config = SynthConfig(
        states=("CA",), n_days=320, n_multi_combos=10, noise_sd=0.01, n_profiles=1
    )
    panel, truth = generate_synthetic_panel(config, seed=21)
    agg = aggregate_panel(panel, Grouping.UNGROUPED)
    scores = combo_fear_score(fear_level_shares(agg))
    proxies = singleton_proxies(scores)
    fitted = fit_disentangle_weights(scores.values[0, 0], agg.masks, proxies.values[0, 0])
    errors = [
        abs(fitted.weights[mask][code] - w)
        for mask, planted in truth.weights.items()
        for code, w in planted.items()
    ]
    assert max(errors) < 0.05


def test_rank_deficiency_splits_equally():
    t = np.arange(40, dtype=float)
    proxy = 0.2 * np.sin(t / 5.0)
    proxies = np.full((40, 9), np.nan)
    proxies[:, 0] = proxy  # doctors
    proxies[:, 1] = proxy  # scientists: identical series
    combo = proxy.copy()  # target equals the shared signal
    fitted = fit_disentangle_weights(combo[:, None], [3], proxies)
    w = fitted.weights[3]
    assert w[1] == pytest.approx(w[2], abs=1e-9)  # minimum-norm tie-break
    assert w[1] + w[2] == pytest.approx(1.0, abs=1e-9)


def test_insufficient_days_flagged():
    proxies = np.full((3, 9), np.nan)
    proxies[0, 0] = 0.1
    proxies[0, 1] = 0.2  # members observable on one day only
    combo = np.array([0.15, np.nan, np.nan])
    fitted = fit_disentangle_weights(combo[:, None], [3], proxies)
    assert 3 in fitted.skipped
    assert 3 not in fitted.weights


def test_nested_regressors_never_increase_residual(rng):
    t = np.arange(200, dtype=float)
    proxies = np.stack(
        [0.2 * np.sin(t / p + i) + 0.05 * rng.normal(size=200) for i, p in enumerate((7, 11, 13, 17, 19, 23, 29, 31, 37))],
        axis=1,
    )
    target = 0.5 * proxies[:, 0] + 0.3 * proxies[:, 1] + 0.01 * rng.normal(size=200)
    small = fit_disentangle_weights(target[:, None], [3], proxies)  # doctors+scientists
    large = fit_disentangle_weights(target[:, None], [7], proxies)  # +cdc
    assert large.residuals[7] <= small.residuals[3] + 1e-12


# ---------------------------------------------------------------------------
# Eq. 5: singleton fear scores
# ---------------------------------------------------------------------------


def make_weights(wmap):
    from fearsource.scores import DisentangleWeights

    out = DisentangleWeights(grouping=Grouping.UNGROUPED, geo="*", stratum=0)
    out.weights = wmap
    return out


def test_single_combo_identity():
    proxies = np.full((10, 9), np.nan)
    proxies[:, 0] = np.linspace(-0.2, 0.2, 10)
    result = singleton_fear_score(make_weights({1: {1: 1.0}}), proxies)
    np.testing.assert_allclose(result.series[:, 0], proxies[:, 0])
    assert not result.no_data[0]


def test_verbatim_sums_weights_times_proxy():
    proxies = np.full((6, 9), np.nan)
    proxies[:, 0] = np.linspace(0.1, 0.6, 6)
    weights = make_weights({1: {1: 1.0}, 3: {1: 0.5, 2: 0.5}})
    result = singleton_fear_score(weights, proxies, mode="verbatim")
    np.testing.assert_allclose(result.series[:, 0], 1.5 * proxies[:, 0], atol=1e-12)


def test_never_selected_singleton_scores_zero_with_flag():
    proxies = np.full((5, 9), 0.3)
    result = singleton_fear_score(make_weights({1: {1: 1.0}}), proxies)
    nota = Singleton.NONE_OF_THE_ABOVE - 1
    assert result.no_data[nota]
    assert (result.series[:, nota] == 0.0).all()
    assert result.aggregate[nota] == 0.0
    assert not result.no_data[0]


def test_combo_weighted_mode_skips_absent_days():
    proxies = np.full((4, 9), np.nan)
    proxies[:, 0] = 0.2
    combo_scores = np.array([[0.4], [np.nan], [0.2], [0.6]])
    weights = make_weights({3: {1: 0.5, 2: 0.5}})
    result = singleton_fear_score(
        weights, proxies, combo_scores=combo_scores, masks=[3], mode="combo_weighted"
    )
    np.testing.assert_allclose(result.series[[0, 2, 3], 0], [0.2, 0.1, 0.3], atol=1e-12)
    assert np.isnan(result.series[1, 0])
    assert result.aggregate[0] == pytest.approx(0.2, abs=1e-12)


def test_unknown_mode_is_config_error():
    with pytest.raises(ConfigError):
        singleton_fear_score(make_weights({}), np.zeros((3, 9)), mode="other")
    with pytest.raises(ConfigError):
        singleton_fear_score(make_weights({}), np.zeros((3, 9)), mode="combo_weighted")


# ---------------------------------------------------------------------------
# Coefficient of variation and boxplots
# ---------------------------------------------------------------------------


def test_coefficient_of_variation():
    assert coefficient_of_variation([5.0, 5.0, 5.0]) == 0.0
    assert coefficient_of_variation([1.0, 3.0]) == pytest.approx(0.5, abs=1e-12)
    assert coefficient_of_variation([-2.0, -4.0]) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert math.isnan(coefficient_of_variation([-1.0, 1.0]))
    with pytest.raises(InsufficientDataError):
        coefficient_of_variation([])


def test_boxplot_summary():
    values = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 100.0])
    summary = boxplot_summary(values)
    assert summary["median"] == pytest.approx(3.5)
    assert summary["whisker_hi"] == 5.0  # 100 is an outlier beyond 1.5 IQR
    assert summary["whisker_lo"] == 1.0
    assert boxplot_summary(np.array([np.nan])) is None


# ---------------------------------------------------------------------------
# Per-state summaries
# ---------------------------------------------------------------------------


def test_state_summaries_shapes_and_exclusions():
    config = SynthConfig(states=("CA", "TX", "NY"), n_days=40, n_multi_combos=4, n_profiles=2)
    panel, _ = generate_synthetic_panel(config, seed=13)
    flat, excluded = state_summaries(panel, Grouping.UNGROUPED)
    assert sorted(flat) == ["CA", "NY", "TX"]
    assert excluded == []
    assert flat["CA"].usage_mean.shape == (1, 9)
    assert flat["CA"].fear_mean.shape == (1, 9)
    strat, _ = state_summaries(panel, Grouping.BY_AGE)
    assert strat["CA"].usage_mean.shape == (3, 9)
    # usage averages are shares: within [0, 1] and named-source block sums >= 1 per day
    assert (flat["CA"].usage_mean >= 0).all() and (flat["CA"].usage_mean <= 1).all()
