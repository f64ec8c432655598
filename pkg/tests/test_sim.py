"""Tests for the Monte Carlo experiment engine.

Covers:
- the configured eigenvalue spectrum and population construction
- determinism of population and experiment draws
- each scenario's generated moments against its evaluation covariance
- the experiment loop: row layout, targeted-strategy behavior,
  failure accounting, configuration validation
"""

import math

import numpy as np
import pytest

from gmvshrink import sim
from gmvshrink.core import SingularityError, relative_loss, sample_moments
from gmvshrink.sim import (
    ScenarioConfig,
    build_population,
    generate,
    run_experiment,
    spectrum_for,
)


def _relative_frobenius(actual, expected):
    return np.linalg.norm(actual - expected) / np.linalg.norm(expected)


# ---------------------------------------------------------------------------
# spectrum and population construction
# ---------------------------------------------------------------------------


def test_spectrum_groups_for_p10():
    values = np.sort(spectrum_for(10))
    np.testing.assert_allclose(values, [0.2, 0.2, 1, 1, 1, 1, 4, 4, 4, 4])


def test_spectrum_rounding_leftover_goes_to_middle_group():
    values = spectrum_for(13)  # floor(2.6)=2 low, floor(5.2)=5 high
    assert np.sum(values == 0.2) == 2
    assert np.sum(values == 4.0) == 5
    assert np.sum(values == 1.0) == 6


def test_population_spectrum_preserved_by_rotation():
    pop = build_population(23, seed=1)
    np.testing.assert_allclose(
        np.linalg.eigvalsh(pop.cov), np.sort(spectrum_for(23)), atol=1e-8
    )
    assert np.trace(pop.cov) == pytest.approx(spectrum_for(23).sum())


def test_population_is_deterministic():
    first = build_population(12, seed=99)
    second = build_population(12, seed=99)
    np.testing.assert_array_equal(first.cov, second.cov)
    np.testing.assert_array_equal(first.mean, second.mean)
    np.testing.assert_array_equal(first.ar_coeffs, second.ar_coeffs)
    other = build_population(12, seed=100)
    assert not np.array_equal(first.cov, other.cov)


def test_population_needs_five_assets():
    with pytest.raises(ValueError):
        build_population(4, seed=0)


def test_population_coefficient_ranges():
    pop = build_population(30, seed=2)
    assert np.all(pop.arch_coeffs >= 0.0) and np.all(pop.arch_coeffs < 0.1)
    assert np.all(pop.persist_coeffs >= 0.6) and np.all(pop.persist_coeffs < 0.7)
    assert np.all(pop.arch_coeffs + pop.persist_coeffs < 1.0)
    assert np.all(np.abs(pop.ar_coeffs) < 0.9)
    assert np.all(np.abs(pop.mean) <= 0.2)


def test_evaluation_cov_per_scenario():
    pop = build_population(10, seed=3)
    assert pop.evaluation_cov("t5") is pop.cov
    assert pop.evaluation_cov("ccc_garch") is pop.cov
    np.testing.assert_array_equal(
        pop.evaluation_cov("capm"),
        pop.cov + np.outer(pop.factor_loadings, pop.factor_loadings),
    )
    np.testing.assert_array_equal(pop.evaluation_cov("varma"), pop.stationary_cov)
    # the literal flag restores the innovation covariance everywhere
    assert pop.evaluation_cov("capm", literal_sigma=True) is pop.cov
    assert pop.evaluation_cov("varma", literal_sigma=True) is pop.cov
    with pytest.raises(ValueError):
        pop.evaluation_cov("garch")


# ---------------------------------------------------------------------------
# generated moments per scenario
# ---------------------------------------------------------------------------


def test_t5_block_matches_population_covariance():
    pop = build_population(50, seed=5)
    rng = np.random.default_rng(7)
    block = generate(pop, "t5", 50_000, rng)
    mean, cov = sample_moments(block)
    assert _relative_frobenius(cov, pop.cov) < 0.05
    assert np.max(np.abs(mean - pop.mean)) < 0.05


def test_raw_t5_inflates_variance_by_five_thirds():
    pop = build_population(20, seed=5)
    rng = np.random.default_rng(11)
    block = generate(pop, "t5", 20_000, rng, standardize_t=False)
    _, cov = sample_moments(block)
    assert np.trace(cov) / np.trace(pop.cov) == pytest.approx(5 / 3, rel=0.05)


def test_capm_block_carries_the_factor_term():
    pop = build_population(30, seed=13)
    rng = np.random.default_rng(17)
    _, cov = sample_moments(generate(pop, "capm", 30_000, rng))
    with_factor = pop.cov + np.outer(pop.factor_loadings, pop.factor_loadings)
    assert _relative_frobenius(cov, with_factor) < 0.10
    assert np.linalg.norm(cov - with_factor) < np.linalg.norm(cov - pop.cov)


def test_varma_block_autocorrelation_and_covariance():
    pop = build_population(5, seed=19)
    rng = np.random.default_rng(23)
    block = generate(pop, "varma", 50_000, rng)
    _, cov = sample_moments(block)
    assert _relative_frobenius(cov, pop.stationary_cov) < 0.10
    centered = block - block.mean(axis=1, keepdims=True)
    for k in range(5):
        lag1 = np.mean(centered[k, 1:] * centered[k, :-1]) / np.var(centered[k])
        assert abs(lag1 - pop.ar_coeffs[k]) < 0.05


def test_garch_block_unconditional_variance():
    pop = build_population(5, seed=29)
    rng = np.random.default_rng(31)
    block = generate(pop, "ccc_garch", 50_000, rng)
    _, cov = sample_moments(block)
    np.testing.assert_allclose(np.diag(cov), np.diag(pop.cov), rtol=0.05)
    assert _relative_frobenius(cov, pop.cov) < 0.15


def test_generate_validation():
    pop = build_population(5, seed=37)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        generate(pop, "garch", 10, rng)
    with pytest.raises(ValueError):
        generate(pop, "t5", 0, rng)


# ---------------------------------------------------------------------------
# experiment loop
# ---------------------------------------------------------------------------


def _small_config(**overrides):
    base = dict(
        scenario="t5",
        p=8,
        n=20,
        periods=3,
        reps=4,
        seed=42,
        strategies=(1, 5, 6, 7),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def test_run_experiment_is_deterministic():
    first = run_experiment(_small_config())
    second = run_experiment(_small_config())
    assert first.rows == second.rows
    assert first.metadata == second.metadata


def test_run_experiment_row_layout():
    table = run_experiment(_small_config())
    assert len(table.rows) == 4 * 3
    for row in table.rows:
        assert row.scenario == "t5"
        assert row.concentration == pytest.approx(8 / 20)
        assert 1 <= row.period <= 3
        assert row.failed_reps == 0
        assert row.stderr >= 0.0
    with pytest.raises(KeyError):
        table.mean_loss(2, 1)


def test_metadata_records_configuration():
    table = run_experiment(_small_config())
    assert table.metadata["scenario"] == "t5"
    assert table.metadata["strategies"] == "1,5,6,7"
    assert table.metadata["literal-sigma"] == "false"
    assert table.metadata["t5-standardized"] == "true"


def test_hold_target_strategy_loss_is_period_invariant():
    table = run_experiment(_small_config(strategies=(6,), reps=3))
    losses = [table.mean_loss(6, i) for i in (1, 2, 3)]
    assert losses[0] == losses[1] == losses[2]
    # a single rep reproduces the population loss of the equal-weight target
    single = run_experiment(_small_config(strategies=(6,), reps=1, periods=1))
    pop_seed, _ = np.random.SeedSequence(42, spawn_key=(0,)).spawn(2)
    pop = build_population(8, pop_seed)
    expected = relative_loss(np.full(8, 0.125), pop.cov)
    assert single.mean_loss(6, 1) == pytest.approx(expected, rel=1e-12)


def test_hold_target_strategy_allows_short_windows():
    config = _small_config(strategies=(6,), n=5, reps=2, periods=2)
    table = run_experiment(config)
    assert len(table.rows) == 2


def test_plain_sample_strategy_plateaus_at_concentration_ratio():
    """At c = 1/2 the no-shrinkage loss settles near c/(1-c) = 1."""
    config = ScenarioConfig(
        scenario="t5", p=125, n=250, periods=1, reps=50, seed=7, strategies=(5,)
    )
    table = run_experiment(config)
    assert table.mean_loss(5, 1) == pytest.approx(1.0, rel=0.12)


def test_failed_rep_is_counted_and_excluded(monkeypatch):
    original = sim.weight_sequence
    calls = {"n": 0}

    def flaky(blocks, strategy, target):
        if strategy == 5:
            calls["n"] += 1
            if calls["n"] == 1:
                raise SingularityError("injected failure", n_assets=len(target))
        return original(blocks, strategy, target)

    monkeypatch.setattr(sim, "weight_sequence", flaky)
    table = run_experiment(_small_config(strategies=(5, 6), reps=3))
    for row in table.rows:
        if row.strategy == 5:
            assert row.failed_reps == 1
            assert math.isfinite(row.mean_loss)
        else:
            assert row.failed_reps == 0


def test_config_validation():
    with pytest.raises(ValueError):
        _small_config(scenario="normal").validate()
    with pytest.raises(ValueError):
        _small_config(p=4).validate()
    with pytest.raises(ValueError):
        _small_config(periods=0).validate()
    with pytest.raises(ValueError):
        _small_config(reps=0).validate()
    with pytest.raises(ValueError):
        _small_config(strategies=(1, 9)).validate()
    with pytest.raises(ValueError):
        _small_config(strategies=()).validate()
    with pytest.raises(ValueError):
        _small_config(n=9).validate()  # windows too short for estimation
    # but the no-estimation strategy tolerates any window length
    _small_config(n=9, strategies=(6,)).validate()


def test_scenario_registry():
    assert sim.SCENARIOS == ("t5", "capm", "ccc_garch", "varma")
