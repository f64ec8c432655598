"""Tests for the backtest engine.

Covers:
- schedule construction and span arithmetic
- the five weight statistics, turnover and wealth compounding
- holding semantics: weights lag one window, tails are held, nothing
  is evaluated before the first rebalance
- drift mode, external weights, ruin handling and input validation
"""

import numpy as np
import pytest

from gmvshrink.backtest import (
    RebalanceSchedule,
    performance_measures,
    run_backtest,
    turnover,
    wealth_and_drawdown,
)
from gmvshrink.core import (
    DegenerateInputError,
    DimensionError,
    InsufficientSampleError,
)


def _daily_returns(p, days, seed, scale=0.01):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((p, days))


# ---------------------------------------------------------------------------
# RebalanceSchedule
# ---------------------------------------------------------------------------


def test_schedule_uniform_and_spans():
    schedule = RebalanceSchedule.uniform(10, 3)
    assert schedule.window_lengths == (10, 10, 10)
    assert schedule.period_count == 3
    assert schedule.total_observations == 30
    assert schedule.spans() == [(0, 10), (10, 20), (20, 30)]


def test_schedule_mixed_lengths():
    schedule = RebalanceSchedule((5, 12, 3))
    assert schedule.spans() == [(0, 5), (5, 17), (17, 20)]


def test_schedule_validation():
    with pytest.raises(ValueError):
        RebalanceSchedule(())
    with pytest.raises(ValueError):
        RebalanceSchedule((10, 0))
    with pytest.raises(ValueError):
        RebalanceSchedule.uniform(10, 0)


# ---------------------------------------------------------------------------
# weight statistics
# ---------------------------------------------------------------------------


def test_weight_stats_long_only_portfolio():
    stats = performance_measures([np.array([0.5, 0.5])])
    assert stats.mean_abs_weight == 0.5
    assert stats.max_weight == 0.5
    assert stats.min_weight == 0.5
    assert stats.sum_negative == 0.0
    assert stats.frac_negative == 0.0


def test_weight_stats_with_short_position():
    stats = performance_measures([np.array([1.5, -0.5])])
    assert stats.mean_abs_weight == pytest.approx(1.0)
    assert stats.max_weight == 1.5
    assert stats.min_weight == -0.5
    assert stats.sum_negative == pytest.approx(-0.5)
    assert stats.frac_negative == 0.5


def test_weight_stats_average_over_periods():
    history = [np.array([1.5, -0.5]), np.array([0.5, 0.5])]
    stats = performance_measures(history)
    assert stats.mean_abs_weight == pytest.approx(0.75)
    assert stats.max_weight == pytest.approx(1.0)
    assert stats.sum_negative == pytest.approx(-0.25)
    assert stats.frac_negative == pytest.approx(0.25)


def test_weight_stats_equal_weights_large_p():
    stats = performance_measures([np.full(200, 1 / 200)] * 3)
    assert stats.mean_abs_weight == pytest.approx(0.005)


def test_weight_stats_empty_history():
    with pytest.raises(ValueError):
        performance_measures([])


# ---------------------------------------------------------------------------
# turnover
# ---------------------------------------------------------------------------


def test_turnover_static_portfolio_is_zero():
    w = np.array([0.5, 0.5])
    assert turnover([w, w, w], w) == 0.0


def test_turnover_counts_move_into_first_period():
    assert turnover([np.array([0.0, 1.0])], np.array([1.0, 0.0])) == pytest.approx(2.0)


def test_turnover_averages_over_periods():
    history = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    assert turnover(history, np.array([1.0, 0.0])) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# wealth compounding
# ---------------------------------------------------------------------------


def test_wealth_path_and_worst_move():
    summary = wealth_and_drawdown([0.1, -0.1])
    np.testing.assert_allclose(summary.path, (1.0, 1.1, 0.99))
    assert summary.worst_daily_change == pytest.approx(-0.11)
    assert not summary.ruined


def test_wealth_flat_series():
    summary = wealth_and_drawdown([0.0, 0.0, 0.0])
    assert summary.path == (1.0, 1.0, 1.0, 1.0)
    assert summary.worst_daily_change == 0.0


def test_wealth_single_down_day():
    summary = wealth_and_drawdown([-0.05])
    assert summary.path == (1.0, 0.95)
    assert summary.worst_daily_change == pytest.approx(-0.05)


def test_wealth_ruin_truncates_path():
    summary = wealth_and_drawdown([0.5, -1.2, 0.3])
    assert summary.ruined
    np.testing.assert_allclose(summary.path, (1.0, 1.5, -0.3))


def test_wealth_rejects_bad_input():
    with pytest.raises(DegenerateInputError):
        wealth_and_drawdown([0.1, np.nan])
    with pytest.raises(DimensionError):
        wealth_and_drawdown([[0.1, 0.2]])


# ---------------------------------------------------------------------------
# run_backtest: holding semantics
# ---------------------------------------------------------------------------


def test_hold_target_strategy_report_is_exact():
    p = 150
    returns = _daily_returns(p, 40, seed=1)
    schedule = RebalanceSchedule.uniform(10, 4)
    target = np.full(p, 1 / p)
    history, report = run_backtest(returns, 6, schedule, target)
    assert len(history) == 4
    assert report.mean_abs_weight == 1 / p
    assert report.turnover == 0.0
    assert report.frac_negative == 0.0
    assert f"{report.mean_abs_weight:.4f}" == "0.0067"


def test_zero_returns_give_flat_wealth_and_undefined_sharpe():
    p = 4
    returns = np.zeros((p, 30))
    schedule = RebalanceSchedule.uniform(10, 3)
    _, report = run_backtest(returns, 6, schedule, np.full(p, 0.25))
    assert all(v == 1.0 for v in report.wealth_path)
    assert report.volatility == 0.0
    assert report.sharpe == 0.0
    assert not report.sharpe_defined


def test_day_returns_skip_first_window_and_hold_tail():
    """Weights lag one window and the last weights cover trailing days."""
    p = 4
    schedule = RebalanceSchedule.uniform(10, 3)
    returns = _daily_returns(p, 35, seed=2)  # 5 tail days beyond the windows
    target = np.full(p, 0.25)
    history, report = run_backtest(returns, 5, schedule, target)
    # days evaluated: windows 2..3 plus the tail = 35 - 10
    assert len(report.wealth_path) == 1 + 35 - 10

    day_returns = []
    for i, (start, end) in enumerate(schedule.spans()[1:]):
        for t in range(start, end):
            day_returns.append(history[i] @ returns[:, t])
    for t in range(30, 35):
        day_returns.append(history[-1] @ returns[:, t])
    day_returns = np.asarray(day_returns)
    assert report.mean_return == pytest.approx(day_returns.mean(), rel=1e-12)
    assert report.volatility == pytest.approx(day_returns.std(ddof=1), rel=1e-12)
    assert report.sharpe == pytest.approx(
        day_returns.mean() / day_returns.std(ddof=1), rel=1e-12
    )


def test_first_period_weights_agree_between_strategies_one_and_two():
    p = 6
    returns = _daily_returns(p, 40, seed=3)
    schedule = RebalanceSchedule.uniform(20, 2)
    target = np.full(p, 1 / 6)
    history1, _ = run_backtest(returns, 1, schedule, target)
    history2, _ = run_backtest(returns, 2, schedule, target)
    np.testing.assert_array_equal(history1[0], history2[0])


def test_drift_mode_lets_holdings_ride():
    returns = np.array(
        [
            [0.0, 0.0, 0.1, 0.1],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    schedule = RebalanceSchedule.uniform(2, 2)
    target = np.array([0.5, 0.5])
    external = [np.array([0.5, 0.5]), np.array([0.5, 0.5])]
    _, fixed = run_backtest(
        returns, "external", schedule, target, external_weights=external
    )
    _, drift = run_backtest(
        returns, "external", schedule, target, drift=True, external_weights=external
    )
    np.testing.assert_allclose(np.diff(fixed.wealth_path) / fixed.wealth_path[:-1], [0.05, 0.05])
    expected_second = (0.55 / 1.05) * 0.1
    np.testing.assert_allclose(
        np.diff(drift.wealth_path) / drift.wealth_path[:-1], [0.05, expected_second]
    )


def test_ruin_truncates_moments():
    returns = np.array([[0.5, 0.3, -1.2, 0.1]])
    schedule = RebalanceSchedule((1, 3))
    target = np.array([1.0])
    _, report = run_backtest(returns, "external", schedule, target,
                             external_weights=[target, target])
    assert report.ruined
    # only the two days up to the wipe-out enter the moments
    assert report.mean_return == pytest.approx(np.mean([0.3, -1.2]))
    assert len(report.wealth_path) == 3
    np.testing.assert_allclose(report.wealth_path, (1.0, 1.3, 1.3 * -0.2))


# ---------------------------------------------------------------------------
# run_backtest: external weights and validation
# ---------------------------------------------------------------------------


def test_external_weights_reproduce_strategy_run():
    p = 4
    returns = _daily_returns(p, 30, seed=5)
    schedule = RebalanceSchedule.uniform(10, 3)
    target = np.full(p, 0.25)
    history, report = run_backtest(returns, 5, schedule, target)
    replay_history, replay_report = run_backtest(
        returns, "external", schedule, target, external_weights=history
    )
    assert report == replay_report
    for got, expected in zip(replay_history, history):
        np.testing.assert_array_equal(got, expected)


def test_external_weight_count_must_match_periods():
    p = 3
    returns = _daily_returns(p, 20, seed=7)
    schedule = RebalanceSchedule.uniform(10, 2)
    with pytest.raises(DimensionError):
        run_backtest(returns, "external", schedule, np.full(p, 1 / 3),
                     external_weights=[np.full(p, 1 / 3)])


def test_external_strategy_needs_weights():
    p = 3
    returns = _daily_returns(p, 20, seed=7)
    schedule = RebalanceSchedule.uniform(10, 2)
    with pytest.raises(ValueError):
        run_backtest(returns, "external", schedule, np.full(p, 1 / 3))


def test_numbered_strategy_rejects_external_weights():
    p = 3
    returns = _daily_returns(p, 20, seed=7)
    schedule = RebalanceSchedule.uniform(10, 2)
    with pytest.raises(ValueError):
        run_backtest(returns, 6, schedule, np.full(p, 1 / 3),
                     external_weights=[np.full(p, 1 / 3)] * 2)


def test_unknown_strategy_identifier():
    returns = _daily_returns(2, 10, seed=7)
    with pytest.raises(ValueError):
        run_backtest(returns, 9, RebalanceSchedule((5,)), np.array([0.5, 0.5]))


def test_window_size_preconditions():
    p = 10
    returns = _daily_returns(p, 33, seed=11)
    target = np.full(p, 0.1)
    with pytest.raises(InsufficientSampleError):
        run_backtest(returns, 1, RebalanceSchedule.uniform(11, 3), target)
    # extending windows only constrain the first window
    run_backtest(returns, 2, RebalanceSchedule((23, 5, 5)), target)
    with pytest.raises(InsufficientSampleError):
        run_backtest(returns, 2, RebalanceSchedule((11, 11, 11)), target)
    # the hold-the-target strategy is exempt
    run_backtest(returns, 6, RebalanceSchedule.uniform(11, 3), target)


def test_non_finite_returns_rejected():
    returns = _daily_returns(3, 20, seed=13)
    returns[1, 4] = np.nan
    with pytest.raises(DegenerateInputError):
        run_backtest(returns, 6, RebalanceSchedule.uniform(10, 2), np.full(3, 1 / 3))


def test_series_shorter_than_schedule_rejected():
    returns = _daily_returns(3, 19, seed=13)
    with pytest.raises(InsufficientSampleError):
        run_backtest(returns, 6, RebalanceSchedule.uniform(10, 2), np.full(3, 1 / 3))


# ---------------------------------------------------------------------------
# report invariants on random data
# ---------------------------------------------------------------------------


def test_report_invariants_across_seeds():
    p = 5
    schedule = RebalanceSchedule.uniform(20, 3)
    target = np.full(p, 0.2)
    for seed in range(5):
        returns = _daily_returns(p, 60, seed=seed)
        _, report = run_backtest(returns, 7, schedule, target)
        assert 0.0 <= report.frac_negative <= 1.0
        assert report.sum_negative <= 0.0
        assert report.min_weight <= report.max_weight
        assert report.turnover >= 0.0
        assert report.wealth_path[0] == 1.0
        assert not report.ruined
