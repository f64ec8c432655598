"""Rebalancing backtest engine and performance measurement.

Applies one portfolio strategy to a long return series on a schedule of
estimation windows. At the end of every window the strategy is fitted on
the data seen so far and the resulting target weights are recorded; those
weights are then held over the following window (and over any leftover
days after the last window). Daily portfolio returns, the compounded
wealth path and a set of weight statistics are collected into a single
report.

Within a holding period the default accounting applies the recorded
weights to each daily return vector. A drift mode is available in which
holdings evolve with prices between rebalances, so the weight on an asset
grows when the asset outperforms the portfolio.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    DegenerateInputError,
    DimensionError,
    InsufficientSampleError,
    as_returns_block,
    as_weight_vector,
)
from .strategies import STRATEGY_IDS, strategy_weights

logger = logging.getLogger(__name__)

#: strategy slot value selecting externally supplied per-period weights
EXTERNAL_STRATEGY = "external"


@dataclass(frozen=True)
class RebalanceSchedule:
    """Partition of a return series into consecutive estimation windows."""

    window_lengths: tuple

    def __post_init__(self):
        lengths = tuple(int(n) for n in self.window_lengths)
        if not lengths:
            raise ValueError("schedule needs at least one window")
        if any(n < 1 for n in lengths):
            raise ValueError(f"window lengths must be positive, got {lengths}")
        object.__setattr__(self, "window_lengths", lengths)

    @classmethod
    def uniform(cls, window_length, period_count):
        """``period_count`` windows of ``window_length`` days each."""
        if period_count < 1:
            raise ValueError(f"need at least one period, got {period_count}")
        return cls((window_length,) * period_count)

    @property
    def period_count(self):
        return len(self.window_lengths)

    @property
    def total_observations(self):
        return sum(self.window_lengths)

    def spans(self):
        """(start, end) column index pairs, end exclusive, one per window."""
        edges = np.cumsum((0,) + self.window_lengths)
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


class WeightStats(NamedTuple):
    """The five displayed weight statistics, averaged over periods."""

    mean_abs_weight: float
    max_weight: float
    min_weight: float
    sum_negative: float
    frac_negative: float


class WealthSummary(NamedTuple):
    """Compounded wealth path with its worst one-day move."""

    path: tuple
    worst_daily_change: float
    ruined: bool


@dataclass(frozen=True)
class PerfReport:
    """Everything the backtest reports about one strategy run."""

    mean_abs_weight: float
    max_weight: float
    min_weight: float
    sum_negative: float
    frac_negative: float
    mean_return: float
    volatility: float
    sharpe: float
    sharpe_defined: bool
    turnover: float
    wealth_path: tuple
    worst_daily_change: float
    ruined: bool


def performance_measures(weights_history):
    """Weight statistics of a history of ``T`` recorded weight vectors.

    All five are plain averages: absolute weights and the negative-weight
    frequency average over periods and assets, the largest, smallest and
    summed-negative weights average over periods only.
    """
    if len(weights_history) == 0:
        raise ValueError("empty weights history")
    stacked = np.vstack([as_weight_vector(w) for w in weights_history])
    negative = stacked < 0.0
    return WeightStats(
        mean_abs_weight=float(np.abs(stacked).mean()),
        max_weight=float(stacked.max(axis=1).mean()),
        min_weight=float(stacked.min(axis=1).mean()),
        sum_negative=float(stacked[negative].sum() / stacked.shape[0]),
        frac_negative=float(negative.mean()),
    )


def turnover(weights_history, initial):
    """Average l1 move per rebalance, counting the move into period 1.

    ``initial`` is the portfolio held before the first rebalance, so a
    strategy that never leaves it has turnover exactly 0.
    """
    if len(weights_history) == 0:
        raise ValueError("empty weights history")
    previous = as_weight_vector(initial)
    total = 0.0
    for weights in weights_history:
        weights = as_weight_vector(weights, n_assets=previous.shape[0])
        total += float(np.abs(weights - previous).sum())
        previous = weights
    return total / len(weights_history)


def wealth_and_drawdown(daily_returns):
    """Compound a daily return series into a wealth path starting at 1.

    A day with return at or below -100 percent wipes the portfolio out;
    the path is truncated at that day and flagged as ruined. The worst
    daily change is the most negative one-day difference in wealth.
    """
    daily_returns = np.asarray(daily_returns, dtype=float)
    if daily_returns.ndim != 1:
        raise DimensionError(f"expected a 1-d return series, got shape {daily_returns.shape}")
    if not np.all(np.isfinite(daily_returns)):
        raise DegenerateInputError("daily returns contain non-finite values")
    path = [1.0]
    ruined = False
    for r in daily_returns:
        path.append(path[-1] * (1.0 + r))
        if r <= -1.0:
            ruined = True
            logger.warning("portfolio ruined: daily return %.6g wiped out wealth", r)
            break
    changes = np.diff(path)
    worst = float(changes.min()) if changes.size else 0.0
    return WealthSummary(path=tuple(path), worst_daily_change=worst, ruined=ruined)


def _holding_day_returns(returns, weights_history, schedule, drift):
    """Daily portfolio returns over the evaluation span.

    The weights recorded at rebalance ``i`` apply to window ``i+1``; the
    last recorded weights also cover any days beyond the final window.
    Nothing is evaluated during the first window, before any weights
    exist. In drift mode the holdings evolve with prices within each
    span, restarting from the recorded weights at each rebalance.
    """
    spans = schedule.spans()
    total_days = returns.shape[1]
    holding_spans = []
    for i in range(len(spans) - 1):
        holding_spans.append((weights_history[i],) + spans[i + 1])
    if total_days > schedule.total_observations:
        holding_spans.append(
            (weights_history[-1], schedule.total_observations, total_days)
        )

    day_returns = []
    for weights, start, end in holding_spans:
        held = np.asarray(weights, dtype=float).copy()
        for t in range(start, end):
            y = returns[:, t]
            r = float(held @ y)
            day_returns.append(r)
            if drift:
                if 1.0 + r <= 0.0:
                    return np.asarray(day_returns)  # ruin: holdings are gone
                held = held * (1.0 + y) / (1.0 + r)
    return np.asarray(day_returns)


def run_backtest(
    returns,
    strategy,
    schedule,
    target,
    drift=False,
    external_weights=None,
):
    """Backtest one strategy over a scheduled return series.

    Parameters
    ----------
    returns : array_like
        Full return series, assets in rows and days in columns. Must
        cover at least the scheduled windows; extra trailing days are
        held with the final weights.
    strategy : int or str
        A strategy id from 1 to 7, or ``"external"`` to replay the
        per-period weight vectors given in ``external_weights``.
    schedule : RebalanceSchedule
    target : array_like
        Shrinkage target and pre-backtest holding, used as the baseline
        of the first turnover move.
    drift : bool
        Let holdings evolve with prices within each holding period
        instead of applying the recorded weights to every day.
    external_weights : sequence of array_like, optional
        One weight vector per period, required exactly when
        ``strategy == "external"``.

    Returns
    -------
    (list of per-period weight vectors, PerfReport)
    """
    returns = as_returns_block(returns, min_assets=1, min_obs=1)
    p, total_days = returns.shape
    target = as_weight_vector(target, n_assets=p)
    if total_days < schedule.total_observations:
        raise InsufficientSampleError(
            f"series has {total_days} observations, schedule needs "
            f"{schedule.total_observations}"
        )

    if strategy == EXTERNAL_STRATEGY:
        if external_weights is None:
            raise ValueError("strategy 'external' needs external_weights")
        if len(external_weights) != schedule.period_count:
            raise DimensionError(
                f"got {len(external_weights)} external weight vectors for "
                f"{schedule.period_count} periods"
            )
        history = [as_weight_vector(w, n_assets=p) for w in external_weights]
    elif strategy in STRATEGY_IDS:
        if external_weights is not None:
            raise ValueError("external_weights only apply to strategy 'external'")
        _check_window_sizes(strategy, schedule, p)
        blocks = [returns[:, a:b] for a, b in schedule.spans()]
        history = strategy_weights(blocks, strategy, target)
    else:
        raise ValueError(
            f"unknown strategy {strategy!r}, expected an id in {STRATEGY_IDS} "
            f"or {EXTERNAL_STRATEGY!r}"
        )

    stats = performance_measures(history)
    move = turnover(history, target)
    day_returns = _holding_day_returns(returns, history, schedule, drift)
    wealth = wealth_and_drawdown(day_returns)
    if wealth.ruined:
        # keep the moments consistent with the truncated wealth path
        day_returns = day_returns[: len(wealth.path) - 1]

    if day_returns.size:
        mean_return = float(day_returns.mean())
        volatility = (
            float(day_returns.std(ddof=1)) if day_returns.size > 1 else 0.0
        )
    else:
        mean_return = 0.0
        volatility = 0.0
    sharpe_defined = volatility > 0.0
    sharpe = mean_return / volatility if sharpe_defined else 0.0

    report = PerfReport(
        mean_abs_weight=stats.mean_abs_weight,
        max_weight=stats.max_weight,
        min_weight=stats.min_weight,
        sum_negative=stats.sum_negative,
        frac_negative=stats.frac_negative,
        mean_return=mean_return,
        volatility=volatility,
        sharpe=sharpe,
        sharpe_defined=sharpe_defined,
        turnover=move,
        wealth_path=wealth.path,
        worst_daily_change=wealth.worst_daily_change,
        ruined=wealth.ruined,
    )
    return history, report


def _check_window_sizes(strategy, schedule, p):
    if strategy in (2, 4):
        if schedule.window_lengths[0] <= p + 1:
            raise InsufficientSampleError(
                f"first window must exceed p + 1 = {p + 1}, got "
                f"{schedule.window_lengths[0]}"
            )
    elif strategy != 6:
        bad = [n for n in schedule.window_lengths if n <= p + 1]
        if bad:
            raise InsufficientSampleError(
                f"every window must exceed p + 1 = {p + 1}, got {bad}"
            )
