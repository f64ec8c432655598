"""Dynamic shrinkage of minimum-variance weights over non-overlapping windows.

Each rebalancing period contributes a fresh estimation window. The holding
portfolio is pulled toward that window's sample minimum-variance portfolio
with an intensity chosen to minimize the limiting relative loss, and the
loss itself advances through a scalar recursion that depends on the data
only through the initial target loss.

Three initializations are supported:

``fixed``
    The target is a deterministic weight vector; its loss is estimated once
    from the first window and the scalar recursion never revisits it.
``replay``
    The target loss is re-estimated each period from the pooled sample of
    all windows so far, and the scalar recursion is replayed from period
    one before computing the current intensity.
``prior-sample``
    The target is the sample minimum-variance portfolio of a prior window
    of size ``n0``; its limiting loss ``p / (n0 - p)`` is known exactly, so
    the whole intensity schedule is deterministic given the window sizes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    DimensionError,
    InsufficientSampleError,
    PooledStats,
    as_returns_block,
    as_weight_vector,
    estimate_target_loss_from_cov,
    gmv_weights,
    sample_gmv_weights,
    sample_moments,
)

logger = logging.getLogger(__name__)

MODES = ("fixed", "replay", "prior-sample")


def optimal_intensity(c, prev_loss):
    """Limiting optimal shrinkage intensity for one fresh window.

    Parameters
    ----------
    c : float
        Concentration ratio ``p / n`` of the window, in ``(0, 1)``.
    prev_loss : float
        Relative loss of the holding portfolio entering the period.

    Returns
    -------
    float
        ``(1 - c) r / ((1 - c) r + c)``, a value in ``[0, 1)``.
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"concentration must lie in (0, 1), got {c}")
    if prev_loss < 0.0:
        raise ValueError(f"relative loss must be nonnegative, got {prev_loss}")
    return (1.0 - c) * prev_loss / ((1.0 - c) * prev_loss + c)


def feasible_intensity(n_obs, n_assets, prev_loss):
    """Finite-sample intensity ``(n - p) r / ((n - p) r + p)``.

    This is the plug-in counterpart of :func:`optimal_intensity` used by the
    estimation pipeline; the two agree when ``c = p / n`` exactly.
    """
    if n_obs <= n_assets:
        raise InsufficientSampleError(
            f"feasible intensity needs n > p, got n={n_obs}, p={n_assets}"
        )
    if prev_loss < 0.0:
        raise ValueError(f"relative loss must be nonnegative, got {prev_loss}")
    return (n_obs - n_assets) * prev_loss / ((n_obs - n_assets) * prev_loss + n_assets)


def next_loss(intensity, c, prev_loss):
    """Advance the relative loss one period.

    Returns ``psi^2 c/(1-c) + (1-psi)^2 r``. With the optimal intensity this
    satisfies the harmonic identity ``1/r_i = 1/r_{i-1} + (1-c)/c``.
    """
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity must lie in [0, 1], got {intensity}")
    if not 0.0 < c < 1.0:
        raise ValueError(f"concentration must lie in (0, 1), got {c}")
    if prev_loss < 0.0:
        raise ValueError(f"relative loss must be nonnegative, got {prev_loss}")
    return intensity * intensity * c / (1.0 - c) + (1.0 - intensity) ** 2 * prev_loss


def replay_intensities(initial_loss, sample_sizes, n_assets):
    """Run the scalar recursion over a sequence of window sizes.

    Returns the per-period feasible intensities and advanced losses produced
    by starting from ``initial_loss`` and consuming windows of the given
    sizes. Pure scalar arithmetic; used by the replay mode, by deterministic
    schedules and by tests.
    """
    intensities = []
    losses = []
    loss = float(initial_loss)
    for n in sample_sizes:
        psi = feasible_intensity(n, n_assets, loss)
        loss = next_loss(psi, n_assets / n, loss)
        intensities.append(psi)
        losses.append(loss)
    return intensities, losses


class PeriodRecord(NamedTuple):
    """Per-period trace: window size, applied intensity, advanced loss."""

    n_obs: int
    intensity: float
    loss: float


@dataclass(frozen=True)
class NonOverlapState:
    """State of the non-overlapping shrinkage pipeline after ``period`` steps.

    ``history`` stores one :class:`PeriodRecord` per consumed window. In
    replay mode ``pooled`` carries the running sufficient statistics,
    ``initial_loss_history`` the target-loss estimate used at each period and
    ``sample_weights`` the per-window sample portfolios, which together allow
    bit-for-bit reconstruction of the recursion and the holding weights.
    """

    n_assets: int
    mode: str
    target: np.ndarray
    weights: np.ndarray
    loss: float
    initial_loss: float
    period: int = 0
    history: tuple = ()
    pooled: PooledStats | None = None
    initial_loss_history: tuple = ()
    sample_weights: tuple = ()

    @property
    def intensities(self):
        return tuple(rec.intensity for rec in self.history)


def init(target, first_block=None, mode="fixed"):
    """Create a shrinkage state and, if a block is given, take the first step.

    Parameters
    ----------
    target : array_like
        The target weight vector in ``fixed`` and ``replay`` modes; in
        ``prior-sample`` mode, the prior returns block (``p x n0`` with
        ``n0 > p + 1``) whose sample minimum-variance portfolio becomes the
        target.
    first_block : array_like, optional
        First estimation window. When omitted the state holds the pure
        target portfolio and the first call to :func:`step` consumes the
        first window.
    mode : {"fixed", "replay", "prior-sample"}
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")

    if mode == "prior-sample":
        prior = as_returns_block(target)
        p, n0 = prior.shape
        if n0 <= p + 1:
            raise InsufficientSampleError(
                f"prior-sample mode needs n0 > p + 1, got p={p}, n0={n0}"
            )
        target_weights = sample_gmv_weights(prior)
        initial_loss = p / (n0 - p)
    else:
        target_weights = as_weight_vector(target)
        p = target_weights.shape[0]
        initial_loss = float("nan")  # estimated from the first window

    state = NonOverlapState(
        n_assets=p,
        mode=mode,
        target=target_weights,
        weights=target_weights,
        loss=initial_loss,
        initial_loss=initial_loss,
        pooled=PooledStats(p) if mode == "replay" else None,
    )
    if first_block is None:
        return state
    return step(state, first_block)


def step(state, block):
    """Consume one estimation window and return the advanced state."""
    block = as_returns_block(block)
    p, n = block.shape
    if p != state.n_assets:
        raise DimensionError(
            f"block has p={p} assets, state expects {state.n_assets}"
        )
    if n <= p + 1:
        raise InsufficientSampleError(
            f"non-overlapping windows need n > p + 1, got p={p}, n={n}"
        )

    _, cov = sample_moments(block)
    sample_weights = gmv_weights(cov, n_obs=n)

    pooled = state.pooled
    initial_loss = state.initial_loss
    initial_loss_history = state.initial_loss_history
    stored_samples = state.sample_weights

    if state.mode == "replay":
        pooled = pooled.updated(block)
        # Re-estimate the target loss from everything seen so far, then
        # replay the scalar recursion from period one.
        start_loss = estimate_target_loss_from_cov(
            pooled.cov(), pooled.count, state.target
        )
        if state.period == 0:
            initial_loss = start_loss
        past_sizes = [rec.n_obs for rec in state.history]
        _, replayed = replay_intensities(start_loss, past_sizes, p)
        prev_loss = replayed[-1] if replayed else start_loss
        initial_loss_history = initial_loss_history + (start_loss,)
        stored_samples = stored_samples + (sample_weights,)
    elif state.period == 0 and state.mode == "fixed":
        initial_loss = estimate_target_loss_from_cov(cov, n, state.target)
        prev_loss = initial_loss
    else:
        prev_loss = state.loss

    psi = feasible_intensity(n, p, prev_loss)
    if not 0.0 <= psi <= 1.0:  # only reachable through a negative loss estimate
        logger.warning("intensity %.6g outside [0, 1], clamping", psi)
        psi = min(1.0, max(0.0, psi))

    new_weights = psi * sample_weights + (1.0 - psi) * state.weights
    new_loss = next_loss(psi, p / n, prev_loss)

    return NonOverlapState(
        n_assets=p,
        mode=state.mode,
        target=state.target,
        weights=new_weights,
        loss=new_loss,
        initial_loss=initial_loss,
        period=state.period + 1,
        history=state.history + (PeriodRecord(n, psi, new_loss),),
        pooled=pooled,
        initial_loss_history=initial_loss_history,
        sample_weights=stored_samples,
    )
