"""Rolling forecasts, AN-RFMSE and blow-up detection.

Both metrics average over forecast steps ``1..n``; the shared initial state
is excluded.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError
from .nn import ModelCheckpoint
from .plant import N_STATES, Trajectory

BLOWUP_THRESHOLD = 3.0
DEFAULT_HORIZONS = (100, 2000, 5000)


@dataclasses.dataclass
class Forecast:
    states: np.ndarray  # (k+1, 8); k < n only when the rollout diverged
    trajectory_id: str
    model_id: str
    h: float
    n: int
    divergence_step: int | None = None

    @property
    def diverged(self) -> bool:
        return self.divergence_step is not None


@dataclasses.dataclass
class ForecastMetrics:
    trajectory_id: str
    horizons: tuple[int, ...]
    an_rfmse: dict  # horizon -> float, or None when that horizon blew up
    blowup: dict  # horizon -> bool
    blowup_step: dict  # horizon -> first exceeding step or None
    divergence_step: int | None = None


def rolling_forecast(model, x0, inputs, n: int, h: float, trajectory_id: str = "",
                     model_id: str = "") -> Forecast:
    """Open-loop forward-Euler forecast ``x_{k+1} = x_k + h f(x_k, u_k)``.

    ``model`` is a :class:`ModelCheckpoint` (evaluated in the compiled
    kernel) or a callable ``model(x, u, k)`` returning the derivative in
    physical units.
    """
    inputs = np.asarray(inputs, dtype=float)
    if n < 0 or inputs.shape[0] < n:
        raise ValueError(f"need at least {n} inputs, got {inputs.shape[0]}")
    x0 = np.asarray(x0, dtype=float)
    if isinstance(model, ModelCheckpoint):
        states, div = model.rollout(x0, inputs, n, h)
        div = None if div < 0 else int(div)
    else:
        states = np.empty((n + 1, N_STATES))
        states[0] = x0
        x = x0
        div = None
        with np.errstate(all="ignore"):
            for k in range(n):
                x = x + h * np.asarray(model(x, inputs[k], k), dtype=float)
                if not np.all(np.isfinite(x)):
                    div = k + 1
                    states = states[:k + 1].copy()
                    break
                states[k + 1] = x
    return Forecast(states, trajectory_id, model_id, float(h), int(n), div)


def _check_stds(stds):
    stds = np.asarray(stds, dtype=float)
    if not np.all(stds > 0):
        raise ConfigError("standard deviations must be positive")
    return stds


def _normalized_errors(pred, truth, stds, n):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if n < 1 or pred.shape[0] < n + 1 or truth.shape[0] < n + 1:
        raise ValueError(f"horizon {n} exceeds available steps")
    return (pred[1:n + 1] - truth[1:n + 1]) / _check_stds(stds)


def an_rfmse(pred, truth, stds, n: int) -> float:
    """Average over states of the mean squared normalized error over steps 1..n."""
    if isinstance(pred, Forecast):
        pred = pred.states
    e = _normalized_errors(pred, truth, stds, n)
    return float(np.mean(np.mean(e * e, axis=0)))


def detect_blowup(pred, truth, stds, n: int, divergence_step=None):
    """Return ``(blew_up, first_step)``.

    A forecast blows up when the state-averaged normalized absolute error
    exceeds 3 at any step in 1..n, or when it turned nonfinite at or before n.
    """
    if isinstance(pred, Forecast):
        divergence_step = pred.divergence_step
        pred = pred.states
    stds = _check_stds(stds)
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    avail = min(n, pred.shape[0] - 1)
    if avail >= 1:
        e = np.abs(pred[1:avail + 1] - truth[1:avail + 1]) / stds
        score = e.mean(axis=1)
        over = np.flatnonzero(score > BLOWUP_THRESHOLD)
        if over.size:
            return True, int(over[0]) + 1
    if divergence_step is not None and divergence_step <= n:
        return True, int(divergence_step)
    if avail < n and divergence_step is None:
        raise ValueError(f"horizon {n} exceeds forecast length")
    return False, None


def evaluate_model(checkpoint, test: list[Trajectory], horizons=DEFAULT_HORIZONS,
                   stds=None, model_id: str = "") -> list[ForecastMetrics]:
    """Forecast every test trajectory once to the longest horizon and score it.

    AN-RFMSE is reported only for horizons that did not blow up.
    """
    if not test:
        raise ValueError("empty test set")
    horizons = tuple(sorted(int(h) for h in horizons))
    if stds is None:
        stds = checkpoint.normalizer.state_std
    n_max = horizons[-1]
    out = []
    for traj in test:
        if traj.steps < n_max:
            raise ValueError(f"trajectory {traj.id} has {traj.steps} steps, "
                             f"horizon {n_max} requested")
        fc = rolling_forecast(checkpoint, traj.states[0], traj.inputs, n_max, traj.h,
                              traj.id, model_id)
        acc, flag, first = {}, {}, {}
        for n in horizons:
            blew, step = detect_blowup(fc, traj.states, stds, n)
            flag[n] = blew
            first[n] = step
            acc[n] = None if blew else an_rfmse(fc.states, traj.states, stds, n)
        out.append(ForecastMetrics(traj.id, horizons, acc, flag, first, fc.divergence_step))
    return out
