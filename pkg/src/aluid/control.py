"""Excitation inputs: a clamped proportional controller plus APRBS perturbations.

The controller acts on the tracked vector ``[x1, c_x2, c_x3, x4, x5, x6, x7, x8]``
(Al2O3 and AlF3 enter as mass ratios). With the default gains u1 tracks c_x2,
u3 tracks c_x3 and u4 tracks x5; u2 and u5 sit at their nominal values and are
moved only by the perturbation signal.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from . import kernels
from .errors import ConfigError
from .plant import N_INPUTS, N_STATES, ControlInput

NONNEGATIVE_CHANNELS = (0, 2, 3)


def _default_gains():
    g = np.zeros((N_INPUTS, N_STATES))
    g[0, 1] = 4.4        # u1 <- c_x2 error, kg/s per unit ratio
    g[2, 2] = 2.2        # u3 <- c_x3 error
    g[3, 4] = -1.4e-4    # u4 <- x5 error, tap harder when metal is high
    return g


@dataclasses.dataclass
class ControllerConfig:
    setpoints: np.ndarray = dataclasses.field(default_factory=lambda: np.array(
        [3260.0, 0.035, 0.11, 13750.0, 10075.0, 965.0, 820.0, 582.5]))
    gains: np.ndarray = dataclasses.field(default_factory=_default_gains)
    nominal: np.ndarray = dataclasses.field(default_factory=lambda: np.array(
        [0.02625, 150.0, 0.000525, 0.01389, 5.0]))
    input_bounds: np.ndarray = dataclasses.field(default_factory=lambda: np.array(
        [[0.0, 0.15], [130.0, 170.0], [0.0, 0.05], [0.0, 0.1], [4.5, 5.5]]))

    def __post_init__(self):
        self.setpoints = np.asarray(self.setpoints, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        self.nominal = np.asarray(self.nominal, dtype=float)
        self.input_bounds = np.asarray(self.input_bounds, dtype=float)
        if self.setpoints.shape != (N_STATES,):
            raise ConfigError("setpoints must have 8 entries")
        if self.gains.shape != (N_INPUTS, N_STATES):
            raise ConfigError("gains must be a 5x8 matrix")
        if self.nominal.shape != (N_INPUTS,):
            raise ConfigError("nominal input must have 5 entries")
        if self.input_bounds.shape != (N_INPUTS, 2):
            raise ConfigError("input_bounds must be 5 [min, max] pairs")
        for name in ("setpoints", "gains", "nominal", "input_bounds"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"controller {name} must be finite")
        if np.any(self.input_bounds[:, 0] > self.input_bounds[:, 1]):
            raise ConfigError("input bound min exceeds max")

    @property
    def lo(self):
        return np.ascontiguousarray(self.input_bounds[:, 0])

    @property
    def hi(self):
        return np.ascontiguousarray(self.input_bounds[:, 1])

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("setpoints", "gains", "nominal", "input_bounds")}

    @classmethod
    def from_dict(cls, d):
        known = {"setpoints", "gains", "nominal", "input_bounds"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown controller keys {sorted(extra)}")
        return cls(**d)


@dataclasses.dataclass
class AprbsConfig:
    amplitudes: np.ndarray = dataclasses.field(default_factory=lambda: np.array(
        [[-0.02, 0.02], [-15.0, 15.0], [-0.004, 0.004], [-0.02, 0.02], [-0.4, 0.4]]))
    hold: tuple[int, int] = (50, 500)
    seed: int = 0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if self.amplitudes.shape != (N_INPUTS, 2):
            raise ConfigError("APRBS amplitudes must be 5 [low, high] pairs")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ConfigError("APRBS amplitudes must be finite")
        if np.any(self.amplitudes[:, 0] > self.amplitudes[:, 1]):
            raise ConfigError("empty APRBS amplitude interval")
        t_min, t_max = self.hold
        if int(t_min) != t_min or int(t_max) != t_max or t_min < 1 or t_max < t_min:
            raise ConfigError(f"invalid hold interval {self.hold}")
        self.hold = (int(t_min), int(t_max))

    def to_dict(self):
        return {"amplitudes": self.amplitudes.tolist(), "hold": list(self.hold),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        extra = set(d) - {"amplitudes", "hold", "seed"}
        if extra:
            raise ConfigError(f"unknown APRBS keys {sorted(extra)}")
        d = dict(d)
        if "hold" in d:
            d["hold"] = tuple(d["hold"])
        return cls(**d)


@dataclasses.dataclass
class AprbsSignal:
    """Piecewise-constant perturbation; ``segments[c]`` lists (length, amplitude)."""

    segments: list[list[tuple[int, float]]]
    values: np.ndarray  # (steps, 5)

    def __len__(self):
        return self.values.shape[0]


def _tileable(m, t_min, t_max):
    # m splits into j parts of length in [t_min, t_max] iff j*t_min <= m <= j*t_max
    if m == 0:
        return True
    j = -(-m // t_max)
    return j * t_min <= m


def _hold_lengths(rng, steps, t_min, t_max):
    if steps < t_min:
        return [steps]
    exact = _tileable(steps, t_min, t_max)
    lengths = []
    remaining = steps
    while remaining > 0:
        hi = min(t_max, remaining)
        if hi < t_min:
            lengths.append(remaining)  # only reachable for non-tileable horizons
            break
        choices = np.arange(t_min, hi + 1)
        if exact:
            choices = choices[[_tileable(remaining - t, t_min, t_max) for t in choices]]
        t = int(choices[rng.integers(choices.size)])
        lengths.append(t)
        remaining -= t
    return lengths


def aprbs_signal(cfg: AprbsConfig, steps: int) -> AprbsSignal:
    """Draw an amplitude-modulated pseudo-random sequence of ``steps`` samples.

    Each channel has its own RNG stream spawned from ``cfg.seed``. Hold
    lengths are uniform in ``cfg.hold`` restricted to values that still allow
    the remaining horizon to be tiled exactly. If the horizon is shorter than
    ``T_min`` a single segment spans it.
    """
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    steps = int(steps)
    t_min, t_max = cfg.hold
    children = np.random.SeedSequence(cfg.seed).spawn(N_INPUTS)
    values = np.empty((steps, N_INPUTS))
    segments = []
    for c in range(N_INPUTS):
        rng = np.random.default_rng(children[c])
        lo, hi = cfg.amplitudes[c]
        segs = []
        k = 0
        for length in _hold_lengths(rng, steps, t_min, t_max):
            a = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
            values[k:k + length, c] = a
            segs.append((length, a))
            k += length
        segments.append(segs)
    return AprbsSignal(segments=segments, values=values)


def proportional_control(state, cfg: ControllerConfig) -> ControlInput:
    return ControlInput(*kernels.control_law(
        np.asarray(state, dtype=float), cfg.nominal, cfg.gains, cfg.setpoints,
        cfg.lo, cfg.hi, None))


def stochastic_policy(state, step_index: int, ctrl: ControllerConfig,
                      signal: AprbsSignal) -> ControlInput:
    if not 0 <= step_index < len(signal):
        raise IndexError(f"step {step_index} outside signal of length {len(signal)}")
    u = proportional_control(state, ctrl)
    return ControlInput(*kernels.perturb_input(
        np.asarray(u), signal.values[step_index], ctrl.lo, ctrl.hi))


class StochasticPolicy:
    """Callable wrapper that :func:`aluid.plant.simulate` runs inside the kernel."""

    def __init__(self, ctrl: ControllerConfig, signal: AprbsSignal):
        self.ctrl = ctrl
        self.signal = signal

    def __call__(self, state, k):
        return np.asarray(stochastic_policy(state, k, self.ctrl, self.signal))

    def closed_loop_arrays(self, steps):
        if steps > len(self.signal):
            raise IndexError(f"signal of length {len(self.signal)} cannot drive {steps} steps")
        c = self.ctrl
        return (np.ascontiguousarray(self.signal.values[:steps]), c.nominal,
                np.ascontiguousarray(c.gains), c.setpoints, c.lo, c.hi)
