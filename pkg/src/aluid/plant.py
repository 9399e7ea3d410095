"""Physics-based model of the electrolysis cell and its fixed-step RK4 integrator.

States and inputs are plain 8- and 5-vectors; :class:`CellState` and
:class:`ControlInput` are named tuples so they can be passed wherever an
array is expected.
"""
from __future__ import annotations

import dataclasses
import json
import math
from importlib import resources
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, IntegrationError

N_STATES = 8
N_INPUTS = 5

STATE_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8")
INPUT_NAMES = ("u1", "u2", "u3", "u4", "u5")
PARAM_NAMES = tuple(f"k{i}" for i in range(19)) + ("alpha", "beta", "c_x2_crit")


class CellState(NamedTuple):
    x1: float  # side-ledge mass, kg
    x2: float  # Al2O3 mass, kg
    x3: float  # AlF3 mass, kg
    x4: float  # cryolite mass, kg
    x5: float  # metal mass, kg
    x6: float  # bath temperature, degC
    x7: float  # side-ledge temperature, degC
    x8: float  # side-wall temperature, degC


class ControlInput(NamedTuple):
    u1: float  # Al2O3 feed, kg/s
    u2: float  # line current, kA
    u3: float  # AlF3 feed, kg/s
    u4: float  # metal tapping, kg/s
    u5: float  # anode-cathode distance, cm


class StateDerivative(NamedTuple):
    dx1: float
    dx2: float
    dx3: float
    dx4: float
    dx5: float
    dx6: float
    dx7: float
    dx8: float


@dataclasses.dataclass(frozen=True)
class BathProperties:
    g1: float  # liquidus temperature, degC
    g2: float  # electrical conductivity
    g3: float  # bubble coverage
    g4: float  # bubble thickness, cm
    g5: float  # bubble voltage, V
    c_x2: float
    c_x3: float


@dataclasses.dataclass(frozen=True)
class PlantParams:
    """Constants of the cell model.

    The shipped defaults are placeholders chosen so that trajectories stay
    bounded with ``x6 > x7 > x8`` over the initial-condition box; they are
    not fitted to any real cell.
    """

    k0: float
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    k7: float
    k8: float
    k9: float
    k10: float
    k11: float
    k12: float
    k13: float
    k14: float
    k15: float
    k16: float
    k17: float
    k18: float
    alpha: float
    beta: float
    c_x2_crit: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) \
                    or not math.isfinite(v):
                raise ConfigError(f"parameter {name} must be a finite number, got {v!r}")
        if not self.k0 > 0:
            raise ConfigError("k0 must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_dict(cls, d: dict) -> "PlantParams":
        if not isinstance(d, dict):
            raise ConfigError("parameter file must hold a JSON object")
        missing = [n for n in PARAM_NAMES if n not in d]
        extra = sorted(set(d) - set(PARAM_NAMES))
        if missing or extra:
            raise ConfigError(f"plant parameters: missing {missing}, unexpected {extra}")
        return cls(**{n: d[n] for n in PARAM_NAMES})

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    @classmethod
    def load(cls, path) -> "PlantParams":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def default(cls) -> "PlantParams":
        text = resources.files("aluid").joinpath("config/default_params.json").read_text()
        return cls.from_dict(json.loads(text))


@dataclasses.dataclass
class Trajectory:
    """One simulated run: ``states`` is (steps+1, 8), ``inputs`` is (steps, 5)."""

    states: np.ndarray
    inputs: np.ndarray
    h: float
    seed: int | None = None
    id: str = ""

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != N_STATES:
            raise ValueError(f"states must be (n+1, 8), got {self.states.shape}")
        if self.inputs.shape != (self.states.shape[0] - 1, N_INPUTS):
            raise ValueError(f"inputs shape {self.inputs.shape} inconsistent "
                             f"with states {self.states.shape}")

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]


def _params_array(params) -> np.ndarray:
    if isinstance(params, PlantParams):
        return params.as_array()
    arr = np.asarray(params, dtype=float)
    if arr.shape != (len(PARAM_NAMES),):
        raise ConfigError(f"expected {len(PARAM_NAMES)} parameters")
    return arr


def mass_ratios(state) -> tuple[float, float]:
    """Return ``(c_x2, c_x3)``, the Al2O3 and AlF3 fractions of the bath."""
    x2, x3, x4 = float(state[1]), float(state[2]), float(state[3])
    total = x2 + x3 + x4
    if not total > 0:
        raise DomainError(f"total bath mass x2+x3+x4 must be positive, got {total}")
    return x2 / total, x3 / total


def bath_properties(state, inp, params: PlantParams) -> BathProperties:
    mass_ratios(state)
    g = kernels.bath(np.asarray(state, dtype=float), np.asarray(inp, dtype=float),
                     _params_array(params))
    for name, v in zip(("g1", "g2", "g3", "g4", "g5"), g):
        if not math.isfinite(v):
            raise DomainError(f"nonfinite bath property {name}")
    return BathProperties(*g)


def rhs(state, inp, params: PlantParams) -> StateDerivative:
    """Time derivative of the 8 states for inputs held at ``inp``."""
    if not float(state[0]) > 0:
        raise DomainError("side-ledge mass x1 must be positive")
    return StateDerivative(*kernels.rhs(np.asarray(state, dtype=float),
                                        np.asarray(inp, dtype=float),
                                        _params_array(params)))


def rk4_step(state, inp, h: float, params: PlantParams) -> CellState:
    """One classical RK4 step with the input held constant over ``h``."""
    if not h > 0:
        raise ValueError("step size h must be positive")
    return CellState(*kernels.rk4_step(np.asarray(state, dtype=float),
                                       np.asarray(inp, dtype=float), float(h),
                                       _params_array(params)))


Policy = Callable[[np.ndarray, int], "np.ndarray"]


def simulate(x0, policy, steps: int, h: float, params: PlantParams,
             seed: int | None = None, traj_id: str = "") -> Trajectory:
    """Integrate ``steps`` RK4 steps from ``x0``.

    ``policy`` may be

    * an object with a ``closed_loop_arrays(steps)`` method (see
      :class:`aluid.control.StochasticPolicy`), run entirely in the kernel;
    * an array of shape (>= steps, 5), applied open loop;
    * a callable ``policy(state, k) -> input``.

    Raises :class:`IntegrationError` with the partial trajectory attached if
    the state becomes nonfinite or leaves the model domain.
    """
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    if not h > 0:
        raise ValueError("step size h must be positive")
    steps = int(steps)
    p = _params_array(params)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (N_STATES,):
        raise ValueError("x0 must have 8 components")

    if hasattr(policy, "closed_loop_arrays"):
        args = policy.closed_loop_arrays(steps)
        states, inputs = kernels.simulate_closed_loop(x0, *args, float(h), p)
    elif callable(policy):
        states = np.empty((steps + 1, N_STATES))
        inputs = np.empty((steps, N_INPUTS))
        states[0] = x0
        x = x0
        for k in range(steps):
            u = np.asarray(policy(x, k), dtype=float)
            inputs[k] = u
            try:
                x = np.array(kernels.rk4_step(x, u, float(h), p))
            except (IntegrationError, DomainError) as exc:
                raise IntegrationError(f"step {k}: {exc}",
                                       component=getattr(exc, "component", None),
                                       step=k, partial=states[:k + 1].copy()) from exc
            states[k + 1] = x
    else:
        u = np.asarray(policy, dtype=float)
        if u.ndim != 2 or u.shape[1] != N_INPUTS or u.shape[0] < steps:
            raise ValueError("open-loop input array must be (>= steps, 5)")
        inputs = np.ascontiguousarray(u[:steps])
        states = kernels.simulate_open_loop(x0, inputs, float(h), p)
    return Trajectory(states=states, inputs=inputs, h=float(h), seed=seed, id=traj_id)
