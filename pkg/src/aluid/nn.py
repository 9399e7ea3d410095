"""Feedforward networks with optional input-skip concatenation.

In the ``inputskip`` topology every layer after the first, including the
output layer, receives ``[z_{i-1}; z_0]``. ``plain`` is an ordinary MLP.
All arrays are float64; batches are row-major ``(n, features)``.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from . import kernels
from .dataset import Normalizer
from .errors import ConfigError, EvaluationError

TOPOLOGIES = ("plain", "inputskip")

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a, z: 1.0 - z * z),
    "relu": (lambda a: np.maximum(a, 0.0), lambda a, z: (a > 0).astype(float)),
    "sigmoid": (lambda a: 1.0 / (1.0 + np.exp(-a)), lambda a, z: z * (1.0 - z)),
    "identity": (lambda a: a, lambda a, z: np.ones_like(a)),
}


@dataclasses.dataclass(frozen=True)
class ArchitectureSpec:
    topology: str = "plain"
    input_dim: int = 13
    output_dim: int = 8
    hidden_layers: int = 4
    hidden_width: int = 25
    activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        for name in ("input_dim", "output_dim", "hidden_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.hidden_layers < 0:
            raise ConfigError("hidden_layers must be nonnegative")
        for name in ("activation", "output_activation"):
            if getattr(self, name) not in _ACTIVATIONS:
                raise ConfigError(f"unknown activation {getattr(self, name)!r}")

    @property
    def skip(self) -> bool:
        return self.topology == "inputskip"

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(rows, cols) of each weight matrix, output layer last."""
        if self.hidden_layers == 0:
            return [(self.output_dim, self.input_dim)]
        extra = self.input_dim if self.skip else 0
        shapes = [(self.hidden_width, self.input_dim)]
        shapes += [(self.hidden_width, self.hidden_width + extra)] * (self.hidden_layers - 1)
        shapes.append((self.output_dim, self.hidden_width + extra))
        return shapes

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def check(self, spec: ArchitectureSpec):
        shapes = spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ConfigError("layer count does not match architecture")
        for i, ((r, c), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != (r, c) or b.shape != (r,):
                raise ConfigError(f"layer {i}: expected W {(r, c)}, b {(r,)}; "
                                  f"got {w.shape}, {b.shape}")


Gradients = ModelParams


def init_params(spec: ArchitectureSpec, seed: int) -> ModelParams:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for rows, cols in spec.layer_shapes():
        bound = 1.0 / np.sqrt(cols)
        weights.append(rng.uniform(-bound, bound, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return ModelParams(weights, biases)


def forward(params: ModelParams, spec: ArchitectureSpec, z0):
    """Evaluate the network on one input (13,) or a batch (n, 13).

    Returns ``(y_hat, cache)``; ``cache`` is consumed by :func:`backward`.
    """
    z0 = np.asarray(z0, dtype=float)
    single = z0.ndim == 1
    batch = z0[None, :] if single else z0
    act, _ = _ACTIVATIONS[spec.activation]
    out_act, _ = _ACTIVATIONS[spec.output_activation]
    n_layers = len(params.weights)
    inputs, outputs = [], []
    a = batch
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            if spec.skip and i > 0:
                a = np.concatenate((a, batch), axis=1)
            inputs.append(a)
            pre = a @ w.T + b
            a = act(pre) if i < n_layers - 1 else out_act(pre)
            outputs.append((pre, a))
    if not np.all(np.isfinite(a)):
        raise EvaluationError("nonfinite network output")
    cache = {"inputs": inputs, "outputs": outputs, "single": single}
    return (a[0] if single else a), cache


def backward(params: ModelParams, spec: ArchitectureSpec, cache, y_true) -> Gradients:
    """Gradient of the batch-mean squared error ``mean_i ||y_i - f(z_i)||^2``."""
    y_true = np.asarray(y_true, dtype=float)
    if cache["single"]:
        y_true = y_true[None, :]
    pre, y_hat = cache["outputs"][-1]
    if y_true.shape != y_hat.shape:
        raise ValueError(f"target shape {y_true.shape} does not match output {y_hat.shape}")
    n = y_hat.shape[0]
    _, d_act = _ACTIVATIONS[spec.activation]
    _, d_out = _ACTIVATIONS[spec.output_activation]
    delta = 2.0 * (y_hat - y_true) / n * d_out(pre, y_hat)
    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    hidden = spec.hidden_width
    for i in range(n_layers - 1, -1, -1):
        gw[i] = delta.T @ cache["inputs"][i]
        gb[i] = delta.sum(axis=0)
        if i == 0:
            break
        d_in = delta @ params.weights[i]
        if spec.skip:
            d_in = d_in[:, :hidden]  # z0 columns carry no further gradient
        p, z = cache["outputs"][i - 1]
        delta = d_in * d_act(p, z)
    return ModelParams(gw, gb)


def mse(params: ModelParams, spec: ArchitectureSpec, z, y) -> float:
    y_hat, _ = forward(params, spec, np.atleast_2d(z))
    r = y_hat - np.atleast_2d(y)
    return float(np.mean(np.sum(r * r, axis=1)))


def l1_norm(params: ModelParams) -> float:
    return float(sum(np.abs(w).sum() for w in params.weights))


def loss(params: ModelParams, spec: ArchitectureSpec, batch, lam: float) -> float:
    """Batch MSE plus ``lam`` times the l1 norm of the weights (biases excluded)."""
    z, y = batch
    if len(z) == 0:
        raise ValueError("empty batch")
    return mse(params, spec, z, y) + lam * l1_norm(params)


def l1_subgradient(params: ModelParams, lam: float) -> Gradients:
    return ModelParams([lam * np.sign(w) for w in params.weights],
                       [np.zeros_like(b) for b in params.biases])


def sparsity(params: ModelParams, threshold: float = 1e-3) -> float:
    """Fraction of weights with magnitude below ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    small = sum(int(np.count_nonzero(np.abs(w) < threshold)) for w in params.weights)
    total = sum(w.size for w in params.weights)
    return small / total


@dataclasses.dataclass
class ModelCheckpoint:
    spec: ArchitectureSpec
    params: ModelParams
    normalizer: Normalizer
    lam: float
    seed: int
    model_class: str = ""
    history: list = dataclasses.field(default_factory=list)
    meta: dict = dataclasses.field(default_factory=dict)

    def predict(self, x, u) -> np.ndarray:
        """Model derivative in physical units for states ``x`` and inputs ``u``."""
        z = np.concatenate([np.atleast_2d(x), np.atleast_2d(u)], axis=1)
        nz = (z - self.normalizer.z_mean) / self.normalizer.z_std
        y, _ = forward(self.params, self.spec, nz)
        out = self.normalizer.y_mean + self.normalizer.y_std * y
        return out[0] if np.ndim(x) == 1 else out

    def rollout(self, x0, inputs, n: int, h: float):
        """Forward-Euler rolling forecast; returns ``(states, divergence_step)``."""
        nz = self.normalizer
        return kernels.rollout_mlp(
            [np.ascontiguousarray(w) for w in self.params.weights],
            [np.ascontiguousarray(b) for b in self.params.biases],
            self.spec.skip, kernels.ACT_CODES[self.spec.activation],
            np.asarray(x0, dtype=float), np.ascontiguousarray(inputs, dtype=float),
            int(n), float(h), nz.z_mean, nz.z_std, nz.y_mean, nz.y_std)

    def to_dict(self):
        return {
            "format_version": 1,
            "model_class": self.model_class,
            "architecture": self.spec.to_dict(),
            "weights": [w.tolist() for w in self.params.weights],
            "biases": [b.tolist() for b in self.params.biases],
            "normalizer": self.normalizer.to_dict(),
            "lambda": self.lam,
            "seed": self.seed,
            "history": self.history,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != 1:
            raise ConfigError("unsupported checkpoint version")
        spec = ArchitectureSpec(**d["architecture"])
        params = ModelParams([np.array(w, dtype=float) for w in d["weights"]],
                             [np.array(b, dtype=float) for b in d["biases"]])
        params.check(spec)
        return cls(spec, params, Normalizer.from_dict(d["normalizer"]), float(d["lambda"]),
                   int(d["seed"]), d.get("model_class", ""), d.get("history", []),
                   d.get("meta", {}))

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        return cls.from_dict(json.loads(Path(path).read_text()))
