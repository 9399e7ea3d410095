"""Mini-batch Adam training of the four model classes."""
from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np

from . import nn
from .dataset import Dataset
from .errors import ConfigError, EvaluationError, TrainingError
from .seeding import derive_seed

MODEL_CLASSES = {
    "PlainDense": ("plain", 0.0),
    "PlainSparse": ("plain", 1e-4),
    "InputSkipDense": ("inputskip", 0.0),
    "InputSkipSparse": ("inputskip", 1e-4),
}


@dataclasses.dataclass
class TrainConfig:
    batch_size: int = 128
    lam: float = 0.0
    epochs: int = 150
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    sparsity_threshold: float = 1e-3

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not self.lam >= 0:
            raise ConfigError("lambda must be nonnegative")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")


@dataclasses.dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: nn.ModelParams) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params: nn.ModelParams, grads: nn.Gradients, state: AdamState,
              cfg: TrainConfig):
    """Bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


def _csv_log(path, history):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,loss_mse,loss_l1,sparsity"]
    lines += [f"{h['epoch']},{h['loss_mse']!r},{h['loss_l1']!r},{h['sparsity']!r}"
              for h in history]
    path.write_text("\n".join(lines) + "\n")


def train_model(spec: nn.ArchitectureSpec, dataset: Dataset, cfg: TrainConfig,
                log_path=None, model_class: str = "") -> nn.ModelCheckpoint:
    """Train on standardized pairs with MSE + lam * l1 and return a checkpoint.

    Each epoch visits every pair once in a seeded random order; the final
    partial batch is kept.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    norm = dataset.normalizer
    z = (dataset.pairs.z - norm.z_mean) / norm.z_std
    y = (dataset.pairs.y - norm.y_mean) / norm.y_std
    params = nn.init_params(spec, derive_seed(cfg.seed, "model_init"))
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    state = AdamState.zeros_like(params)
    n = len(z)
    history = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            zb, yb = z[idx], y[idx]
            try:
                y_hat, cache = nn.forward(params, spec, zb)
            except EvaluationError as exc:
                raise TrainingError(f"epoch {epoch} batch {b}: {exc}",
                                    epoch=epoch, batch=b) from exc
            r = y_hat - yb
            with np.errstate(over="ignore", invalid="ignore"):
                batch_sq = float(np.sum(r * r))
            if not math.isfinite(batch_sq):
                raise TrainingError(f"nonfinite loss at epoch {epoch} batch {b}",
                                    epoch=epoch, batch=b)
            sq_sum += batch_sq
            grads = nn.backward(params, spec, cache, yb)
            if cfg.lam > 0:
                l1 = nn.l1_subgradient(params, cfg.lam)
                for g, s in zip(grads.weights, l1.weights):
                    g += s
            adam_step(params, grads, state, cfg)
        entry = {
            "epoch": epoch,
            "loss_mse": sq_sum / n,
            "loss_l1": cfg.lam * nn.l1_norm(params),
            "sparsity": nn.sparsity(params, cfg.sparsity_threshold),
        }
        if not (math.isfinite(entry["loss_mse"]) and math.isfinite(entry["loss_l1"])):
            raise TrainingError(f"nonfinite loss at epoch {epoch}", epoch=epoch)
        history.append(entry)
    if log_path is not None:
        _csv_log(log_path, history)
    return nn.ModelCheckpoint(
        spec=spec, params=params, normalizer=norm, lam=cfg.lam, seed=cfg.seed,
        model_class=model_class, history=history,
        meta={"dataset": dataset.manifest.get("name", ""),
              "n_pairs": len(dataset), "epochs": cfg.epochs,
              "batch_size": cfg.batch_size})


def class_spec(model_class: str, base: nn.ArchitectureSpec | None = None):
    """Architecture and lambda for one of the four model classes."""
    if model_class not in MODEL_CLASSES:
        raise ConfigError(f"unknown model class {model_class!r}; "
                          f"expected one of {sorted(MODEL_CLASSES)}")
    topology, lam = MODEL_CLASSES[model_class]
    base = base or nn.ArchitectureSpec()
    return dataclasses.replace(base, topology=topology), lam


def train_class_ensemble(model_class: str, dataset: Dataset, n_instances: int = 10,
                         base_seed: int = 0, cfg: TrainConfig | None = None,
                         base_spec: nn.ArchitectureSpec | None = None,
                         log_dir=None) -> list[nn.ModelCheckpoint]:
    """Train ``n_instances`` models of one class with seeds ``base_seed + i``."""
    spec, lam = class_spec(model_class, base_spec)
    cfg = cfg or TrainConfig()
    out = []
    for i in range(n_instances):
        icfg = dataclasses.replace(cfg, lam=lam, seed=base_seed + i)
        log = None if log_dir is None else Path(log_dir) / f"{model_class}_{base_seed + i}.csv"
        try:
            out.append(train_model(spec, dataset, icfg, log_path=log, model_class=model_class))
        except TrainingError as exc:
            exc.instance = i
            raise
    return out
