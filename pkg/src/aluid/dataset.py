"""Training/test corpus generation, regression pairs and on-disk formats.

Layout written by :func:`save_corpus`::

    corpus/
      manifest.json
      train/000.traj ...
      test/000.traj ...
      dataset_small.bin  dataset_small.json   (and medium, large)

``.traj`` and ``.bin`` files are a fixed magic, a little-endian uint64 row
count and raw little-endian float64 arrays. The JSON side files carry
shapes, seeds, the integration step and a sha256 of the binary file.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .control import AprbsConfig, ControllerConfig, StochasticPolicy, aprbs_signal
from .errors import CorpusError, DatasetFormatError, IntegrationError
from .plant import N_INPUTS, N_STATES, CellState, PlantParams, Trajectory, simulate
from .seeding import derive_seed

FORMAT_VERSION = 1
TRAJ_MAGIC = b"ALUTRAJ1"
PAIRS_MAGIC = b"ALUPAIR1"
N_FEATURES = N_STATES + N_INPUTS

DATASET_SIZES = {"small": 10, "medium": 20, "large": 40}

__all__ = [
    "InitBox", "Trajectory", "RegressionPair", "Pairs", "Normalizer", "Dataset",
    "Corpus", "sample_initial_state", "generate_trajectory", "build_corpus",
    "to_pairs", "fit_normalizer", "build_dataset", "save_trajectory",
    "load_trajectory", "save_corpus", "load_corpus", "save_dataset", "load_dataset",
]


@dataclasses.dataclass(frozen=True)
class InitBox:
    """Sampling intervals for initial conditions.

    Al2O3 and AlF3 are given as bath mass ratios, not masses.
    """

    x1: tuple[float, float] = (2060.0, 4460.0)
    c_x2: tuple[float, float] = (0.02, 0.05)
    c_x3: tuple[float, float] = (0.09, 0.13)
    x4: tuple[float, float] = (11500.0, 16000.0)
    x5: tuple[float, float] = (9550.0, 10600.0)
    x6: tuple[float, float] = (940.0, 990.0)
    x7: tuple[float, float] = (790.0, 850.0)
    x8: tuple[float, float] = (555.0, 610.0)

    def __post_init__(self):
        for f in dataclasses.fields(self):
            lo, hi = getattr(self, f.name)
            if lo > hi:
                raise ValueError(f"empty interval for {f.name}")
        if self.c_x2[1] + self.c_x3[1] >= 1.0:
            raise ValueError("mass ratios must sum to less than one")

    def to_dict(self):
        return {f.name: list(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})


class RegressionPair(NamedTuple):
    z: np.ndarray  # [x_k; u_k], 13 entries
    y: np.ndarray  # (x_{k+1} - x_k) / h, 8 entries


@dataclasses.dataclass
class Pairs:
    z: np.ndarray  # (n, 13)
    y: np.ndarray  # (n, 8)

    def __len__(self):
        return self.z.shape[0]

    def __getitem__(self, i):
        return RegressionPair(self.z[i], self.y[i])

    @staticmethod
    def concat(parts):
        parts = list(parts)
        return Pairs(np.concatenate([p.z for p in parts]),
                     np.concatenate([p.y for p in parts]))


@dataclasses.dataclass
class Normalizer:
    z_mean: np.ndarray
    z_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    z_constant: np.ndarray  # bool flags, std replaced by 1
    y_constant: np.ndarray

    @property
    def state_std(self):
        """Training-set standard deviation of each state variable."""
        return self.z_std[:N_STATES]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in
                ("z_mean", "z_std", "y_mean", "y_std", "z_constant", "y_constant")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.asarray(v, dtype=bool if k.endswith("constant") else float)
                      for k, v in d.items()})


@dataclasses.dataclass
class Dataset:
    pairs: Pairs
    normalizer: Normalizer
    manifest: dict

    def __len__(self):
        return len(self.pairs)


@dataclasses.dataclass
class Corpus:
    train: list[Trajectory]
    test: list[Trajectory]
    manifest: dict


def sample_initial_state(box: InitBox, rng: np.random.Generator) -> CellState:
    """Uniform draw from ``box``; x2, x3 follow from the drawn ratios and x4."""
    x1 = rng.uniform(*box.x1)
    c2 = rng.uniform(*box.c_x2)
    c3 = rng.uniform(*box.c_x3)
    x4 = rng.uniform(*box.x4)
    x5 = rng.uniform(*box.x5)
    x6 = rng.uniform(*box.x6)
    x7 = rng.uniform(*box.x7)
    x8 = rng.uniform(*box.x8)
    s = x4 / (1.0 - c2 - c3)
    return CellState(x1, c2 * s, c3 * s, x4, x5, x6, x7, x8)


@dataclasses.dataclass
class SimulationSetup:
    """Everything needed to regenerate a trajectory from its seed."""

    params: PlantParams = dataclasses.field(default_factory=PlantParams.default)
    controller: ControllerConfig = dataclasses.field(default_factory=ControllerConfig)
    aprbs: AprbsConfig = dataclasses.field(default_factory=AprbsConfig)
    box: InitBox = dataclasses.field(default_factory=InitBox)
    steps: int = 5000
    h: float = 10.0


def generate_trajectory(setup: SimulationSetup, seed: int, traj_id: str = "") -> Trajectory:
    x0 = sample_initial_state(setup.box, np.random.default_rng(
        derive_seed(seed, "initial_state")))
    aprbs = dataclasses.replace(setup.aprbs, seed=derive_seed(seed, "aprbs"))
    policy = StochasticPolicy(setup.controller, aprbs_signal(aprbs, setup.steps))
    return simulate(x0, policy, setup.steps, setup.h, setup.params,
                    seed=seed, traj_id=traj_id)


def _generate_job(args):
    setup, seed, traj_id = args
    try:
        return generate_trajectory(setup, seed, traj_id)
    except IntegrationError as exc:
        raise CorpusError(f"trajectory {traj_id} (seed {seed}) aborted: {exc}",
                          seed=seed) from exc


def build_corpus(n_train: int = 40, n_test: int = 100, setup: SimulationSetup | None = None,
                 master_seed: int = 0, workers: int = 1) -> Corpus:
    """Simulate ``n_train + n_test`` trajectories with independent seeds.

    Results do not depend on ``workers``; every trajectory owns its seed.
    """
    setup = setup or SimulationSetup()
    if n_train < 0 or n_test < 0 or n_train + n_test == 0:
        raise ValueError("need at least one trajectory")
    jobs = [(setup, derive_seed(master_seed, "train_trajectory", i), f"train/{i:03d}")
            for i in range(n_train)]
    jobs += [(setup, derive_seed(master_seed, "test_trajectory", i), f"test/{i:03d}")
             for i in range(n_test)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(_generate_job, jobs))
    else:
        trajs = [_generate_job(j) for j in jobs]
    manifest = {
        "format_version": FORMAT_VERSION,
        "master_seed": int(master_seed),
        "h": setup.h,
        "steps": setup.steps,
        "params": setup.params.to_dict(),
        "controller": setup.controller.to_dict(),
        "aprbs": setup.aprbs.to_dict(),
        "init_box": setup.box.to_dict(),
        "train": [{"id": t.id, "seed": t.seed} for t in trajs[:n_train]],
        "test": [{"id": t.id, "seed": t.seed} for t in trajs[n_train:]],
    }
    return Corpus(train=trajs[:n_train], test=trajs[n_train:], manifest=manifest)


def to_pairs(traj: Trajectory) -> Pairs:
    """Forward-difference regression pairs, one per step."""
    x = traj.states
    if traj.steps < 1:
        raise ValueError("trajectory needs at least one step")
    z = np.concatenate([x[:-1], traj.inputs], axis=1)
    y = (x[1:] - x[:-1]) / traj.h
    return Pairs(z, y)


def _stats(a, name):
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    constant = ~(std > 0)
    if constant.any():
        warnings.warn(f"constant {name} dimensions {np.flatnonzero(constant).tolist()}; "
                      "std set to 1", RuntimeWarning, stacklevel=3)
        std = np.where(constant, 1.0, std)
    return mean, std, constant


def fit_normalizer(pairs: Pairs) -> Normalizer:
    """Per-dimension mean and population std of z and y."""
    if len(pairs) == 0:
        raise ValueError("cannot fit a normalizer on zero pairs")
    if len(pairs) < 2:
        raise ValueError("need at least two pairs to fit a normalizer")
    zm, zs, zc = _stats(pairs.z, "input")
    ym, ys, yc = _stats(pairs.y, "target")
    return Normalizer(zm, zs, ym, ys, zc, yc)


def build_dataset(train: list[Trajectory], n_trajectories: int, name: str = "") -> Dataset:
    """Pairs from the first ``n_trajectories`` training trajectories."""
    if not 1 <= n_trajectories <= len(train):
        raise ValueError(f"requested {n_trajectories} of {len(train)} training trajectories")
    chosen = train[:n_trajectories]
    pairs = Pairs.concat(to_pairs(t) for t in chosen)
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "trajectory_ids": [t.id for t in chosen],
        "seeds": [t.seed for t in chosen],
        "n_pairs": len(pairs),
        "h": chosen[0].h,
    }
    return Dataset(pairs, fit_normalizer(pairs), manifest)


# --- binary blobs -------------------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _pack(magic, rows, *arrays):
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return magic + struct.pack("<Q", rows) + body


def _unpack(data, magic, widths, row_offsets, path):
    if len(data) < len(magic) + 8 or data[:len(magic)] != magic:
        raise DatasetFormatError(f"{path}: bad magic or truncated header")
    (rows,) = struct.unpack("<Q", data[len(magic):len(magic) + 8])
    shapes = [(rows + off, w) for w, off in zip(widths, row_offsets)]
    expected = len(magic) + 8 + 8 * sum(r * w for r, w in shapes)
    if len(data) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    out = []
    pos = len(magic) + 8
    for r, w in shapes:
        n = r * w * 8
        out.append(np.frombuffer(data[pos:pos + n], dtype="<f8").reshape(r, w).astype(float))
        pos += n
    return out


def save_trajectory(traj: Trajectory, path) -> str:
    """Write one ``.traj`` file; returns its sha256."""
    data = _pack(TRAJ_MAGIC, traj.steps, traj.states, traj.inputs)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)
    return _sha256(data)


def load_trajectory(path, h: float = 10.0, seed=None, traj_id="", sha256=None) -> Trajectory:
    data = Path(path).read_bytes()
    if sha256 is not None and _sha256(data) != sha256:
        raise DatasetFormatError(f"{path}: checksum mismatch")
    states, inputs = _unpack(data, TRAJ_MAGIC, (N_STATES, N_INPUTS), (1, 0), path)
    return Trajectory(states, inputs, h=h, seed=seed, id=traj_id)


def save_corpus(corpus: Corpus, root) -> Path:
    root = Path(root)
    manifest = json.loads(json.dumps(corpus.manifest))
    for split, trajs in (("train", corpus.train), ("test", corpus.test)):
        for entry, t in zip(manifest[split], trajs):
            rel = f"{t.id}.traj"
            entry["file"] = rel
            entry["steps"] = t.steps
            entry["sha256"] = save_trajectory(t, root / rel)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return root


def load_corpus(root) -> Corpus:
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{root}: unreadable manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{root}: unsupported format version "
                                 f"{manifest.get('format_version')!r}")
    out = {}
    for split in ("train", "test"):
        trajs = []
        for entry in manifest[split]:
            t = load_trajectory(root / entry["file"], h=manifest["h"], seed=entry["seed"],
                                traj_id=entry["id"], sha256=entry["sha256"])
            if t.steps != entry["steps"]:
                raise DatasetFormatError(f"{entry['file']}: step count disagrees with manifest")
            trajs.append(t)
        out[split] = trajs
    return Corpus(out["train"], out["test"], manifest)


def save_dataset(ds: Dataset, stem) -> None:
    """Write ``<stem>.bin`` (pairs) and ``<stem>.json`` (manifest and stats)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    data = _pack(PAIRS_MAGIC, len(ds), ds.pairs.z, ds.pairs.y)
    stem.with_suffix(".bin").write_bytes(data)
    meta = dict(ds.manifest)
    meta.update(format_version=FORMAT_VERSION, n_pairs=len(ds), sha256=_sha256(data),
                normalizer=ds.normalizer.to_dict())
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=1) + "\n")


def load_dataset(stem) -> Dataset:
    stem = Path(stem)
    try:
        meta = json.loads(stem.with_suffix(".json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{stem}: unreadable dataset metadata: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{stem}: unsupported format version")
    data = stem.with_suffix(".bin").read_bytes()
    if _sha256(data) != meta["sha256"]:
        raise DatasetFormatError(f"{stem}.bin: checksum mismatch")
    z, y = _unpack(data, PAIRS_MAGIC, (N_FEATURES, N_STATES), (0, 0), stem)
    if z.shape[0] != meta["n_pairs"]:
        raise DatasetFormatError(f"{stem}: pair count disagrees with manifest")
    normalizer = Normalizer.from_dict(meta.pop("normalizer"))
    for k in ("sha256",):
        meta.pop(k, None)
    return Dataset(Pairs(z, y), normalizer, meta)
