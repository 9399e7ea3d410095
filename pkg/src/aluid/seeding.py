"""Deterministic seed splitting.

Every random stream is derived from the master seed through a
:class:`numpy.random.SeedSequence` whose spawn key is ``(purpose, *indices)``.
Purposes have fixed integer codes, so adding model instances or test
trajectories never perturbs the corpus or the other instances.
"""
import numpy as np

PURPOSES = {
    "train_trajectory": 1,
    "test_trajectory": 2,
    "model_init": 3,
    "shuffle": 4,
    "aprbs": 5,
    "initial_state": 6,
}


def derive_seed(master: int, purpose: str, *indices: int) -> int:
    """Return a 32-bit seed for ``purpose`` at ``indices`` under ``master``."""
    key = (PURPOSES[purpose],) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(master: int, purpose: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, purpose, *indices))
