"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when importable; otherwise, or
when ``ALUID_PURE_PYTHON=1`` is set, the pure-Python mirror is used.
Both expose the same functions.
"""
import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("ALUID_PURE_PYTHON") != "1":
    backend = compiled_backend
    BACKEND_NAME = "cython"
else:
    backend = _pykernels
    BACKEND_NAME = "python"

bath = backend.bath
rhs = backend.rhs
rk4_step = backend.rk4_step
control_law = backend.control_law
perturb_input = backend.perturb_input
simulate_closed_loop = backend.simulate_closed_loop
simulate_open_loop = backend.simulate_open_loop
rollout_mlp = backend.rollout_mlp

ACT_CODES = {"identity": 0, "tanh": 1, "relu": 2, "sigmoid": 3}
