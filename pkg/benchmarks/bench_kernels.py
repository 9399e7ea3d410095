"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--steps 5000] [--repeat 5] [--json out.json]

Times one closed-loop plant simulation and one MLP rolling forecast per
backend and checks that both backends return the same arrays.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from aluid import control, kernels, nn
from aluid.plant import PlantParams


def cases(steps):
    p = PlantParams.default().as_array()
    ctrl = control.ControllerConfig()
    policy = control.StochasticPolicy(ctrl, control.aprbs_signal(control.AprbsConfig(seed=1),
                                                                 steps))
    x0 = np.array([3100.0, 550.0, 1650.0, 13800.0, 10100.0, 962.5, 818.0, 580.0])
    sim_args = (x0, *policy.closed_loop_arrays(steps), 10.0, p)

    spec = nn.ArchitectureSpec("inputskip")
    params = nn.init_params(spec, 0)
    rng = np.random.default_rng(0)
    inputs = np.ascontiguousarray(np.tile(ctrl.nominal, (steps, 1))
                                  + rng.normal(scale=1e-3, size=(steps, 5)))
    roll_args = (params.weights, params.biases, True, kernels.ACT_CODES["tanh"], x0, inputs,
                 steps, 10.0, np.r_[x0, ctrl.nominal], np.ones(13), np.zeros(8),
                 np.full(8, 1e-3))
    return {
        "simulate_closed_loop": ("simulate_closed_loop", sim_args),
        "rollout_mlp (InputSkip 4x25)": ("rollout_mlp", roll_args),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)

    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled extension not built; timing the Python backend only", file=sys.stderr)

    results = []
    print(f"{'kernel':32s} {'backend':8s} {'best [ms]':>10s} {'speedup':>8s}")
    for label, (fn_name, fn_args) in cases(args.steps).items():
        outputs, best = {}, {}
        for name, mod in backends.items():
            fn = getattr(mod, fn_name)
            outputs[name] = fn(*fn_args)
            best[name] = min(timeit.repeat(lambda: fn(*fn_args), number=1,
                                           repeat=args.repeat))
        if len(outputs) == 2:
            a, b = outputs["python"][0], outputs["cython"][0]
            max_diff = float(np.max(np.abs(a - b)))
        else:
            max_diff = None
        for name in backends:
            speed = best["python"] / best[name]
            print(f"{label:32s} {name:8s} {best[name] * 1e3:10.2f} {speed:7.1f}x")
            results.append({"kernel": label, "backend": name, "steps": args.steps,
                            "best_seconds": best[name], "speedup_vs_python": speed,
                            "max_abs_diff": max_diff})
        if max_diff is not None:
            print(f"{'':32s} max |python - cython| = {max_diff:.3g}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
