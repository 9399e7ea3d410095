"""Command-line entry point: ``aluid <subcommand> [options]``.

On failure a single JSON line ``{"error": <type>, "message": <text>}`` is
written to stderr and the exit code is nonzero.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from . import harness
from .errors import AluidError, ConfigError
from .evaluate import an_rfmse, detect_blowup, evaluate_model, rolling_forecast
from .kernels import BACKEND_NAME
from .nn import ModelCheckpoint
from .plant import STATE_NAMES
from .train import MODEL_CLASSES, train_class_ensemble


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.out is not None:
        updates["output_dir"] = args.out
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _states_csv(path, states):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step",) + STATE_NAMES)
        for k, row in enumerate(states):
            w.writerow([k] + [repr(float(v)) for v in row])


def cmd_simulate(args, cfg):
    setup = dataclasses.replace(cfg.simulation, steps=args.steps or cfg.steps)
    traj = ds_mod.generate_trajectory(setup, cfg.master_seed, "simulated")
    out = Path(cfg.output_dir)
    sha = ds_mod.save_trajectory(traj, out / "trajectory.traj")
    (out / "trajectory.json").write_text(json.dumps(
        {"h": traj.h, "seed": traj.seed, "steps": traj.steps, "sha256": sha}, indent=1) + "\n")
    _states_csv(out / "trajectory.csv", traj.states)
    return {"trajectory": str(out / "trajectory.traj"), "steps": traj.steps}


def cmd_generate(args, cfg):
    corpus, datasets = harness._corpus_stage(cfg, Path(cfg.output_dir))
    return {"corpus": str(Path(cfg.output_dir) / "corpus"), "train": len(corpus.train),
            "test": len(corpus.test), "datasets": {k: len(v) for k, v in datasets.items()}}


def cmd_train(args, cfg):
    out = Path(cfg.output_dir)
    corpus_dir = Path(args.corpus or out / "corpus")
    size = args.dataset or next(iter(cfg.dataset_sizes))
    ds = ds_mod.load_dataset(corpus_dir / f"dataset_{size}")
    si = list(cfg.dataset_sizes).index(size) if size in cfg.dataset_sizes else 0
    seeds = harness.instance_seeds(cfg, si)
    n = args.instances or cfg.instances
    model_dir = out / "models" / size
    cks = train_class_ensemble(args.model_class, ds, n, seeds[0], cfg.train,
                               cfg.architecture, log_dir=model_dir / "logs")
    paths = []
    for ck in cks:
        p = model_dir / f"{args.model_class}_{ck.seed}.json"
        ck.meta["dataset"] = size
        ck.save(p)
        paths.append(str(p))
    return {"checkpoints": paths}


def cmd_forecast(args, cfg):
    ck = ModelCheckpoint.load(args.checkpoint)
    traj = ds_mod.load_trajectory(args.trajectory, h=args.h or cfg.h)
    n = traj.steps if args.n is None else args.n
    fc = rolling_forecast(ck, traj.states[0], traj.inputs, n, traj.h, str(args.trajectory),
                          Path(args.checkpoint).stem)
    out = Path(cfg.output_dir)
    _states_csv(out / "forecast.csv", fc.states)
    stds = ck.normalizer.state_std
    blew, step = detect_blowup(fc, traj.states, stds, n)
    result = {"forecast": str(out / "forecast.csv"), "n": n, "blowup": blew,
              "blowup_step": step, "divergence_step": fc.divergence_step}
    if not blew and n >= 1:
        result["an_rfmse"] = an_rfmse(fc.states, traj.states, stds, n)
    return result


def cmd_evaluate(args, cfg):
    out = Path(cfg.output_dir)
    corpus = ds_mod.load_corpus(args.corpus or out / "corpus")
    rows = []
    for path in args.checkpoints:
        ck = ModelCheckpoint.load(path)
        metrics = evaluate_model(ck, corpus.test, cfg.horizons, model_id=Path(path).stem)
        rows += harness.metrics_to_rows(metrics, ck.model_class, ck.seed,
                                        ck.meta.get("dataset", ""))
    out.mkdir(parents=True, exist_ok=True)
    target = out / "results_raw.csv"
    target.write_text(harness.rows_to_csv(rows))
    return {"results": str(target), "rows": len(rows)}


def cmd_experiment(args, cfg):
    rows = harness.run_experiment(cfg)
    harness.report(rows, cfg.output_dir)
    return {"results": str(Path(cfg.output_dir) / "results_raw.csv"), "rows": len(rows)}


def cmd_report(args, cfg):
    src = Path(args.results or Path(cfg.output_dir) / "results_raw.csv")
    rows = harness.rows_from_csv(src.read_text())
    harness.report(rows, cfg.output_dir)
    return {"summary": str(Path(cfg.output_dir) / "summary.md"), "rows": len(rows)}


GLOBAL_DEFAULTS = {"config": "desk", "seed": None, "out": None, "workers": None,
                   "verbose": False}


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps subcommand parsers from clobbering flags given before them
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment JSON file or preset name "
                        "(desk, paper; default desk)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aluid", parents=[common],
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one trajectory")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", parents=[common], help="generate corpus and datasets")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train one model class ensemble")
    p.add_argument("--class", dest="model_class", required=True, choices=sorted(MODEL_CLASSES))
    p.add_argument("--dataset", help="dataset size name (default: first in config)")
    p.add_argument("--instances", type=int)
    p.add_argument("--corpus", help="corpus directory (default: <out>/corpus)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", parents=[common], help="rolling forecast of one trajectory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trajectory", required=True, help=".traj file")
    p.add_argument("--n", type=int, help="forecast steps (default: trajectory length)")
    p.add_argument("--h", type=float, help="step size in seconds (default: config)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", parents=[common], help="score checkpoints on the test set")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--corpus", help="corpus directory (default: <out>/corpus)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", parents=[common], help="run the full study")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", parents=[common], help="summarize a results CSV")
    p.add_argument("--results", help="raw results CSV (default: <out>/results_raw.csv)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        result = args.func(args, cfg)
    except (AluidError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    result["backend"] = BACKEND_NAME
    print(json.dumps(result, default=lambda o: o.item() if isinstance(o, np.generic) else str(o)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
