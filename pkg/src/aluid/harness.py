"""Monte Carlo study: corpus -> nested datasets -> model ensembles -> metrics.

Output directory layout::

    <out>/corpus/            manifest.json, train/*.traj, test/*.traj,
                             dataset_<size>.bin/.json
    <out>/models/<size>/     <class>_<seed>.json checkpoints, logs/*.csv
    <out>/metrics/<size>/    <class>_<seed>.csv per-model metric rows
    <out>/results_raw.csv    merged rows, deterministic order
    <out>/errors.json        per-stage failures, if any

Every stage is skipped when its artifact already exists, so an interrupted
run resumes where it stopped and yields the same table.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from .control import AprbsConfig, ControllerConfig
from .errors import AluidError, ConfigError
from .evaluate import evaluate_model
from .nn import ArchitectureSpec, ModelCheckpoint
from .plant import PlantParams
from .seeding import derive_seed
from .train import MODEL_CLASSES, TrainConfig, class_spec, train_model

log = logging.getLogger(__name__)

RESULT_FIELDS = ("model_class", "seed", "dataset_size", "trajectory_id", "horizon",
                 "an_rfmse", "blowup", "divergence_step")


@dataclasses.dataclass
class ExperimentConfig:
    master_seed: int = 0
    n_train: int = 40
    n_test: int = 100
    steps: int = 5000
    h: float = 10.0
    dataset_sizes: dict = dataclasses.field(
        default_factory=lambda: dict(ds_mod.DATASET_SIZES))
    model_classes: list = dataclasses.field(default_factory=lambda: list(MODEL_CLASSES))
    instances: int = 10
    horizons: list = dataclasses.field(default_factory=lambda: [100, 2000, 5000])
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    architecture: ArchitectureSpec = dataclasses.field(default_factory=ArchitectureSpec)
    plant_params: PlantParams = dataclasses.field(default_factory=PlantParams.default)
    controller: ControllerConfig = dataclasses.field(default_factory=ControllerConfig)
    aprbs: AprbsConfig = dataclasses.field(default_factory=AprbsConfig)
    init_box: ds_mod.InitBox = dataclasses.field(default_factory=ds_mod.InitBox)
    output_dir: str = "runs/experiment"
    workers: int = 1

    def __post_init__(self):
        if list(self.horizons) != sorted(self.horizons) or not self.horizons:
            raise ConfigError("horizons must be a nonempty ascending list")
        if self.horizons[-1] > self.steps:
            raise ConfigError("longest horizon exceeds trajectory length")
        sizes = list(self.dataset_sizes.values())
        if any(s < 1 or s > self.n_train for s in sizes):
            raise ConfigError("dataset sizes must lie in 1..n_train")
        for c in self.model_classes:
            if c not in MODEL_CLASSES:
                raise ConfigError(f"unknown model class {c!r}")
        if self.instances < 1 or self.n_test < 1:
            raise ConfigError("need at least one instance and one test trajectory")

    @property
    def simulation(self) -> ds_mod.SimulationSetup:
        return ds_mod.SimulationSetup(self.plant_params, self.controller, self.aprbs,
                                      self.init_box, self.steps, self.h)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown experiment keys {sorted(extra)}")
        try:
            if "train" in d:
                d["train"] = TrainConfig(**d["train"])
            if "architecture" in d:
                d["architecture"] = ArchitectureSpec(**d["architecture"])
            if "plant_params" in d:
                p = d["plant_params"]
                d["plant_params"] = PlantParams.load(p) if isinstance(p, str) \
                    else PlantParams.from_dict(p)
            if "controller" in d:
                d["controller"] = ControllerConfig.from_dict(d["controller"])
            if "aprbs" in d:
                d["aprbs"] = AprbsConfig.from_dict(d["aprbs"])
            if "init_box" in d:
                d["init_box"] = ds_mod.InitBox.from_dict(d["init_box"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed, "n_train": self.n_train,
            "n_test": self.n_test, "steps": self.steps, "h": self.h,
            "dataset_sizes": dict(self.dataset_sizes),
            "model_classes": list(self.model_classes), "instances": self.instances,
            "horizons": list(self.horizons),
            "train": dataclasses.asdict(self.train),
            "architecture": self.architecture.to_dict(),
            "plant_params": self.plant_params.to_dict(),
            "controller": self.controller.to_dict(), "aprbs": self.aprbs.to_dict(),
            "init_box": self.init_box.to_dict(), "output_dir": self.output_dir,
            "workers": self.workers,
        }


def load_config(path_or_preset) -> ExperimentConfig:
    """Load a JSON config file, or a shipped preset by name (``desk``, ``paper``)."""
    p = Path(str(path_or_preset))
    if p.exists():
        text = p.read_text()
    else:
        res = resources.files("aluid").joinpath(f"config/{path_or_preset}.json")
        if not res.is_file():
            raise ConfigError(f"no config file or preset named {path_or_preset!r}")
        text = res.read_text()
    try:
        return ExperimentConfig.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path_or_preset}: {exc}") from exc


@dataclasses.dataclass(frozen=True)
class ResultRow:
    model_class: str
    seed: int
    dataset_size: str
    trajectory_id: str
    horizon: int
    an_rfmse: float | None
    blowup: bool
    divergence_step: int | None

    def key(self):
        return (self.dataset_size, self.model_class, self.seed, self.trajectory_id,
                self.horizon)


ResultsTable = list  # list[ResultRow]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([r.model_class, r.seed, r.dataset_size, r.trajectory_id, r.horizon,
                    "" if r.an_rfmse is None else repr(r.an_rfmse), int(r.blowup),
                    "" if r.divergence_step is None else r.divergence_step])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
        raise ConfigError(f"unexpected results header {reader.fieldnames}")
    return [ResultRow(r["model_class"], int(r["seed"]), r["dataset_size"],
                      r["trajectory_id"], int(r["horizon"]),
                      None if r["an_rfmse"] == "" else float(r["an_rfmse"]),
                      bool(int(r["blowup"])),
                      None if r["divergence_step"] == "" else int(r["divergence_step"]))
            for r in reader]


def metrics_to_rows(metrics, model_class, seed, size_name) -> list[ResultRow]:
    rows = []
    for m in metrics:
        for n in m.horizons:
            rows.append(ResultRow(model_class, int(seed), size_name, m.trajectory_id, int(n),
                                  m.an_rfmse[n], bool(m.blowup[n]), m.divergence_step))
    return rows


def instance_seeds(cfg: ExperimentConfig, size_index: int) -> list[int]:
    """Seeds shared by all classes trained on one dataset size."""
    base = derive_seed(cfg.master_seed, "model_init", size_index) % (2 ** 31)
    return [base + i for i in range(cfg.instances)]


def _corpus_stage(cfg: ExperimentConfig, out: Path):
    root = out / "corpus"
    if (root / "manifest.json").exists():
        corpus = ds_mod.load_corpus(root)
        m = corpus.manifest
        if (m["master_seed"] != cfg.master_seed or m["steps"] != cfg.steps
                or len(m["train"]) != cfg.n_train or len(m["test"]) != cfg.n_test
                or m["params"] != cfg.plant_params.to_dict()):
            raise ConfigError(f"{root} holds a corpus from a different configuration")
        log.info("loaded corpus from %s", root)
    else:
        corpus = ds_mod.build_corpus(cfg.n_train, cfg.n_test, cfg.simulation,
                                     cfg.master_seed, workers=cfg.workers)
        ds_mod.save_corpus(corpus, root)
        log.info("generated corpus in %s", root)
    datasets = {}
    for name, n in cfg.dataset_sizes.items():
        stem = root / f"dataset_{name}"
        if stem.with_suffix(".json").exists():
            datasets[name] = ds_mod.load_dataset(stem)
        else:
            datasets[name] = ds_mod.build_dataset(corpus.train, n, name)
            ds_mod.save_dataset(datasets[name], stem)
    return corpus, datasets


def _train_cell(args):
    cfg, model_class, seed, dataset, path = args
    spec, lam = class_spec(model_class, cfg.architecture)
    tcfg = dataclasses.replace(cfg.train, lam=lam, seed=seed)
    ck = train_model(spec, dataset, tcfg, log_path=path.parent / "logs" / f"{path.stem}.csv",
                     model_class=model_class)
    ck.save(path)
    return str(path)


def _eval_cell(args):
    ck_path, test, horizons, model_class, seed, size_name, path = args
    ck = ModelCheckpoint.load(ck_path)
    rows = metrics_to_rows(evaluate_model(ck, test, horizons, model_id=Path(ck_path).stem),
                           model_class, seed, size_name)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows))
    return str(path)


def _run_cells(fn, jobs, workers, errors, stage):
    """Run jobs; failures are recorded and skipped."""
    def record(job, exc):
        errors.append({"stage": stage, "cell": str(job[-1]), "type": type(exc).__name__,
                       "message": str(exc)})
        log.warning("%s failed for %s: %s", stage, job[-1], exc)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(job, pool.submit(fn, job)) for job in jobs]
            for job, fut in futures:
                try:
                    fut.result()
                except (AluidError, ValueError, OSError) as exc:
                    record(job, exc)
    else:
        for job in jobs:
            try:
                fn(job)
            except (AluidError, ValueError, OSError) as exc:
                record(job, exc)


def run_experiment(cfg: ExperimentConfig, out=None) -> list[ResultRow]:
    """Run (or resume) the full study and return the merged results table."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    corpus, datasets = _corpus_stage(cfg, out)
    errors: list[dict] = []

    cells = []  # (size_name, class, seed, checkpoint path, metrics path)
    for si, size_name in enumerate(cfg.dataset_sizes):
        for model_class in cfg.model_classes:
            for seed in instance_seeds(cfg, si):
                cells.append((size_name, model_class, seed,
                              out / "models" / size_name / f"{model_class}_{seed}.json",
                              out / "metrics" / size_name / f"{model_class}_{seed}.csv"))

    train_jobs = [(cfg, c, s, datasets[z], ck) for z, c, s, ck, _ in cells if not ck.exists()]
    _run_cells(_train_cell, train_jobs, cfg.workers, errors, "train")

    eval_jobs = [(str(ck), corpus.test, cfg.horizons, c, s, z, mp)
                 for z, c, s, ck, mp in cells if ck.exists() and not mp.exists()]
    _run_cells(_eval_cell, eval_jobs, cfg.workers, errors, "evaluate")

    rows = []
    for z, c, s, ck, mp in cells:
        if mp.exists():
            rows.extend(rows_from_csv(mp.read_text()))
    (out / "results_raw.csv").write_text(rows_to_csv(rows))
    err_path = out / "errors.json"
    if errors:
        err_path.write_text(json.dumps(errors, indent=1) + "\n")
    elif err_path.exists():
        err_path.unlink()
    return rows


# --- summaries ------------------------------------------------------------

def _cells(rows):
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.model_class, r.dataset_size, r.horizon), []).append(r)
    return groups


def blowup_summary(rows) -> list[dict]:
    """Blow-up counts per (class, dataset size, horizon) out of instances x trajectories."""
    out = []
    for (c, z, n), grp in _cells(rows).items():
        out.append({"model_class": c, "dataset_size": z, "horizon": n,
                    "blowups": sum(r.blowup for r in grp), "total": len(grp)})
    return out


def accuracy_summary(rows) -> list[dict]:
    """AN-RFMSE distribution per cell, blown-up forecasts excluded.

    Cells where every forecast blew up report ``count = 0`` and ``None`` stats.
    """
    out = []
    for (c, z, n), grp in _cells(rows).items():
        vals = np.array([r.an_rfmse for r in grp if not r.blowup and r.an_rfmse is not None])
        entry = {"model_class": c, "dataset_size": z, "horizon": n, "count": int(vals.size)}
        if vals.size:
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            entry.update(min=float(vals.min()), q1=float(q1), median=float(med),
                         q3=float(q3), max=float(vals.max()), mean=float(vals.mean()))
        else:
            entry.update(min=None, q1=None, median=None, q3=None, max=None, mean=None)
        out.append(entry)
    return out


BLOWUP_FIELDS = ("model_class", "dataset_size", "horizon", "blowups", "total")
ACCURACY_FIELDS = ("model_class", "dataset_size", "horizon", "count", "min", "q1",
                   "median", "q3", "max", "mean")


def _dicts_to_csv(fields, dicts):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for d in dicts:
        w.writerow(["" if d[f] is None else (repr(d[f]) if isinstance(d[f], float) else d[f])
                    for f in fields])
    return buf.getvalue()


def _markdown(blow, acc):
    lines = ["# Experiment summary", ""]
    if not blow:
        lines.append("No results.")
        return "\n".join(lines) + "\n"
    sizes = sorted({b["dataset_size"] for b in blow})
    for z in sizes:
        lines += [f"## Dataset `{z}`", "",
                  "| class | horizon | blow-ups | median AN-RFMSE | mean AN-RFMSE |",
                  "|---|---|---|---|---|"]
        acc_by = {(a["model_class"], a["horizon"]): a for a in acc if a["dataset_size"] == z}
        for b in sorted((b for b in blow if b["dataset_size"] == z),
                        key=lambda b: (b["horizon"], b["model_class"])):
            a = acc_by[(b["model_class"], b["horizon"])]
            med = "-" if a["median"] is None else f"{a['median']:.4g}"
            mean = "-" if a["mean"] is None else f"{a['mean']:.4g}"
            lines.append(f"| {b['model_class']} | {b['horizon']} | "
                         f"{b['blowups']}/{b['total']} | {med} | {mean} |")
        lines.append("")
    return "\n".join(lines)


def report(rows, out_dir) -> dict:
    """Write ``results_raw.csv``, ``blowups.csv``, ``accuracy.csv`` and ``summary.md``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    blow = blowup_summary(rows)
    acc = accuracy_summary(rows)
    (out / "results_raw.csv").write_text(rows_to_csv(rows))
    (out / "blowups.csv").write_text(_dicts_to_csv(BLOWUP_FIELDS, blow))
    (out / "accuracy.csv").write_text(_dicts_to_csv(ACCURACY_FIELDS, acc))
    (out / "summary.md").write_text(_markdown(blow, acc))
    return {"blowups": blow, "accuracy": acc}
