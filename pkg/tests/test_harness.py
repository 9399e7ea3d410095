import shutil

import numpy as np
import pytest

from aluid import harness
from aluid.errors import ConfigError
from aluid.harness import ExperimentConfig, ResultRow
from aluid.nn import ArchitectureSpec
from aluid.train import TrainConfig

from conftest import FIXTURES


def tiny_config(out, **kw):
    base = dict(master_seed=3, n_train=2, n_test=5, steps=500,
                dataset_sizes={"small": 2}, model_classes=["PlainDense", "InputSkipSparse"],
                instances=2, horizons=[10, 100, 500], train=TrainConfig(epochs=2),
                architecture=ArchitectureSpec(hidden_width=10), output_dir=str(out))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = tiny_config(out)
    return cfg, harness.run_experiment(cfg)


def test_row_count_identity(tiny_run):
    cfg, rows = tiny_run
    assert len(rows) == 2 * 2 * 5 * 3 == 60
    keys = [r.key() for r in rows]
    assert len(set(keys)) == len(keys)
    assert keys == sorted(keys, key=lambda k: (k[0], cfg.model_classes.index(k[1]), k[2],
                                               k[3], k[4]))


def test_artifacts_written(tiny_run):
    cfg, rows = tiny_run
    out = harness.Path(cfg.output_dir)
    assert (out / "corpus/manifest.json").exists()
    assert (out / "corpus/dataset_small.bin").exists()
    assert len(list((out / "models/small").glob("*.json"))) == 4
    assert len(list((out / "models/small/logs").glob("*.csv"))) == 4
    assert not (out / "errors.json").exists()
    assert harness.rows_from_csv((out / "results_raw.csv").read_text()) == rows


def test_seeds_shared_across_classes(tiny_run):
    cfg, rows = tiny_run
    seeds = {c: sorted({r.seed for r in rows if r.model_class == c}) for c in cfg.model_classes}
    assert seeds["PlainDense"] == seeds["InputSkipSparse"] == harness.instance_seeds(cfg, 0)


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg, _ = tiny_run
    harness.run_experiment(tiny_config(tmp_path))
    assert (tmp_path / "results_raw.csv").read_bytes() == \
        (harness.Path(cfg.output_dir) / "results_raw.csv").read_bytes()


def test_resume_after_interruption(tiny_run, tmp_path):
    cfg, _ = tiny_run
    ref = (harness.Path(cfg.output_dir) / "results_raw.csv").read_bytes()
    shutil.copytree(cfg.output_dir, tmp_path / "r")
    r = tmp_path / "r"
    # drop one finished cell and the evaluation of another
    victim = sorted((r / "models/small").glob("InputSkipSparse_*.json"))[0]
    victim.unlink()
    (r / "metrics/small" / victim.with_suffix(".csv").name).unlink()
    sorted((r / "metrics/small").glob("PlainDense_*.csv"))[1].unlink()
    (r / "results_raw.csv").unlink()
    harness.run_experiment(tiny_config(r))
    assert (r / "results_raw.csv").read_bytes() == ref


def test_mismatched_corpus_rejected(tiny_run, tmp_path):
    cfg, _ = tiny_run
    shutil.copytree(harness.Path(cfg.output_dir) / "corpus", tmp_path / "corpus")
    with pytest.raises(ConfigError):
        harness.run_experiment(tiny_config(tmp_path, master_seed=4))


def test_failed_cells_recorded(tmp_path):
    cfg = tiny_config(tmp_path, train=TrainConfig(epochs=1, lr=1e300), instances=1)
    rows = harness.run_experiment(cfg)
    assert rows == []
    errors = harness.json.loads((tmp_path / "errors.json").read_text())
    assert {e["stage"] for e in errors} == {"train"}
    assert len(errors) == 2


def test_config_validation_and_presets():
    desk = harness.load_config("desk")
    paper = harness.load_config("paper")
    assert paper.dataset_sizes == {"small": 10, "medium": 20, "large": 40}
    assert paper.instances == 10 and paper.n_test == 100 and paper.horizons == [100, 2000, 5000]
    assert desk.n_train == 5 and desk.steps == 1000
    assert ExperimentConfig.from_dict(desk.to_dict()).to_dict() == desk.to_dict()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig(horizons=[500, 100])
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset_sizes={"huge": 41})
    with pytest.raises(ConfigError):
        harness.load_config("no-such-preset")


def _row(c="PlainDense", seed=0, t="test/000", n=10, v=0.1, blow=False):
    return ResultRow(c, seed, "small", t, n, None if blow else v, blow, None)


def test_blowup_counts():
    rows = [_row(t=f"test/{i:03d}", blow=i < 3) for i in range(10)]
    (s,) = harness.blowup_summary(rows)
    assert (s["blowups"], s["total"]) == (3, 10)
    assert harness.blowup_summary([_row(v=0.0)])[0]["blowups"] == 0


def test_accuracy_summary_stats():
    vals = [0.1, 0.4, 0.2, 0.9, 0.5]
    rows = [_row(t=f"test/{i:03d}", v=v) for i, v in enumerate(vals)]
    rows.append(_row(t="test/099", blow=True))
    (a,) = harness.accuracy_summary(rows)

    # brute-force linear-interpolation quantiles
    def quantile(xs, q):
        xs = sorted(xs)
        pos = (len(xs) - 1) * q
        lo = int(pos)
        hi = min(lo + 1, len(xs) - 1)
        return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)

    assert a["count"] == 5
    assert a["min"] == 0.1 and a["max"] == 0.9
    assert a["q1"] == pytest.approx(quantile(vals, 0.25)) == pytest.approx(0.2)
    assert a["median"] == pytest.approx(0.4) and a["q3"] == pytest.approx(0.5)
    assert a["mean"] == pytest.approx(np.mean(vals))


def test_accuracy_edge_cells():
    (a,) = harness.accuracy_summary([_row(v=0.0), _row(t="test/001", v=0.0)])
    assert all(a[k] == 0.0 for k in ("min", "q1", "median", "q3", "max", "mean"))
    (a,) = harness.accuracy_summary([_row(v=0.25)])
    assert a["min"] == a["max"] == a["mean"] == 0.25
    (a,) = harness.accuracy_summary([_row(blow=True)])
    assert a["count"] == 0 and a["median"] is None


def test_report_golden_files(tmp_path):
    rows = harness.rows_from_csv((FIXTURES / "report_rows.csv").read_text())
    harness.report(rows, tmp_path)
    for name in ("results_raw.csv", "blowups.csv", "accuracy.csv", "summary.md"):
        assert (tmp_path / name).read_text() == (FIXTURES / "report_golden" / name).read_text()


def test_report_empty_table(tmp_path):
    harness.report([], tmp_path)
    assert (tmp_path / "results_raw.csv").read_text().strip() == ",".join(harness.RESULT_FIELDS)
    assert (tmp_path / "blowups.csv").read_text().strip() == ",".join(harness.BLOWUP_FIELDS)
    assert (tmp_path / "accuracy.csv").read_text().strip() == ",".join(harness.ACCURACY_FIELDS)


def test_summaries_are_pure(tiny_run):
    _, rows = tiny_run
    assert harness.accuracy_summary(rows) == harness.accuracy_summary(list(rows))
    key = lambda d: (d["model_class"], d["dataset_size"], d["horizon"])  # noqa: E731
    assert sorted(harness.blowup_summary(rows), key=key) == \
        sorted(harness.blowup_summary(rows[::-1]), key=key)


def test_rows_csv_roundtrip_and_header_check():
    rows = [_row(), _row(t="test/001", blow=True)]
    assert harness.rows_from_csv(harness.rows_to_csv(rows)) == rows
    with pytest.raises(ConfigError):
        harness.rows_from_csv("a,b\n1,2\n")
