import dataclasses
import json
import warnings

import numpy as np
import pytest

from aluid import dataset as ds_mod
from aluid.dataset import InitBox, Pairs
from aluid.errors import DatasetFormatError
from aluid.plant import Trajectory

from conftest import load_fixture


def test_degenerate_box_is_deterministic():
    box = InitBox(**{f.name: (v[0], v[0]) for f in dataclasses.fields(InitBox)
                     for v in [getattr(InitBox(), f.name)]})
    a = ds_mod.sample_initial_state(box, np.random.default_rng(0))
    b = ds_mod.sample_initial_state(box, np.random.default_rng(99))
    assert a == b


def test_samples_inside_table_bounds():
    box = InitBox()
    rng = np.random.default_rng(0)
    x = np.array([ds_mod.sample_initial_state(box, rng) for _ in range(10_000)])
    for i, name in ((0, "x1"), (3, "x4"), (4, "x5"), (5, "x6"), (6, "x7"), (7, "x8")):
        lo, hi = getattr(box, name)
        assert x[:, i].min() >= lo and x[:, i].max() <= hi
    bath = x[:, 1] + x[:, 2] + x[:, 3]
    for i, name in ((1, "c_x2"), (2, "c_x3")):
        lo, hi = getattr(box, name)
        r = x[:, i] / bath
        assert r.min() >= lo - 1e-12 and r.max() <= hi + 1e-12
    assert np.all(x[:, 5] > x[:, 6]) and np.all(x[:, 6] > x[:, 7])


def test_ratio_solution_example():
    box = InitBox(c_x2=(0.03, 0.03), c_x3=(0.11, 0.11), x4=(14000.0, 14000.0))
    x = ds_mod.sample_initial_state(box, np.random.default_rng(0))
    s = 14000.0 / 0.86
    assert x.x2 == pytest.approx(0.03 * s, rel=1e-15)
    assert x.x3 == pytest.approx(0.11 * s, rel=1e-15)
    assert x.x2 / (x.x2 + x.x3 + x.x4) == pytest.approx(0.03, rel=1e-14)


def test_scaled_corpus_contract():
    c = ds_mod.build_corpus(1, 1, ds_mod.SimulationSetup(steps=10), master_seed=0)
    assert len(c.train) == 1 and len(c.test) == 1
    assert c.train[0].states.shape == (11, 8)
    assert c.train[0].seed != c.test[0].seed
    assert [e["id"] for e in c.manifest["train"]] == ["train/000"]


def test_corpus_reproducible_bytes(tmp_path):
    setup = ds_mod.SimulationSetup(steps=50)
    for d in ("a", "b"):
        ds_mod.save_corpus(ds_mod.build_corpus(2, 2, setup, master_seed=3), tmp_path / d)
    for rel in ("manifest.json", "train/000.traj", "train/001.traj", "test/001.traj"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_parallel_corpus_matches_serial():
    setup = ds_mod.SimulationSetup(steps=40)
    a = ds_mod.build_corpus(2, 2, setup, master_seed=1, workers=1)
    b = ds_mod.build_corpus(2, 2, setup, master_seed=1, workers=2)
    for x, y in zip(a.train + a.test, b.train + b.test):
        np.testing.assert_array_equal(x.states, y.states)


def test_trajectory_count_independent_of_test_count():
    setup = ds_mod.SimulationSetup(steps=20)
    a = ds_mod.build_corpus(2, 1, setup, master_seed=8)
    b = ds_mod.build_corpus(2, 4, setup, master_seed=8)
    np.testing.assert_array_equal(a.train[1].states, b.train[1].states)


def test_pairs_examples():
    x = np.zeros((4, 8))
    tr = Trajectory(x, np.zeros((3, 5)), h=10.0)
    p = ds_mod.to_pairs(tr)
    assert len(p) == 3 and not np.any(p.y)
    x = np.zeros((2, 8))
    x[1, 2] = 5.0
    p = ds_mod.to_pairs(Trajectory(x, np.ones((1, 5)), h=10.0))
    assert p.y[0, 2] == 0.5
    np.testing.assert_array_equal(p[0].z, np.r_[np.zeros(8), np.ones(5)])


def test_pairs_invert_to_trajectory(small_corpus):
    for tr in small_corpus.train:
        p = ds_mod.to_pairs(tr)
        assert len(p) == tr.steps
        np.testing.assert_allclose(p.z[:, :8] + tr.h * p.y, tr.states[1:], rtol=0, atol=1e-9)


def test_normalizer_two_points():
    p = Pairs(np.array([[0.0] * 13, [2.0] * 13]), np.array([[0.0] * 8, [2.0] * 8]))
    n = ds_mod.fit_normalizer(p)
    np.testing.assert_array_equal(n.z_mean, 1.0)
    np.testing.assert_array_equal(n.z_std, 1.0)
    assert not n.z_constant.any()


def test_normalizer_constant_dimension_flagged():
    z = np.arange(26.0).reshape(2, 13)
    z[:, 4] = 7.0
    p = Pairs(z, np.arange(16.0).reshape(2, 8))
    with pytest.warns(RuntimeWarning):
        n = ds_mod.fit_normalizer(p)
    assert n.z_constant[4] and n.z_std[4] == 1.0
    assert n.z_constant.sum() == 1


def test_normalizer_rejects_tiny_input():
    with pytest.raises(ValueError):
        ds_mod.fit_normalizer(Pairs(np.zeros((0, 13)), np.zeros((0, 8))))
    with pytest.raises(ValueError):
        ds_mod.fit_normalizer(Pairs(np.zeros((1, 13)), np.zeros((1, 8))))


def test_normalizer_matches_one_pass_oracle():
    c = ds_mod.build_corpus(2, 1, ds_mod.SimulationSetup(steps=200), master_seed=7)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ds = ds_mod.build_dataset(c.train, 2)
    ref = load_fixture("normalizer_golden.json")
    for k in ("z_mean", "z_std", "y_mean", "y_std"):
        np.testing.assert_allclose(getattr(ds.normalizer, k), ref[k], rtol=1e-10)


def test_nested_datasets(small_corpus):
    a = ds_mod.build_dataset(small_corpus.train, 1, "a")
    b = ds_mod.build_dataset(small_corpus.train, 3, "b")
    assert len(a) == 300 and len(b) == 900
    np.testing.assert_array_equal(b.pairs.z[:300], a.pairs.z)
    assert b.manifest["trajectory_ids"][:1] == a.manifest["trajectory_ids"]
    with pytest.raises(ValueError):
        ds_mod.build_dataset(small_corpus.train, 4)


def test_dataset_roundtrip(tmp_path, small_corpus):
    ds = ds_mod.build_dataset(small_corpus.train, 2, "small")
    ds_mod.save_dataset(ds, tmp_path / "dataset_small")
    back = ds_mod.load_dataset(tmp_path / "dataset_small")
    np.testing.assert_array_equal(back.pairs.z, ds.pairs.z)
    np.testing.assert_array_equal(back.pairs.y, ds.pairs.y)
    for k in ("z_mean", "z_std", "y_mean", "y_std"):
        np.testing.assert_array_equal(getattr(back.normalizer, k), getattr(ds.normalizer, k))
    assert back.manifest["trajectory_ids"] == ds.manifest["trajectory_ids"]


def test_corpus_roundtrip(tmp_path, small_corpus):
    ds_mod.save_corpus(small_corpus, tmp_path / "c")
    back = ds_mod.load_corpus(tmp_path / "c")
    for a, b in zip(small_corpus.train + small_corpus.test, back.train + back.test):
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        assert (a.id, a.seed, a.h) == (b.id, b.seed, b.h)


def test_truncated_files_raise(tmp_path, small_corpus):
    root = ds_mod.save_corpus(small_corpus, tmp_path / "c")
    path = root / "train/000.traj"
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(DatasetFormatError):
        ds_mod.load_corpus(root)
    with pytest.raises(DatasetFormatError):
        ds_mod.load_trajectory(path)
    path.write_bytes(data[:5])
    with pytest.raises(DatasetFormatError):
        ds_mod.load_trajectory(path)


def test_dataset_checksum_and_count_checks(tmp_path, small_corpus):
    ds = ds_mod.build_dataset(small_corpus.train, 1)
    stem = tmp_path / "d"
    ds_mod.save_dataset(ds, stem)
    raw = bytearray(stem.with_suffix(".bin").read_bytes())
    raw[-1] ^= 1
    stem.with_suffix(".bin").write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError):
        ds_mod.load_dataset(stem)
    ds_mod.save_dataset(ds, stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    meta["n_pairs"] += 1
    stem.with_suffix(".json").write_text(json.dumps(meta))
    with pytest.raises(DatasetFormatError):
        ds_mod.load_dataset(stem)
    meta["format_version"] = 99
    stem.with_suffix(".json").write_text(json.dumps(meta))
    with pytest.raises(DatasetFormatError):
        ds_mod.load_dataset(stem)


@pytest.mark.slow
def test_paper_scale_shapes():
    setup = ds_mod.SimulationSetup()
    c = ds_mod.build_corpus(40, 100, setup, master_seed=0)
    assert len(c.train) + len(c.test) == 140
    assert all(t.states.shape == (5001, 8) for t in c.train + c.test)
    sizes = {name: len(ds_mod.build_dataset(c.train, n)) for name, n in
             ds_mod.DATASET_SIZES.items()}
    assert sizes == {"small": 50000, "medium": 100000, "large": 200000}
