import csv

import numpy as np
import pytest

from fdonet import dataset as ds
from fdonet.autograd import load_checkpoint
from fdonet.metrics import aggregate, read_metric_csv
from fdonet.train import (
    Arrays,
    Corruption,
    TrainConfig,
    Trainer,
    TrainingDiverged,
    build_model,
    corrupted_inputs,
    evaluate_model,
    load_model,
    shifted_locations,
    split_indices,
    sweep,
    toy_model_config,
    write_eval_csv,
    write_sweep_csv,
)


def small_config(data, **kw):
    return toy_model_config(n_time=data.seismic.shape[1], n_receivers=data.seismic.shape[2],
                            xi_len=data.kind.xi_len, modes=(4, 4), **kw)


@pytest.fixture(scope="module")
def data(tiny_data):
    return ds.load_dataset(str(tiny_data("var-fl")))


def make_trainer(data, epochs=2, seed=0, **kw):
    model = build_model("fdon", small_config(data), seed)
    return Trainer(model, "fdon", TrainConfig(epochs=epochs, batch_size=4, lr=1e-3, seed=seed, **kw))


def split(data, cfg=TrainConfig()):
    a = Arrays.from_dataset(data)
    tr, va = split_indices(len(data), 0.25, cfg.seed)
    return a.take(tr), a.take(va)


def params_of(path):
    arrays, meta = load_checkpoint(path)
    return {k: v for k, v in arrays.items() if k.startswith("param/")}, meta


class TestSplit:
    def test_disjoint_and_deterministic(self):
        tr, va = split_indices(40, 0.125, 3)
        assert len(va) == 5 and len(tr) == 35
        assert not set(tr) & set(va)
        assert np.array_equal(split_indices(40, 0.125, 3)[1], va)

    def test_rejects_empty_train(self):
        with pytest.raises(ValueError):
            split_indices(2, 1.0, 0)

    def test_lr_schedule(self):
        cfg = TrainConfig(lr=1e-2, lr_gamma=0.5, lr_step=2)
        assert [cfg.lr_at(e) for e in range(5)] == [1e-2, 1e-2, 5e-3, 5e-3, 2.5e-3]


class TestTrainer:
    def test_zero_epochs_saves_initialization(self, data, tmp_path):
        t = make_trainer(data, epochs=0)
        init = {n: p.data.copy() for n, p in t.model.named_parameters()}
        t.fit(*split(data), out_dir=str(tmp_path))
        saved, meta = params_of(str(tmp_path / "last.ckpt"))
        assert meta["epoch"] == 0
        for n, arr in init.items():
            assert saved["param/" + n].tobytes() == arr.tobytes()

    def test_history_and_log(self, data, tmp_path):
        t = make_trainer(data, epochs=2)
        hist = t.fit(*split(data), out_dir=str(tmp_path), log_csv=str(tmp_path / "log.csv"))
        assert [h["epoch"] for h in hist] == [1, 2]
        with open(tmp_path / "log.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["epoch", "train_loss", "val_loss", "lr"]
        assert float(rows[1]["train_loss"]) == hist[1]["train_loss"]
        assert (tmp_path / "best.ckpt").exists()

    def test_resume_is_bitwise(self, data, tmp_path):
        full = make_trainer(data, epochs=3)
        full.fit(*split(data), out_dir=str(tmp_path / "full"))
        part = make_trainer(data, epochs=1)
        part.fit(*split(data), out_dir=str(tmp_path / "part"))
        resumed = Trainer.resume(str(tmp_path / "part" / "last.ckpt"),
                                 TrainConfig(epochs=3, batch_size=4, lr=1e-3))
        resumed.fit(*split(data), out_dir=str(tmp_path / "part"))
        a, ma = params_of(str(tmp_path / "full" / "last.ckpt"))
        b, mb = params_of(str(tmp_path / "part" / "last.ckpt"))
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)
        assert ma["history"][-1]["train_loss"] == mb["history"][-1]["train_loss"]

    def test_nan_aborts_keeping_last_checkpoint(self, data, tmp_path):
        t = make_trainer(data, epochs=2)
        train, val = split(data)
        t.fit(train, val, out_dir=str(tmp_path))
        good, _ = params_of(str(tmp_path / "last.ckpt"))
        bad = Arrays(train.p.copy(), train.xi, train.y)
        bad.p[0, 0, 0, 0] = np.nan
        t.cfg = TrainConfig(epochs=3, batch_size=4, lr=1e-3)
        with pytest.raises(TrainingDiverged):
            t.fit(bad, val, out_dir=str(tmp_path))
        after, meta = params_of(str(tmp_path / "last.ckpt"))
        assert meta["epoch"] == 2
        assert all(good[k].tobytes() == after[k].tobytes() for k in good)

    def test_load_model_roundtrip(self, data, tmp_path):
        t = make_trainer(data, epochs=1)
        t.fit(*split(data), out_dir=str(tmp_path))
        model, meta = load_model(str(tmp_path / "last.ckpt"))
        a = Arrays.from_dataset(data)
        assert np.array_equal(model(a.p, a.xi).data, t.model(a.p, a.xi).data)
        assert meta["model_kind"] == "fdon"


@pytest.fixture(scope="module")
def model(data):
    return build_model("fdon", small_config(data), 1)


class TestEvaluate:
    def test_zero_noise_matches_clean(self, model, data):
        a = evaluate_model(model, data)
        b = evaluate_model(model, data, Corruption(noise=0.0, missing=0))
        assert a == b

    def test_corruption_reproducible(self, data):
        c = Corruption(noise=0.1, missing=5, seed=4)
        p1, _ = corrupted_inputs(data, c)
        p2, _ = corrupted_inputs(data, c)
        assert np.array_equal(p1, p2)
        dead = ~p1.any(axis=(1, 3))
        assert np.all(dead.sum(axis=1) == 5)

    def test_source_noise_resimulates(self, data):
        p, _ = corrupted_inputs(data.subset([0]), Corruption(source_noise=0.05, seed=2))
        assert not np.array_equal(p, data.subset([0]).seismic_norm)
        assert np.max(np.abs(p - data.subset([0]).seismic_norm)) < 1.0

    def test_all_traces_missing_degrades(self, model, data):
        clean = aggregate(evaluate_model(model, data)).l2rel
        dead = aggregate(evaluate_model(model, data, Corruption(missing=24))).l2rel
        assert dead != clean

    def test_incompatible_xi(self, model, tiny_data):
        other = ds.load_dataset(str(tiny_data("var-f", n=4)))
        with pytest.raises(ValueError):
            evaluate_model(model, other)

    def test_csv_aggregate_row(self, model, data, tmp_path):
        reports = evaluate_model(model, data)
        write_eval_csv(str(tmp_path / "e.csv"), data, reports)
        rows = read_metric_csv(str(tmp_path / "e.csv"))
        assert len(rows) == len(data) + 1
        for col in ("mae", "rmse", "ssim", "l2rel"):
            mean = np.mean([float(r[col]) for r in rows[:-1]])
            assert abs(float(rows[-1][col]) - mean) < 1e-12


class TestSweep:
    def test_shift_rows(self, model, data, tmp_path):
        sub = data.subset([0, 1])
        rows = sweep(model, sub, "shift")
        assert [v for v, _ in rows] == [0.0, 10.0, 20.0, 30.0, 40.0, 50.0]
        write_sweep_csv(str(tmp_path / "s.csv"), "shift", rows)
        with open(tmp_path / "s.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "shift,mae,rmse,ssim,l2rel"
        assert len(lines) == 7

    def test_shift_geometry(self):
        assert shifted_locations(0.0) == (0.0, 122.5, 295.0, 567.5, 690.0)
        assert shifted_locations(50.0) == (50.0, 172.5, 295.0, 517.5, 640.0)
        with pytest.raises(ValueError):
            shifted_locations(60.0)

    def test_shift_beyond_range(self, model, data):
        with pytest.raises(ValueError):
            sweep(model, data.subset([0]), "shift", [0.0, 60.0])

    def test_noise_and_missing_axes(self, model, data):
        rows = sweep(model, data.subset([0, 1, 2]), "noise", [0.01, 1.0])
        assert len(rows) == 2
        rows = sweep(model, data.subset([0, 1, 2]), "missing", [0, 24])
        assert rows[0][1] != rows[1][1]

    def test_frequency_needs_varying_kind(self, data, tiny_data):
        fixed = ds.load_dataset(str(tiny_data("fixed", n=4)))
        m = build_model("fdon", small_config(fixed), 0)
        with pytest.raises(ValueError):
            sweep(m, fixed, "frequency")
        with pytest.raises(ValueError):
            sweep(m, fixed, "shift")

    def test_unknown_axis(self, model, data):
        with pytest.raises(ValueError):
            sweep(model, data, "bogus")
