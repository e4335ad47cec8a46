"""Training, evaluation and sweeps for the velocity-inversion models."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import dataset as ds
from .autograd import Adam, load_checkpoint, no_grad, save_checkpoint
from .autograd.checkpoint import CheckpointError
from .metrics import MetricReport, aggregate, evaluate
from .model import FdonConfig, FourierDeepONet, VanillaConfig, VanillaDeepONet, velocity_loss
from .sim import SourceSpec, VelocityMap, forward_gather

log = logging.getLogger(__name__)

SWEEP_AXES = ("frequency", "shift", "noise", "missing", "source-noise")
MAX_SHIFT = 50.0
# outermost in-range positions; shifting moves A, B right and D, E left
SHIFT_BASE = (0.0, 122.5, 295.0, 567.5, 690.0)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    lr_gamma: float = 1.0
    lr_step: int = 1
    seed: int = 0
    lam1: float = 1.0
    lam2: float = 1.0
    val_fraction: float = 0.125
    zero_xi: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.lr_step < 1:
            raise ValueError("lr_step must be >= 1")

    def lr_at(self, epoch):
        return self.lr * self.lr_gamma ** (epoch // self.lr_step)


def toy_model_config(n_time=200, n_receivers=36, xi_len=1, **overrides):
    """Reduced Fourier-DeepONet sized for the 36x36 toy task."""
    kw = dict(n_time=n_time, n_receivers=n_receivers, channels=8, modes=(8, 8),
              concat_split=(6, 2), xi_len=xi_len, projection_width=32,
              time_reduction=(n_time, n_time // 2, n_time // 4, n_receivers))
    kw.update(overrides)
    cfg = FdonConfig(**kw)
    cfg.validate()
    return cfg


def build_model(kind, config, seed):
    if kind == "fdon":
        return FourierDeepONet(config, seed)
    if kind == "vanilla":
        return VanillaDeepONet(config, seed)
    raise ValueError(f"unknown model kind {kind!r}")


def config_from_dict(kind, d):
    return FdonConfig.from_dict(d) if kind == "fdon" else VanillaConfig(**d)


def split_indices(n, val_fraction, seed):
    """Deterministic train/validation split."""
    perm = np.random.default_rng([seed, 0x5EED]).permutation(n)
    n_val = int(round(n * val_fraction))
    if n_val >= n:
        raise ValueError("validation split leaves no training samples")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass
class Arrays:
    """Normalized model inputs and targets."""

    p: np.ndarray
    xi: np.ndarray
    y: np.ndarray

    @classmethod
    def from_dataset(cls, data: ds.Dataset, zero_xi=False):
        xi = data.xi_norm
        if zero_xi:
            xi = np.zeros_like(xi)
        return cls(data.seismic_norm, xi, data.velocity_norm)

    def __len__(self):
        return self.p.shape[0]

    def take(self, idx):
        return Arrays(self.p[idx], self.xi[idx], self.y[idx])


def predict(model, p, xi, batch_size=32):
    out = []
    with no_grad():
        for s in range(0, p.shape[0], batch_size):
            out.append(model(p[s:s + batch_size], xi[s:s + batch_size]).data)
    return np.concatenate(out) if out else np.zeros((0,))


class Trainer:
    """Mini-batch Adam with per-epoch shuffling keyed by ``(seed, epoch)``.

    Everything that influences future updates (weights, Adam moments, step
    count, epoch, best validation loss) is saved in checkpoints, so a
    resumed run continues bitwise like an uninterrupted one.
    """

    def __init__(self, model, model_kind, config: TrainConfig, meta=None):
        self.model = model
        self.model_kind = model_kind
        self.cfg = config
        self.opt = Adam(model.parameters(), lr=config.lr)
        self.epoch = 0
        self.best_val = math.inf
        self.history = []
        self.meta = dict(meta or {})

    # -- checkpoints --------------------------------------------------
    def _meta(self):
        return dict(self.meta, model_kind=self.model_kind,
                    model_config=self.model.config.to_dict(),
                    train=dataclasses.asdict(self.cfg), epoch=self.epoch,
                    best_val=self.best_val if math.isfinite(self.best_val) else None,
                    adam_step=self.opt.state.step, history=self.history)

    def save(self, path):
        arrays = OrderedDict(("param/" + n, p.data) for n, p in self.model.named_parameters())
        if self.opt.state.m:
            names = [n for n, _ in self.model.named_parameters()]
            for n, m, v in zip(names, self.opt.state.m, self.opt.state.v):
                arrays["adam_m/" + n] = m
                arrays["adam_v/" + n] = v
        tmp = path + ".tmp"
        save_checkpoint(tmp, arrays, self._meta())
        os.replace(tmp, path)

    @classmethod
    def resume(cls, path, config: TrainConfig | None = None):
        model, meta, arrays = load_model(path, return_arrays=True)
        cfg = config or TrainConfig(**meta["train"])
        keep = ("norm", "kind", "zero_xi", "sample_ids")
        tr = cls(model, meta["model_kind"], cfg, {k: meta[k] for k in keep if k in meta})
        tr.epoch = int(meta["epoch"])
        tr.best_val = math.inf if meta.get("best_val") is None else float(meta["best_val"])
        tr.history = list(meta.get("history", []))
        tr.opt.state.step = int(meta.get("adam_step", 0))
        if "adam_m/" + next(iter(dict(model.named_parameters()))) in arrays:
            names = [n for n, _ in model.named_parameters()]
            tr.opt.state.m = [arrays["adam_m/" + n].copy() for n in names]
            tr.opt.state.v = [arrays["adam_v/" + n].copy() for n in names]
        return tr

    # -- loops --------------------------------------------------------
    def batch_loss(self, batch: Arrays):
        pred = self.model(batch.p, batch.xi)
        return velocity_loss(pred, batch.y, self.cfg.lam1, self.cfg.lam2)

    def run_epoch(self, train: Arrays):
        cfg = self.cfg
        self.opt.lr = cfg.lr_at(self.epoch)
        order = np.random.default_rng([cfg.seed, self.epoch]).permutation(len(train))
        total = 0.0
        for s in range(0, len(train), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss = self.batch_loss(train.take(idx))
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {self.epoch + 1}")
            self.opt.zero_grad()
            loss.backward()
            self.opt.step()
            total += value * len(idx)
        return total / len(train)

    def eval_loss(self, data: Arrays):
        if len(data) == 0:
            return float("nan")
        pred = predict(self.model, data.p, data.xi, self.cfg.batch_size)
        d = pred - data.y
        return float(self.cfg.lam1 * np.mean(np.abs(d)) + self.cfg.lam2 * np.mean(d * d))

    def fit(self, train: Arrays, val: Arrays, out_dir=None, log_csv=None):
        """Train up to ``cfg.epochs`` total epochs, writing ``last.ckpt``/``best.ckpt``."""
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        last = os.path.join(out_dir, "last.ckpt") if out_dir else None
        best = os.path.join(out_dir, "best.ckpt") if out_dir else None
        if out_dir and self.epoch == 0:
            self.save(last)
            self.save(best)
        while self.epoch < self.cfg.epochs:
            t0 = time.perf_counter()
            train_loss = self.run_epoch(train)
            self.epoch += 1
            val_loss = self.eval_loss(val) if len(val) else train_loss
            if not math.isfinite(val_loss):
                raise TrainingDiverged(f"non-finite validation loss at epoch {self.epoch}")
            # wall time is logged only, so checkpoints and CSVs stay bitwise reproducible
            row = {"epoch": self.epoch, "train_loss": train_loss, "val_loss": val_loss,
                   "lr": self.opt.lr}
            self.history.append(row)
            log.info("epoch %d train %.5f val %.5f (%.1f s)", self.epoch, train_loss, val_loss,
                     time.perf_counter() - t0)
            improved = val_loss < self.best_val
            if improved:
                self.best_val = val_loss
            if out_dir:
                self.save(last)
                if improved:
                    self.save(best)
        if log_csv:
            write_history(log_csv, self.history)
        return self.history


def write_history(path, history):
    cols = ["epoch", "train_loss", "val_loss", "lr"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])


def load_model(path, return_arrays=False):
    arrays, meta = load_checkpoint(path)
    if "model_kind" not in meta:
        raise CheckpointError(f"{path}: missing model description")
    kind = meta["model_kind"]
    model = build_model(kind, config_from_dict(kind, meta["model_config"]), seed=0)
    model.load_state_dict(OrderedDict((n[len("param/"):], a) for n, a in arrays.items()
                                      if n.startswith("param/")))
    return (model, meta, arrays) if return_arrays else (model, meta)


# -- evaluation ------------------------------------------------------------

@dataclass
class Corruption:
    noise: float = 0.0
    missing: int = 0
    source_noise: float = 0.0
    seed: int = 0


def _check_compatible(model, data: ds.Dataset):
    xi_len = model.config.xi_len
    if xi_len != data.kind.xi_len:
        raise ValueError(f"model expects xi of length {xi_len} but the {data.kind.value} "
                         f"dataset provides {data.kind.xi_len}")
    if data.seismic.shape[1:3] != (model.config.n_time, model.config.n_receivers):
        raise ValueError(f"model expects gathers of {model.config.n_time} x "
                         f"{model.config.n_receivers}, dataset has {data.seismic.shape[1:3]}")


def resimulate(data: ds.Dataset, i, spec: SourceSpec, seed):
    """Gather for sample ``i``'s velocity map under a new source setup."""
    vmap = VelocityMap(data.velocity[i].astype(np.float64), dx=data.grid.dx)
    sid = int(data.sample_ids[i])
    sim_seed = np.random.SeedSequence([seed, sid]).generate_state(1, np.uint64)[0]
    return forward_gather(vmap, spec, data.grid, seed=int(sim_seed)).values


def dataset_spec(data: ds.Dataset, i):
    row = data.sources[i].astype(np.float64)
    return SourceSpec(frequency=float(row[0]), x_locations=tuple(float(x) for x in row[1:6]))


def corrupted_inputs(data: ds.Dataset, c: Corruption, zero_xi=False):
    """Normalized gathers and xi after applying the requested corruptions."""
    p = data.seismic_norm
    if c.source_noise > 0:
        p = np.stack([data.stats.seismic(resimulate(
            data, i, ds.perturb_wavelet(dataset_spec(data, i), c.source_noise), c.seed))
            for i in range(len(data))])
    rng = np.random.default_rng([c.seed, 1])
    p = ds.add_data_noise(p, c.noise, rng)
    p = ds.drop_traces(p, c.missing, np.random.default_rng([c.seed, 2]))
    xi = np.zeros_like(data.xi_norm) if zero_xi else data.xi_norm
    return p, xi


def evaluate_model(model, data: ds.Dataset, corruption=None, zero_xi=False, batch_size=32,
                   p=None, xi=None):
    """Per-sample metric reports on normalized maps."""
    _check_compatible(model, data)
    if p is None:
        p, xi = corrupted_inputs(data, corruption or Corruption(), zero_xi)
    pred = predict(model, p, xi, batch_size)
    true = data.velocity_norm
    return [evaluate(pred[i], true[i]) for i in range(len(data))]


def write_eval_csv(path, data: ds.Dataset, reports):
    from .metrics import write_metric_csv

    write_metric_csv(path, [int(s) for s in data.sample_ids], reports)


# -- sweeps ----------------------------------------------------------------

def default_grid(axis):
    return {
        "frequency": [5.0, 10.0, 15.0, 20.0, 25.0],
        "shift": [0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
        "noise": [0.01, 0.05, 0.1, 0.5, 1.0],
        "missing": [5, 10, 15, 20, 25, 30, 35],
        "source-noise": [0.001, 0.01, 0.05, 0.1],
    }[axis]


def shifted_locations(d):
    if not 0 <= d <= MAX_SHIFT:
        raise ValueError(f"shift {d} m is outside the sampled location ranges [0, {MAX_SHIFT}]")
    a, b, c, dd, e = SHIFT_BASE
    return (a + d, b + d, c, dd - d, e - d)


def sweep(model, data: ds.Dataset, axis, grid=None, seed=0, zero_xi=False, batch_size=32):
    """Aggregate metrics along one robustness/generalization axis.

    Returns a list of ``(value, MetricReport)``.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    _check_compatible(model, data)
    kind = data.kind
    if axis == "frequency" and not kind.varies_frequency:
        raise ValueError(f"frequency sweeps need a frequency-varying dataset, got {kind.value}")
    if axis == "shift" and not kind.varies_location:
        raise ValueError(f"shift sweeps need a location-varying dataset, got {kind.value}")
    grid = list(default_grid(axis) if grid is None else grid)
    if axis == "shift":
        for d in grid:
            shifted_locations(d)
    if axis == "frequency":
        for f in grid:
            if not ds.FREQ_RANGE[0] <= f <= ds.FREQ_RANGE[1]:
                raise ValueError(f"frequency {f} Hz is outside {ds.FREQ_RANGE}")
    rows = []
    for value in grid:
        if axis in ("frequency", "shift"):
            specs = []
            for i in range(len(data)):
                spec = dataset_spec(data, i)
                if axis == "frequency":
                    spec = dataclasses.replace(spec, frequency=float(value))
                else:
                    f = spec.frequency if kind.varies_frequency else ds.FIXED_FREQ
                    spec = SourceSpec(frequency=f, x_locations=shifted_locations(float(value)))
                specs.append(spec)
            p = np.stack([data.stats.seismic(resimulate(data, i, s, seed))
                          for i, s in enumerate(specs)])
            xi = np.stack([ds.normalize_xi(ds.raw_xi(kind, s), kind) for s in specs])
            if zero_xi:
                xi = np.zeros_like(xi)
            reports = evaluate_model(model, data, batch_size=batch_size, p=p, xi=xi)
        else:
            c = Corruption(seed=seed, **{{"noise": "noise", "missing": "missing",
                                          "source-noise": "source_noise"}[axis]:
                                         int(value) if axis == "missing" else float(value)})
            reports = evaluate_model(model, data, c, zero_xi, batch_size)
        rows.append((value, aggregate(reports)))
    return rows


def write_sweep_csv(path, axis, rows):
    cols = [axis, *(f.name for f in dataclasses.fields(MetricReport))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for value, r in rows:
            w.writerow([value, *(repr(float(v)) for v in dataclasses.astuple(r))])
