"""Acceptance criteria, one test per criterion.

Each test prints a ``PASS``/``FAIL`` line with the measured numbers; the
lines are repeated in the terminal summary. The toy-training criteria share
one 256-sample dataset and one set of trained models. Set
``FDONET_ACCEPTANCE_DIR`` to keep them between runs and
``FDONET_TOY_EPOCHS`` to change the training length.
"""

import os
import struct
import subprocess
import sys
import time

import numpy as np
import pytest

from fdonet import dataset as ds
from fdonet.autograd import (
    Tensor,
    as_complex,
    broadcast_to,
    concat,
    conv2d,
    conv_transpose2d,
    crop,
    einsum,
    imag,
    irfft2,
    linear,
    pad,
    real,
    relu,
    rfft2,
    tabs,
)
from fdonet.autograd.gradcheck import gradcheck, weighted_sum
from fdonet.metrics import aggregate, l2rel, mae, rmse, ssim
from fdonet.model import FdonConfig, FourierDeepONet, reduced_config, spectral_conv, velocity_loss
from fdonet.npyio import read_npy, write_npy
from fdonet.sim import SimGrid, VelocityMap, onset_delay, simulate, source_wavelet
from fdonet.train import (
    Arrays,
    TrainConfig,
    Trainer,
    build_model,
    evaluate_model,
    split_indices,
    sweep,
    toy_model_config,
)

RESULTS = []
TOY_EPOCHS = int(os.environ.get("FDONET_TOY_EPOCHS", "20"))
TOY_BUDGET_S = 30 * 60


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- gradient correctness ----------------------------------------------------

def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def op_cases():
    rng = np.random.default_rng(0)
    away = leaf(rng, 10, 12)
    away.data += np.sign(away.data)  # keep relu/abs/division off their kinks
    cases = {
        "add/sub/mul/div": (lambda a, b: weighted_sum(a * b + a / b - (a - b) * 0.5),
                            [leaf(rng, 10, 12), away]),
        "sum/mean/transpose/getitem/reshape": (
            lambda a: weighted_sum(a.sum(axis=1) + a.mean(axis=1))
            + weighted_sum(a.transpose(2, 0, 1)[1:, :, 2].reshape(-1), seed=2),
            [leaf(rng, 5, 6, 7)]),
        "relu/abs": (lambda a: weighted_sum(relu(a) + tabs(a)), [away]),
        "einsum": (lambda a, b: weighted_sum(einsum("ijk,kl->il", a, b)),
                   [leaf(rng, 4, 5, 6), leaf(rng, 6, 7)]),
        "einsum complex": (
            lambda a, b: weighted_sum(real(einsum("ij,jk->ik", as_complex(a), as_complex(b))))
            + weighted_sum(imag(einsum("ij,jk->ik", as_complex(a), as_complex(b))), seed=2),
            [leaf(rng, 4, 6, 2), leaf(rng, 6, 5, 2)]),
        "linear": (lambda x, w, b: weighted_sum(linear(x, w, b, axis=1)),
                   [leaf(rng, 3, 8, 5), leaf(rng, 6, 8), leaf(rng, 6)]),
        "pad/crop/concat/broadcast": (
            lambda a, b, c: weighted_sum(concat([pad(a, [(0, 0), (1, 2)]), crop(b, 1, 1, 9)], 1))
            + weighted_sum(broadcast_to(c, (6, 12)), seed=3),
            [leaf(rng, 8, 10), leaf(rng, 8, 11), leaf(rng, 1, 12)]),
        "rfft2": (lambda x: weighted_sum(real(rfft2(x, axes=(1, 2))))
                  + weighted_sum(imag(rfft2(x, axes=(1, 2))), seed=2), [leaf(rng, 2, 7, 6, 3)]),
        "irfft2": (lambda X: weighted_sum(irfft2(as_complex(X), (7, 6), axes=(1, 2))),
                   [leaf(rng, 2, 7, 4, 3, 2)]),
        "conv2d stride 2": (lambda x, w, b: weighted_sum(conv2d(x, w, b, stride=2)),
                            [leaf(rng, 2, 7, 6, 3), leaf(rng, 3, 3, 3, 4), leaf(rng, 4)]),
        "conv_transpose2d": (
            lambda x, w, b: weighted_sum(conv_transpose2d(x, w, b, output_size=(7, 5))),
            [leaf(rng, 2, 4, 3, 3), leaf(rng, 3, 3, 4, 3), leaf(rng, 4)]),
        "spectral_conv": (lambda z, lo, hi: weighted_sum(spectral_conv(z, lo, hi, (3, 4))),
                          [leaf(rng, 2, 10, 9, 3), leaf(rng, 3, 4, 3, 3, 2),
                           leaf(rng, 3, 4, 3, 3, 2)]),
        "velocity_loss": (lambda c: velocity_loss(c, np.linspace(-1, 1, 200).reshape(2, 10, 10)),
                          [leaf(rng, 2, 10, 10)]),
    }
    return cases


def test_gradient_correctness():
    t0 = time.perf_counter()
    worst_op, failures = 0.0, []
    for name, (fn, inputs) in op_cases().items():
        assert sum(t.size for t in inputs) >= 100, name
        res = gradcheck(fn, inputs, n_coords=100)
        worst_op = max(worst_op, res.max_rel_error)
        if res.n_coords < 100 or not res.passed(1e-4):
            failures.append(name)

    cfg = reduced_config()
    model = FourierDeepONet(cfg, seed=1)
    rng = np.random.default_rng(2)
    p = rng.uniform(-1, 1, (1, cfg.n_time, cfg.n_receivers, cfg.n_sources))
    xi = rng.uniform(-1, 1, (1, cfg.xi_len))
    y = rng.uniform(-1, 1, (1, *cfg.map_shape))
    full = gradcheck(lambda *ps: velocity_loss(model(p, xi), y), model.parameters(), n_coords=100)
    elapsed = time.perf_counter() - t0
    ok = not failures and full.n_coords >= 100 and full.passed(1e-3) and elapsed < 300
    report("gradient correctness", ok,
           f"ops worst rel {worst_op:.2e} (failed: {failures or 'none'}), "
           f"full model worst rel {full.max_rel_error:.2e} over {full.n_coords} coords, "
           f"{elapsed:.0f} s")


# -- shapes --------------------------------------------------------------------

def test_shape_conformance():
    expected = {
        "branch": (1000, 72, 64), "trunk": (64,), "merger": (1000, 72, 64),
        "layer1": (1000, 72, 64), "layer2": (512, 72, 64), "layer3": (256, 72, 64),
        "layer4": (70, 72, 64), "projection": (70, 70),
    }
    cfg = FdonConfig()
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, (1, cfg.n_time, cfg.n_receivers, cfg.n_sources))
    xi = rng.uniform(-1, 1, (1, cfg.xi_len))
    out, inter = FourierDeepONet(cfg, seed=0)(p, xi, return_intermediates=True)
    got = {k: tuple(inter[k].shape[1:]) for k in expected}
    bad = {k: v for k, v in got.items() if v != expected[k]}
    ok = not bad and out.shape == (1, 70, 70)
    report("shape conformance", ok, f"{len(expected)} stages checked, mismatches: {bad or 'none'}")


# -- FFT -------------------------------------------------------------------------

def test_fft_suite():
    rng = np.random.default_rng(1)
    worst_rt = worst_parseval = 0.0
    for shape in [(2, 2), (7, 6), (6, 7), (16, 9), (70, 72), (1000, 72)]:
        x = rng.standard_normal(shape) * 10.0
        back = irfft2(rfft2(x, axes=(0, 1)), shape, axes=(0, 1)).data
        worst_rt = max(worst_rt, float(np.max(np.abs(back - x))))
        H = rfft2(x, axes=(0, 1)).data
        w = np.full(H.shape[1], 2.0)
        w[0] = 1.0
        if shape[1] % 2 == 0:
            w[-1] = 1.0
        energy = float(np.sum(w * np.abs(H) ** 2) / x.size)
        worst_parseval = max(worst_parseval, abs(energy - np.sum(x**2)) / np.sum(x**2))

    # energy outside the retained block (and its conjugate partners) never reaches the output
    T, R, C, modes = 24, 16, 3, (5, 4)
    nf = R // 2 + 1
    mask = np.zeros((T, nf), dtype=bool)
    mask[:modes[0] + 1, :modes[1]] = True
    mask[T - modes[0]:, :modes[1]] = True
    spec = rng.standard_normal((T, nf)) + 1j * rng.standard_normal((T, nf))
    spec[mask] = 0.0
    h = np.fft.irfft2(spec, s=(T, R))[None, :, :, None] * np.ones(C)
    x = rng.standard_normal((1, T, R, C))
    lo = Tensor(rng.standard_normal((*modes, C, C, 2)))
    hi = Tensor(rng.standard_normal((*modes, C, C, 2)))
    a = spectral_conv(Tensor(x), lo, hi, modes).data
    b = spectral_conv(Tensor(x + 10.0 * h), lo, hi, modes).data
    trunc = float(np.max(np.abs(a - b)))

    ok = worst_rt < 1e-10 and worst_parseval < 1e-8 and trunc < 1e-8
    report("FFT suite", ok, f"roundtrip {worst_rt:.1e}, Parseval rel {worst_parseval:.1e}, "
                            f"truncation {trunc:.1e}")


# -- FDTD physics ---------------------------------------------------------------

def first_crossing(x, frac=0.01):
    a = np.abs(x)
    return int(np.argmax(a > frac * a.max()))


def arrival_errors():
    v, f, xs = 3000.0, 25.0, 340.0
    grid = SimGrid(n_steps=600)
    trace = simulate(VelocityMap(np.full((70, 70), v)), f, xs, grid)
    # the wavelet's own 1% crossing is the reference instant at the source
    t_src = first_crossing(source_wavelet(f, grid)) * grid.dt_sim
    errs = []
    for xr in (400.0, 490.0, 590.0, 690.0, 0.0):
        t_pick = first_crossing(trace[:, int(xr / grid.dx)]) * grid.dt_out
        t_ray = np.hypot(xr - xs, 10.0) / v
        errs.append(t_pick - t_src - t_ray)
    return np.array(errs)


def symmetry_residual():
    vals = np.full((69, 69), 1800.0)
    vals[20:35] = 2600.0
    vals[35:50] = 2200.0
    vals[50:] = 3400.0
    trace = simulate(VelocityMap(vals), 15.0, 340.0, SimGrid(nx=69, nz=69, n_steps=1000))
    return float(np.max(np.abs(trace - trace[:, ::-1])) / np.max(np.abs(trace)))


def convergence_order():
    base = SimGrid(nx=69, nz=69, dx=10.0, dt_sim=0.0005, n_steps=300, record_stride=2,
                   dt_out=0.001, pad=20)
    recv = np.r_[0:29, 40:69]
    out = []
    for r in (1, 2, 4):
        g = base.refined(r) if r > 1 else base
        z, x = np.meshgrid(np.arange(g.nz) / r, np.arange(g.nx) / r, indexing="ij")
        vel = 2500.0 + 300.0 * np.sin(z / 10.0) + 200.0 * np.cos(x / 8.0)
        out.append(simulate(VelocityMap(vel, dx=g.dx), 20.0, 340.0, g)[:, recv * r])
    e1 = np.linalg.norm(out[0] - out[1])
    e2 = np.linalg.norm(out[1] - out[2])
    return float(np.log2(e1 / e2))


def test_fdtd_physics():
    t0 = time.perf_counter()
    errs = arrival_errors()
    sym = symmetry_residual()
    order = convergence_order()
    elapsed = time.perf_counter() - t0
    ok = np.all(np.abs(errs) <= 0.002) and sym < 1e-6 and order >= 1.5 and elapsed < 600
    report("FDTD physics", ok,
           f"arrival errors {np.round(errs * 1e3, 2).tolist()} ms, symmetry {sym:.1e}, "
           f"order {order:.2f}, {elapsed:.0f} s")


# -- metrics -------------------------------------------------------------------

def test_metric_oracles():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        a, b = rng.uniform(-1, 1, (2, 13, 17))
        diffs = [abs(a_ - b_) for a_, b_ in zip(a.ravel(), b.ravel())]
        loop_mae = sum(diffs) / len(diffs)
        loop_rmse = (sum(d * d for d in diffs) / len(diffs)) ** 0.5
        loop_l2 = (sum(d * d for d in diffs) / sum(t * t for t in b.ravel())) ** 0.5
        for got, ref in ((mae(a, b), loop_mae), (rmse(a, b), loop_rmse), (l2rel(a, b), loop_l2)):
            worst = max(worst, abs(got - ref) / abs(ref))
    x = rng.uniform(-1, 1, (70, 70))
    self_ssim = abs(ssim(x, x) - 1.0)
    pairs = rng.uniform(-1, 1, (10_000, 2, 8, 8))
    violations = sum(mae(p, q) > rmse(p, q) for p, q in pairs)
    ok = worst < 1e-12 and self_ssim < 1e-12 and violations == 0
    report("metric oracles", ok, f"worst rel vs loops {worst:.1e}, |ssim(x,x)-1| {self_ssim:.1e}, "
                                 f"mae>rmse in {violations}/10000 pairs")


# -- npy interop -------------------------------------------------------------------

def test_array_file_interop(tmp_path):
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': (3, 2), }"
    total = -(-(10 + len(header) + 1) // 64) * 64  # preamble + header padded to 64 bytes
    header += " " * (total - 10 - len(header) - 1) + "\n"
    values = np.array([[0.5, -1.0], [2.0, 3.25], [1e-300, np.inf]])
    golden = (b"\x93NUMPY\x01\x00" + struct.pack("<H", len(header)) + header.encode("ascii")
              + values.astype("<f8").tobytes())
    write_npy(tmp_path / "ours.npy", values)
    byte_equal = (tmp_path / "ours.npy").read_bytes() == golden

    readable = []
    for arr in (np.arange(12, dtype=np.int64).reshape(3, 4),
                np.linspace(0, 1, 70 * 70, dtype=np.float32).reshape(70, 70),
                np.asfortranarray(np.arange(6.0).reshape(2, 3)), np.array(7.5)):
        np.save(tmp_path / "np.npy", arr)
        back = read_npy(tmp_path / "np.npy")
        readable.append(back.dtype == arr.dtype and np.array_equal(back, arr))
    ours_by_numpy = np.array_equal(np.load(tmp_path / "ours.npy"), values)
    ok = byte_equal and all(readable) and ours_by_numpy
    report("array-file interop", ok, f"golden bytes equal {byte_equal}, numpy files read "
                                     f"{sum(readable)}/{len(readable)}, numpy reads ours "
                                     f"{ours_by_numpy}")


# -- determinism ----------------------------------------------------------------------

def test_determinism(tmp_path):
    env = dict(os.environ, FDONET_DETERMINISTIC="1")

    def cli(*args):
        subprocess.run([sys.executable, "-m", "fdonet.cli", *args], check=True, env=env,
                       capture_output=True)

    same = {}
    for tag in ("a", "b"):
        d = tmp_path / tag
        cli("generate", "--kind", "var-fl", "--n", "6", "--grid", "toy", "--seed", "11",
            "--out", str(d / "data"))
        cli("train", "--data", str(d / "data"), "--out", str(d / "run"), "--preset", "toy",
            "--epochs", "2", "--batch-size", "4", "--val-fraction", "0.34", "--seed", "3")
        cli("eval", "--checkpoint", str(d / "run" / "last.ckpt"), "--data", str(d / "data"),
            "--noise", "0.1", "--missing", "4", "--out", str(d / "eval.csv"))
    files = ["data/seismic.npy", "data/velocity.npy", "data/xi.npy", "data/manifest.txt",
             "run/last.ckpt", "run/train_log.csv", "eval.csv"]
    for f in files:
        same[f] = (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ok = all(same.values())
    report("determinism", ok, f"{sum(same.values())}/{len(same)} artifacts bitwise identical"
                              + ("" if ok else f", differing: {[k for k, v in same.items() if not v]}"))


# -- toy training ------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy_root(tmp_path_factory):
    root = os.environ.get("FDONET_ACCEPTANCE_DIR")
    if root:
        os.makedirs(root, exist_ok=True)
        return root
    return str(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture(scope="module")
def toy_data(toy_root):
    path = os.path.join(toy_root, "varf-flat-256")
    if not os.path.exists(os.path.join(path, ds.MANIFEST)):
        ds.build_dataset("var-f", 256, "flat", ds.toy_grid(), seed=0, out_dir=path)
    data = ds.load_dataset(path, verify=True)
    assert data.seismic.shape == (256, 200, 36, 5) and data.velocity.shape == (256, 36, 36)
    return data


class ToyRuns:
    """Trains each toy variant once per session and caches checkpoints on disk."""

    def __init__(self, data, root):
        self.data = data
        self.root = root
        self.train_idx, self.val_idx = split_indices(len(data), 0.125, 0)
        self.held_out = data.subset(self.val_idx)
        self.runs = {}

    def get(self, merger="multiply", zero_xi=False):
        key = (merger, zero_xi)
        if key in self.runs:
            return self.runs[key]
        cfg = toy_model_config(merger=merger)
        model = build_model("fdon", cfg, 0)
        tc = TrainConfig(epochs=TOY_EPOCHS, batch_size=8, lr=1e-3, seed=0, zero_xi=zero_xi)
        out = os.path.join(self.root, f"run-{merger}-{'zero' if zero_xi else 'aware'}-{TOY_EPOCHS}")
        ckpt = os.path.join(out, "last.ckpt")
        t0 = time.perf_counter()
        if os.path.exists(ckpt):
            trainer = Trainer.resume(ckpt, tc)
        else:
            trainer = Trainer(model, "fdon", tc)
        arrays = Arrays.from_dataset(self.data, zero_xi=zero_xi)
        trainer.fit(arrays.take(self.train_idx), arrays.take(self.val_idx), out_dir=out)
        # wall time accumulates across cached sessions
        stamp = os.path.join(out, "wall_seconds.txt")
        before = float(open(stamp).read()) if os.path.exists(stamp) else 0.0
        elapsed = before + time.perf_counter() - t0
        with open(stamp, "w") as fh:
            fh.write(repr(elapsed))
        reports = evaluate_model(trainer.model, self.held_out, zero_xi=zero_xi)
        self.runs[key] = (trainer, aggregate(reports), elapsed)
        return self.runs[key]


@pytest.fixture(scope="module")
def toy_runs(toy_data, toy_root):
    return ToyRuns(toy_data, toy_root)


@pytest.mark.slow
def test_toy_training_loss_drops(toy_runs):
    trainer, _, elapsed = toy_runs.get()
    hist = trainer.history
    ratio = hist[-1]["train_loss"] / hist[0]["train_loss"]
    ok = ratio <= 0.2 and elapsed <= TOY_BUDGET_S
    report("toy training (a) loss ratio", ok,
           f"epoch 1 {hist[0]['train_loss']:.4f} -> epoch {len(hist)} "
           f"{hist[-1]['train_loss']:.4f}, ratio {ratio:.3f} (need <= 0.2), {elapsed:.0f} s")


@pytest.mark.slow
def test_toy_training_xi_helps(toy_runs):
    _, aware, _ = toy_runs.get()
    _, zeroed, elapsed = toy_runs.get(zero_xi=True)
    gain = aware.ssim - zeroed.ssim
    ok = gain >= 0.03 and elapsed <= TOY_BUDGET_S
    report("toy training (b) source-aware SSIM gain", ok,
           f"held-out SSIM aware {aware.ssim:.4f} vs zeroed {zeroed.ssim:.4f}, "
           f"gain {gain:+.4f} (need >= 0.03)")


def monotone(values, tol=0.02):
    """Non-decreasing, except that each step may drop by at most ``tol`` relative."""
    return all(b >= a * (1.0 - tol) for a, b in zip(values, values[1:]))


@pytest.mark.slow
def test_robustness_monotonicity(toy_runs):
    trainer, _, _ = toy_runs.get()
    held = toy_runs.held_out
    noise = [r.l2rel for _, r in sweep(trainer.model, held, "noise", [0.0, 0.05, 0.1, 0.5])]
    missing = [r.l2rel for _, r in sweep(trainer.model, held, "missing", [0, 9, 18])]
    ok = monotone(noise) and monotone(missing)
    report("robustness monotonicity", ok,
           f"l2rel vs noise {np.round(noise, 4).tolist()}, vs missing "
           f"{np.round(missing, 4).tolist()}")


@pytest.mark.slow
def test_merger_parity(toy_runs):
    scores = {m: toy_runs.get(merger=m)[1].l2rel for m in ("multiply", "add", "concat")}
    lo, hi = min(scores.values()), max(scores.values())
    spread = (hi - lo) / lo
    ok = spread <= 0.5
    report("merger parity", ok, "held-out l2rel " + ", ".join(
        f"{k} {v:.4f}" for k, v in scores.items()) + f", spread {spread:.1%} (need <= 50%)")
