"""Error metrics on normalized velocity maps."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DATA_RANGE = 2.0
WINDOW = 11
SIGMA = 1.5


@dataclass
class MetricReport:
    mae: float
    rmse: float
    ssim: float
    l2rel: float


def _pair(pred, true):
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {true.shape}")
    return pred, true


def mae(pred, true):
    pred, true = _pair(pred, true)
    return float(np.mean(np.abs(pred - true)))


def rmse(pred, true):
    pred, true = _pair(pred, true)
    return float(np.sqrt(np.mean((pred - true) ** 2)))


def l2rel(pred, true):
    pred, true = _pair(pred, true)
    denom = np.linalg.norm(true.ravel())
    if denom == 0:
        raise ValueError("relative error undefined for an all-zero truth")
    return float(np.linalg.norm((pred - true).ravel()) / denom)


def gaussian_window(size=WINDOW, sigma=SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    # separable correlation over fully-contained windows
    rows = sliding_window_view(img, len(g), axis=0) @ g
    return sliding_window_view(rows, len(g), axis=1) @ g


def ssim_map(pred, true, data_range=DATA_RANGE, size=WINDOW, sigma=SIGMA):
    pred, true = _pair(pred, true)
    if pred.ndim != 2:
        raise ValueError("ssim expects 2D images")
    if min(pred.shape) < size:
        raise ValueError(f"images {pred.shape} smaller than the {size}x{size} window")
    g = gaussian_window(size, sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = _filter_valid(pred, g)
    mu_y = _filter_valid(true, g)
    sxx = _filter_valid(pred * pred, g) - mu_x * mu_x
    syy = _filter_valid(true * true, g) - mu_y * mu_y
    sxy = _filter_valid(pred * true, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return num / den


def ssim(pred, true, data_range=DATA_RANGE):
    """Mean Gaussian-window SSIM (11x11, sigma 1.5) over valid window positions."""
    return float(np.mean(ssim_map(pred, true, data_range)))


def evaluate(pred, true):
    return MetricReport(mae(pred, true), rmse(pred, true), ssim(pred, true), l2rel(pred, true))


def aggregate(reports):
    """Per-sample mean of each metric."""
    arr = np.array([astuple(r) for r in reports], dtype=np.float64)
    return MetricReport(*arr.mean(axis=0))


CSV_COLUMNS = ["sample_id"] + [f.name for f in fields(MetricReport)]


def write_metric_csv(path, sample_ids, reports, include_aggregate=True):
    """Rows ``sample_id, mae, rmse, ssim, l2rel``; the aggregate row has id ``mean``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for sid, r in zip(sample_ids, reports):
            w.writerow([sid, *(repr(float(v)) for v in astuple(r))])
        if include_aggregate and reports:
            w.writerow(["mean", *(repr(float(v)) for v in astuple(aggregate(reports)))])


def read_metric_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows
