"""Procedural layered velocity maps: flat layers, curved layers, curved layers with faults.

All generators are pure functions of :class:`GeoParams`; the random draws
happen in a fixed order (interfaces, velocities, curvature, faults) so the
flat, curved and faulted maps built from one seed share their layering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .npyio import read_npy, write_npy
from .sim import MAP_SIZE, VelocityMap

V_MIN, V_MAX = 1500.0, 4500.0
MAX_SINUSOIDS = 3
MAX_DIP_DEG = 30.0


@dataclass(frozen=True)
class GeoParams:
    n_layers: int
    v_range: tuple = (V_MIN, V_MAX)
    curvature_amp: float = 0.0
    curvature_wavelength: float = 200.0
    fault_count: int = 0
    fault_throw: float = 0.0
    rng_seed: int = 0
    size: int = MAP_SIZE
    dx: float = 10.0

    def __post_init__(self):
        lo, hi = self.v_range
        if not 2 <= self.n_layers <= 8:
            raise ValueError(f"n_layers must be in [2, 8], got {self.n_layers}")
        if lo < V_MIN or hi > V_MAX or lo > hi:
            raise ValueError(f"v_range must lie within [{V_MIN}, {V_MAX}], got {self.v_range}")
        if self.fault_count not in (0, 1, 2):
            raise ValueError(f"fault_count must be 0, 1 or 2, got {self.fault_count}")
        if self.curvature_amp < 0:
            raise ValueError("curvature_amp must be >= 0")
        if self.curvature_wavelength <= 0:
            raise ValueError("curvature_wavelength must be positive")
        if self.fault_throw < 0:
            raise ValueError("fault_throw must be >= 0")
        if self.size < self.n_layers:
            raise ValueError("grid too small for the requested layer count")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")


def fill_layers(interfaces, velocities):
    """Fill a map from per-column interface rows.

    ``interfaces`` has shape (n_layers - 1, size); cell (z, x) belongs to
    layer ``k`` where ``k`` counts the interfaces with row <= z.
    """
    interfaces = np.asarray(interfaces)
    size = interfaces.shape[1]
    z = np.arange(size)[None, :, None]
    layer = np.sum(interfaces[:, None, :] <= z, axis=0)
    return np.asarray(velocities, dtype=np.float64)[layer]


def flat_map(interface_rows, velocities, size=MAP_SIZE):
    """Horizontal layers with top rows at ``interface_rows``."""
    rows = np.asarray(interface_rows, dtype=np.int64)
    return fill_layers(np.repeat(rows[:, None], size, axis=1), velocities)


def _draw(params: GeoParams):
    rng = np.random.default_rng(params.rng_seed)
    n, size = params.n_layers, params.size
    rows = np.sort(rng.choice(np.arange(1, size), size=n - 1, replace=False))
    velocities = rng.uniform(*params.v_range, size=n)
    # curvature: shared shape for all interfaces so they never cross
    k = int(rng.integers(1, MAX_SINUSOIDS + 1))
    length = size * params.dx
    max_cycles = max(length / params.curvature_wavelength, 1e-12)
    cycles = rng.uniform(0.0, max_cycles, size=MAX_SINUSOIDS)[:k]
    phases = rng.uniform(0.0, 2 * np.pi, size=MAX_SINUSOIDS)[:k]
    weights = rng.uniform(0.5, 1.0, size=MAX_SINUSOIDS)[:k]
    return rng, rows, velocities, (cycles, phases, weights)


def _curve_shape(curve, size, dx):
    cycles, phases, weights = curve
    x = np.arange(size) * dx / (size * dx)
    s = np.sum(weights[:, None] * np.sin(2 * np.pi * cycles[:, None] * x[None, :] + phases[:, None]),
               axis=0)
    peak = np.max(np.abs(s))
    return s / peak if peak > 0 else s


def layer_interfaces(params: GeoParams):
    """Per-column interface rows, shape (n_layers - 1, size), strictly increasing down each column."""
    _, rows, _, curve = _draw(params)
    offset = np.rint(params.curvature_amp / params.dx * _curve_shape(curve, params.size, params.dx))
    return rows[:, None] + offset.astype(np.int64)[None, :]


def gen_flat(params: GeoParams) -> VelocityMap:
    if params.curvature_amp != 0 or params.fault_count != 0:
        raise ValueError("flat layers need curvature_amp = 0 and fault_count = 0")
    _, rows, velocities, _ = _draw(params)
    return VelocityMap(flat_map(rows, velocities, params.size), dx=params.dx, family_tag="FlatB")


def gen_curved(params: GeoParams) -> VelocityMap:
    """Layers bounded by parallel smooth curves.

    ``curvature_amp = 0`` is accepted and reproduces :func:`gen_flat`.
    """
    if params.fault_count != 0:
        raise ValueError("use gen_faulted for fault_count > 0")
    return VelocityMap(_curved_values(params), dx=params.dx, family_tag="CurveA")


def _curved_values(params):
    _, _, velocities, _ = _draw(params)
    return fill_layers(layer_interfaces(params), velocities)


def apply_fault(values, x0, dip_deg, throw, dx):
    """Shift the side of a fault plane down by ``throw`` meters (nearest cell).

    The plane passes through column ``x0`` at the top and leans by
    ``dip_deg`` from vertical; cells with ``x >= x0 + z * tan(dip)`` move.
    Rows vacated at the top of the moved block take the row-0 velocity of
    their column.
    """
    values = np.asarray(values, dtype=np.float64)
    nz, nx = values.shape
    s = int(np.rint(throw / dx))
    if s == 0:
        return values.copy()
    s = min(s, nz)
    shifted = np.empty_like(values)
    shifted[s:] = values[: nz - s]
    shifted[:s] = values[0]
    z = np.arange(nz)[:, None]
    x = np.arange(nx)[None, :]
    moved = x >= x0 + z * math.tan(math.radians(dip_deg))
    return np.where(moved, shifted, values)


def gen_faulted(params: GeoParams) -> VelocityMap:
    if params.fault_count < 1:
        raise ValueError("gen_faulted needs fault_count >= 1")
    rng, _, _, _ = _draw(params)
    values = _curved_values(params)
    size = params.size
    for _ in range(params.fault_count):
        x0 = rng.uniform(size / 4, 3 * size / 4)
        dip = rng.uniform(-MAX_DIP_DEG, MAX_DIP_DEG)
        values = apply_fault(values, x0, dip, params.fault_throw, params.dx)
    return VelocityMap(values, dx=params.dx, family_tag="CurveFaultA")


def generate(family, params: GeoParams) -> VelocityMap:
    return {"flat": gen_flat, "curve": gen_curved, "fault": gen_faulted}[family](params)


def sample_geo_params(family, seed, size=MAP_SIZE, dx=10.0):
    """Draw family-specific generator settings from ``seed``; velocities are uniform in [1500, 4500]."""
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(2, 6))
    geo_seed = int(rng.integers(0, 2**63))
    common = dict(n_layers=n_layers, rng_seed=geo_seed, size=size, dx=dx)
    if family == "flat":
        return GeoParams(**common)
    amp = float(rng.uniform(20.0, 80.0))
    wavelength = float(rng.uniform(200.0, 400.0))
    if family == "curve":
        return GeoParams(curvature_amp=amp, curvature_wavelength=wavelength, **common)
    if family == "fault":
        return GeoParams(curvature_amp=amp, curvature_wavelength=wavelength,
                         fault_count=int(rng.integers(1, 3)),
                         fault_throw=float(rng.uniform(30.0, 120.0)), **common)
    raise ValueError(f"unknown family {family!r}; expected flat, curve or fault")


def ingest_external(path, size=MAP_SIZE, dx=10.0):
    """Load velocity maps from an array file of shape (N, 1, H, H) or (N, H, H)."""
    arr = read_npy(path)
    if arr.ndim == 4 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 3 or arr.shape[1:] != (size, size):
        raise ValueError(f"expected maps of shape (N, 1, {size}, {size}) or (N, {size}, {size}), "
                         f"got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating) and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"unsupported dtype {arr.dtype}")
    return [VelocityMap(m, dx=dx, family_tag="External") for m in arr]


def save_maps(path, maps, dtype="<f4"):
    write_npy(path, np.stack([m.values for m in maps]), dtype=dtype)
