"""
2D constant-density acoustic forward modeling.

Explicit finite differences, 2nd order in time and 4th order in space, with
zero initial conditions. Waves leaving the domain are attenuated by a thin
damping layer terminated by first-order Clayton-Engquist updates on the
outer edges. Receivers sit on the z = 0 row, sources at z = 10 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

MAP_SIZE = 70
N_SOURCES = 5
SOURCE_DEPTH = 10.0

# 4th-order second-derivative stencil
_C0, _C1, _C2 = -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0
# cfl (c*dt*sqrt(2)/dx) limit of the 2-4 scheme in 2D: sqrt(2) * sqrt(3/8)
STABILITY_LIMIT = math.sqrt(3.0) / 2.0
BLOWUP = 1e10

FAMILIES = ("FlatB", "CurveA", "CurveFaultA", "External")


class SimulationError(RuntimeError):
    """Raised when the explicit scheme is unstable or blows up."""


@dataclass
class VelocityMap:
    values: np.ndarray
    dx: float = 10.0
    family_tag: str = "External"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"velocity map must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("velocity map contains non-finite values")
        if np.any(values <= 0):
            raise ValueError("velocity map must be strictly positive")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.family_tag not in FAMILIES:
            raise ValueError(f"unknown family tag {self.family_tag!r}")
        self.values = values

    @property
    def shape(self):
        return self.values.shape


@dataclass
class SourceSpec:
    frequency: float
    x_locations: tuple
    depth: float = SOURCE_DEPTH
    wavelet_noise_sigma: float = 0.0

    def __post_init__(self):
        self.x_locations = tuple(float(x) for x in self.x_locations)
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if len(self.x_locations) != N_SOURCES:
            raise ValueError(f"expected {N_SOURCES} source locations")
        if list(self.x_locations) != sorted(self.x_locations):
            raise ValueError("source locations must be sorted ascending")
        if self.wavelet_noise_sigma < 0:
            raise ValueError("wavelet noise sigma must be non-negative")


@dataclass(frozen=True)
class SimGrid:
    """Time-stepping setup.

    ``n_steps`` simulation steps of ``dt_sim`` seconds are taken and every
    ``record_stride``-th state is recorded, so the output holds
    ``n_steps // record_stride`` samples spaced ``dt_out`` apart.
    ``pad`` damping cells are added outside the physical grid on the left,
    right and bottom (and top, unless ``free_surface``).
    """

    nx: int = MAP_SIZE
    nz: int = MAP_SIZE
    dx: float = 10.0
    dt_sim: float = 0.0005
    n_steps: int = 2000
    record_stride: int = 2
    dt_out: float = 0.001
    boundary: str = "FirstOrderAbsorbing"
    pad: int = 20
    free_surface: bool = False

    def __post_init__(self):
        if self.dx <= 0 or self.dt_sim <= 0:
            raise ValueError("dx and dt_sim must be positive")
        if self.record_stride < 1 or self.n_steps < 1:
            raise ValueError("record_stride and n_steps must be >= 1")
        ratio = Fraction(self.dt_out).limit_denominator(10**9) / Fraction(
            self.dt_sim
        ).limit_denominator(10**9)
        if ratio != self.record_stride:
            raise ValueError(
                f"record_stride * dt_sim must equal dt_out ({self.record_stride} * "
                f"{self.dt_sim} != {self.dt_out})"
            )
        if self.boundary != "FirstOrderAbsorbing":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")

    @property
    def n_out(self) -> int:
        return self.n_steps // self.record_stride

    def refined(self, factor: int = 2) -> "SimGrid":
        """Same physical setup with dx and dt divided by ``factor``."""
        return replace(
            self,
            nx=(self.nx - 1) * factor + 1,
            nz=(self.nz - 1) * factor + 1,
            dx=self.dx / factor,
            dt_sim=self.dt_sim / factor,
            n_steps=self.n_steps * factor,
            record_stride=self.record_stride * factor,
            pad=self.pad * factor,
        )

    @classmethod
    def for_map(cls, v: VelocityMap, **kw) -> "SimGrid":
        n = v.shape[0]
        return cls(nx=n, nz=n, dx=v.dx, **kw)


@dataclass
class SeismicGather:
    values: np.ndarray
    source_spec: SourceSpec
    dt_out: float = 0.001
    receiver_dx: float = 10.0
    snapped_x: tuple = field(default_factory=tuple)


def ricker(t, f):
    """Ricker wavelet ``(1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2)`` centred at t=0."""
    if np.any(np.asarray(f) <= 0):
        raise ValueError("frequency must be positive")
    a = (np.pi * f * np.asarray(t, dtype=np.float64)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def onset_delay(f: float) -> float:
    """Shift applied to the wavelet so it starts near zero amplitude."""
    return 1.5 / f


@dataclass(frozen=True)
class StabilityReport:
    cfl: float
    stable: bool
    limit: float = STABILITY_LIMIT


def cfl_check(grid: SimGrid, v: VelocityMap) -> StabilityReport:
    if grid.dt_sim <= 0 or grid.dx <= 0:
        raise ValueError("dt_sim and dx must be positive")
    if v.shape != (grid.nz, grid.nx):
        raise ValueError(f"map shape {v.shape} does not match grid ({grid.nz}, {grid.nx})")
    cfl = float(v.values.max()) * grid.dt_sim * math.sqrt(2.0) / grid.dx
    return StabilityReport(cfl=cfl, stable=cfl <= STABILITY_LIMIT)


def snap(x: float, dx: float, n: int) -> int:
    """Nearest grid node to coordinate ``x`` (ties go to the lower node)."""
    i = math.floor(x / dx + 0.5 - 1e-9)
    if i < 0 or i >= n:
        raise ValueError(f"coordinate {x} m outside the {n}-node grid")
    return i


def _damping_profile(n_inner, pad_lo, pad_hi, dx, vmax):
    n = n_inner + pad_lo + pad_hi
    d = np.zeros(n)
    width = max(pad_lo, pad_hi)
    if width == 0:
        return d
    gmax = 3.0 * vmax * math.log(1000.0) / (2.0 * width * dx)
    idx = np.arange(n)
    if pad_lo:
        lo = np.clip((pad_lo - idx) / pad_lo, 0.0, None)
        d += gmax * lo**2
    if pad_hi:
        hi = np.clip((idx - (pad_lo + n_inner - 1)) / pad_hi, 0.0, None)
        d += gmax * hi**2
    return d


def source_wavelet(f, grid: SimGrid, scale=1.0, noise_sigma=0.0, rng=None):
    """Wavelet samples on the simulation time axis, onset-shifted, with optional noise."""
    t = np.arange(grid.n_steps + 1) * grid.dt_sim
    w = scale * ricker(t - onset_delay(f), f)
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("an rng is required for wavelet noise")
        w = w + rng.normal(0.0, noise_sigma, size=w.shape)
    return w


def simulate(v: VelocityMap, f: float, x_s: float, grid: SimGrid, *,
             wavelet=None, return_energy=False):
    """Surface seismogram of shape ``(grid.n_out, nx)`` for one point source.

    ``wavelet`` overrides the source time function; it must hold one sample
    per simulation step (``n_steps + 1`` values).
    """
    report = cfl_check(grid, v)
    if not report.stable:
        raise SimulationError(
            f"CFL number {report.cfl:.3f} exceeds stability limit {report.limit:.3f}"
        )
    nz, nx, dx, dt = grid.nz, grid.nx, grid.dx, grid.dt_sim
    ix = snap(x_s, dx, nx)
    iz = snap(SOURCE_DEPTH, dx, nz)
    if wavelet is None:
        wavelet = source_wavelet(f, grid)
    wavelet = np.asarray(wavelet, dtype=np.float64)
    if wavelet.shape != (grid.n_steps + 1,):
        raise ValueError("wavelet must have n_steps + 1 samples")

    pad = grid.pad
    top = 1 if grid.free_surface else pad
    vel = np.pad(v.values, ((top, pad), (pad, pad)), mode="edge")
    NZ, NX = vel.shape
    damp_z = _damping_profile(nz, 0 if grid.free_surface else pad, pad, dx, vel.max())
    damp_x = _damping_profile(nx, pad, pad, dx, vel.max())
    gamma = damp_z[:, None] + damp_x[None, :]
    if grid.free_surface:
        gamma[0, :] = 0.0
    a = 1.0 + 0.5 * gamma * dt
    b = 1.0 - 0.5 * gamma * dt
    c2dt2 = (vel * dt) ** 2
    courant = vel * dt / dx
    inv_dx2 = 1.0 / dx**2

    p_prev = np.zeros((NZ, NX))
    p = np.zeros((NZ, NX))
    lap = np.zeros((NZ, NX))
    rz, cx = iz + top, ix + pad
    rec_row = top
    rec_cols = slice(pad, pad + nx)
    out = np.zeros((grid.n_out, nx))
    energy = np.zeros(grid.n_steps + 1) if return_energy else None

    for n in range(grid.n_steps + 1):
        if n % grid.record_stride == 0:
            k = n // grid.record_stride
            if k < grid.n_out:
                out[k] = p[rec_row, rec_cols]
        if return_energy:
            energy[n] = float(np.sum(p[top:top + nz, pad:pad + nx] ** 2))
        if n == grid.n_steps:
            break

        # 2nd-order ring next to the edges, 4th order inside
        lap[1:-1, 1:-1] = (
            p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]
        )
        c = p[2:-2, 2:-2]
        lap[2:-2, 2:-2] = (
            2.0 * _C0 * c
            + _C1 * (p[1:-3, 2:-2] + p[3:-1, 2:-2] + p[2:-2, 1:-3] + p[2:-2, 3:-1])
            + _C2 * (p[:-4, 2:-2] + p[4:, 2:-2] + p[2:-2, :-4] + p[2:-2, 4:])
        )
        lap *= inv_dx2
        lap[rz, cx] -= wavelet[n] * inv_dx2

        p_next = (2.0 * p - b * p_prev + c2dt2 * lap) / a

        # Clayton-Engquist on outer edges: outgoing one-way wave equation
        p_next[:, 0] = p[:, 0] + courant[:, 0] * (p[:, 1] - p[:, 0])
        p_next[:, -1] = p[:, -1] - courant[:, -1] * (p[:, -1] - p[:, -2])
        p_next[-1, :] = p[-1, :] - courant[-1, :] * (p[-1, :] - p[-2, :])
        if grid.free_surface:
            p_next[0, :] = 0.0
        else:
            p_next[0, :] = p[0, :] + courant[0, :] * (p[1, :] - p[0, :])

        if not np.isfinite(p_next).all() or np.abs(p_next).max() > BLOWUP:
            raise SimulationError(f"wavefield blew up at step {n + 1} (t={(n + 1) * dt:.4f} s)")
        p_prev, p = p, p_next

    if return_energy:
        return out, energy
    return out


def forward_gather(v: VelocityMap, spec: SourceSpec, grid: SimGrid, seed=0, *,
                   wavelet_scale=1.0) -> SeismicGather:
    """Simulate all five shots and stack them as ``(n_out, nx, 5)``."""
    streams = np.random.SeedSequence(seed).spawn(N_SOURCES)
    traces = []
    for k, x_s in enumerate(spec.x_locations):
        rng = np.random.default_rng(streams[k])
        w = source_wavelet(spec.frequency, grid, scale=wavelet_scale,
                           noise_sigma=spec.wavelet_noise_sigma, rng=rng)
        traces.append(simulate(v, spec.frequency, x_s, grid, wavelet=w))
    snapped = tuple(snap(x, grid.dx, grid.nx) * grid.dx for x in spec.x_locations)
    return SeismicGather(values=np.stack(traces, axis=-1), source_spec=spec,
                         dt_out=grid.dt_out, receiver_dx=grid.dx, snapped_x=snapped)
