"""Dataset construction, normalization and test-time corruptions.

A dataset directory holds raw (unnormalized) float32 arrays plus a
key-value manifest::

    seismic.npy   (N, T, R, 5)  pressure at the receivers
    velocity.npy  (N, H, W)     velocity in m/s
    xi.npy        (N, L)        raw source parameters (Hz and/or m)
    sources.npy   (N, 11)       frequency, 5 requested x, 5 snapped x
    manifest.txt

Normalization to [-1, 1] uses dataset-global min/max statistics recorded
in the manifest.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import geogen
from .npyio import read_npy, write_npy
from .sim import SimGrid, SimulationError, SourceSpec, forward_gather

log = logging.getLogger(__name__)

FREQ_RANGE = (5.0, 25.0)
FIXED_FREQ = 15.0
FIXED_LOCATIONS = (0.0, 172.5, 345.0, 517.5, 690.0)
LOCATION_RANGES = ((0.0, 50.0), (122.5, 222.5), (295.0, 295.0), (467.5, 567.5), (640.0, 690.0))
FAMILY_TAGS = {"flat": "FlatB", "curve": "CurveA", "fault": "CurveFaultA"}
MANIFEST = "manifest.txt"
FORMAT = "fdonet-dataset-1"
ARRAYS = ("seismic", "velocity", "xi", "sources")


class DatasetError(RuntimeError):
    pass


class DatasetKind(enum.Enum):
    FIXED = "fixed"
    VAR_F = "var-f"
    VAR_L = "var-l"
    VAR_FL = "var-fl"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "-")
        for k in cls:
            if k.value == key:
                return k
        raise ValueError(f"unknown dataset kind {name!r}; expected one of "
                         f"{[k.value for k in cls]}")

    @property
    def varies_frequency(self):
        return self in (DatasetKind.VAR_F, DatasetKind.VAR_FL)

    @property
    def varies_location(self):
        return self in (DatasetKind.VAR_L, DatasetKind.VAR_FL)

    @property
    def xi_len(self):
        return {DatasetKind.FIXED: 1, DatasetKind.VAR_F: 1,
                DatasetKind.VAR_L: 5, DatasetKind.VAR_FL: 6}[self]


def sample_source_params(kind, rng) -> SourceSpec:
    """Frequency and locations drawn independently and uniformly per the kind's intervals."""
    kind = DatasetKind.parse(kind)
    f = float(rng.uniform(*FREQ_RANGE)) if kind.varies_frequency else FIXED_FREQ
    if kind.varies_location:
        locs = tuple(float(rng.uniform(lo, hi)) for lo, hi in LOCATION_RANGES)
    else:
        locs = FIXED_LOCATIONS
    return SourceSpec(frequency=f, x_locations=locs)


def xi_bounds(kind):
    kind = DatasetKind.parse(kind)
    if kind is DatasetKind.FIXED:
        return [(FIXED_FREQ, FIXED_FREQ)]
    bounds = []
    if kind.varies_frequency:
        bounds.append(FREQ_RANGE)
    if kind.varies_location:
        bounds.extend(LOCATION_RANGES)
    return bounds


def raw_xi(kind, spec: SourceSpec):
    kind = DatasetKind.parse(kind)
    if kind is DatasetKind.FIXED:
        return np.array([spec.frequency])
    xi = []
    if kind.varies_frequency:
        xi.append(spec.frequency)
    if kind.varies_location:
        xi.extend(spec.x_locations)
    return np.array(xi, dtype=np.float64)


def normalize_xi(xi, kind):
    """Map raw parameters to [-1, 1] by their interval bounds; degenerate intervals map to 0."""
    xi = np.asarray(xi, dtype=np.float64)
    out = np.zeros_like(xi)
    for j, (lo, hi) in enumerate(xi_bounds(kind)):
        if hi > lo:
            out[..., j] = normalize(xi[..., j], lo, hi)
    return out


def normalize(x, lo, hi):
    if not lo < hi:
        raise ValueError(f"normalize needs lo < hi, got lo={lo}, hi={hi}")
    return 2.0 * (np.asarray(x, dtype=np.float64) - lo) / (hi - lo) - 1.0


def denormalize(y, lo, hi):
    if not lo < hi:
        raise ValueError(f"denormalize needs lo < hi, got lo={lo}, hi={hi}")
    return (np.asarray(y, dtype=np.float64) + 1.0) * (hi - lo) / 2.0 + lo


@dataclass(frozen=True)
class NormStats:
    seis_min: float
    seis_max: float
    vel_min: float
    vel_max: float

    def __post_init__(self):
        if not (self.seis_min < self.seis_max and self.vel_min < self.vel_max):
            raise ValueError(f"degenerate normalization statistics {self}")

    @classmethod
    def from_arrays(cls, seismic, velocity):
        return cls(float(np.min(seismic)), float(np.max(seismic)),
                   float(np.min(velocity)), float(np.max(velocity)))

    def seismic(self, x):
        return normalize(x, self.seis_min, self.seis_max)

    def velocity(self, x):
        return normalize(x, self.vel_min, self.vel_max)

    def velocity_inverse(self, y):
        return denormalize(y, self.vel_min, self.vel_max)


# corruptions (applied to normalized gathers at evaluation time)

def add_data_noise(gather, sigma, rng):
    """Add i.i.d. N(0, sigma^2) to every value."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    gather = np.asarray(gather, dtype=np.float64)
    if sigma == 0:
        return gather.copy()
    return gather + rng.normal(0.0, sigma, size=gather.shape)


def drop_traces(gather, k, rng):
    """Zero ``k`` receiver columns, the same columns for every source.

    ``gather`` is (T, R, S); a batch (N, T, R, S) draws one index set per sample.
    """
    gather = np.asarray(gather, dtype=np.float64)
    if gather.ndim == 4:
        return np.stack([drop_traces(g, k, rng) for g in gather])
    n_rec = gather.shape[1]
    if not 0 <= k <= n_rec:
        raise ValueError(f"k must be in [0, {n_rec}], got {k}")
    out = gather.copy()
    if k:
        idx = rng.choice(n_rec, size=k, replace=False)
        out[:, idx, :] = 0.0
    return out


def perturb_wavelet(spec: SourceSpec, sigma) -> SourceSpec:
    """Request per-sample Gaussian noise of std ``sigma`` on the unit-peak source wavelet."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return dataclasses.replace(spec, wavelet_noise_sigma=float(sigma))


# building

def toy_grid():
    """Scaled-down 36x36 setup: dx 20 m, 200 output samples every 5 ms."""
    return SimGrid(nx=36, nz=36, dx=20.0, dt_sim=0.001, n_steps=1000, record_stride=5,
                   dt_out=0.005, pad=10)


def default_grid():
    return SimGrid()


def _sample_seeds(seed, i):
    geo, src, sim = np.random.SeedSequence([seed, i]).spawn(3)
    return (int(geo.generate_state(1, np.uint64)[0]), np.random.default_rng(src),
            int(sim.generate_state(1, np.uint64)[0]))


def build_sample(kind, family, grid: SimGrid, seed, i, source_noise=0.0):
    """One (gather, velocity, spec) triple; raises SimulationError on instability."""
    geo_seed, src_rng, sim_seed = _sample_seeds(seed, i)
    params = geogen.sample_geo_params(family, geo_seed, size=grid.nx, dx=grid.dx)
    vmap = geogen.generate(family, params)
    spec = perturb_wavelet(sample_source_params(kind, src_rng), source_noise)
    gather = forward_gather(vmap, spec, grid, seed=sim_seed)
    return gather, vmap, spec


def _build_one(args):
    kind, family, grid, seed, i = args
    try:
        gather, vmap, spec = build_sample(kind, family, grid, seed, i)
    except SimulationError as exc:
        return i, None, str(exc)
    row = np.concatenate([[spec.frequency], spec.x_locations, gather.snapped_x])
    return i, (gather.values.astype(np.float32), vmap.values.astype(np.float32),
               raw_xi(kind, spec).astype(np.float32), row.astype(np.float32)), None


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_dataset(kind, n_samples, family, grid: SimGrid, seed, out_dir, workers=1):
    """Generate, simulate and persist ``n_samples`` samples; returns the manifest dict.

    Each sample depends only on ``(seed, i)``, so results do not depend on
    ``workers``. Unstable simulations are skipped and counted.
    """
    kind = DatasetKind.parse(kind)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if family not in FAMILY_TAGS:
        raise ValueError(f"unknown family {family!r}; expected one of {list(FAMILY_TAGS)}")
    if grid.nx != grid.nz:
        raise ValueError("velocity maps are square; grid.nx must equal grid.nz")
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")

    jobs = [(kind, family, grid, seed, i) for i in range(n_samples)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_build_one, jobs))
    else:
        results = [_build_one(j) for j in jobs]

    kept = [(i, r) for i, r, _ in results if r is not None]
    skipped = [i for i, r, err in results if r is None]
    for i, _, err in results:
        if err is not None:
            log.warning("sample %d skipped: %s", i, err)
    if not kept:
        raise DatasetError("every sample failed to simulate")

    arrays = {name: np.stack([r[j] for _, r in kept]) for j, name in enumerate(ARRAYS)}
    stats = NormStats.from_arrays(arrays["seismic"], arrays["velocity"])
    files = {}
    for name, arr in arrays.items():
        path = os.path.join(out_dir, f"{name}.npy")
        write_npy(path, arr, dtype="<f4")
        files[name] = (f"{name}.npy", _sha256(path), arr.shape)

    src = arrays["sources"].astype(np.float64)
    manifest = {
        "format": FORMAT,
        "kind": kind.value,
        "family": family,
        "seed": seed,
        "n_requested": n_samples,
        "n_samples": len(kept),
        "n_skipped": len(skipped),
        "skipped_ids": ",".join(map(str, skipped)),
        "sample_ids": ",".join(str(i) for i, _ in kept),
        "xi_len": kind.xi_len,
        "sources.columns": "frequency,x_requested[5],x_snapped[5]",
        "sources.max_snap_error_m": float(np.max(np.abs(src[:, 1:6] - src[:, 6:11]))),
    }
    for f in dataclasses.fields(SimGrid):
        manifest[f"grid.{f.name}"] = getattr(grid, f.name)
    for f in dataclasses.fields(NormStats):
        manifest[f"norm.{f.name}"] = getattr(stats, f.name)
    for name, (fname, digest, shape) in files.items():
        manifest[f"file.{name}"] = fname
        manifest[f"file.{name}.sha256"] = digest
        manifest[f"file.{name}.shape"] = "x".join(map(str, shape))
    write_manifest(os.path.join(out_dir, MANIFEST), manifest)
    return manifest


def write_manifest(path, manifest):
    """Write ``key = value`` lines atomically (temp file, then rename)."""
    lines = [f"# {FORMAT} manifest: key = value\n"]
    for k, v in manifest.items():
        lines.append(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".manifest-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.writelines(lines)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_kv(path):
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DatasetError(f"{path}:{n}: expected 'key = value'")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def read_manifest(path):
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST)
    if not os.path.exists(path):
        raise DatasetError(f"no manifest at {path}")
    m = read_kv(path)
    if m.get("format") != FORMAT:
        raise DatasetError(f"{path}: unknown manifest format {m.get('format')!r}")
    return m


def grid_from_manifest(m) -> SimGrid:
    kw = {}
    for f in dataclasses.fields(SimGrid):
        raw = m[f"grid.{f.name}"]
        if f.type in ("int", int):
            kw[f.name] = int(raw)
        elif f.type in ("float", float):
            kw[f.name] = float(raw)
        elif f.type in ("bool", bool):
            kw[f.name] = raw == "True"
        else:
            kw[f.name] = raw
    return SimGrid(**kw)


def norm_from_manifest(m) -> NormStats:
    return NormStats(*(float(m[f"norm.{f.name}"]) for f in dataclasses.fields(NormStats)))


def rebuild_from_manifest(manifest_path, out_dir, workers=1):
    m = read_manifest(manifest_path)
    return build_dataset(m["kind"], int(m["n_requested"]), m["family"], grid_from_manifest(m),
                         int(m["seed"]), out_dir, workers=workers)


def verify_checksums(data_dir):
    m = read_manifest(data_dir)
    for name in ARRAYS:
        path = os.path.join(data_dir, m[f"file.{name}"])
        if _sha256(path) != m[f"file.{name}.sha256"]:
            raise DatasetError(f"checksum mismatch for {path}")
    return True


@dataclass
class Dataset:
    """Loaded dataset with normalized views."""

    kind: DatasetKind
    stats: NormStats
    grid: SimGrid
    seismic: np.ndarray
    velocity: np.ndarray
    xi_raw: np.ndarray
    sources: np.ndarray
    sample_ids: np.ndarray
    manifest: dict

    def __len__(self):
        return self.seismic.shape[0]

    @property
    def seismic_norm(self):
        return self.stats.seismic(self.seismic)

    @property
    def velocity_norm(self):
        return self.stats.velocity(self.velocity)

    @property
    def xi_norm(self):
        return normalize_xi(self.xi_raw, self.kind)

    def subset(self, idx):
        idx = np.asarray(idx)
        return dataclasses.replace(self, seismic=self.seismic[idx], velocity=self.velocity[idx],
                                   xi_raw=self.xi_raw[idx], sources=self.sources[idx],
                                   sample_ids=self.sample_ids[idx])


def load_dataset(data_dir, verify=False) -> Dataset:
    m = read_manifest(data_dir)
    if verify:
        verify_checksums(data_dir)
    arrays = {}
    for name in ARRAYS:
        path = os.path.join(data_dir, m[f"file.{name}"])
        if not os.path.exists(path):
            raise DatasetError(f"missing array file {path}")
        arrays[name] = read_npy(path)
    n = int(m["n_samples"])
    if any(a.shape[0] != n for a in arrays.values()):
        raise DatasetError("array lengths disagree with the manifest")
    ids = np.array([int(s) for s in m["sample_ids"].split(",")], dtype=np.int64)
    return Dataset(DatasetKind.parse(m["kind"]), norm_from_manifest(m), grid_from_manifest(m),
                   arrays["seismic"], arrays["velocity"], arrays["xi"], arrays["sources"], ids, m)

