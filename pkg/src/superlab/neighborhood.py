"""Lebesgue measure of eps-neighborhoods of atomic supports.

The eps-neighborhood measure of an atomic measure is Lebesgue measure
restricted to the union of eps-balls around the atoms.  Volumes and
integrals are computed by voxel-center rasterization on a grid of
resolution at most eps/8; the grid is processed in z-slabs so memory stays
bounded at any atom count.  The scaled ratio eps^{2/beta-d} * (integral
over the neighborhood) / (integral against the measure) is the scaling
diagnostic whose plateau estimates the Lebesgue-approximation constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .engine import EngineParams
from .measures import AtomicMeasure, Window, convolve_heat
from .stats import EstimateWithError

_MAX_SLAB_VOXELS = 50_000_000


class ResolutionError(ValueError):
    """Rasterization resolution too coarse for the requested accuracy."""


@dataclass(frozen=True)
class DilationQuery:
    measure: AtomicMeasure
    eps: float
    window: Window | None = None
    resolution: float | None = None
    test_fns: tuple[Callable, ...] = ()

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        res = self.resolution
        if res is None:
            object.__setattr__(self, "resolution", self.eps / 8.0)
        elif res > self.eps / 8.0 * (1.0 + 1e-12):
            raise ResolutionError("resolution must be at most eps/8")


@dataclass(frozen=True)
class DilationResult:
    volume: float
    integrals: tuple[float, ...]
    error_bound: float
    clipped: bool

    def __float__(self) -> float:
        return self.volume


@njit(cache=True)
def _stamp_slab(pos, eps, lo0, lo1, lo2, res, mask, z_off):
    nz, ny, nx = mask.shape
    eps2 = eps * eps
    for a in range(pos.shape[0]):
        x = pos[a, 0]
        y = pos[a, 1]
        z = pos[a, 2]
        kz0 = int(math.ceil((z - eps - lo2) / res - 0.5))
        kz1 = int(math.floor((z + eps - lo2) / res - 0.5))
        if kz0 < z_off:
            kz0 = z_off
        if kz1 > z_off + nz - 1:
            kz1 = z_off + nz - 1
        for kz in range(kz0, kz1 + 1):
            cz = lo2 + (kz + 0.5) * res
            rz2 = eps2 - (cz - z) * (cz - z)
            if rz2 <= 0.0:
                continue
            rz = math.sqrt(rz2)
            ky0 = int(math.ceil((y - rz - lo1) / res - 0.5))
            ky1 = int(math.floor((y + rz - lo1) / res - 0.5))
            if ky0 < 0:
                ky0 = 0
            if ky1 > ny - 1:
                ky1 = ny - 1
            for ky in range(ky0, ky1 + 1):
                cy = lo1 + (ky + 0.5) * res
                ry2 = rz2 - (cy - y) * (cy - y)
                if ry2 <= 0.0:
                    continue
                ry = math.sqrt(ry2)
                kx0 = int(math.ceil((x - ry - lo0) / res - 0.5))
                kx1 = int(math.floor((x + ry - lo0) / res - 0.5))
                if kx0 < 0:
                    kx0 = 0
                if kx1 > nx - 1:
                    kx1 = nx - 1
                row = mask[kz - z_off, ky]
                for kx in range(kx0, kx1 + 1):
                    row[kx] = 1


@njit(cache=True)
def _stamp_slab_multiplicity(pos, lin, eps, lo0, lo1, lo2, res, mult,
                             last_seen, z_off):
    """Count distinct lineages covering each voxel; lin must be sorted."""
    nz, ny, nx = mult.shape
    eps2 = eps * eps
    for a in range(pos.shape[0]):
        x = pos[a, 0]
        y = pos[a, 1]
        z = pos[a, 2]
        lid = lin[a]
        kz0 = int(math.ceil((z - eps - lo2) / res - 0.5))
        kz1 = int(math.floor((z + eps - lo2) / res - 0.5))
        if kz0 < z_off:
            kz0 = z_off
        if kz1 > z_off + nz - 1:
            kz1 = z_off + nz - 1
        for kz in range(kz0, kz1 + 1):
            cz = lo2 + (kz + 0.5) * res
            rz2 = eps2 - (cz - z) * (cz - z)
            if rz2 <= 0.0:
                continue
            rz = math.sqrt(rz2)
            ky0 = int(math.ceil((y - rz - lo1) / res - 0.5))
            ky1 = int(math.floor((y + rz - lo1) / res - 0.5))
            if ky0 < 0:
                ky0 = 0
            if ky1 > ny - 1:
                ky1 = ny - 1
            for ky in range(ky0, ky1 + 1):
                cy = lo1 + (ky + 0.5) * res
                ry2 = rz2 - (cy - y) * (cy - y)
                if ry2 <= 0.0:
                    continue
                ry = math.sqrt(ry2)
                kx0 = int(math.ceil((x - ry - lo0) / res - 0.5))
                kx1 = int(math.floor((x + ry - lo0) / res - 0.5))
                if kx0 < 0:
                    kx0 = 0
                if kx1 > nx - 1:
                    kx1 = nx - 1
                for kx in range(kx0, kx1 + 1):
                    if last_seen[kz - z_off, ky, kx] != lid:
                        last_seen[kz - z_off, ky, kx] = lid
                        mult[kz - z_off, ky, kx] += 1


def _grid_spec(q: DilationQuery) -> tuple[np.ndarray, np.ndarray, bool]:
    pos = q.measure.positions
    pad = q.eps + 2.0 * q.resolution
    lo = pos.min(axis=0) - pad
    hi = pos.max(axis=0) + pad
    clipped = False
    if q.window is not None:
        wlo = np.asarray(q.window.lower, dtype=float)
        whi = np.asarray(q.window.upper, dtype=float)
        clipped = bool(np.any(lo < wlo) or np.any(hi > whi))
        lo = np.maximum(lo, wlo)
        hi = np.minimum(hi, whi)
    return lo, hi, clipped


def _rasterize(q: DilationQuery, fns: Sequence[Callable]) -> DilationResult:
    m = q.measure
    if m.dim != 3:
        raise NotImplementedError("rasterization implemented for d = 3")
    if len(m) == 0:
        return DilationResult(0.0, tuple(0.0 for _ in fns), 0.0, False)
    res = q.resolution
    lo, hi, clipped = _grid_spec(q)
    n_ax = np.maximum(np.ceil((hi - lo) / res).astype(int), 1)
    nx, ny, nz = int(n_ax[0]), int(n_ax[1]), int(n_ax[2])
    slab = max(1, _MAX_SLAB_VOXELS // (nx * ny))
    pos = np.ascontiguousarray(m.positions, dtype=np.float64)
    count = 0
    fsums = np.zeros(len(fns))
    vol_voxel = res ** 3
    for z_off in range(0, nz, slab):
        nz_s = min(slab, nz - z_off)
        mask = np.zeros((nz_s, ny, nx), dtype=np.uint8)
        z0 = lo[2] + z_off * res
        z1 = lo[2] + (z_off + nz_s) * res
        sel = (pos[:, 2] > z0 - q.eps - res) & (pos[:, 2] < z1 + q.eps + res)
        sub = pos[sel]
        if sub.shape[0]:
            _stamp_slab(sub, q.eps, lo[0], lo[1], lo[2], res, mask, z_off)
        count += int(mask.sum())
        if fns:
            iz, iy, ix = np.nonzero(mask)
            if iz.size:
                centers = np.empty((iz.size, 3))
                centers[:, 0] = lo[0] + (ix + 0.5) * res
                centers[:, 1] = lo[1] + (iy + 0.5) * res
                centers[:, 2] = lo[2] + (iz + z_off + 0.5) * res
                for i, f in enumerate(fns):
                    fsums[i] += float(np.sum(f(centers)))
    volume = count * vol_voxel
    # voxel-center error scales with resolution times the union surface area;
    # a single ball's area times the atom count is a crude overestimate
    surface = 4.0 * math.pi * q.eps ** 2 * len(m)
    err = res * surface
    return DilationResult(volume, tuple(fsums * vol_voxel), err, clipped)


def dilation_volume(q: DilationQuery) -> DilationResult:
    """Lebesgue volume of the eps-neighborhood of the atom set."""
    return _rasterize(q, ())


def neighborhood_integral(q: DilationQuery, f: Callable) -> float:
    """Integral of f over the eps-neighborhood of the atom set."""
    return _rasterize(q, (f,)).integrals[0]


def median_nn_spacing(positions: np.ndarray) -> float:
    if positions.shape[0] < 2:
        return math.inf
    tree = cKDTree(positions)
    dist, _ = tree.query(positions, k=2)
    return float(np.median(dist[:, 1]))


def validity_band(positions: np.ndarray) -> tuple[float, float]:
    """eps range where the particle support resolves the true support.

    Lower end: 4x the median nearest-neighbor spacing (below it the curve
    measures the particle discretization, not the support).  Upper end: a
    quarter of the support diameter.
    """
    low = 4.0 * median_nn_spacing(positions)
    span = positions.max(axis=0) - positions.min(axis=0)
    high = float(np.linalg.norm(span)) / 4.0
    return low, high


def default_test_fns(scale: float = 1.0) -> tuple[Callable, ...]:
    """Constant 1 plus truncated Gaussian bumps at three centers."""
    centers = [np.zeros(3), np.array([scale, 0.0, 0.0]),
               np.array([0.0, -scale, scale])]

    def make(c):
        def bump(x):
            r2 = np.sum((x - c) ** 2, axis=1) / scale ** 2
            return np.where(r2 < 4.0, np.exp(-r2), 0.0)
        return bump

    return (lambda x: np.ones(x.shape[0]),) + tuple(make(c) for c in centers)


@dataclass(frozen=True)
class ScalingCurve:
    eps: np.ndarray                # strictly decreasing
    volume: np.ndarray
    raw: np.ndarray                # (n_eps, n_fns) neighborhood integrals
    scaled_ratio: np.ndarray       # (n_eps, n_fns)
    f_ids: tuple[str, ...]
    band: tuple[float, float]

    def __post_init__(self):
        if np.any(np.diff(self.eps) >= 0):
            raise ValueError("eps must be strictly decreasing")
        if np.any(self.scaled_ratio < 0):
            raise ValueError("ratios must be nonnegative")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("eps,volume,f_id,raw,scaled_ratio\n")
            for i, e in enumerate(self.eps):
                for j, fid in enumerate(self.f_ids):
                    fh.write(f"{e:.17g},{self.volume[i]:.17g},{fid},"
                             f"{self.raw[i, j]:.17g},"
                             f"{self.scaled_ratio[i, j]:.17g}\n")


class ExtinctPathError(ValueError):
    """Scaling curve requested on an extinct (empty) snapshot."""


def scaling_curve(snapshot: AtomicMeasure, eps_ladder: Sequence[float],
                  test_fns: Sequence[Callable], beta: float,
                  enforce_band: bool = True) -> ScalingCurve:
    """Scaled-ratio curve over a decreasing eps ladder for one snapshot."""
    if len(snapshot) == 0:
        raise ExtinctPathError("empty snapshot")
    d = snapshot.dim
    expo = 2.0 / beta - d
    band = validity_band(snapshot.positions)
    eps_arr = np.array(sorted(set(float(e) for e in eps_ladder),
                              reverse=True))
    if enforce_band:
        keep = (eps_arr >= band[0]) & (eps_arr <= band[1])
        eps_arr = eps_arr[keep]
        if eps_arr.size == 0:
            raise ValueError(
                f"no ladder point inside validity band {band}")
    fns = tuple(test_fns)
    xi_f = np.array([float(np.sum(snapshot.masses * f(snapshot.positions)))
                     for f in fns])
    vols = np.empty(eps_arr.size)
    raw = np.empty((eps_arr.size, len(fns)))
    for i, eps in enumerate(eps_arr):
        r = _rasterize(DilationQuery(snapshot, float(eps)), fns)
        vols[i] = r.volume
        raw[i] = r.integrals
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = eps_arr[:, None] ** expo * raw / xi_f[None, :]
    ratio = np.where(np.isfinite(ratio), ratio, 0.0)
    f_ids = tuple(f"f{j}" for j in range(len(fns)))
    return ScalingCurve(eps_arr, vols, raw, ratio, f_ids, band)


def overlap_defect(t: float, h: float, eps_ladder: Sequence[float],
                   params: EngineParams, reps: int,
                   initial: AtomicMeasure) -> dict:
    """L1 distance between summed per-cluster neighborhoods and the union.

    The defect equals the multiply-covered volume weighted by multiplicity
    minus one, with multiplicity the number of distinct time-(t-h) ancestor
    lineages whose descendants cover a voxel.
    """
    from .clusters import _cluster_mode, _run_snapshot
    from .stats import derive_seeds

    eps_ladder = sorted(float(e) for e in eps_ladder)
    if eps_ladder[-1] ** 2 > h:
        raise ValueError("need eps^2 <= h")
    if params.d != 3:
        raise NotImplementedError("rasterization implemented for d = 3")
    s = t - h
    N = params.mass_scale
    x0_all = np.repeat(initial.positions,
                       np.rint(initial.masses * N).astype(int), axis=0)
    mode = _cluster_mode(params)
    seeds = derive_seeds(params.seed, 2 * reps, stream=61)
    ne = len(eps_ladder)
    acc = np.zeros(ne)
    acc2 = np.zeros(ne)
    for r in range(reps):
        lin0 = np.arange(x0_all.shape[0], dtype=np.int64)
        if s > 0:
            pos_s, _, _ = _run_snapshot(x0_all, lin0, params, s, mode,
                                        seeds[2 * r])
        else:
            pos_s = x0_all
        if pos_s.shape[0] == 0:
            continue
        lin_s = np.arange(pos_s.shape[0], dtype=np.int64)
        pos_t, lin_t, _ = _run_snapshot(pos_s, lin_s, params, h, mode,
                                        seeds[2 * r + 1])
        if pos_t.shape[0] == 0:
            continue
        order = np.argsort(lin_t, kind="stable")
        pos_t = np.ascontiguousarray(pos_t[order])
        lin_t = np.ascontiguousarray(lin_t[order])
        for i, eps in enumerate(eps_ladder):
            defect = _multiplicity_defect(pos_t, lin_t, eps)
            acc[i] += defect
            acc2[i] += defect * defect
    rows = []
    for i, eps in enumerate(eps_ladder):
        mean = acc[i] / reps
        var = acc2[i] / reps - mean ** 2
        se = math.sqrt(max(var, 0.0) / reps)
        bound = eps ** (2.0 * (params.d - 2.0 / params.beta)) \
            * h ** (1.0 - params.d / 2.0)
        rows.append({"eps": eps, "estimate": mean, "stderr": se,
                     "bound": bound})
    return {"rows": rows, "reps": reps, "t": t, "h": h}


def _multiplicity_defect(pos: np.ndarray, lin: np.ndarray,
                         eps: float) -> float:
    res = eps / 8.0
    pad = eps + 2.0 * res
    lo = pos.min(axis=0) - pad
    hi = pos.max(axis=0) + pad
    n_ax = np.maximum(np.ceil((hi - lo) / res).astype(int), 1)
    nx, ny, nz = int(n_ax[0]), int(n_ax[1]), int(n_ax[2])
    slab = max(1, (_MAX_SLAB_VOXELS // 2) // (nx * ny))
    defect_voxels = 0
    for z_off in range(0, nz, slab):
        nz_s = min(slab, nz - z_off)
        mult = np.zeros((nz_s, ny, nx), dtype=np.int32)
        last = np.full((nz_s, ny, nx), -1, dtype=np.int64)
        z0 = lo[2] + z_off * res
        z1 = lo[2] + (z_off + nz_s) * res
        sel = (pos[:, 2] > z0 - pad) & (pos[:, 2] < z1 + pad)
        if np.any(sel):
            _stamp_slab_multiplicity(
                np.ascontiguousarray(pos[sel]),
                np.ascontiguousarray(lin[sel]), eps,
                lo[0], lo[1], lo[2], res, mult, last, z_off)
        covered = mult > 0
        defect_voxels += int(mult[covered].sum() - covered.sum())
    return defect_voxels * res ** 3


def age_schedule(eps: float, beta: float, d: int) -> float:
    """Cluster age h = eps^c balancing hit rate against overlap defect."""
    if d <= 2.0 / beta:
        raise ValueError("need d > 2/beta")
    c = (d - 2.0 / beta) / ((d - 1.0) / 2.0)
    return eps ** c
