"""3D fidelity metrics: Chamfer distance, F-Score and volume IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import OccbenchError
from .geometry import PointCloud, TriangleMesh, build_index

DEFAULT_SAMPLES = 10_000
DEFAULT_TAU = 0.02
DEFAULT_RESOLUTION = 64
# sub-voxel offset applied to every ray origin, as a fraction of voxel_size
RAY_JITTER = 1e-4


@dataclass(frozen=True)
class ChamferReport:
    mean_a_to_b: float
    mean_b_to_a: float
    cd: float


@dataclass(frozen=True)
class FScoreReport:
    tau: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class OccupancyGrid:
    resolution: int
    origin: tuple[float, float, float]
    voxel_size: float
    occupancy: np.ndarray  # (R, R, R) bool, indexed [x, y, z]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    @property
    def fraction(self) -> float:
        return self.count / self.resolution ** 3


def _nearest(src: PointCloud, dst: PointCloud) -> np.ndarray:
    return build_index(dst).nearest_distance(src.points)


def chamfer_distance(a: PointCloud, b: PointCloud, squared: bool = False) -> ChamferReport:
    """Mean nearest-neighbour distance in each direction, averaged.

    Distances are unsquared Euclidean unless ``squared`` is set.
    """
    d_ab = _nearest(a, b)
    d_ba = _nearest(b, a)
    if squared:
        d_ab, d_ba = d_ab ** 2, d_ba ** 2
    m_ab = float(np.mean(d_ab))
    m_ba = float(np.mean(d_ba))
    return ChamferReport(m_ab, m_ba, (m_ab + m_ba) / 2.0)


def f_score(a: PointCloud, b: PointCloud, tau: float = DEFAULT_TAU) -> FScoreReport:
    """Precision of ``a`` (prediction) against ``b`` (ground truth) at threshold ``tau``."""
    if not tau > 0:
        raise OccbenchError("tau must be positive")
    precision = float(np.mean(_nearest(a, b) <= tau))
    recall = float(np.mean(_nearest(b, a) <= tau))
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return FScoreReport(float(tau), precision, recall, f1)


# ---------------------------------------------------------------- voxelisation

def _ray_origins(resolution: int) -> np.ndarray:
    voxel = 2.0 / resolution
    return -1.0 + (np.arange(resolution) + 0.5 + RAY_JITTER) * voxel


def _edge_owned(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # Tie-break for points exactly on an edge. Antisymmetric under edge
    # reversal, so a shared edge is claimed by exactly one of its two faces.
    return (dy > 0) | ((dy == 0) & (dx > 0))


def _solid_parity(mesh: TriangleMesh, resolution: int) -> np.ndarray:
    coords = _ray_origins(resolution)
    tri = mesh.triangles
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = area2 != 0
    a, b, c, area2 = a[keep], b[keep], c[keep], area2[keep]
    # orient every projected triangle counter-clockwise
    flip = area2 < 0
    b, c = np.where(flip[:, None], c, b), np.where(flip[:, None], b, c)
    area2 = np.abs(area2)

    xy = np.stack([a[:, :2], b[:, :2], c[:, :2]], axis=1)
    lo = np.searchsorted(coords, xy.min(axis=1), side="left")
    hi = np.searchsorted(coords, xy.max(axis=1), side="right")
    nx = np.maximum(hi[:, 0] - lo[:, 0], 0)
    ny = np.maximum(hi[:, 1] - lo[:, 1], 0)
    per_tri = nx * ny
    total = int(per_tri.sum())
    if total == 0:
        return np.zeros((resolution,) * 3, dtype=bool)

    t = np.repeat(np.arange(len(per_tri)), per_tri)
    local = np.arange(total) - np.repeat(np.cumsum(per_tri) - per_tri, per_tri)
    ix = lo[t, 0] + local // ny[t]
    iy = lo[t, 1] + local % ny[t]
    px, py = coords[ix], coords[iy]

    at, bt, ct = a[t], b[t], c[t]
    hit = np.ones(total, dtype=bool)
    weights = []
    for p, q in ((bt, ct), (ct, at), (at, bt)):
        dx = q[:, 0] - p[:, 0]
        dy = q[:, 1] - p[:, 1]
        w = dx * (py - p[:, 1]) - dy * (px - p[:, 0])
        hit &= (w > 0) | ((w == 0) & _edge_owned(dx, dy))
        weights.append(w)
    w0, w1, w2 = (w[hit] for w in weights)
    t, ix, iy = t[hit], ix[hit], iy[hit]
    z = (w0 * a[t, 2] + w1 * b[t, 2] + w2 * c[t, 2]) / area2[t]
    # number of sample centres strictly below the crossing
    kc = np.searchsorted(coords, z, side="left")
    shape = (resolution, resolution, resolution + 1)
    flat = (ix * resolution + iy) * (resolution + 1) + kc
    crossings = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    # crossings above centre k are those with kc >= k + 1
    above = np.cumsum(crossings[:, :, ::-1], axis=2)[:, :, ::-1][:, :, 1:]
    return (above % 2) == 1


def _surface_voxels(mesh: TriangleMesh, resolution: int) -> np.ndarray:
    voxel = 2.0 / resolution
    tri = mesh.triangles
    edges = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]], axis=1)
    longest = np.linalg.norm(edges, axis=2).max(axis=1)
    steps = np.maximum(np.ceil(longest / (0.5 * voxel)).astype(np.int64), 1)
    occ = np.zeros((resolution,) * 3, dtype=bool)
    for m in np.unique(steps):
        sel = tri[steps == m]
        i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        mask = i + j <= m
        u = (i[mask] / m)[None, :, None]
        v = (j[mask] / m)[None, :, None]
        pts = (1 - u - v) * sel[:, None, 0] + u * sel[:, None, 1] + v * sel[:, None, 2]
        idx = np.floor((pts.reshape(-1, 3) + 1.0) / voxel).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < resolution), axis=1)
        idx = idx[ok]
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return occ


def voxelize_solid(mesh: TriangleMesh, resolution: int = DEFAULT_RESOLUTION, mode: str = "parity") -> OccupancyGrid:
    """Solid occupancy of ``mesh`` on an R^3 grid spanning [-1, 1]^3.

    ``parity`` (default) marks a voxel when a +z ray from its (slightly
    jittered) centre crosses the surface an odd number of times; it is only
    meaningful for closed meshes. ``surface-fill`` rasterises the surface and
    fills every cavity not connected to the grid exterior.
    """
    if resolution < 1:
        raise OccbenchError("resolution must be a positive integer")
    if len(mesh.faces) == 0:
        raise OccbenchError("mesh has no faces")
    if mode == "parity":
        occ = _solid_parity(mesh, resolution)
    elif mode == "surface-fill":
        occ = ndimage.binary_fill_holes(_surface_voxels(mesh, resolution))
    else:
        raise OccbenchError(f"unknown voxel mode {mode!r}")
    return OccupancyGrid(resolution, (-1.0, -1.0, -1.0), 2.0 / resolution, occ)


def volume_iou(a: OccupancyGrid, b: OccupancyGrid) -> float:
    if (a.resolution, tuple(a.origin), a.voxel_size) != (b.resolution, tuple(b.origin), b.voxel_size):
        raise OccbenchError("occupancy grids differ in resolution, origin or voxel size")
    union = np.count_nonzero(a.occupancy | b.occupancy)
    if union == 0:
        raise OccbenchError("no occupied volume")
    return np.count_nonzero(a.occupancy & b.occupancy) / union
