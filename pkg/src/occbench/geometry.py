"""Mesh and point-cloud primitives, unit-sphere alignment, surface sampling and
an exact nearest-neighbour index."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import OccbenchError
from .rng import make_rng


class ObjParseError(OccbenchError):
    pass


class DegenerateMeshError(OccbenchError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64, 0-based

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise OccbenchError("mesh has non-finite vertex coordinates")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise OccbenchError("face index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of corner coordinates."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def scaled(self, s: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * s, self.faces)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.faces)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(p) == 0:
            raise OccbenchError("point cloud is empty")
        if not np.all(np.isfinite(p)):
            raise OccbenchError("point cloud has non-finite coordinates")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class AlignmentTransform:
    """Maps ``v`` to ``(v - center) / scale``."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise OccbenchError("alignment scale must be positive")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def apply_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        return TriangleMesh(self.apply(mesh.vertices), mesh.faces)


# --------------------------------------------------------------------------- OBJ

def _obj_index(token: str, n_vertices: int, lineno: int) -> int:
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ObjParseError(f"line {lineno}: malformed face index {token!r}") from None
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += n_vertices
    else:
        raise ObjParseError(f"line {lineno}: face index out of range (0)")
    if not 0 <= idx < n_vertices:
        raise ObjParseError(f"line {lineno}: face index out of range ({head})")
    return idx


def parse_obj(data: bytes | str) -> TriangleMesh:
    """Parse ASCII Wavefront OBJ text into a triangle mesh.

    Only ``v`` and ``f`` records are read. Face corners may carry
    ``/texture/normal`` suffixes, indices may be negative (relative to the
    vertices seen so far), and polygons are fan-triangulated from their first
    corner.
    """
    text = data.decode("ascii", errors="strict") if isinstance(data, (bytes, bytearray)) else data
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ObjParseError(f"line {lineno}: malformed vertex line")
            try:
                xyz = tuple(float(c) for c in parts[1:4])
            except ValueError:
                raise ObjParseError(f"line {lineno}: malformed vertex line") from None
            if not all(np.isfinite(xyz)):
                raise ObjParseError(f"line {lineno}: non-finite vertex coordinate")
            vertices.append(xyz)
        elif tag == "f":
            if len(parts) < 4:
                raise ObjParseError(f"line {lineno}: face needs at least 3 vertices")
            idx = [_obj_index(tok, len(vertices), lineno) for tok in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
    if not vertices or not faces:
        raise ObjParseError(f"line {len(text.splitlines())}: empty mesh (no vertices or faces)")
    return TriangleMesh(np.array(vertices), np.array(faces))


def write_obj(mesh: TriangleMesh) -> bytes:
    lines = ["v %.9g %.9g %.9g" % tuple(v) for v in mesh.vertices]
    lines += ["f %d %d %d" % tuple(f + 1) for f in mesh.faces]
    return ("\n".join(lines) + "\n").encode("ascii")


def load_obj(path) -> TriangleMesh:
    return parse_obj(Path(path).read_bytes())


def save_obj(mesh: TriangleMesh, path) -> None:
    Path(path).write_bytes(write_obj(mesh))


# --------------------------------------------------------------------- alignment

def align_unit_sphere(mesh: TriangleMesh) -> tuple[TriangleMesh, AlignmentTransform]:
    """Center on the bounding-box center and scale so the farthest vertex has norm 1."""
    v = mesh.vertices
    if len(v) == 0:
        raise DegenerateMeshError("mesh has no vertices")
    center = 0.5 * (v.min(axis=0) + v.max(axis=0))
    scale = float(np.max(np.linalg.norm(v - center, axis=1)))
    if scale == 0.0:
        raise DegenerateMeshError("all vertices coincide; cannot normalise")
    transform = AlignmentTransform(center, scale)
    return transform.apply_mesh(mesh), transform


# ---------------------------------------------------------------------- sampling

def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    if n < 1:
        raise OccbenchError("sample count must be >= 1")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if not total > 0:
        raise DegenerateMeshError("mesh has zero surface area")
    rng = make_rng(seed)
    cdf = np.cumsum(areas) / total
    face = np.searchsorted(cdf, rng.random(n), side="right")
    face = np.minimum(face, len(areas) - 1)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    u = 1.0 - s
    v = s * (1.0 - r2)
    w = s * r2
    tri = mesh.triangles[face]
    pts = u[:, None] * tri[:, 0] + v[:, None] * tri[:, 1] + w[:, None] * tri[:, 2]
    return PointCloud(pts)


# ------------------------------------------------------------------------- index

class SpatialIndex:
    """Exact Euclidean nearest-neighbour queries over a fixed point cloud."""

    def __init__(self, cloud: PointCloud):
        self._tree = cKDTree(cloud.points, balanced_tree=True, compact_nodes=True)
        self.size = len(cloud)

    def nearest_distance(self, queries) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64)
        single = q.ndim == 1
        d, _ = self._tree.query(q.reshape(-1, 3), k=1, eps=0.0, p=2.0)
        return d[0] if single else d


def build_index(cloud: PointCloud) -> SpatialIndex:
    if len(cloud) == 0:
        raise OccbenchError("cannot index an empty cloud")
    return SpatialIndex(cloud)
