"""Closed primitive meshes used as fixtures and for noise-floor calibration."""

import numpy as np

from .geometry import TriangleMesh


def box_mesh(lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 0.5)) -> TriangleMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)])
    # corner i has bit k set when coordinate k is at `hi`
    quads = [
        (0, 2, 3, 1),  # z-
        (4, 5, 7, 6),  # z+
        (0, 1, 5, 4),  # y-
        (2, 6, 7, 3),  # y+
        (0, 4, 6, 2),  # x-
        (1, 3, 7, 5),  # x+
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriangleMesh(corners, np.array(faces))


def uv_sphere(stacks: int = 32, slices: int = 64, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Latitude/longitude sphere with ``2 * slices * (stacks - 1)`` triangles."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, stacks):
        theta = np.pi * i / stacks
        for j in range(slices):
            phi = 2.0 * np.pi * j / slices
            verts.append((radius * np.sin(theta) * np.cos(phi),
                          radius * np.sin(theta) * np.sin(phi),
                          radius * np.cos(theta)))
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * slices + (j % slices)

    faces = []
    for j in range(slices):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, stacks - 1):
        for j in range(slices):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(slices):
        faces.append((south, ring(stacks - 1, j + 1), ring(stacks - 1, j)))
    return TriangleMesh(np.array(verts) + np.asarray(center, dtype=np.float64), np.array(faces))
