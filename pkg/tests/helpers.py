"""Fixture builders shared by the CLI and acceptance suites."""

from pathlib import Path

import numpy as np
from PIL import Image

from occbench.feature_metrics import FeatureSet, save_fvec
from occbench.geometry import save_obj
from occbench.shapes import box_mesh, uv_sphere


def disk_mask(h, w, cy, cx, r):
    y, x = np.mgrid[:h, :w]
    return (y - cy) ** 2 + (x - cx) ** 2 <= r * r


def write_source_dir(root, n=5, size=96, r=22, occ_r=9):
    """``n`` synthetic (image, mask, occluder) triples; occluders carry their shape in alpha."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        rng = np.random.default_rng(i)
        img = rng.integers(1, 256, size=(size, size, 4), dtype=np.uint8)
        mask = disk_mask(size, size, size // 2, size // 2, r)
        occ = rng.integers(1, 256, size=(2 * occ_r + 1, 2 * occ_r + 1, 4), dtype=np.uint8)
        occ[..., 3] = np.where(disk_mask(2 * occ_r + 1, 2 * occ_r + 1, occ_r, occ_r, occ_r), 255, 0)
        Image.fromarray(img, "RGBA").save(root / f"obj{i:02d}_image.png")
        Image.fromarray(mask.astype(np.uint8) * 255, "L").save(root / f"obj{i:02d}_mask.png")
        Image.fromarray(occ, "RGBA").save(root / f"obj{i:02d}_occluder.png")
    return root


def write_mesh_dir(root, n=10, skip=()):
    """Alternating boxes and spheres as ``<id>.obj``; ids listed in ``skip`` are left out."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(n):
        sid = f"m{i:02d}"
        ids.append(sid)
        if sid in skip:
            continue
        s = 0.3 + 0.05 * i
        mesh = box_mesh((-s, -0.4, -0.5), (s, 0.4, 0.5)) if i % 2 == 0 else uv_sphere(8, 16, radius=s)
        save_obj(mesh, root / f"{sid}.obj")
    return root, ids


def write_features(path, data):
    save_fvec(FeatureSet(np.asarray(data, dtype=np.float32)), path)
    return path
