import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occbench import OccbenchError
from occbench.geometry import PointCloud, TriangleMesh, align_unit_sphere, sample_surface
from occbench.mesh_metrics import chamfer_distance, f_score, volume_iou, voxelize_solid
from occbench.shapes import box_mesh, uv_sphere

from conftest import brute_nearest


def P(*pts):
    return PointCloud(np.array(pts, dtype=float))


def test_chamfer_identity(rng):
    a = PointCloud(rng.normal(size=(100, 3)))
    assert chamfer_distance(a, a).cd == 0.0


def test_chamfer_two_points():
    r = chamfer_distance(P((0, 0, 0)), P((1, 0, 0)))
    assert (r.mean_a_to_b, r.mean_b_to_a, r.cd) == (1.0, 1.0, 1.0)


def test_chamfer_three_points():
    r = chamfer_distance(P((0, 0, 0), (2, 0, 0)), P((1, 0, 0)))
    assert (r.mean_a_to_b, r.mean_b_to_a, r.cd) == (1.0, 1.0, 1.0)


def test_chamfer_squared_mode():
    r = chamfer_distance(P((0, 0, 0)), P((2, 0, 0)), squared=True)
    assert r.cd == 4.0


def test_chamfer_symmetry(rng):
    a = PointCloud(rng.normal(size=(80, 3)))
    b = PointCloud(rng.normal(size=(120, 3)) + 0.3)
    ab, ba = chamfer_distance(a, b), chamfer_distance(b, a)
    assert ab.cd == ba.cd
    assert (ab.mean_a_to_b, ab.mean_b_to_a) == (ba.mean_b_to_a, ba.mean_a_to_b)


def test_chamfer_zero_iff_mutual_coverage():
    a = P((0, 0, 0), (1, 0, 0))
    assert chamfer_distance(a, P((1, 0, 0), (0, 0, 0), (0, 0, 0))).cd == 0.0
    assert chamfer_distance(a, P((0, 0, 0))).cd > 0.0


def test_fscore_examples(rng):
    a = PointCloud(rng.normal(size=(64, 3)))
    r = f_score(a, a, 0.01)
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
    r = f_score(P((0, 0, 0)), P((1, 0, 0)), 0.5)
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    r = f_score(P((0, 0, 0), (1, 0, 0)), P((0, 0, 0)), 0.5)
    assert (r.precision, r.recall) == (0.5, 1.0)
    assert r.f1 == pytest.approx(2 / 3, abs=1e-15)


def test_fscore_closed_threshold():
    r = f_score(P((0, 0, 0)), P((0.5, 0, 0)), 0.5)
    assert r.f1 == 1.0


def test_fscore_bad_tau():
    with pytest.raises(OccbenchError):
        f_score(P((0, 0, 0)), P((0, 0, 0)), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_bruteforce_equivalence(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(m, 3)) * 1.2
    dab, dba = brute_nearest(a, b), brute_nearest(b, a)
    r = chamfer_distance(PointCloud(a), PointCloud(b))
    assert abs(r.cd - (dab.mean() + dba.mean()) / 2) <= 1e-12
    for tau in (0.05, 0.2, 0.5):
        fs = f_score(PointCloud(a), PointCloud(b), tau)
        p, q = np.mean(dab <= tau), np.mean(dba <= tau)
        f1 = 2 * p * q / (p + q) if p + q > 0 else 0.0
        assert abs(fs.precision - p) <= 1e-12
        assert abs(fs.recall - q) <= 1e-12
        assert abs(fs.f1 - f1) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_fscore_monotone_in_tau(seed, t1, t2):
    rng = np.random.default_rng(seed)
    a, b = PointCloud(rng.normal(size=(50, 3))), PointCloud(rng.normal(size=(60, 3)))
    lo, hi = f_score(a, b, min(t1, t2)), f_score(a, b, max(t1, t2))
    assert lo.precision <= hi.precision and lo.recall <= hi.recall and lo.f1 <= hi.f1


@pytest.mark.parametrize("mesh", [uv_sphere(32, 64), box_mesh()], ids=["sphere", "cube"])
def test_self_cd_noise_floor(mesh):
    aligned, _ = align_unit_sphere(mesh)
    a = sample_surface(aligned, 10_000, seed=1)
    b = sample_surface(aligned, 10_000, seed=2)
    assert chamfer_distance(a, b).cd < 0.02


# ----------------------------------------------------------------- voxels

def test_voxel_cube_volume():
    # [-0.5, 0.5]^3 occupies 1/8 of the [-1, 1]^3 box
    g = voxelize_solid(box_mesh(), 64)
    assert abs(g.fraction - 1 / 8) <= 0.02 * (1 / 8)
    assert g.count == 32 ** 3


def test_voxel_outside_box():
    g = voxelize_solid(box_mesh((2, 2, 2), (3, 3, 3)), 32)
    assert g.count == 0


def test_voxel_sphere_volume_and_convergence():
    mesh = uv_sphere(48, 96, radius=0.8)
    fr = {r: voxelize_solid(mesh, r).fraction for r in (32, 64, 128)}
    exact = 4 / 3 * np.pi * 0.8 ** 3 / 8
    assert abs(fr[128] - exact) / exact < 0.01
    assert abs(fr[32] - fr[128]) / fr[128] < 0.03


def test_voxel_parity_matches_analytic_sphere():
    # Analytic oracle: voxels safely inside / outside the true sphere, with a
    # margin covering the polygonal approximation and the ray jitter.
    mesh = uv_sphere(24, 48, radius=0.7, center=(0.1, -0.05, 0.0))
    g = voxelize_solid(mesh, 24)
    c = -1 + (np.arange(24) + 0.5) * (2 / 24)
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    r = np.sqrt((X - 0.1) ** 2 + (Y + 0.05) ** 2 + Z ** 2)
    certain_in = r < 0.7 * np.cos(np.pi / 24) - 0.02
    certain_out = r > 0.7 + 0.02
    assert np.all(g.occupancy[certain_in])
    assert not np.any(g.occupancy[certain_out])


def test_surface_fill_matches_parity_on_closed_mesh():
    mesh = uv_sphere(32, 64, radius=0.75)
    a = voxelize_solid(mesh, 48)
    b = voxelize_solid(mesh, 48, mode="surface-fill")
    # surface-fill includes the whole surface shell, so it is a superset up to a thin band
    assert volume_iou(a, b) > 0.85
    assert np.count_nonzero(a.occupancy & ~b.occupancy) <= 0.01 * a.count


def test_iou_identity_and_offset_cubes():
    a = voxelize_solid(box_mesh((-0.75, -0.5, -0.5), (0.25, 0.5, 0.5)), 128)
    b = voxelize_solid(box_mesh((-0.25, -0.5, -0.5), (0.75, 0.5, 0.5)), 128)
    assert volume_iou(a, a) == 1.0
    assert abs(volume_iou(a, b) - 1 / 3) <= 0.02 * (1 / 3)


def test_iou_disjoint():
    a = voxelize_solid(box_mesh((-0.9, -0.5, -0.5), (-0.1, 0.5, 0.5)), 64)
    b = voxelize_solid(box_mesh((0.1, -0.5, -0.5), (0.9, 0.5, 0.5)), 64)
    assert volume_iou(a, b) == 0.0


def test_iou_errors():
    a = voxelize_solid(box_mesh(), 16)
    with pytest.raises(OccbenchError, match="differ"):
        volume_iou(a, voxelize_solid(box_mesh(), 32))
    empty = voxelize_solid(box_mesh((2, 2, 2), (3, 3, 3)), 16)
    with pytest.raises(OccbenchError, match="no occupied volume"):
        volume_iou(empty, empty)


def test_voxel_edges_through_ray_origins():
    # Box side edges and face diagonals pass exactly through ray origins, so
    # every column decision rests on the half-open edge rule: of the two
    # boundary column lines per axis exactly one is claimed, and diagonal
    # columns are counted once per face (never zero or twice).
    R = 16
    origins = -1.0 + (np.arange(R) + 0.5 + 1e-4) * (2.0 / R)
    lo, hi = origins[4], origins[11]
    g = voxelize_solid(box_mesh((lo, lo, -0.25), (hi, hi, 0.25)), R)
    columns = g.occupancy.any(axis=2)
    assert columns[5:11, 5:11].all()
    assert columns.sum() == 7 * 7
    assert g.count == 7 * 7 * 4
