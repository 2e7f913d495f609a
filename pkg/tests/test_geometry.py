import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occbench import OccbenchError
from occbench.geometry import (
    DegenerateMeshError, ObjParseError, PointCloud, TriangleMesh, align_unit_sphere,
    build_index, parse_obj, sample_surface, write_obj,
)
from occbench.shapes import box_mesh, uv_sphere

from conftest import brute_nearest


def test_parse_single_triangle():
    mesh = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3")
    assert mesh.vertices.shape == (3, 3)
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_parse_face_without_vertices():
    with pytest.raises(ObjParseError, match="face index out of range"):
        parse_obj(b"f 1 2 3")


def test_parse_quad_fan():
    mesh = parse_obj(b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_parse_slashes_negative_indices_and_other_directives():
    text = b"""# comment
o thing
v 0 0 0
v 1 0 0
v 0 1 0
vn 0 0 1
vt 0 0
usemtl red
f -3/1/1 -2/1/1 -1/1/1
f 1//1 2//1 3//1
"""
    mesh = parse_obj(text)
    assert mesh.faces.tolist() == [[0, 1, 2], [0, 1, 2]]


@pytest.mark.parametrize("text,line", [
    (b"v 0 0\nf 1 1 1", 1),
    (b"v 0 0 0\nv 1 0 0\nv a 1 0\n", 3),
    (b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", 4),
])
def test_parse_errors_name_line(text, line):
    with pytest.raises(ObjParseError, match=f"line {line}"):
        parse_obj(text)


def test_parse_empty():
    with pytest.raises(ObjParseError, match="empty mesh"):
        parse_obj(b"# nothing\n")


def test_write_format():
    mesh = TriangleMesh([[0, 0, 0], [1.5, 0, 0], [0, 1, 1e-10]], [[0, 1, 2]])
    assert write_obj(mesh) == b"v 0 0 0\nv 1.5 0 0\nv 0 1 1e-10\nf 1 2 3\n"


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_obj_round_trip(nv, nf, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(nv, 3)) * 10 ** rng.uniform(-3, 3)
    f = rng.integers(0, nv, size=(nf, 3))
    mesh = parse_obj(write_obj(TriangleMesh(v, f)))
    np.testing.assert_array_equal(mesh.faces, f)
    np.testing.assert_allclose(mesh.vertices, v, rtol=1e-8, atol=0)


def test_align_cube():
    mesh = box_mesh((0, 0, 0), (2, 2, 2))
    aligned, tf = align_unit_sphere(mesh)
    np.testing.assert_allclose(tf.center, [1, 1, 1])
    assert tf.scale == pytest.approx(np.sqrt(3))
    idx = np.flatnonzero(np.all(mesh.vertices == 2, axis=1))[0]
    np.testing.assert_allclose(aligned.vertices[idx], np.full(3, 1 / np.sqrt(3)))
    assert np.linalg.norm(aligned.vertices[idx]) == pytest.approx(1.0)


def test_align_identity_case():
    mesh = TriangleMesh(np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]]), [[0, 1, 2], [0, 3, 1]])
    _, tf = align_unit_sphere(mesh)
    np.testing.assert_array_equal(tf.center, 0)
    assert tf.scale == 1.0


def test_align_degenerate():
    with pytest.raises(DegenerateMeshError):
        align_unit_sphere(TriangleMesh([[1, 2, 3]] * 3, [[0, 1, 2]]))


def _random_mesh(seed, nv=30, nf=40):
    rng = np.random.default_rng(seed)
    return TriangleMesh(rng.normal(size=(nv, 3)) * rng.uniform(0.1, 10) + rng.normal(size=3),
                        rng.integers(0, nv, size=(nf, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_align_bounds_and_idempotence(seed):
    aligned, _ = align_unit_sphere(_random_mesh(seed))
    norms = np.linalg.norm(aligned.vertices, axis=1)
    assert norms.max() == pytest.approx(1.0, abs=1e-12)
    assert np.all(norms <= 1.0 + 1e-12)
    _, tf2 = align_unit_sphere(aligned)
    np.testing.assert_allclose(tf2.center, 0, atol=1e-12)
    assert tf2.scale == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_align_scale_invariance(seed, s):
    mesh = _random_mesh(seed)
    a, _ = align_unit_sphere(mesh)
    b, _ = align_unit_sphere(mesh.scaled(s))
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-9)


UNIT_SQUARE = TriangleMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])


def test_sample_support():
    pts = sample_surface(UNIT_SQUARE, 1000, seed=7).points
    assert pts.shape == (1000, 3)
    assert np.all(pts[:, :2] >= 0) and np.all(pts[:, :2] <= 1)
    assert np.all(pts[:, 2] == 0)


def test_sample_deterministic():
    a = sample_surface(UNIT_SQUARE, 500, seed=99).points
    b = sample_surface(UNIT_SQUARE, 500, seed=99).points
    c = sample_surface(UNIT_SQUARE, 500, seed=100).points
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_area_proportional():
    # triangle 0 has area 1, triangle 1 (x >= 10) has area 3
    mesh = TriangleMesh(
        [[0, 0, 0], [2, 0, 0], [0, 1, 0], [10, 0, 0], [16, 0, 0], [10, 1, 0]],
        [[0, 1, 2], [3, 4, 5]],
    )
    np.testing.assert_allclose(mesh.face_areas(), [1, 3])
    pts = sample_surface(mesh, 100_000, seed=3).points
    # counting oracle: membership decided by location, not by the sampler's face index
    frac = np.mean(pts[:, 0] >= 10)
    assert abs(frac - 0.75) <= 0.01


def test_sample_uniform_within_triangle():
    # right triangle (0,0),(1,0),(0,1): uniform density gives E[x] = E[y] = 1/3
    # and P(x + y < 1/2) = 1/4
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    pts = sample_surface(mesh, 200_000, seed=5).points
    np.testing.assert_allclose(pts[:, :2].mean(axis=0), [1 / 3, 1 / 3], atol=3e-3)
    assert np.mean(pts[:, 0] + pts[:, 1] < 0.5) == pytest.approx(0.25, abs=4e-3)


def test_sample_points_on_face_planes():
    mesh = uv_sphere(8, 12)
    pts = sample_surface(mesh, 2000, seed=1).points
    tri = mesh.triangles
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    dist = np.abs(np.einsum("pfk,fk->pf", pts[:, None, :] - tri[None, :, 0], normals))
    assert np.all(dist.min(axis=1) <= 1e-9)


def test_sample_zero_area():
    with pytest.raises(DegenerateMeshError):
        sample_surface(TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]]), 10, 0)


def test_index_pythagorean():
    idx = build_index(PointCloud([[0, 0, 0]]))
    assert idx.nearest_distance([3, 4, 0]) == 5.0


def test_index_self_query_zero(rng):
    cloud = PointCloud(rng.normal(size=(50, 3)))
    np.testing.assert_array_equal(build_index(cloud).nearest_distance(cloud.points), 0)


def test_index_matches_exhaustive(rng):
    cloud = rng.uniform(-1, 1, size=(200, 3))
    queries = rng.uniform(-1.5, 1.5, size=(200, 3))
    got = build_index(PointCloud(cloud)).nearest_distance(queries)
    np.testing.assert_allclose(got, brute_nearest(queries, cloud), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.integers(0, 2**32 - 1))
def test_index_exactness_property(n, seed):
    rng = np.random.default_rng(seed)
    cloud = rng.normal(size=(n, 3))
    queries = rng.normal(size=(20, 3)) * 2
    got = build_index(PointCloud(cloud)).nearest_distance(queries)
    np.testing.assert_allclose(got, brute_nearest(queries, cloud), rtol=0, atol=1e-12)


def test_empty_cloud_rejected():
    with pytest.raises(OccbenchError):
        PointCloud(np.zeros((0, 3)))
