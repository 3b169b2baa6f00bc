import numpy as np
import pytest
import scipy.stats

from tactipose.mesh import (
    MeshError,
    TriMesh,
    farthest_point_subsample,
    load_mesh,
    load_obj,
    load_ply,
    sample_surface,
    save_obj,
    save_ply_mesh,
    save_ply_points,
)
from tactipose.primitives import box, cube, cylinder, icosphere, l_bracket, primitive_suite


class TestTriMesh:
    def test_unit_normals_and_positive_areas(self):
        for name, mesh in primitive_suite().items():
            assert np.allclose(np.linalg.norm(mesh.face_normals, axis=1), 1.0,
                               atol=1e-9), name
            assert np.all(mesh.face_areas > 0), name

    def test_rejects_out_of_range_index(self):
        with pytest.raises(MeshError):
            TriMesh(np.zeros((3, 3)) + np.eye(3), [[0, 1, 5]])

    def test_rejects_degenerate_face(self):
        with pytest.raises(MeshError):
            TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])

    def test_primitives_watertight_and_outward(self):
        for name, mesh in primitive_suite().items():
            assert mesh.is_watertight, name
            assert mesh.signed_volume() > 0, name

    def test_expected_volumes(self):
        assert np.isclose(cube(0.06).signed_volume(), 0.06**3)
        assert np.isclose(box().signed_volume(), 0.09 * 0.06 * 0.03)
        # tessellated curved solids come in slightly under the analytic value
        assert 0.95 * np.pi * 0.035**2 * 0.1 < cylinder().signed_volume() < np.pi * 0.035**2 * 0.1
        assert 0.97 * 4 / 3 * np.pi * 0.04**3 < icosphere().signed_volume() < 4 / 3 * np.pi * 0.04**3
        assert np.isclose(l_bracket().signed_volume(),
                          (0.08 * 0.025 + 0.055 * 0.025) * 0.05)

    def test_open_mesh_is_not_watertight(self):
        tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        assert not tri.is_watertight


class TestSampleSurface:
    def test_cube_faces_binomially_balanced(self):
        mesh = cube(1.0)
        samples = sample_surface(mesh, 6000, seed=4)
        counts = np.zeros(6)
        for s in samples:
            counts[s.face_id // 2] += 1
        # binomial 3-sigma band around 1000 per geometric face
        assert np.all(np.abs(counts - 1000) <= 120), counts

    def test_single_triangle_on_plane(self):
        tri = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        for s in sample_surface(tri, 3, seed=0):
            assert abs(s.position[2]) < 1e-12
            assert s.face_id == 0

    def test_deterministic(self):
        mesh = cylinder()
        a = sample_surface(mesh, 50, seed=9)
        b = sample_surface(mesh, 50, seed=9)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.position, sb.position)
            assert sa.face_id == sb.face_id

    def test_samples_lie_on_their_face_plane(self):
        mesh = icosphere(0.1, 2)
        for s in sample_surface(mesh, 200, seed=1):
            v0 = mesh.vertices[mesh.triangles[s.face_id, 0]]
            assert abs((s.position - v0) @ s.normal) < 1e-9
            assert np.array_equal(s.normal, mesh.face_normals[s.face_id])

    def test_area_fractions_chi_squared(self):
        # property: face-subset hit fractions converge to area fractions
        mesh = box()
        m = 100_000
        samples = sample_surface(mesh, m, seed=12)
        counts = np.zeros(mesh.n_faces)
        for s in samples:
            counts[s.face_id] += 1
        expected = mesh.face_areas / mesh.face_areas.sum() * m
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        p = scipy.stats.chi2.sf(chi2, df=mesh.n_faces - 1)
        assert p > 0.001

    def test_empty_mesh_errors(self):
        with pytest.raises(MeshError, match="degenerate mesh"):
            sample_surface(TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int)), 5, 0)

    def test_farthest_point_mode_spreads_samples(self):
        mesh = cube()
        plain = sample_surface(mesh, 64, seed=3)
        spread = sample_surface(mesh, 64, seed=3, farthest_point=True)

        def min_pairwise(samples):
            pts = np.array([s.position for s in samples])
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
            np.fill_diagonal(d, np.inf)
            return d.min()

        assert min_pairwise(spread) > min_pairwise(plain)


class TestMeshIO:
    def test_obj_roundtrip(self, tmp_path):
        mesh = l_bracket()
        path = tmp_path / "m.obj"
        save_obj(mesh, path)
        back = load_obj(path)
        assert np.allclose(back.vertices, mesh.vertices, atol=1e-9)
        assert np.array_equal(back.triangles, mesh.triangles)

    def test_obj_polygons_and_slashes(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                        "f 1/1/1 2/2/1 3/3/1 4/4/1\n")
        mesh = load_obj(path)
        assert mesh.n_faces == 2

    def test_obj_scale(self, tmp_path):
        path = tmp_path / "mm.obj"
        save_obj(cube(60.0), path)  # cube authored in millimeters
        mesh = load_obj(path, scale=0.001)
        assert np.isclose(mesh.vertices.max(), 0.03)

    def test_ply_roundtrip(self, tmp_path):
        mesh = cylinder(segments=12)
        path = tmp_path / "m.ply"
        save_ply_mesh(path, mesh)
        back = load_ply(path)
        assert back.n_faces == mesh.n_faces
        assert np.allclose(back.vertices, mesh.vertices, atol=1e-6)
        assert load_mesh(path).n_faces == mesh.n_faces

    def test_ply_points(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(10, 3))
        path = tmp_path / "p.ply"
        save_ply_points(path, pts)
        assert path.read_bytes().startswith(b"ply")

    def test_rejects_ascii_ply(self, tmp_path):
        path = tmp_path / "a.ply"
        path.write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
        with pytest.raises(MeshError, match="little-endian"):
            load_ply(path)


def test_farthest_point_subsample_deterministic():
    pts = np.random.default_rng(5).normal(size=(100, 3))
    a = farthest_point_subsample(pts, 16)
    b = farthest_point_subsample(pts, 16)
    assert np.array_equal(a, b)
    assert a.shape == (16, 3)
