import numpy as np
import pytest

from tactipose.mesh import TriMesh, sample_surface
from tactipose.primitives import box, cube, icosphere
from tactipose.render import (
    Superquadric,
    generate_training_set,
    render_patch,
    render_superquadric_patch,
)
from tactipose.se3 import Pose, exp_map
from tactipose.sensor import (
    SensorModel,
    SensorPlacement,
    TactilePatch,
    load_tpat,
    place_sensor_at_sample,
    placement_at_contact,
    save_tpat,
    tangent_frame,
)

SENSOR = SensorModel()
SMALL = SensorModel(pixels_u=30, pixels_v=40)


def wall_mesh(z=0.0, half=1.0):
    """Large square wall in the z-plane with +z normals."""
    v = [[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]]
    return TriMesh(v, [[0, 1, 2], [0, 2, 3]])


class TestPlacement:
    def test_full_indent_center_on_sample(self):
        mesh = cube(1.0)
        s = [x for x in sample_surface(mesh, 200, seed=0)
             if np.allclose(x.normal, [0, 0, 1])][0]
        p = place_sensor_at_sample(s, indent=SENSOR.max_indent, sensor=SENSOR)
        assert np.allclose(p.gel_center, s.position, atol=1e-12)
        assert np.allclose(p.gel_normal, [0, 0, -1])

    def test_zero_indent_offsets_and_renders_empty(self):
        mesh = cube(1.0)
        s = sample_surface(mesh, 1, seed=3)[0]
        p = place_sensor_at_sample(s, indent=0.0, sensor=SENSOR)
        assert np.allclose(p.gel_center, s.position + s.normal * SENSOR.max_indent)
        patch = render_patch(mesh, p, SENSOR)
        assert patch.is_empty

    def test_equal_normals_equal_rotations(self):
        n = np.array([0.3, -0.5, 0.2])
        n /= np.linalg.norm(n)
        a = placement_at_contact([0, 0, 0], n, 0.001, SENSOR)
        b = placement_at_contact([5, 1, -2], n, 0.0005, SENSOR)
        assert np.array_equal(a.pose.rotation, b.pose.rotation)

    def test_tangent_frame_is_right_handed(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            r = tangent_frame(n)
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.isclose(np.linalg.det(r), 1.0)
            assert np.allclose(r[:, 2], -n)

    def test_rejects_indent_out_of_range(self):
        with pytest.raises(ValueError):
            placement_at_contact([0, 0, 0], [0, 0, 1], 0.01, SENSOR)


class TestRenderPatch:
    def test_flat_wall_full_indent_saturates(self):
        mesh = wall_mesh()
        p = placement_at_contact([0, 0, 0], [0, 0, 1], SENSOR.max_indent, SENSOR)
        patch = render_patch(mesh, p, SENSOR)
        assert np.all(patch.depth == 1.0)

    def test_flat_wall_partial_indent_uniform(self):
        mesh = wall_mesh()
        indent = 0.4 * SENSOR.max_indent
        p = placement_at_contact([0, 0, 0], [0, 0, 1], indent, SENSOR)
        patch = render_patch(mesh, p, SENSOR)
        assert np.allclose(patch.depth, 0.4, atol=1e-9)

    def test_cube_edge_band_width(self):
        # bisector approach onto a 90-degree edge: band width = 2*indent/tan(45)
        mesh = cube(1.0)
        indent = 0.5 * SENSOR.max_indent
        n = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
        p = placement_at_contact([0.5, 0.0, 0.5], n, indent, SENSOR)
        patch = render_patch(mesh, p, SENSOR)
        rows = np.flatnonzero(patch.depth.max(axis=1) > 0)
        pitch_v = SENSOR.gel_height / SENSOR.pixels_v
        band = len(rows) * pitch_v
        assert abs(band - 2 * indent) <= 2 * pitch_v
        # band is centered and runs the full u extent
        assert np.all(patch.depth[rows[len(rows) // 2]] > 0)

    def test_sphere_contact_disc_radius(self):
        radius, pressed = 0.1, 0.001
        mesh = icosphere(radius, 5)
        sensor = SensorModel(gel_width=0.04, gel_height=0.04, pixels_u=80,
                             pixels_v=80, max_indent=0.0015)
        p = placement_at_contact([0, 0, radius], [0, 0, 1],
                                 indent=pressed, sensor=sensor)
        patch = render_patch(mesh, p, sensor)
        cols = np.flatnonzero(patch.depth.max(axis=0) > 0)
        pitch = sensor.gel_width / sensor.pixels_u
        disc_radius = len(cols) * pitch / 2
        assert abs(disc_radius - np.sqrt(2 * radius * pressed)) <= pitch

    def test_translation_equivariance(self):
        mesh = cube(0.06)
        s = sample_surface(mesh, 1, seed=5)[0]
        p = place_sensor_at_sample(s, 0.001, SENSOR)
        shift = np.array([0.3, -0.2, 0.15])
        mesh2 = TriMesh(mesh.vertices + shift, mesh.triangles)
        p2 = SensorPlacement(Pose(p.pose.rotation, p.pose.translation + shift))
        a = render_patch(mesh, p, SENSOR)
        b = render_patch(mesh2, p2, SENSOR)
        assert np.max(np.abs(a.depth - b.depth)) < 1e-9

    def test_monotone_in_indent(self):
        mesh = cube(0.06).transformed(exp_map([0, 0, 0, 0.3, 0.2, 0.1]))
        s = sample_surface(mesh, 3, seed=8)[0]
        prev = None
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            patch = place_and_render(mesh, s, frac * SENSOR.max_indent)
            if prev is not None:
                assert np.all(patch.depth >= prev - 1e-12)
            prev = patch.depth

    def test_mirror_equivariance(self):
        # mirroring mesh and placement across x=0 flips the patch columns
        mesh = box().transformed(exp_map([0, 0, 0, 0.4, -0.3, 0.2]))
        s = sample_surface(mesh, 5, seed=2)[1]
        m = np.diag([-1.0, 1.0, 1.0])
        mirrored = TriMesh(mesh.vertices @ m, mesh.triangles[:, [0, 2, 1]])
        a = render_patch(mesh, place_sensor_at_sample(s, 0.001, SENSOR), SENSOR)
        pm = placement_at_contact(m @ s.position, m @ s.normal, 0.001, SENSOR)
        b = render_patch(mirrored, pm, SENSOR)
        assert np.max(np.abs(np.fliplr(a.depth) - b.depth)) < 1e-9


def place_and_render(mesh, sample, indent):
    return render_patch(mesh, place_sensor_at_sample(sample, indent, SENSOR), SENSOR)


class TestSuperquadric:
    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            Superquadric(0.0, 0.1, 0.1, 1.0, 1.0)
        with pytest.raises(ValueError):
            Superquadric(0.1, 0.1, 0.1, 0.05, 1.0)

    def test_surface_points_satisfy_implicit(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            sq = Superquadric(*rng.uniform(0.02, 0.08, 3),
                              eps1=rng.uniform(0.1, 2.0), eps2=rng.uniform(0.1, 2.0))
            eta = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05)
            omega = rng.uniform(-np.pi, np.pi)
            p = sq.surface_point(eta, omega)
            assert abs(sq.inside_outside(p) - 1.0) < 1e-6

    def test_sphere_matches_mesh_renderer(self):
        sq = Superquadric(0.1, 0.1, 0.1, 1.0, 1.0)
        mesh = icosphere(0.1, 5)  # facet sag ~2e-5 m at this subdivision
        p = placement_at_contact([0, 0, 0.1], [0, 0, 1], 0.001, SMALL)
        a = render_superquadric_patch(sq, p, SMALL)
        b = render_patch(mesh, p, SMALL)
        assert np.max(np.abs(a.depth - b.depth)) < 0.03

    def test_near_box_face_saturates(self):
        sq = Superquadric(0.05, 0.05, 0.03, 0.1, 0.1)
        p = placement_at_contact([0, 0, 0.03], [0, 0, 1], SMALL.max_indent, SMALL)
        patch = render_superquadric_patch(sq, p, SMALL)
        assert (patch.depth >= 0.999).mean() >= 0.95

    def test_far_placement_is_empty(self):
        sq = Superquadric(0.02, 0.02, 0.02, 1.0, 1.0)
        p = placement_at_contact([0, 0, 0.5], [0, 0, 1], 0.001, SMALL)
        assert render_superquadric_patch(sq, p, SMALL).is_empty


class TestTrainingSet:
    def test_distribution_has_flat_and_sparse_tails(self):
        patches = generate_training_set(1000, seed=11, sensor=SMALL)
        sat = np.array([p.saturated_fraction() for p in patches])
        assert (sat > 0.9).sum() >= 100
        assert (sat < 0.2).sum() >= 100

    def test_exact_no_contact_count(self):
        patches = generate_training_set(1000, seed=11, sensor=SMALL)
        assert sum(p.is_empty for p in patches) == 50

    def test_bitwise_deterministic(self):
        a = generate_training_set(40, seed=3, sensor=SMALL)
        b = generate_training_set(40, seed=3, sensor=SMALL)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.depth, pb.depth)


class TestTpat:
    def test_roundtrip(self, tmp_path):
        patch = generate_training_set(1, seed=0, sensor=SMALL,
                                      no_contact_fraction=0.0)[0]
        path = tmp_path / "p.tpat"
        save_tpat(path, patch)
        back = load_tpat(path)
        assert np.allclose(back.depth, patch.depth, atol=1e-7)
        assert back.sensor.pixels_u == SMALL.pixels_u

    def test_header_is_16_bytes(self, tmp_path):
        patch = TactilePatch(np.zeros((40, 30)), SMALL)
        path = tmp_path / "z.tpat"
        save_tpat(path, patch)
        raw = path.read_bytes()
        assert raw[:4] == b"TPAT"
        assert len(raw) == 16 + 4 * 30 * 40

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "z.tpat"
        save_tpat(path, TactilePatch(np.zeros((40, 30)), SMALL))
        with pytest.raises(ValueError):
            load_tpat(path, sensor=SensorModel())


class TestSensorModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            SensorModel(gel_width=-1.0)
        with pytest.raises(ValueError):
            SensorModel(pixels_u=4)

    def test_proxy_grid_excludes_gel_plane(self):
        grid = SensorModel().proxy_grid()
        assert grid.shape == (16 * 16 * 4, 3)
        assert np.all(grid[:, 2] < 0)

    def test_patch_validation(self):
        with pytest.raises(ValueError):
            TactilePatch(np.full((80, 60), 1.5), SensorModel())
