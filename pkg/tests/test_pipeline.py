import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from spiralfit.errors import DegenerateCloud, EmptyRoi, PipelineError
from spiralfit.fitting import fit_gaussian
from spiralfit.geometry import angular_error, distance_error
from spiralfit.mesh import TriangleMesh, component_labels
from spiralfit.pipeline import (
    NormalizationTransform,
    RoiSpec,
    detect_axis,
    fit_normalized,
    normalize_points,
    roi_crop,
)
from spiralfit.synthetic import SceneSpec, generate_scene, random_shape, spiral_mesh, truth_landmarks

from .meshes import icosphere, open_tube


def spiral_case(seed, n_t=600, n_phi=48):
    shape = random_shape(SceneSpec(), np.random.default_rng(seed))
    verts, faces = spiral_mesh(shape, n_t, n_phi)
    l1, l2 = truth_landmarks(shape)
    return TriangleMesh(verts, faces), RoiSpec(l1, l2), shape


@pytest.fixture(scope="module")
def spiral():
    return spiral_case(5)


class TestRoi:
    def test_validation(self):
        with pytest.raises(ValueError):
            RoiSpec([1, 2, 3], [1, 2, 3])

    def test_center_radius(self):
        roi = RoiSpec([0, 0, 4], [0, 0, 0])
        np.testing.assert_array_equal(roi.center, [0, 0, 2])
        assert roi.radius == 4

    def test_mesh_inside_unchanged(self):
        v, f = icosphere(2, radius=0.5, center=(0, 0, 2))
        mesh = TriangleMesh(v, f)
        out = roi_crop(mesh, RoiSpec([0, 0, 4], [0, 0, 0]))
        assert out.n_vertices == mesh.n_vertices
        np.testing.assert_array_equal(out.faces, mesh.faces)

    def test_boundary_kept(self):
        roi = RoiSpec([0, 0, 4], [0, 0, 0])
        pts = np.array([[0, 0, 0], [0, 0, 4], [4, 0, 2], [0, -4, 2], [0, 0, -1e-9], [4 + 1e-9, 0, 2]])
        np.testing.assert_array_equal(roi.contains(pts), [True, True, True, True, False, False])

    def test_matches_brute_predicate(self, rng):
        scene = generate_scene(SceneSpec(seed=4))
        l1, l2 = truth_landmarks(scene.shape)
        roi = RoiSpec(l1 - 2 * (l1 - l2) / 3 + rng.normal(size=3), l2 + rng.normal(size=3))
        mesh = TriangleMesh(scene.points, np.zeros((0, 3)), scene.normals)
        out = roi_crop(mesh, roi)
        c = 0.5 * (roi.l1 + roi.l2)
        rs = np.linalg.norm(roi.l1 - roi.l2)
        keep = []
        for p in scene.points:
            h = (p - roi.l2) @ (roi.l1 - roi.l2) / rs
            keep.append(np.linalg.norm(p - c) <= rs and 0 <= h <= rs)
        keep = np.array(keep)
        assert 0 < keep.sum() < len(keep)
        np.testing.assert_array_equal(out.vertices, scene.points[keep])
        np.testing.assert_array_equal(out.normals, scene.normals[keep])

    def test_faces_need_all_vertices(self):
        v = np.array([[0, 0, 1], [1, 0, 1], [0, 1, 1], [0, 0, 9]] + [[0.1 * i, 0, 2] for i in range(5)])
        mesh = TriangleMesh(v, [[0, 1, 2], [0, 1, 3]])
        out = roi_crop(mesh, RoiSpec([0, 0, 4], [0, 0, 0]))
        assert out.n_vertices == 8
        np.testing.assert_array_equal(out.faces, [[0, 1, 2]])

    def test_empty_roi(self, spiral):
        mesh, roi, _ = spiral
        v = mesh.vertices[0]
        tiny = RoiSpec(v + [0, 0, 1e-3], v - [0, 0, 1e-3])
        with pytest.raises(EmptyRoi):
            roi_crop(mesh, tiny)
        with pytest.raises(PipelineError, match=r"\[roi_crop\] EmptyRoi"):
            detect_axis(mesh, tiny)


class TestNormalize:
    def test_identity_on_normalized(self, rng):
        p = rng.normal(size=(500, 3))
        q, _ = normalize_points(p)
        q2, tf = normalize_points(q)
        np.testing.assert_allclose(q2, q, atol=1e-12)
        np.testing.assert_allclose(tf.centroid, 0, atol=1e-12)
        assert tf.scale == pytest.approx(1.0, abs=1e-12)

    def test_scale_and_shift(self, rng):
        q, _ = normalize_points(rng.normal(size=(500, 3)))
        shift = np.array([3.0, -1.0, 7.0])
        _, tf = normalize_points(5 * q + shift)
        assert tf.scale == pytest.approx(5.0, rel=1e-12)
        np.testing.assert_allclose(tf.centroid, shift, atol=1e-12)

    def test_round_trip(self, rng):
        p = rng.normal(size=(100, 3)) * 40 + 7
        q, tf = normalize_points(p)
        np.testing.assert_allclose(tf.invert(q), p, atol=1e-12 * 100)
        assert isinstance(tf, NormalizationTransform)

    def test_degenerate(self):
        with pytest.raises(DegenerateCloud):
            normalize_points(np.ones((10, 3)))

    def test_denormalized_fit_matches_direct(self):
        # a well-conditioned scene fitted directly in input coordinates is the oracle
        scene = generate_scene(SceneSpec(seed=8, center_box=0.5, noise_sigma=0.0, outlier_enabled=False))
        direct = fit_gaussian(scene.points, scene.normals)
        via = fit_normalized(scene.points, scene.normals, method="gaussian")
        assert angular_error(direct.axis.direction, via.axis.direction) <= np.degrees(1e-6)
        np.testing.assert_allclose(via.axis.anchor, direct.axis.anchor, atol=1e-6)

    def test_motion_maps_back(self, noisy_scene):
        report = fit_normalized(noisy_scene.points, noisy_scene.normals, method="robust")
        v = report.motion.velocity(report.axis.anchor[None])
        assert np.linalg.norm(v) <= 1e-9 * np.linalg.norm(report.motion.as_vector())


class TestDetectAxis:
    def test_spiral_mesh(self, spiral):
        mesh, roi, shape = spiral
        report = detect_axis(mesh, roi)
        assert angular_error(report.axis.direction, shape.axis) <= 0.5
        assert distance_error(report.axis, shape.center) <= 0.02
        assert report.axis.direction @ (roi.l1 - roi.l2) >= 0

    @pytest.mark.parametrize("method", ["robust", "gaussian", "pca"])
    def test_orientation(self, spiral, method):
        mesh, roi, _ = spiral
        for l1, l2 in ((roi.l1, roi.l2), (roi.l2, roi.l1)):
            report = detect_axis(mesh, RoiSpec(l1, l2), method=method)
            assert report.axis.direction @ (l1 - l2) >= 0

    def test_distractor_component_ignored(self, spiral):
        mesh, roi, shape = spiral
        tv, tf = open_tube(radius=0.3, length=2.0, origin=roi.center + [0.2, 0.1, 0.0])
        combined = TriangleMesh(np.vstack([mesh.vertices, tv]), np.vstack([mesh.faces, tf + mesh.n_vertices]))
        assert component_labels(combined)[0] == 2
        report = detect_axis(combined, roi)
        assert report.n_points == mesh.n_vertices
        assert angular_error(report.axis.direction, shape.axis) <= 0.5

    def test_point_set_input(self):
        scene = generate_scene(SceneSpec(seed=21, noise_sigma=0.0, outlier_enabled=False))
        l1, l2 = truth_landmarks(scene.shape)
        mesh = TriangleMesh(scene.points, np.zeros((0, 3)), scene.normals)
        report = detect_axis(mesh, RoiSpec(l1, l2))
        assert angular_error(report.axis.direction, scene.truth.axis.direction) <= 0.01

    def test_unknown_method(self, spiral):
        mesh, roi, _ = spiral
        with pytest.raises(ValueError):
            detect_axis(mesh, roi, method="ransac")

    def test_rigid_covariance(self, spiral):
        mesh, roi, _ = spiral
        base = detect_axis(mesh, roi)
        for seed in range(3):
            R = Rotation.random(random_state=seed).as_matrix()
            t = np.random.default_rng(seed).uniform(-20, 20, 3)
            moved = detect_axis(mesh.transformed(R, t), RoiSpec(R @ roi.l1 + t, R @ roi.l2 + t))
            assert angular_error(moved.axis.direction, R @ base.axis.direction) <= 1e-4
            assert moved.axis.direction @ (R @ base.axis.direction) > 0
            np.testing.assert_allclose(moved.axis.anchor, R @ base.axis.anchor + t, atol=1e-6)


@pytest.mark.slow
def test_pca_distance_worse_than_robust():
    worse = 0
    for seed in range(50):
        mesh, roi, shape = spiral_case(100 + seed, n_t=200, n_phi=20)
        d = {}
        for method in ("robust", "pca"):
            axis = detect_axis(mesh, roi, method=method).axis
            d[method] = distance_error(axis, shape.center)
        worse += d["pca"] > d["robust"]
    assert worse >= 45
