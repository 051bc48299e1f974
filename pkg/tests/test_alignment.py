import numpy as np
import pytest

from desksim.alignment import (AlignmentResult, CorrespondenceSet, IcpError,
                               IcpParams, align_scene, estimate_pose_kabsch,
                               icp_point_to_plane, load_correspondences,
                               save_correspondences)
from desksim.camera import CameraView, look_at
from desksim.pointcloud import PointCloud, sample_points_on_mesh
from desksim.pose import Pose, quat_angle
from desksim.render import rasterize_mesh
from desksim.scene import Scene
from desksim.shapes import box_mesh, grid_mesh, merge_meshes
from desksim.splats import GaussianCloud

MARKER = np.array([[-0.05, -0.05, 0.0], [0.05, -0.05, 0.0],
                   [0.05, 0.05, 0.0], [-0.05, 0.05, 0.0]])


def pose_gap(a: Pose, b: Pose) -> tuple[float, float]:
    """(rotation angle rad, translation m) of the relative transform."""
    rel = a.compose(b.inverse())
    return quat_angle(rel.rotation), float(np.linalg.norm(rel.translation))


# Kabsch


def test_kabsch_identity_on_identical_sets():
    pose = estimate_pose_kabsch(CorrespondenceSet(MARKER, MARKER))
    ang, dist = pose_gap(pose, Pose.identity())
    assert ang <= 1e-12 and dist <= 1e-12


def test_kabsch_recovers_known_pose_exactly():
    rng = np.random.default_rng(3)
    for _ in range(20):
        axis = rng.normal(size=3)
        true = Pose.from_axis_angle(axis / np.linalg.norm(axis),
                                    rng.uniform(-np.pi, np.pi),
                                    rng.uniform(-1, 1, 3))
        corr = CorrespondenceSet(MARKER, true.apply(MARKER))
        est = estimate_pose_kabsch(corr)
        ang, dist = pose_gap(est, true)
        assert ang <= 1e-9 and dist <= 1e-9


def test_kabsch_noisy_marker_translation_error():
    rng = np.random.default_rng(11)
    errors = []
    for _ in range(100):
        axis = rng.normal(size=3)
        true = Pose.from_axis_angle(axis / np.linalg.norm(axis),
                                    rng.uniform(-np.pi, np.pi),
                                    rng.uniform(-0.5, 0.5, 3))
        noisy = true.apply(MARKER) + rng.normal(scale=1e-3, size=(4, 3))
        est = estimate_pose_kabsch(CorrespondenceSet(MARKER, noisy))
        errors.append(np.linalg.norm(est.translation - true.translation))
    assert np.median(errors) < 3e-3


def test_kabsch_collinear_points_error():
    line = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
    with pytest.raises(ValueError, match="collinear"):
        estimate_pose_kabsch(CorrespondenceSet(line, line + [0, 0, 1.0]))


def test_kabsch_conjugation_under_common_motion():
    rng = np.random.default_rng(7)
    src = rng.uniform(-0.2, 0.2, (6, 3))
    true = Pose.from_axis_angle([0, 0, 1.0], 0.7, (0.3, -0.1, 0.2))
    base = estimate_pose_kabsch(CorrespondenceSet(src, true.apply(src)))
    motion = Pose.from_axis_angle([1.0, 2.0, -1.0] / np.sqrt(6.0), 1.1,
                                  (-0.4, 0.2, 0.9))
    moved = estimate_pose_kabsch(CorrespondenceSet(
        motion.apply(src), motion.apply(true.apply(src))))
    expected = motion.compose(base).compose(motion.inverse())
    ang, dist = pose_gap(moved, expected)
    assert ang <= 1e-9 and dist <= 1e-9


def test_correspondence_validation():
    with pytest.raises(ValueError, match="source vs"):
        CorrespondenceSet(MARKER, MARKER[:3])
    with pytest.raises(ValueError, match="at least 3"):
        CorrespondenceSet(MARKER[:2], MARKER[:2])


# ICP


def structured_mesh():
    """Desk-like registration target: table, objects, and an L of single-sided
    backdrop walls so every translation direction has broad surface support
    (single-sided like a real one-viewpoint reconstruction — a thin
    double-sided slab would put a parallel plane one thickness away and trap
    ICP there)."""
    table = grid_mesh(4, 4, (0.5, 0.4))
    yawed = box_mesh((0.20, 0.16, 0.14)).transformed(
        Pose.from_axis_angle([0, 0, 1.0], 0.5, (-0.10, -0.08, 0.07)))
    side_wall = grid_mesh(2, 2, (0.30, 0.40)).transformed(
        Pose.from_axis_angle([0, 1.0, 0], np.pi / 2, (-0.26, 0.0, 0.15)))
    back_wall = grid_mesh(2, 2, (0.55, 0.30)).transformed(
        Pose.from_axis_angle([1.0, 0, 0], np.pi / 2, (0.0, 0.21, 0.15)))
    parts = [
        table,
        box_mesh((0.22, 0.18, 0.12), center=(0.10, 0.08, 0.06)),
        yawed,
        box_mesh((0.16, 0.10, 0.18), center=(0.05, -0.13, 0.09)),
        side_wall,
        back_wall,
    ]
    return merge_meshes(parts)


def test_icp_identity_when_aligned():
    rng = np.random.default_rng(0)
    cloud = sample_points_on_mesh(structured_mesh(), 3000, rng,
                                  with_normals=True)
    result = icp_point_to_plane(cloud, cloud)
    ang, dist = pose_gap(result.pose, Pose.identity())
    assert ang <= 1e-9 and dist <= 1e-9
    assert result.residual <= 1e-12
    assert result.iterations <= 2


def test_icp_recovers_crop_perturbation():
    rng = np.random.default_rng(1)
    mesh = structured_mesh()
    target = sample_points_on_mesh(mesh, 5000, rng, with_normals=True)
    # spatial 60% crop of an independent sampling, then a (10deg, 3cm) offset
    src_full = sample_points_on_mesh(mesh, 5000, rng).points
    cutoff = np.quantile(src_full[:, 0], 0.6)
    crop = src_full[src_full[:, 0] <= cutoff]
    perturb = Pose.from_axis_angle([0.2, -0.3, 1.0] / np.sqrt(1.13),
                                   np.deg2rad(10.0),
                                   (0.02, -0.015, 0.012))
    source = PointCloud(perturb.apply(crop))
    result = icp_point_to_plane(source, target)
    ang, dist = pose_gap(result.pose, perturb.inverse())
    assert ang <= np.deg2rad(0.5)
    assert dist <= 2e-3
    assert result.iterations <= 50


def test_icp_planar_normal_translation_is_one_step():
    rng = np.random.default_rng(2)
    plane = grid_mesh(6, 6, (0.6, 0.6))
    target = sample_points_on_mesh(plane, 2000, rng, with_normals=True)
    source = PointCloud(target.points + [0.0, 0.0, 0.005])
    result = icp_point_to_plane(source, target)
    assert result.iterations <= 3
    assert abs(result.pose.translation[2] + 0.005) <= 1e-6
    assert quat_angle(result.pose.rotation) <= 1e-6
    assert result.residual <= 1e-9


def test_icp_out_of_range_raises_with_init():
    rng = np.random.default_rng(4)
    target = sample_points_on_mesh(structured_mesh(), 1000, rng,
                                   with_normals=True)
    far = PointCloud(target.points + [0.0, 0.0, 5.0])
    init = Pose(translation=(0.0, 0.0, 0.001))
    with pytest.raises(IcpError, match="correspondences") as info:
        icp_point_to_plane(far, target, init=init)
    assert info.value.init is init


def test_icp_requires_target_normals():
    pts = np.random.default_rng(5).uniform(size=(100, 3))
    with pytest.raises(ValueError, match="normals"):
        icp_point_to_plane(PointCloud(pts), PointCloud(pts))


def test_icp_residual_history_non_increasing():
    rng = np.random.default_rng(6)
    mesh = structured_mesh()
    target = sample_points_on_mesh(mesh, 4000, rng, with_normals=True)
    crop = sample_points_on_mesh(mesh, 3000, rng).points
    perturb = Pose.from_axis_angle([0, 1.0, 0.3] / np.sqrt(1.09),
                                   np.deg2rad(6.0), (0.01, 0.02, -0.01))
    result = icp_point_to_plane(PointCloud(perturb.apply(crop)), target)
    history = np.array(result.residual_history)
    assert len(history) >= 1
    assert np.all(np.diff(history) <= 1e-15)
    assert result.residual == history[-1]
    assert result.inliers > 0


def test_icp_params_validation():
    with pytest.raises(ValueError):
        IcpParams(max_iterations=0)
    with pytest.raises(ValueError):
        IcpParams(trim_fraction=0.6)
    with pytest.raises(ValueError):
        IcpParams(max_distance=0.0)
    with pytest.raises(ValueError):
        AlignmentResult(Pose.identity(), residual=-1.0, iterations=1,
                        inliers=1)


# correspondence files


def test_correspondence_file_round_trip(tmp_path):
    corr = CorrespondenceSet(MARKER, MARKER + [0.1, 0.2, 0.3])
    path = tmp_path / "marker.txt"
    save_correspondences(corr, path)
    loaded = load_correspondences(path)
    assert np.allclose(loaded.source, corr.source, atol=1e-12)
    assert np.allclose(loaded.target, corr.target, atol=1e-12)


def test_correspondence_file_comments_and_errors(tmp_path):
    path = tmp_path / "marker.txt"
    path.write_text("# corners\n\n0 0 0  1 2 3\n0.1 0 0  1.1 2 3\n"
                    "0 0.1 0  1 2.1 3\n")
    corr = load_correspondences(path)
    assert len(corr) == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("0 0 0 1 2 3\n0 0 1 2\n0 1 0 1 3 3\n")
    with pytest.raises(ValueError, match="bad.txt:2"):
        load_correspondences(bad)
    with pytest.raises(ValueError, match="no correspondences"):
        empty = tmp_path / "empty.txt"
        empty.write_text("# nothing\n")
        load_correspondences(empty)


# full pipeline


def observation_camera() -> CameraView:
    return CameraView(fx=300.0, fy=300.0, cx=160.0, cy=120.0,
                      width=320, height=240,
                      extrinsic=look_at((0.85, -0.55, 0.50), (0.4, -0.2, 0.1)))


def recon_scene(alignment: Pose) -> Scene:
    splats = GaussianCloud(means=np.zeros((1, 3)),
                           rotations=np.array([[1.0, 0, 0, 0]]),
                           scales=np.full((1, 3), 0.01),
                           opacities=np.array([0.5]),
                           colors=np.full((1, 3), 0.5))
    return Scene(background_splats=splats, background_mesh=structured_mesh(),
                 alignment=alignment)


def observe(scene: Scene, cam: CameraView):
    return rasterize_mesh(cam, [scene.world_background_mesh()]).depth_image()


TRUE_ALIGN = Pose.from_axis_angle([0, 0, 1.0], np.deg2rad(15.0),
                                  (0.4, -0.2, 0.0))


def test_align_scene_self_consistency():
    cam = observation_camera()
    scene = recon_scene(TRUE_ALIGN)
    corr = CorrespondenceSet(MARKER, TRUE_ALIGN.apply(MARKER))
    result, aligned = align_scene(scene, observe(scene, cam), cam, corr)
    ang, dist = pose_gap(result.pose, TRUE_ALIGN)
    assert ang <= np.deg2rad(0.1)
    assert dist <= 1e-3
    assert aligned.alignment.is_close(result.pose, 1e-12, 1e-12)


def test_align_scene_recovers_perturbation():
    cam = observation_camera()
    stale = TRUE_ALIGN
    drift = Pose.from_axis_angle([0.1, 0.2, 1.0] / np.sqrt(1.05),
                                 np.deg2rad(5.0), (0.015, -0.012, 0.005))
    actual = stale.compose(drift)  # the scene itself moved by the drift
    observed = observe(recon_scene(actual), cam)
    # marker correspondences reflect the stale belief, depth shows the truth
    corr = CorrespondenceSet(MARKER, stale.apply(MARKER))
    result, _ = align_scene(recon_scene(stale), observed, cam, corr)
    ang, dist = pose_gap(result.pose, actual)
    assert ang <= np.deg2rad(0.5)
    assert dist <= 2e-3


def test_align_scene_marker_only():
    cam = observation_camera()
    scene = recon_scene(TRUE_ALIGN)
    corr = CorrespondenceSet(MARKER, TRUE_ALIGN.apply(MARKER))
    result, aligned = align_scene(scene, observe(scene, cam), cam, corr,
                                  use_icp=False)
    kabsch = estimate_pose_kabsch(corr)
    assert result.pose.is_close(kabsch, 1e-12, 1e-12)
    assert result.iterations == 0
    assert aligned.alignment.is_close(kabsch, 1e-12, 1e-12)


def test_align_scene_idempotent():
    cam = observation_camera()
    scene = recon_scene(TRUE_ALIGN)
    corr = CorrespondenceSet(MARKER, TRUE_ALIGN.apply(MARKER))
    result, aligned = align_scene(scene, observe(scene, cam), cam, corr)
    corr2 = CorrespondenceSet(MARKER, result.pose.apply(MARKER))
    result2, _ = align_scene(aligned, observe(aligned, cam), cam, corr2)
    ang, dist = pose_gap(result2.pose, result.pose)
    assert ang <= np.deg2rad(0.1)
    assert dist <= 1e-3
