import numpy as np
import pytest

from desksim.mesh import MeshLoadError, TriangleMesh, load_mesh, save_mesh
from desksim.pose import Pose
from desksim.scene import RigidObject, Scene, load_scene, save_scene
from desksim.camera import CameraView
from desksim.splats import (GaussianCloud, SplatLoadError, load_gaussian_cloud,
                            save_gaussian_cloud)
from desksim._ply import write_ply


def unit_cube():
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # x=0
        [4, 6, 7], [4, 7, 5],  # x=1
        [0, 4, 5], [0, 5, 1],  # y=0
        [2, 3, 7], [2, 7, 6],  # y=1
        [0, 2, 6], [0, 6, 4],  # z=0
        [1, 5, 7], [1, 7, 3],  # z=1
    ])
    return TriangleMesh(v, f)


def random_cloud(rng, n=20):
    from desksim.pose import quat_normalize
    rots = np.stack([quat_normalize(rng.normal(size=4)) for _ in range(n)])
    return GaussianCloud(
        means=rng.normal(size=(n, 3)),
        rotations=rots,
        scales=np.exp(rng.normal(size=(n, 3)) * 0.3),
        opacities=rng.uniform(0.05, 0.95, size=n),
        colors=rng.uniform(0.05, 0.95, size=(n, 3)),
    )


# splat point file


def test_splat_logistic_and_exp_mapping(tmp_path):
    # raw opacity 0 -> 0.5, raw scale 0 -> 1.0
    path = tmp_path / "one.ply"
    cols = {
        "x": [0.25], "y": [0.5], "z": [1.0],
        "f_dc_0": [0.0], "f_dc_1": [0.0], "f_dc_2": [0.0],
        "opacity": [0.0],
        "scale_0": [0.0], "scale_1": [0.0], "scale_2": [0.0],
        "rot_0": [1.0], "rot_1": [0.0], "rot_2": [0.0], "rot_3": [0.0],
    }
    write_ply(path, [("vertex", [(k, "float", np.array(v)) for k, v in cols.items()])])
    cloud = load_gaussian_cloud(path)
    assert len(cloud) == 1
    assert cloud.opacities[0] == pytest.approx(0.5, abs=1e-7)
    assert np.allclose(cloud.scales[0], 1.0, atol=1e-7)
    assert np.allclose(cloud.colors[0], 0.5, atol=1e-7)  # f_dc 0 -> mid gray


def test_splat_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    cloud = random_cloud(rng, n=64)
    path = tmp_path / "cloud.ply"
    save_gaussian_cloud(cloud, path)
    back = load_gaussian_cloud(path)
    assert len(back) == 64
    assert np.allclose(back.means, cloud.means, atol=1e-6)
    assert np.allclose(back.scales, cloud.scales, rtol=1e-5)
    assert np.allclose(back.opacities, cloud.opacities, atol=1e-6)
    assert np.allclose(back.colors, cloud.colors, atol=1e-6)
    # quaternions up to sign
    dots = np.abs(np.sum(back.rotations * cloud.rotations, axis=1))
    assert np.all(dots > 1 - 1e-9)


def test_splat_missing_attribute_errors(tmp_path):
    path = tmp_path / "bad.ply"
    write_ply(path, [("vertex", [("x", "float", np.zeros(3)),
                                 ("y", "float", np.zeros(3)),
                                 ("z", "float", np.zeros(3))])])
    with pytest.raises(SplatLoadError, match="missing attributes"):
        load_gaussian_cloud(path)


def test_splat_nonfinite_errors(tmp_path):
    path = tmp_path / "nan.ply"
    cols = {k: [np.nan if k == "x" else 1.0] for k in
            ("x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")}
    write_ply(path, [("vertex", [(k, "float", np.array(v)) for k, v in cols.items()])])
    with pytest.raises(SplatLoadError, match="non-finite"):
        load_gaussian_cloud(path)


# meshes


@pytest.mark.parametrize("ext", ["obj", "ply"])
def test_mesh_round_trip(tmp_path, ext):
    cube = unit_cube()
    path = tmp_path / f"cube.{ext}"
    save_mesh(cube, path)
    back = load_mesh(path)
    assert back.n_faces == 12
    assert np.allclose(back.vertices, cube.vertices, atol=1e-6)
    assert np.array_equal(back.faces, cube.faces)


def test_obj_out_of_range_index(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshLoadError, match="out of range"):
        load_mesh(path)


def test_obj_parse_error_has_line(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 zero\n")
    with pytest.raises(MeshLoadError, match="bad.obj:2"):
        load_mesh(path)


def test_degenerate_faces_dropped(tmp_path, caplog):
    path = tmp_path / "degen.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 1


def test_quad_fan_triangulation(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 2


def test_watertight_cube():
    assert unit_cube().is_watertight()
    open_cube = TriangleMesh(unit_cube().vertices, unit_cube().faces[:-2])
    assert not open_cube.is_watertight()


# scene manifest


def test_scene_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    cube = unit_cube()
    obj = RigidObject(id="box", visual_mesh=cube, collision_mesh=cube,
                      pose=Pose.from_axis_angle([0, 0, 1], 0.3, (0.5, 0.1, 0.0)),
                      graspable=True)
    cam = CameraView(fx=300.0, fy=300.0, cx=160.0, cy=120.0, width=320, height=240,
                     extrinsic=Pose.from_axis_angle([1, 0, 0], 0.5, (0, 0, 1)))
    scene = Scene(background_splats=random_cloud(rng),
                  background_mesh=cube,
                  objects=(obj,),
                  cameras={"front": cam},
                  robot_base=Pose.from_axis_angle([0, 0, 1], 0.1, (-0.4, 0, 0)),
                  table_height=0.02,
                  alignment=Pose.from_axis_angle([0, 1, 0], 0.05, (0.01, 0.0, 0.0)))
    manifest = tmp_path / "scene.json"
    save_scene(scene, manifest, asset_dir="assets")
    back = load_scene(manifest)
    assert back.table_height == pytest.approx(0.02)
    assert back.object("box").graspable
    assert back.object("box").pose.is_close(obj.pose, 1e-6, 1e-6)
    assert back.robot_base.is_close(scene.robot_base, 1e-6, 1e-6)
    assert back.alignment.is_close(scene.alignment, 1e-6, 1e-6)
    assert back.camera("front").fx == pytest.approx(300.0)
    assert len(back.background_splats) == len(scene.background_splats)
    assert np.allclose(back.background_mesh.vertices, cube.vertices, atol=1e-6)


def test_scene_duplicate_object_ids():
    cube = unit_cube()
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError, match="duplicate"):
        Scene(background_splats=random_cloud(rng), background_mesh=cube,
              objects=(RigidObject("a", cube, cube), RigidObject("a", cube, cube)))


def test_unknown_camera_errors():
    rng = np.random.default_rng(1)
    scene = Scene(background_splats=random_cloud(rng), background_mesh=unit_cube())
    with pytest.raises(KeyError, match="unknown camera"):
        scene.camera("wrist")


def test_covariance_psd():
    rng = np.random.default_rng(9)
    cloud = random_cloud(rng, n=200)
    for i in range(len(cloud)):
        g = cloud[i]
        cov = g.covariance()
        assert np.allclose(cov, cov.T, atol=1e-12)
        eig = np.linalg.eigvalsh(cov)
        assert eig.min() >= (g.scale.min() ** 2) * (1 - 1e-6)
