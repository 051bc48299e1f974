import numpy as np
import pytest

from desksim.camera import CameraView
from desksim.pose import Pose
from desksim.render import (RenderBuffers, composite, project_gaussian,
                            project_gaussians, projection_jacobian,
                            rasterize_mesh, render_gaussians)
from desksim.splats import GaussianCloud, GaussianPrimitive

from oracles import (oracle_render, oracle_render_pixel, random_cloud_in_view)


def cam32(**kw):
    defaults = dict(fx=40.0, fy=40.0, cx=16.0, cy=16.0, width=32, height=32)
    defaults.update(kw)
    return CameraView(**defaults)


def single(mean, scale=0.05, opacity=0.5, color=(1, 0, 0), rot=(1, 0, 0, 0)):
    return GaussianCloud(means=np.atleast_2d(mean).astype(float),
                         rotations=np.atleast_2d(rot).astype(float),
                         scales=np.full((1, 3), scale, dtype=float),
                         opacities=np.array([opacity], dtype=float),
                         colors=np.atleast_2d(color).astype(float))


# projection


def test_principal_ray_projection():
    cam = CameraView(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)
    g = GaussianPrimitive(mean=np.array([0.0, 0.0, 1.0]),
                          rotation=np.array([1.0, 0, 0, 0]),
                          scale=np.full(3, 0.01), opacity=0.5,
                          color=np.array([1.0, 1, 1]))
    proj = project_gaussian(cam, g)
    assert np.allclose(proj.mean2d, [50.0, 50.0], atol=1e-12)
    assert proj.depth == pytest.approx(1.0)


def test_isotropic_cov_analytic():
    cam = CameraView(fx=120.0, fy=120.0, cx=50.0, cy=50.0, width=100, height=100)
    s, z = 0.03, 2.0
    g = GaussianPrimitive(mean=np.array([0.0, 0.0, z]),
                          rotation=np.array([1.0, 0, 0, 0]),
                          scale=np.full(3, s), opacity=0.5,
                          color=np.zeros(3))
    proj = project_gaussian(cam, g)
    expected = (cam.fx * s / z) ** 2
    assert np.allclose(proj.cov2d, [[expected + 0.3, 0], [0, expected + 0.3]],
                       atol=1e-9)


def test_behind_camera_is_culled():
    cam = cam32()
    g = GaussianPrimitive(mean=np.array([0.0, 0.0, -1.0]),
                          rotation=np.array([1.0, 0, 0, 0]),
                          scale=np.full(3, 0.01), opacity=0.5, color=np.zeros(3))
    assert project_gaussian(cam, g) is None


def test_jacobian_matches_finite_differences():
    cam = CameraView(fx=150.0, fy=140.0, cx=32.0, cy=24.0, width=64, height=48)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-1, 1, 100), rng.uniform(-1, 1, 100),
                           rng.uniform(0.5, 5.0, 100)])
    jac = projection_jacobian(cam, pts)

    def proj(p):
        return np.array([cam.fx * p[0] / p[2] + cam.cx,
                         cam.fy * p[1] / p[2] + cam.cy])

    eps = 1e-6
    for i in range(100):
        fd = np.zeros((2, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = eps
            fd[:, k] = (proj(pts[i] + e) - proj(pts[i] - e)) / (2 * eps)
        denom = np.maximum(np.abs(fd), 1e-6)
        rel = np.abs(jac[i] - fd) / denom
        assert rel.max() < 1e-4


# splat rendering


def test_empty_cloud_is_background():
    cam = cam32()
    empty = GaussianCloud(means=np.zeros((0, 3)), rotations=np.zeros((0, 4)),
                          scales=np.zeros((0, 3)), opacities=np.zeros(0),
                          colors=np.zeros((0, 3)))
    out = render_gaussians(cam, empty, background=(0.2, 0.4, 0.6))
    assert np.allclose(out.color, [0.2, 0.4, 0.6])
    assert np.all(out.alpha == 0)
    assert np.all(np.isinf(out.depth))


def test_two_coincident_full_cover_splats():
    cam = cam32()
    huge = 1e4  # world sigma; screen footprint ~ fx*s/z >> image
    c1, c2 = np.array([0.9, 0.1, 0.3]), np.array([0.1, 0.8, 0.5])
    cloud = GaussianCloud(
        means=np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]),
        rotations=np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]),
        scales=np.full((2, 3), huge),
        opacities=np.array([0.5, 0.5]),
        colors=np.stack([c1, c2]))
    out = render_gaussians(cam, cloud, background=(0, 0, 0))
    assert np.allclose(out.color, 0.5 * c1 + 0.25 * c2, atol=1e-6)
    assert np.allclose(out.alpha, 0.75, atol=1e-6)


def test_matches_oracle_on_random_scenes():
    rng = np.random.default_rng(123)
    cam = cam32()
    for trial in range(200):
        n = int(rng.integers(1, 33))
        cloud = random_cloud_in_view(rng, n)
        bg = rng.uniform(0, 1, 3)
        out = render_gaussians(cam, cloud, background=bg)
        ref_color, ref_depth, ref_alpha = oracle_render(cam, cloud, background=bg)
        assert np.max(np.abs(out.color - ref_color)) <= 1e-5, f"trial {trial}"
        assert np.max(np.abs(out.alpha - ref_alpha)) <= 1e-5
        both = np.isfinite(out.depth) & np.isfinite(ref_depth)
        assert np.array_equal(np.isfinite(out.depth), np.isfinite(ref_depth))
        assert np.max(np.abs(out.depth[both] - ref_depth[both]), initial=0) <= 1e-5


def test_oracle_agrees_with_scalar_compositor():
    # the vectorized oracle is itself checked against a per-pixel loop
    rng = np.random.default_rng(77)
    cam = CameraView(fx=12.0, fy=12.0, cx=4.0, cy=4.0, width=8, height=8)
    for _ in range(10):
        cloud = random_cloud_in_view(rng, 12)
        color, depth, alpha = oracle_render(cam, cloud, background=(0.1, 0.2, 0.3))
        for py in range(0, 8, 3):
            for px in range(0, 8, 3):
                c, d, a = oracle_render_pixel(cam, cloud, px, py,
                                              background=(0.1, 0.2, 0.3))
                assert np.allclose(color[py, px], c, atol=1e-12)
                assert alpha[py, px] == pytest.approx(a, abs=1e-12)
                if np.isfinite(d) or np.isfinite(depth[py, px]):
                    assert depth[py, px] == pytest.approx(d, abs=1e-12)


def test_permutation_invariance_bit_identical():
    rng = np.random.default_rng(5)
    cam = cam32()
    cloud = random_cloud_in_view(rng, 24)
    out = render_gaussians(cam, cloud)
    for _ in range(3):
        perm = rng.permutation(len(cloud))
        shuffled = GaussianCloud(means=cloud.means[perm],
                                 rotations=cloud.rotations[perm],
                                 scales=cloud.scales[perm],
                                 opacities=cloud.opacities[perm],
                                 colors=cloud.colors[perm])
        out2 = render_gaussians(cam, shuffled)
        assert np.array_equal(out.color, out2.color)
        assert np.array_equal(out.depth, out2.depth)
        assert np.array_equal(out.alpha, out2.alpha)


def test_translation_equivariance():
    rng = np.random.default_rng(11)
    cloud = random_cloud_in_view(rng, 16)
    offset = np.array([3.2, -1.7, 0.9])
    cam = cam32(extrinsic=Pose.from_axis_angle([0, 1, 0], 0.2, (0.05, 0, 0.1)))
    shifted_cloud = GaussianCloud(means=cloud.means + offset,
                                  rotations=cloud.rotations, scales=cloud.scales,
                                  opacities=cloud.opacities, colors=cloud.colors)
    # camera that moved with the splats: world -> cam of the shifted world
    shifted_ext = cam.extrinsic.compose(Pose(translation=-offset))
    out = render_gaussians(cam, cloud)
    out2 = render_gaussians(cam.with_extrinsic(shifted_ext), shifted_cloud)
    assert np.max(np.abs(out.color - out2.color)) <= 1e-6
    assert np.max(np.abs(out.alpha - out2.alpha)) <= 1e-6


def test_alpha_bounded():
    rng = np.random.default_rng(9)
    cam = cam32()
    for _ in range(20):
        cloud = random_cloud_in_view(rng, 32, scale_range=(0.1, 2.0))
        out = render_gaussians(cam, cloud)
        assert np.all(out.alpha >= 0) and np.all(out.alpha <= 1 + 1e-12)


# mesh pass


def tri_mesh(verts, colors=None):
    from desksim.mesh import TriangleMesh
    return TriangleMesh(np.asarray(verts, float), np.array([[0, 1, 2]]),
                        colors=None if colors is None else np.asarray(colors))


def test_triangle_coverage_matches_half_plane_oracle():
    cam = cam32()
    rng = np.random.default_rng(21)
    for _ in range(25):
        verts = np.column_stack([rng.uniform(-0.5, 0.5, 3),
                                 rng.uniform(-0.5, 0.5, 3),
                                 rng.uniform(0.8, 2.0, 3)])
        out = rasterize_mesh(cam, [tri_mesh(verts)])
        pix, _ = cam.project(verts)
        covered = np.isfinite(out.depth)
        cols, rows = np.meshgrid(np.arange(32.0), np.arange(32.0))
        # inclusive point-in-triangle via signed areas
        a, b, c = pix

        def edge(p0, p1):
            return ((p1[0] - p0[0]) * (rows - p0[1])
                    - (p1[1] - p0[1]) * (cols - p0[0]))

        e0, e1, e2 = edge(a, b), edge(b, c), edge(c, a)
        inside = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | \
                 ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
        assert np.array_equal(covered, inside)
        assert np.all(out.alpha[covered] == 1.0)


def test_empty_object_list():
    cam = cam32()
    out = rasterize_mesh(cam, [], background=(0.3, 0.3, 0.3))
    assert np.allclose(out.color, 0.3)
    assert np.all(np.isinf(out.depth))
    assert np.all(out.alpha == 0)


def test_z_test_nearer_wins():
    cam = cam32()
    near_tri = tri_mesh([[-1, -1, 1.0], [1, -1, 1.0], [0, 1, 1.0]],
                        colors=[[1, 0, 0]] * 3)
    far_tri = tri_mesh([[-1, -1, 2.0], [1, -1, 2.0], [0, 1, 2.0]],
                       colors=[[0, 1, 0]] * 3)
    out = rasterize_mesh(cam, [far_tri, near_tri])
    center = out.color[16, 16]
    assert center[0] > 0 and center[1] == 0  # red in front
    assert out.depth[16, 16] == pytest.approx(1.0, abs=1e-9)


# compositing


def test_mesh_in_front_hides_splat():
    cam = cam32()
    cloud = single([0, 0, 1.0], scale=5.0, opacity=0.9, color=(1, 0, 0))
    wall = tri_mesh([[-3, -3, 0.5], [3, -3, 0.5], [0, 4, 0.5]],
                    colors=[[0, 0, 1]] * 3)
    mesh_pass = rasterize_mesh(cam, [wall])
    out = composite(cam, cloud, mesh_pass)
    covered = np.isfinite(mesh_pass.depth)
    # blue wall everywhere it covers; shading scales the channel, hue stays
    assert np.all(out.color[covered][:, 2] > 0.4)
    assert np.all(out.color[covered][:, 0] == 0)
    assert np.allclose(out.depth[covered], 0.5, atol=1e-9)


def test_no_mesh_coverage_equals_plain_render():
    rng = np.random.default_rng(31)
    cam = cam32()
    cloud = random_cloud_in_view(rng, 20)
    empty_mesh = RenderBuffers(color=np.zeros((32, 32, 3)),
                               depth=np.full((32, 32), np.inf),
                               alpha=np.zeros((32, 32)))
    a = render_gaussians(cam, cloud, background=(0.1, 0.1, 0.1))
    b = composite(cam, cloud, empty_mesh, background=(0.1, 0.1, 0.1))
    assert np.array_equal(a.color, b.color)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.alpha, b.alpha)


def test_resolution_mismatch_errors():
    cam = cam32()
    small = RenderBuffers(color=np.zeros((8, 8, 3)),
                          depth=np.full((8, 8), np.inf), alpha=np.zeros((8, 8)))
    with pytest.raises(ValueError, match="8x8"):
        composite(cam, single([0, 0, 1.0]), small)


def test_composite_matches_unified_oracle():
    rng = np.random.default_rng(55)
    cam = cam32()
    for trial in range(100):
        n = int(rng.integers(1, 33))
        cloud = random_cloud_in_view(rng, n)
        n_tris = int(rng.integers(1, 9))
        meshes = []
        for _ in range(n_tris):
            verts = np.column_stack([rng.uniform(-1.5, 1.5, 3),
                                     rng.uniform(-1.5, 1.5, 3),
                                     rng.uniform(0.4, 4.0, 3)])
            meshes.append(tri_mesh(verts, colors=rng.uniform(0, 1, (3, 3))))
        mesh_pass = rasterize_mesh(cam, meshes)
        bg = rng.uniform(0, 1, 3)
        out = composite(cam, cloud, mesh_pass, background=bg)
        ref_color, ref_depth, ref_alpha = oracle_render(
            cam, cloud, background=bg,
            mesh_depth=mesh_pass.depth, mesh_color=mesh_pass.color)
        assert np.max(np.abs(out.color - ref_color)) <= 1e-5, f"trial {trial}"
        assert np.max(np.abs(out.alpha - ref_alpha)) <= 1e-5
        both = np.isfinite(out.depth) & np.isfinite(ref_depth)
        assert np.array_equal(np.isfinite(out.depth), np.isfinite(ref_depth))
        assert np.max(np.abs(out.depth[both] - ref_depth[both]), initial=0) <= 1e-5


# full scene rendering


def pick_scene():
    from desksim.camera import look_at
    from desksim.scene import RigidObject, Scene
    from desksim.shapes import box_mesh, grid_mesh

    xs, ys = np.meshgrid(np.linspace(-0.1, 0.9, 51), np.linspace(-0.3, 0.3, 31))
    means = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
    n = len(means)
    splats = GaussianCloud(means=means,
                           rotations=np.tile([1.0, 0, 0, 0], (n, 1)),
                           scales=np.full((n, 3), 0.01),
                           opacities=np.full(n, 0.9),
                           colors=np.tile([0.4, 0.3, 0.2], (n, 1)))
    box = box_mesh((0.04, 0.04, 0.06), color=(0.8, 0.2, 0.1))
    obj = RigidObject(id="block", visual_mesh=box, collision_mesh=box,
                      pose=Pose(translation=(0.3, 0.05, 0.03)), graspable=True)
    intr = dict(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)
    cams = {
        "wrist": CameraView(**intr, extrinsic=look_at(
            (0.3, 0.05, 0.5), (0.3, 0.05, 0.0), up=(0.0, 1.0, 0.0))),
        "third": CameraView(**intr, extrinsic=look_at(
            (0.9, -0.4, 0.5), (0.3, 0.05, 0.0))),
    }
    table = grid_mesh(2, 2, (1.2, 0.8), center=(0.4, 0.0, 0.0))
    return Scene(background_splats=splats, background_mesh=table,
                 objects=(obj,), cameras=cams)


def test_scene_without_objects_is_splat_render():
    from dataclasses import replace

    from desksim.render import render_scene

    scene = pick_scene()
    stripped = replace(scene, objects=())
    a = render_scene(stripped, "third", background=(0.1, 0.2, 0.3))
    b = render_gaussians(scene.camera("third"), scene.world_splats(),
                         background=(0.1, 0.2, 0.3))
    assert np.array_equal(a.color, b.color)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.alpha, b.alpha)


def test_scene_render_deterministic():
    from desksim.render import render_scene

    scene = pick_scene()
    a = render_scene(scene, "wrist")
    b = render_scene(scene, "wrist")
    assert np.array_equal(a.color, b.color)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.alpha, b.alpha)


def test_scene_unknown_camera():
    from desksim.render import render_scene

    with pytest.raises(KeyError, match="overhead"):
        render_scene(pick_scene(), "overhead")


def test_scene_depth_at_object_top():
    from desksim.render import render_scene

    scene = pick_scene()
    top_center = np.array([0.3, 0.05, 0.06])  # block top face
    lo = np.array([0.3 - 0.02, 0.05 - 0.02, 0.0])
    hi = np.array([0.3 + 0.02, 0.05 + 0.02, 0.06])
    for name in ("wrist", "third"):
        out = render_scene(scene, name)
        cam = scene.camera(name)
        pix, _ = cam.project(top_center)
        row, col = int(round(pix[0, 1])), int(round(pix[0, 0]))
        # analytic depth: slab intersection of the pixel-center ray with the
        # block's world-space box
        origin = cam.extrinsic.inverse().translation
        through = cam.backproject(np.array([[col, row]], float),
                                  np.array([1.0]))[0]
        direction = through - origin
        with np.errstate(divide="ignore"):
            t0 = (lo - origin) / direction
            t1 = (hi - origin) / direction
        t_near = np.minimum(t0, t1).max()
        t_far = np.maximum(t0, t1).min()
        assert t_near <= t_far, "pixel ray misses the block"
        hit = origin + t_near * direction
        expected = cam.world_to_camera(hit)[2]
        assert abs(out.depth[row, col] - expected) <= 2e-3, name
    # the straight-down view is fronto-parallel: depth is exactly
    # camera height minus block top
    wrist = render_scene(scene, "wrist")
    assert abs(wrist.depth[240, 320] - (0.5 - 0.06)) <= 2e-3
