"""Hybrid renderer: Gaussian splats for the background, z-buffered triangle
meshes for manipulable objects, composited front-to-back per pixel.

The splat pass follows the standard elliptical-footprint formulation: a
world Gaussian (mean, covariance R diag(s)^2 R^T) is pushed through the
camera rotation W and the perspective Jacobian J to an image-plane 2x2
covariance J W Sigma W^T J^T, dilated by a 0.3 px^2 isotropic low-pass term.
Per pixel, alpha_i = o_i * exp(-1/2 d^T Sigma'^-1 d) and colors accumulate
as C = sum_i alpha_i c_i prod_{j<i} (1 - alpha_j) in depth order.

Compositing with meshes keeps strict z semantics: a splat contribution is
dropped where its depth lies behind the mesh surface, and the mesh color is
blended in with whatever transmittance the surviving splats left over.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._raster import (ALPHA_SKIP, TILE, composite_tiles, raster_triangles)
from .camera import CameraView
from .mesh import TriangleMesh
from .pointcloud import DepthImage
from .scene import Scene
from .splats import GaussianCloud

LOW_PASS_PX2 = 0.3
DEFAULT_MESH_COLOR = np.array([0.75, 0.75, 0.75])
# fixed world-frame directional light (toward the light), plus ambient floor
LIGHT_DIR = np.array([0.3, 0.2, 1.0]) / np.linalg.norm([0.3, 0.2, 1.0])
AMBIENT = 0.45
DIFFUSE = 0.55


@dataclass(frozen=True)
class ProjectedGaussian:
    """A Gaussian pushed onto the image plane."""

    mean2d: np.ndarray   # (2,) pixels
    cov2d: np.ndarray    # (2,2) pixels^2, includes the low-pass term
    depth: float         # camera-space z, meters
    opacity: float
    color: np.ndarray    # (3,)


@dataclass(frozen=True)
class RenderBuffers:
    """Per-pixel render targets: color in [0,1], depth in meters (+inf =
    empty), accumulated opacity in [0,1]."""

    color: np.ndarray  # (h, w, 3)
    depth: np.ndarray  # (h, w)
    alpha: np.ndarray  # (h, w)

    def __post_init__(self):
        h, w = self.depth.shape
        if self.color.shape != (h, w, 3) or self.alpha.shape != (h, w):
            raise ValueError("buffer shapes disagree")

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def depth_image(self) -> DepthImage:
        return DepthImage(self.depth.astype(np.float32))


def projection_jacobian(cam: CameraView, points_cam: np.ndarray) -> np.ndarray:
    """d(pixel)/d(camera point) of the pinhole map, (n, 2, 3).

    Exact derivative of (fx*x/z + cx, fy*y/z + cy) — no field-of-view
    clamping, so finite differences of the projection reproduce it.
    """
    p = np.atleast_2d(points_cam)
    z = p[:, 2]
    jac = np.zeros((len(p), 2, 3))
    jac[:, 0, 0] = cam.fx / z
    jac[:, 0, 2] = -cam.fx * p[:, 0] / z**2
    jac[:, 1, 1] = cam.fy / z
    jac[:, 1, 2] = -cam.fy * p[:, 1] / z**2
    return jac


def project_gaussians(cam: CameraView, cloud: GaussianCloud):
    """Vectorized projection of every Gaussian in the cloud.

    Returns (valid mask, means2d, cov2d (n,2,2), depths); entries where
    ``valid`` is False are culled (mean behind the near plane) and carry
    unspecified values.
    """
    pc = cam.world_to_camera(cloud.means)
    z = pc[:, 2]
    valid = z >= cam.near
    zs = np.where(valid, z, 1.0)  # dummy to keep the math finite
    u = cam.fx * pc[:, 0] / zs + cam.cx
    v = cam.fy * pc[:, 1] / zs + cam.cy

    w_rot = cam.extrinsic.rotation_matrix()
    cov_world = cloud.covariances()
    cov_cam = np.einsum("ij,njk,lk->nil", w_rot, cov_world, w_rot)
    safe_pc = pc.copy()
    safe_pc[:, 2] = zs
    jac = projection_jacobian(cam, safe_pc)
    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    cov2d[:, 0, 0] += LOW_PASS_PX2
    cov2d[:, 1, 1] += LOW_PASS_PX2
    return valid, np.stack([u, v], axis=1), cov2d, z


def project_gaussian(cam: CameraView, g) -> Optional[ProjectedGaussian]:
    """Single-primitive convenience wrapper; None when culled."""
    cloud = GaussianCloud(means=g.mean[None], rotations=g.rotation[None],
                          scales=g.scale[None], opacities=np.array([g.opacity]),
                          colors=np.asarray(g.color)[None])
    valid, mean2d, cov2d, z = project_gaussians(cam, cloud)
    if not valid[0]:
        return None
    return ProjectedGaussian(mean2d=mean2d[0], cov2d=cov2d[0],
                             depth=float(z[0]), opacity=float(g.opacity),
                             color=np.asarray(g.color, dtype=np.float64))


def _composite_order(means2d, cov2d, depths, opacities, colors):
    """Canonical compositing order: by depth, ties broken by every attribute
    that affects the blend, so any permutation of the input array lands in
    the same order (bit-identical renders)."""
    return np.lexsort((colors[:, 2], colors[:, 1], colors[:, 0], opacities,
                       cov2d[:, 1, 1], cov2d[:, 0, 1], cov2d[:, 0, 0],
                       means2d[:, 1], means2d[:, 0], depths))


def _tile_lists(width, height, means2d, radii):
    """Per-tile gaussian lists, preserving array order within each tile."""
    n_tx = (width + TILE - 1) // TILE
    n_ty = (height + TILE - 1) // TILE
    x0 = np.clip(np.floor((means2d[:, 0] - radii) / TILE).astype(np.int64), 0, n_tx - 1)
    x1 = np.clip(np.floor((means2d[:, 0] + radii) / TILE).astype(np.int64), 0, n_tx - 1)
    y0 = np.clip(np.floor((means2d[:, 1] - radii) / TILE).astype(np.int64), 0, n_ty - 1)
    y1 = np.clip(np.floor((means2d[:, 1] + radii) / TILE).astype(np.int64), 0, n_ty - 1)
    # drop gaussians entirely off screen
    on = ((means2d[:, 0] + radii >= 0) & (means2d[:, 0] - radii <= width - 1)
          & (means2d[:, 1] + radii >= 0) & (means2d[:, 1] - radii <= height - 1))
    nx = x1 - x0 + 1
    counts = np.where(on, nx * (y1 - y0 + 1), 0)
    total = int(counts.sum())
    # expand each gaussian to one entry per overlapped tile, vectorized
    item_of = np.repeat(np.arange(len(counts)), counts)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = np.arange(total) - np.repeat(start, counts)  # rank within gaussian
    nx_rep = np.repeat(nx, counts)
    tx = np.repeat(x0, counts) + k % nx_rep
    ty = np.repeat(y0, counts) + k // nx_rep
    tile_of = ty * n_tx + tx
    order = np.argsort(tile_of, kind="stable")  # keeps per-tile item order
    tile_items = np.ascontiguousarray(item_of[order].astype(np.int64))
    offsets = np.zeros(n_tx * n_ty + 1, dtype=np.int64)
    np.add.at(offsets[1:], tile_of, 1)
    np.cumsum(offsets, out=offsets)
    return offsets, tile_items


def _splat_pass(cam: CameraView, cloud: GaussianCloud, background,
                mesh: Optional[RenderBuffers]) -> RenderBuffers:
    h, w = cam.height, cam.width
    out_color = np.zeros((h, w, 3))
    out_alpha = np.zeros((h, w))
    out_depth = np.full((h, w), np.inf)
    background = np.asarray(background, dtype=np.float64)
    if mesh is not None:
        mesh_depth = mesh.depth
        mesh_color = mesh.color
    else:
        mesh_depth = np.full((1, 1), np.inf)
        mesh_color = np.zeros((1, 1, 3))

    if len(cloud) > 0:
        valid, means2d, cov2d, depths = project_gaussians(cam, cloud)
        # cull radius: beyond it alpha provably drops under the 1/255 skip
        # threshold, so tile binning never changes the composited set
        lam_max = _cov2d_major_eigenvalue(cov2d)
        log_term = np.log(np.maximum(cloud.opacities * 255.0, 1e-12))
        radii = np.sqrt(np.maximum(2.0 * log_term, 0.0) * lam_max)
        keep = valid & (cloud.opacities >= ALPHA_SKIP) & (radii > 0.0)
        if keep.any():
            means2d = means2d[keep]
            cov2d = cov2d[keep]
            depths = depths[keep]
            opacities = cloud.opacities[keep]
            colors = cloud.colors[keep]
            radii = radii[keep]
            order = _composite_order(means2d, cov2d, depths, opacities, colors)
            means2d = np.ascontiguousarray(means2d[order])
            cov2d = cov2d[order]
            depths = np.ascontiguousarray(depths[order])
            opacities = np.ascontiguousarray(opacities[order])
            colors = np.ascontiguousarray(colors[order])
            radii = radii[order]
            det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
            conics = np.stack([cov2d[:, 1, 1] / det,
                               cov2d[:, 0, 1] / -det,
                               cov2d[:, 0, 0] / det], axis=1)
            offsets, tile_items = _tile_lists(w, h, means2d, radii)
            composite_tiles(w, h, means2d, np.ascontiguousarray(conics),
                            depths, opacities, colors, offsets, tile_items,
                            mesh_depth, mesh_color, mesh is not None,
                            background, out_color, out_alpha, out_depth)
            return RenderBuffers(out_color, out_depth, out_alpha)

    # nothing to splat: background or mesh shows through everywhere
    if mesh is not None:
        covered = np.isfinite(mesh.depth)
        out_color[:] = np.where(covered[..., None], mesh.color, background)
        out_alpha[:] = covered.astype(np.float64)
        out_depth[:] = mesh.depth
    else:
        out_color[:] = background
    return RenderBuffers(out_color, out_depth, out_alpha)


def _cov2d_major_eigenvalue(cov2d: np.ndarray) -> np.ndarray:
    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    return mid + np.sqrt(np.maximum(mid * mid - det, 0.0))


def render_gaussians(cam: CameraView, cloud: GaussianCloud,
                     background=(0.0, 0.0, 0.0)) -> RenderBuffers:
    """Splat-only render: color, accumulated alpha, and alpha-weighted
    expected depth (+inf where accumulated alpha < 1e-4)."""
    return _splat_pass(cam, cloud, background, mesh=None)


def composite(cam: CameraView, cloud: GaussianCloud, mesh: RenderBuffers,
              background=(0.0, 0.0, 0.0)) -> RenderBuffers:
    """Blend the splat pass against a mesh z-buffer.

    Splat fragments behind the mesh surface are dropped during accumulation;
    the mesh color then receives the remaining transmittance.  Output depth
    is the nearer of mesh depth and expected splat depth.
    """
    if (mesh.height, mesh.width) != (cam.height, cam.width):
        raise ValueError(
            f"mesh buffers are {mesh.width}x{mesh.height}, camera renders "
            f"{cam.width}x{cam.height}")
    return _splat_pass(cam, cloud, background, mesh=mesh)


def _clip_near(tri_pts, tri_cols, near):
    """Sutherland-Hodgman clip of one camera-space triangle against z=near.

    Returns a list of (points (3,3), colors (3,3)) triangles.
    """
    inside = [p[2] >= near for p in tri_pts]
    if all(inside):
        return [(tri_pts, tri_cols)]
    if not any(inside):
        return []
    poly_p, poly_c = [], []
    for i in range(3):
        j = (i + 1) % 3
        pi, pj = tri_pts[i], tri_pts[j]
        ci, cj = tri_cols[i], tri_cols[j]
        if inside[i]:
            poly_p.append(pi)
            poly_c.append(ci)
        if inside[i] != inside[j]:
            t = (near - pi[2]) / (pj[2] - pi[2])
            poly_p.append(pi + t * (pj - pi))
            poly_c.append(ci + t * (cj - ci))
    out = []
    for k in range(1, len(poly_p) - 1):
        out.append((np.array([poly_p[0], poly_p[k], poly_p[k + 1]]),
                    np.array([poly_c[0], poly_c[k], poly_c[k + 1]])))
    return out


def rasterize_mesh(cam: CameraView, objects: Sequence[TriangleMesh],
                   background=(0.0, 0.0, 0.0)) -> RenderBuffers:
    """Z-buffered triangle pass over world-space meshes.

    Perspective-correct vertex colors (a flat 75% gray when a mesh has
    none), flat shading from a fixed world directional light, alpha 1 where
    any triangle covers the pixel.
    """
    h, w = cam.height, cam.width
    out_color = np.zeros((h, w, 3))
    out_depth = np.full((h, w), np.inf)

    clipped_pts, clipped_cols, clipped_shade = [], [], []
    for mesh in objects:
        if mesh.n_faces == 0:
            continue
        normals = mesh.face_normals()
        shade = AMBIENT + DIFFUSE * np.abs(normals @ LIGHT_DIR)
        cam_verts = cam.world_to_camera(mesh.vertices)
        colors = mesh.colors if mesh.colors is not None else \
            np.tile(DEFAULT_MESH_COLOR, (len(mesh.vertices), 1))
        for fi, face in enumerate(mesh.faces):
            tri = cam_verts[face]
            if np.all(tri[:, 2] < cam.near):
                continue
            for pts, cols in _clip_near(tri, colors[face], cam.near):
                clipped_pts.append(pts)
                clipped_cols.append(cols)
                clipped_shade.append(shade[fi])

    if clipped_pts:
        pts3 = np.asarray(clipped_pts)          # (n, 3, 3) camera space
        zs = pts3[:, :, 2]
        screen = np.empty((len(pts3), 3, 2))
        screen[:, :, 0] = cam.fx * pts3[:, :, 0] / zs + cam.cx
        screen[:, :, 1] = cam.fy * pts3[:, :, 1] / zs + cam.cy
        raster_triangles(w, h, screen, zs, np.asarray(clipped_cols),
                         np.asarray(clipped_shade, dtype=np.float64),
                         cam.near, out_color, out_depth)

    covered = np.isfinite(out_depth)
    out_color[~covered] = np.asarray(background, dtype=np.float64)
    return RenderBuffers(out_color, out_depth, covered.astype(np.float64))


def render_scene(scene: Scene, camera_name: str,
                 background=(0.0, 0.0, 0.0)) -> RenderBuffers:
    """Full hybrid render of a scene through one of its cameras.

    Background splats (with the scene alignment baked in) composited against
    every object's visual mesh at its current pose.  Deterministic: equal
    scenes render to bit-identical buffers.
    """
    cam = scene.camera(camera_name)
    meshes = [obj.visual_mesh.transformed(obj.pose) for obj in scene.objects]
    cloud = scene.world_splats()
    if meshes:
        mesh_pass = rasterize_mesh(cam, meshes, background)
        return composite(cam, cloud, mesh_pass, background)
    return render_gaussians(cam, cloud, background)
