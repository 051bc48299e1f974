"""Synthetic tabletop assets: object meshes, splat background, scene builders.

Everything is procedural and deterministic, sized for a desk-scale robot
workspace: the table top is the z=0 plane, the robot base sits at the world
origin on the table, and objects live in front of the robot (+x).

Splat granularity note: the background uses ~1 cm splats so their footprints
stay local; fat splats bleed opacity tails over foreground object pixels and
drag the composite depth around.
"""
from __future__ import annotations

import numpy as np

from .camera import CameraView, look_at
from .mesh import TriangleMesh
from .pose import Pose
from .scene import RigidObject, Scene
from .shapes import box_mesh, cylinder_mesh, merge_meshes
from .splats import GaussianCloud

TABLE_HALF_EXTENTS = (0.6, 0.5)     # table top spans +-x, +-y around the base
TABLE_THICKNESS = 0.05


def _paint(mesh: TriangleMesh, color) -> TriangleMesh:
    colors = np.tile(np.asarray(color, dtype=np.float64), (len(mesh.vertices), 1))
    return TriangleMesh(mesh.vertices, mesh.faces, colors=colors)


def _basket_mesh() -> TriangleMesh:
    wall, height, footprint = 0.012, 0.07, 0.18
    half = footprint / 2
    parts = [
        box_mesh((footprint, footprint, wall), center=(0, 0, wall / 2)),
        box_mesh((wall, footprint, height),
                 center=(-half + wall / 2, 0, height / 2)),
        box_mesh((wall, footprint, height),
                 center=(half - wall / 2, 0, height / 2)),
        box_mesh((footprint, wall, height),
                 center=(0, -half + wall / 2, height / 2)),
        box_mesh((footprint, wall, height),
                 center=(0, half - wall / 2, height / 2)),
    ]
    return _paint(merge_meshes(parts), (0.45, 0.30, 0.15))


def _centered_cylinder(radius: float, height: float, color) -> TriangleMesh:
    mesh = cylinder_mesh(radius=radius, height=height, n_seg=18)
    return _paint(mesh, color)


# asset name -> (mesh builder, graspable)
_ASSETS = {
    "bottle": (lambda: _centered_cylinder(0.025, 0.16, (0.95, 0.55, 0.10)), True),
    "basket": (_basket_mesh, False),
    "cucumber": (lambda: _paint(box_mesh((0.035, 0.16, 0.035)), (0.20, 0.60, 0.15)), True),
    "board": (lambda: _paint(box_mesh((0.24, 0.16, 0.012)), (0.75, 0.60, 0.40)), False),
    "cube": (lambda: _paint(box_mesh((0.04, 0.04, 0.04)), (0.15, 0.15, 0.15)), True),
    "block_small": (lambda: _paint(box_mesh((0.03, 0.05, 0.04)), (0.85, 0.20, 0.20)), True),
    "block_flat": (lambda: _paint(box_mesh((0.06, 0.035, 0.025)), (0.90, 0.80, 0.20)), True),
    "block_tall": (lambda: _paint(box_mesh((0.025, 0.025, 0.08)), (0.20, 0.70, 0.75)), True),
    "block_bar": (lambda: _paint(box_mesh((0.07, 0.03, 0.03)), (0.55, 0.30, 0.70)), True),
    "cyl_small": (lambda: _centered_cylinder(0.017, 0.09, (0.25, 0.35, 0.85)), True),
    "cyl_squat": (lambda: _centered_cylinder(0.025, 0.05, (0.85, 0.35, 0.65)), True),
}

GRASPABLE_ASSETS = tuple(sorted(name for name, (_, g) in _ASSETS.items() if g))


def asset_names() -> tuple[str, ...]:
    return tuple(sorted(_ASSETS))


def make_object(asset: str, object_id: str | None = None) -> RigidObject:
    """Instantiate a shipped asset as a rigid object at the identity pose."""
    if asset not in _ASSETS:
        raise KeyError(f"unknown asset '{asset}' (have {sorted(_ASSETS)})")
    builder, graspable = _ASSETS[asset]
    mesh = builder()
    return RigidObject(id=object_id or asset, visual_mesh=mesh,
                       collision_mesh=mesh, graspable=graspable)


def resting_height(obj: RigidObject) -> float:
    """Center z that puts the object's collision AABB bottom on the table."""
    lo, _ = obj.collision_mesh.aabb()
    return -float(lo[2])


def table_background_mesh() -> TriangleMesh:
    """Collision slab for the table top (top face at z = 0)."""
    hx, hy = TABLE_HALF_EXTENTS
    return _paint(box_mesh((2 * hx, 2 * hy, TABLE_THICKNESS),
                           center=(0.25, 0.0, -TABLE_THICKNESS / 2)),
                  (0.60, 0.48, 0.35))


def table_background_splats(seed: int = 0) -> GaussianCloud:
    """~3000-splat synthetic background: table top plus a floor patch."""
    rng = np.random.default_rng(seed)
    means, colors = [], []
    scales_list = []

    hx, hy = TABLE_HALF_EXTENTS
    xs = np.arange(0.25 - hx + 0.01, 0.25 + hx, 0.022)
    ys = np.arange(-hy + 0.01, hy, 0.022)
    wood = np.array([0.62, 0.50, 0.36])
    for x in xs:
        for y in ys:
            means.append([x, y, -0.002])
            colors.append(np.clip(wood + rng.normal(0, 0.025, 3), 0, 1))
            scales_list.append([0.012, 0.012, 0.004])

    floor = np.array([0.35, 0.35, 0.38])
    for x in np.arange(-0.8, 1.6, 0.12):
        for y in np.arange(-1.2, 1.2, 0.12):
            means.append([x, y, -0.76])
            colors.append(np.clip(floor + rng.normal(0, 0.02, 3), 0, 1))
            scales_list.append([0.07, 0.07, 0.01])

    n = len(means)
    rotations = np.zeros((n, 4))
    rotations[:, 0] = 1.0
    return GaussianCloud(means=np.asarray(means), rotations=rotations,
                         scales=np.asarray(scales_list),
                         opacities=np.full(n, 0.95),
                         colors=np.asarray(colors))


def default_cameras(width: int = 640, height: int = 480) -> dict[str, CameraView]:
    """Two fixed views of the workspace: one frontal, one lateral."""
    focal = 525.0 * width / 640.0
    shared = dict(fx=focal, fy=focal, cx=(width - 1) / 2, cy=(height - 1) / 2,
                  width=width, height=height)
    front = look_at(eye=(1.15, 0.0, 0.55), target=(0.40, 0.0, 0.05))
    side = look_at(eye=(0.45, 0.90, 0.50), target=(0.45, 0.0, 0.05))
    return {"front": CameraView(extrinsic=front, **shared),
            "side": CameraView(extrinsic=side, **shared)}


def tabletop_scene(objects: tuple[RigidObject, ...] = (), *,
                   image_size: tuple[int, int] = (640, 480),
                   splat_seed: int = 0) -> Scene:
    """Table + floor scene with the given objects and the two default cameras."""
    width, height = image_size
    return Scene(background_splats=table_background_splats(splat_seed),
                 background_mesh=table_background_mesh(),
                 objects=objects,
                 cameras=default_cameras(width, height))
