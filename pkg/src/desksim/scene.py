"""Scene assembly: background splats + collision mesh, posed objects, cameras.

A scene manifest is a JSON file naming asset paths and poses; all asset
paths are resolved relative to the manifest location.  The background
(splats and collision mesh, both in the reconstruction frame) is placed in
the world by a single ``alignment`` transform.  Object poses and the robot
base are world-frame.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np

from .camera import CameraView
from .mesh import TriangleMesh, load_mesh, save_mesh
from .pose import Pose
from .splats import GaussianCloud, load_gaussian_cloud, save_gaussian_cloud


@dataclass(frozen=True)
class RigidObject:
    id: str
    visual_mesh: TriangleMesh
    collision_mesh: TriangleMesh
    pose: Pose = field(default_factory=Pose.identity)
    graspable: bool = False
    extents: np.ndarray = None  # (3,) AABB size of the collision mesh, local frame

    def __post_init__(self):
        lo, hi = self.collision_mesh.aabb()
        ext = hi - lo
        if self.extents is None:
            object.__setattr__(self, "extents", ext)
        else:
            object.__setattr__(self, "extents", np.asarray(self.extents, dtype=np.float64))
            if not np.allclose(self.extents, ext, atol=1e-6):
                raise ValueError(f"object '{self.id}': extents do not match collision AABB")

    def at(self, pose: Pose) -> "RigidObject":
        return replace(self, pose=pose)

    def world_aabb(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.pose.apply(self.collision_mesh.vertices)
        return v.min(axis=0), v.max(axis=0)


@dataclass(frozen=True)
class Scene:
    background_splats: GaussianCloud
    background_mesh: TriangleMesh
    objects: tuple[RigidObject, ...] = ()
    cameras: dict[str, CameraView] = field(default_factory=dict)
    robot_base: Pose = field(default_factory=Pose.identity)
    table_height: float = 0.0
    alignment: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids: {ids}")

    def camera(self, name: str) -> CameraView:
        if name not in self.cameras:
            raise KeyError(f"unknown camera '{name}' (have {sorted(self.cameras)})")
        return self.cameras[name]

    def object(self, obj_id: str) -> RigidObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(f"unknown object '{obj_id}'")

    def world_splats(self) -> GaussianCloud:
        """Background splats with the alignment baked in."""
        return self.background_splats.transformed(self.alignment)

    def world_background_mesh(self) -> TriangleMesh:
        return self.background_mesh.transformed(self.alignment)

    def with_alignment(self, alignment: Pose) -> "Scene":
        return replace(self, alignment=alignment)

    def with_object_poses(self, poses: dict[str, Pose]) -> "Scene":
        objs = tuple(o.at(poses[o.id]) if o.id in poses else o for o in self.objects)
        return replace(self, objects=objs)

    def with_robot_base(self, base: Pose) -> "Scene":
        return replace(self, robot_base=base)


def _pose_to_json(p: Pose) -> dict:
    return {"quat_wxyz": [float(x) for x in p.rotation],
            "translation": [float(x) for x in p.translation]}


def _pose_from_json(d: dict) -> Pose:
    return Pose(np.array(d["quat_wxyz"], dtype=np.float64),
                np.array(d["translation"], dtype=np.float64))


def _camera_to_json(c: CameraView) -> dict:
    return {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
            "width": c.width, "height": c.height,
            "extrinsic": _pose_to_json(c.extrinsic), "near": c.near, "far": c.far}


def _camera_from_json(d: dict) -> CameraView:
    return CameraView(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]),
                      cy=float(d["cy"]), width=int(d["width"]), height=int(d["height"]),
                      extrinsic=_pose_from_json(d["extrinsic"]),
                      near=float(d.get("near", 0.01)), far=float(d.get("far", 100.0)))


def save_scene(scene: Scene, manifest_path, asset_dir: str | None = None) -> None:
    """Write the manifest plus all referenced assets next to it.

    ``asset_dir`` is a subdirectory (relative to the manifest) for asset
    files; default is the manifest's directory itself.
    """
    manifest_path = FsPath(manifest_path)
    root = manifest_path.parent
    sub = FsPath(asset_dir) if asset_dir else FsPath(".")
    (root / sub).mkdir(parents=True, exist_ok=True)

    def rel(name: str) -> str:
        return str(sub / name)

    save_gaussian_cloud(scene.background_splats, root / rel("background_splats.ply"))
    save_mesh(scene.background_mesh, root / rel("background_mesh.ply"))
    objects = []
    for o in scene.objects:
        save_mesh(o.visual_mesh, root / rel(f"{o.id}_visual.ply"))
        save_mesh(o.collision_mesh, root / rel(f"{o.id}_collision.ply"))
        objects.append({"id": o.id,
                        "visual_mesh": rel(f"{o.id}_visual.ply"),
                        "collision_mesh": rel(f"{o.id}_collision.ply"),
                        "pose": _pose_to_json(o.pose),
                        "graspable": o.graspable})
    doc = {
        "background": {
            "splats": rel("background_splats.ply"),
            "collision_mesh": rel("background_mesh.ply"),
            "splat_pose": _pose_to_json(scene.background_splats.pose),
        },
        "alignment": _pose_to_json(scene.alignment),
        "robot_base": _pose_to_json(scene.robot_base),
        "table_height": scene.table_height,
        "objects": objects,
        "cameras": {name: _camera_to_json(c) for name, c in scene.cameras.items()},
    }
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_scene(manifest_path) -> Scene:
    manifest_path = FsPath(manifest_path)
    root = manifest_path.parent
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    bg = doc["background"]
    splats = load_gaussian_cloud(root / bg["splats"],
                                 pose=_pose_from_json(bg.get("splat_pose",
                                                             _pose_to_json(Pose.identity()))))
    mesh = load_mesh(root / bg["collision_mesh"])
    objects = []
    for od in doc.get("objects", []):
        objects.append(RigidObject(
            id=od["id"],
            visual_mesh=load_mesh(root / od["visual_mesh"]),
            collision_mesh=load_mesh(root / od["collision_mesh"]),
            pose=_pose_from_json(od["pose"]),
            graspable=bool(od.get("graspable", False))))
    cameras = {name: _camera_from_json(cd) for name, cd in doc.get("cameras", {}).items()}
    return Scene(background_splats=splats, background_mesh=mesh, objects=tuple(objects),
                 cameras=cameras, robot_base=_pose_from_json(doc["robot_base"]),
                 table_height=float(doc.get("table_height", 0.0)),
                 alignment=_pose_from_json(doc.get("alignment",
                                                   _pose_to_json(Pose.identity()))))
