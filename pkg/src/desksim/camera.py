"""Pinhole camera model with world-to-camera extrinsics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pose import Pose


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera.

    ``extrinsic`` maps world points into the camera frame (x right, y down,
    z forward).  A camera-space point (x, y, z) projects to pixel
    (fx*x/z + cx, fy*y/z + cy); pixel indices are used directly as
    continuous pixel coordinates, no half-pixel offset.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: Pose = field(default_factory=Pose.identity)
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return self.extrinsic.apply(points)

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return self.extrinsic.inverse().apply(points)

    def project(self, points_world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points to (pixels (N,2), camera-space depth (N,)).

        Points behind the camera produce negative depth; callers cull.
        """
        pc = np.atleast_2d(self.world_to_camera(points_world))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def backproject(self, pixels: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Pixels (N,2) at camera-space depths (N,) to world points (N,3)."""
        pixels = np.atleast_2d(pixels).astype(np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        x = (pixels[:, 0] - self.cx) / self.fx * depth
        y = (pixels[:, 1] - self.cy) / self.fy * depth
        return self.camera_to_world(np.stack([x, y, depth], axis=1))

    def with_extrinsic(self, extrinsic: Pose) -> "CameraView":
        return CameraView(self.fx, self.fy, self.cx, self.cy,
                          self.width, self.height, extrinsic, self.near, self.far)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """World-to-camera pose for a camera at ``eye`` looking at ``target``.

    ``up`` is a world-space hint for the image's up direction; it must not be
    parallel to the viewing direction.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-8:
        raise ValueError("up direction is parallel to the viewing direction")
    right = right / rnorm
    down = np.cross(forward, right)
    cam_to_world = np.eye(4)
    cam_to_world[:3, 0] = right
    cam_to_world[:3, 1] = down
    cam_to_world[:3, 2] = forward
    cam_to_world[:3, 3] = eye
    return Pose.from_matrix(cam_to_world).inverse()
