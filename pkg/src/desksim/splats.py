"""Gaussian splat primitives and the trained-splat point file format.

Storage follows the common splat PLY layout: raw opacity is a logit
(mapped through the logistic function on load), raw scales are log-space
(exponentiated on load), colors are degree-0 SH coefficients converted to
plain RGB.  View-dependent color is not loaded; each splat has one RGB.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._ply import PlyError, read_ply, write_ply
from .pose import Pose

# DC spherical-harmonic basis constant: rgb = 0.5 + SH_C0 * f_dc
SH_C0 = 0.28209479177387814


class SplatLoadError(ValueError):
    """Splat point file missing attributes or carrying invalid values."""


@dataclass(frozen=True)
class GaussianPrimitive:
    """One anisotropic Gaussian: world covariance is R diag(scale)^2 R^T."""

    mean: np.ndarray        # (3,) meters
    rotation: np.ndarray    # (4,) unit quaternion (w,x,y,z)
    scale: np.ndarray       # (3,) per-axis stddev, > 0
    opacity: float          # in (0, 1)
    color: np.ndarray       # (3,) RGB in [0, 1]

    def covariance(self) -> np.ndarray:
        from .pose import quat_to_matrix
        r = quat_to_matrix(self.rotation)
        return r @ np.diag(self.scale ** 2) @ r.T


@dataclass(frozen=True)
class GaussianCloud:
    """Struct-of-arrays splat collection with a local-to-world pose."""

    means: np.ndarray       # (N, 3)
    rotations: np.ndarray   # (N, 4) unit quaternions (w,x,y,z)
    scales: np.ndarray      # (N, 3) stddevs, > 0
    opacities: np.ndarray   # (N,) in (0, 1)
    colors: np.ndarray      # (N, 3) in [0, 1]
    pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        n = len(self.means)
        for name in ("means", "rotations", "scales", "opacities", "colors"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, a)
            if len(a) != n:
                raise ValueError(f"{name} has {len(a)} rows, expected {n}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
        if n and (np.any(self.scales <= 0) or np.any(self.opacities <= 0)
                  or np.any(self.opacities >= 1)):
            raise ValueError("scales must be > 0 and opacities in (0, 1)")
        norms = np.linalg.norm(self.rotations, axis=1) if n else np.array([])
        if n and np.any(np.abs(norms - 1.0) > 1e-6):
            object.__setattr__(self, "rotations", self.rotations / norms[:, None])

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(self.means[i], self.rotations[i], self.scales[i],
                                 float(self.opacities[i]), self.colors[i])

    def covariances(self) -> np.ndarray:
        """World covariances R diag(scale)^2 R^T for every splat, (N, 3, 3)."""
        w, x, y, z = (self.rotations[:, 0], self.rotations[:, 1],
                      self.rotations[:, 2], self.rotations[:, 3])
        r = np.empty((len(self), 3, 3))
        r[:, 0, 0] = 1 - 2 * (y * y + z * z)
        r[:, 0, 1] = 2 * (x * y - w * z)
        r[:, 0, 2] = 2 * (x * z + w * y)
        r[:, 1, 0] = 2 * (x * y + w * z)
        r[:, 1, 1] = 1 - 2 * (x * x + z * z)
        r[:, 1, 2] = 2 * (y * z - w * x)
        r[:, 2, 0] = 2 * (x * z - w * y)
        r[:, 2, 1] = 2 * (y * z + w * x)
        r[:, 2, 2] = 1 - 2 * (x * x + y * y)
        rs = r * (self.scales ** 2)[:, None, :]
        return rs @ np.swapaxes(r, 1, 2)

    def transformed(self, world: Pose) -> "GaussianCloud":
        """Bake world * self.pose into the arrays; result pose is identity."""
        full = world.compose(self.pose)
        r = full.rotation_matrix()
        means = self.means @ r.T + full.translation
        aw, ax, ay, az = full.rotation
        bw, bx, by, bz = (self.rotations[:, 0], self.rotations[:, 1],
                          self.rotations[:, 2], self.rotations[:, 3])
        rots = np.stack([
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ], axis=1)
        return GaussianCloud(means, rots, self.scales.copy(), self.opacities.copy(),
                             self.colors.copy(), Pose.identity())


_REQUIRED = ("x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")


def load_gaussian_cloud(path, pose: Pose | None = None) -> GaussianCloud:
    """Load a splat point file (binary little-endian PLY point layout)."""
    try:
        ply = read_ply(path)
    except PlyError as e:
        raise SplatLoadError(str(e)) from e
    if "vertex" not in ply:
        raise SplatLoadError(f"{path}: no 'vertex' element")
    v = ply["vertex"]
    missing = [k for k in _REQUIRED if k not in v]
    if missing:
        raise SplatLoadError(f"{path}: missing attributes {missing}")
    cols = {k: np.asarray(v[k], dtype=np.float64) for k in _REQUIRED}
    for k, a in cols.items():
        if not np.all(np.isfinite(a)):
            raise SplatLoadError(f"{path}: attribute '{k}' has non-finite values")

    means = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    f_dc = np.stack([cols["f_dc_0"], cols["f_dc_1"], cols["f_dc_2"]], axis=1)
    colors = np.clip(0.5 + SH_C0 * f_dc, 0.0, 1.0)
    opac = 1.0 / (1.0 + np.exp(-cols["opacity"]))
    scales = np.exp(np.stack([cols["scale_0"], cols["scale_1"], cols["scale_2"]], axis=1))
    rots = np.stack([cols["rot_0"], cols["rot_1"], cols["rot_2"], cols["rot_3"]], axis=1)
    norms = np.linalg.norm(rots, axis=1)
    if np.any(norms == 0):
        raise SplatLoadError(f"{path}: zero-norm rotation quaternion")
    rots = rots / norms[:, None]
    # storage is float32; keep opacities strictly inside (0, 1)
    opac = np.clip(opac, 1e-7, 1.0 - 1e-7)
    return GaussianCloud(means, rots, scales, opac, colors,
                         pose if pose is not None else Pose.identity())


def save_gaussian_cloud(cloud: GaussianCloud, path) -> None:
    """Inverse of :func:`load_gaussian_cloud` (logit opacity, log scales, SH DC color)."""
    o = np.clip(cloud.opacities, 1e-7, 1 - 1e-7)
    raw_opacity = np.log(o / (1.0 - o))
    raw_scale = np.log(cloud.scales)
    f_dc = (cloud.colors - 0.5) / SH_C0
    props = [
        ("x", "float", cloud.means[:, 0]), ("y", "float", cloud.means[:, 1]),
        ("z", "float", cloud.means[:, 2]),
        ("f_dc_0", "float", f_dc[:, 0]), ("f_dc_1", "float", f_dc[:, 1]),
        ("f_dc_2", "float", f_dc[:, 2]),
        ("opacity", "float", raw_opacity),
        ("scale_0", "float", raw_scale[:, 0]), ("scale_1", "float", raw_scale[:, 1]),
        ("scale_2", "float", raw_scale[:, 2]),
        ("rot_0", "float", cloud.rotations[:, 0]), ("rot_1", "float", cloud.rotations[:, 1]),
        ("rot_2", "float", cloud.rotations[:, 2]), ("rot_3", "float", cloud.rotations[:, 3]),
    ]
    write_ply(path, [("vertex", props)], binary=True)
