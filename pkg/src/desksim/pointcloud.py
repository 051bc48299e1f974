"""Point clouds, depth images, and the conversions between them.

Two cloud sources feed registration: points sampled on a reconstructed mesh
(the complete model) and points back-projected from a rendered depth image
(the partial view).  Both come through here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraView
from .mesh import TriangleMesh
from .pose import Pose

_NORMAL_TOL = 1e-6

_DEPTH_MAGIC = b"depthf32"


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray                    # (n, 3) meters
    normals: Optional[np.ndarray] = None  # (n, 3) unit vectors

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(nrm) != len(pts):
                raise ValueError(f"{len(nrm)} normals for {len(pts)} points")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > _NORMAL_TOL):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, pose: Pose) -> "PointCloud":
        normals = None if self.normals is None else pose.rotate(self.normals)
        return PointCloud(pose.apply(self.points), normals)


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel camera-space depth in meters; +inf where nothing was hit."""

    depth: np.ndarray  # (height, width) float32

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float32)
        if d.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {d.shape}")
        if np.any(np.isnan(d)) or np.any(d[np.isfinite(d)] < 0):
            raise ValueError("depth values must be >= 0 or +inf")
        object.__setattr__(self, "depth", d)

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)


def save_depth(image: DepthImage, path) -> None:
    """Little-endian float32 raster after a one-line text header:
    ``depthf32 <width> <height> m``."""
    with open(path, "wb") as f:
        f.write(b"%s %d %d m\n" % (_DEPTH_MAGIC, image.width, image.height))
        f.write(image.depth.astype("<f4").tobytes())


def load_depth(path) -> DepthImage:
    with open(path, "rb") as f:
        header = f.readline(64)
        parts = header.split()
        if len(parts) != 4 or parts[0] != _DEPTH_MAGIC or parts[3] != b"m":
            raise ValueError(f"{path}: not a depth raster (bad magic/header "
                             f"{header[:24]!r})")
        try:
            w, h = int(parts[1]), int(parts[2])
        except ValueError as e:
            raise ValueError(f"{path}: bad depth raster dimensions") from e
        data = np.frombuffer(f.read(w * h * 4), dtype="<f4")
        if data.size != w * h:
            raise ValueError(f"{path}: truncated depth raster")
    return DepthImage(data.reshape(h, w).copy())


def depth_to_pointcloud(depth: DepthImage, cam: CameraView) -> PointCloud:
    """Back-project finite depth pixels into a world-frame cloud.

    Pixel centers are (u=col, v=row); infinite pixels contribute nothing.
    """
    if depth.width != cam.width or depth.height != cam.height:
        raise ValueError(
            f"depth image is {depth.width}x{depth.height}, "
            f"camera expects {cam.width}x{cam.height}")
    rows, cols = np.nonzero(depth.valid_mask())
    if len(rows) == 0:
        return PointCloud(np.zeros((0, 3)))
    pixels = np.stack([cols.astype(np.float64), rows.astype(np.float64)], axis=1)
    z = depth.depth[rows, cols].astype(np.float64)
    return PointCloud(cam.backproject(pixels, z))


def sample_points_on_mesh(mesh: TriangleMesh, n: int,
                          rng: np.random.Generator,
                          with_normals: bool = False) -> PointCloud:
    """Sample n points uniformly by area on the mesh surface.

    Deterministic for a given generator state.  ``with_normals`` attaches the
    face normal of the sampled triangle to each point.
    """
    if n < 1:
        raise ValueError("need n >= 1 sample points")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0.0:
        raise ValueError("mesh has zero surface area")
    faces = rng.choice(len(areas), size=n, p=areas / total)
    # uniform barycentric via the sqrt trick
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tris = mesh.triangles()[faces]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    normals = mesh.face_normals()[faces] if with_normals else None
    return PointCloud(pts, normals)


def estimate_normals(cloud: PointCloud, k: int = 16,
                     viewpoint=(0.0, 0.0, 0.0)) -> PointCloud:
    """Per-point PCA plane normals, oriented to face ``viewpoint``.

    The normal is the smallest-eigenvalue direction of the k-neighborhood
    covariance; its sign is flipped so it points toward the viewpoint
    (a camera position makes the cloud consistently outward-facing).
    """
    if k < 3:
        raise ValueError("need k >= 3 neighbors for a plane fit")
    pts = cloud.points
    if len(pts) < k:
        raise ValueError(f"cloud has {len(pts)} points, need at least k={k}")
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    neigh = pts[idx]                                  # (n, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)                     # ascending eigenvalues
    normals = vecs[:, :, 0]
    to_view = np.asarray(viewpoint, dtype=np.float64) - pts
    flip = np.einsum("ni,ni->n", normals, to_view) < 0
    normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts, normals)
