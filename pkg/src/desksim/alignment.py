"""Scene registration: marker-based coarse alignment plus point-to-plane ICP.

The reconstruction lives in its own coordinate frame; placing it in the robot
frame happens in two stages.  Marker corner correspondences give a closed-form
rigid fit (:func:`estimate_pose_kabsch`), then trimmed point-to-plane ICP
registers the observed depth cloud against points sampled from the
reconstructed background mesh (:func:`icp_point_to_plane`), and
:func:`align_scene` chains the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraView
from .pointcloud import DepthImage, PointCloud, depth_to_pointcloud, sample_points_on_mesh
from .pose import Pose, quat_from_axis_angle
from .scene import Scene

_MIN_CORRESPONDENCES = 6  # rows needed for a well-posed 6-dof solve


@dataclass(frozen=True)
class CorrespondenceSet:
    """Paired 3D points: ``source[i]`` should map onto ``target[i]``."""

    source: np.ndarray  # (n, 3)
    target: np.ndarray  # (n, 3)

    def __post_init__(self):
        src = np.asarray(self.source, dtype=np.float64).reshape(-1, 3)
        tgt = np.asarray(self.target, dtype=np.float64).reshape(-1, 3)
        if len(src) != len(tgt):
            raise ValueError(f"{len(src)} source vs {len(tgt)} target points")
        if len(src) < 3:
            raise ValueError("need at least 3 correspondences")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(tgt))):
            raise ValueError("correspondences contain non-finite values")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)

    def __len__(self) -> int:
        return len(self.source)


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    max_distance: float = 0.05        # correspondence cutoff, meters
    tol_translation: float = 1e-5     # meters
    tol_rotation: float = 1e-4        # radians
    trim_fraction: float = 0.1        # worst residuals discarded per iteration

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.max_distance, self.tol_translation, self.tol_rotation) <= 0:
            raise ValueError("distances and tolerances must be positive")
        if not 0.0 <= self.trim_fraction <= 0.5:
            raise ValueError("trim_fraction must be in [0, 0.5]")


@dataclass(frozen=True)
class AlignmentResult:
    pose: Pose
    residual: float                     # RMS point-to-plane distance, meters
    iterations: int
    inliers: int
    residual_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be non-negative")


class IcpError(RuntimeError):
    """Registration failed; ``init`` carries the pose ICP started from."""

    def __init__(self, message: str, init: Pose):
        super().__init__(message)
        self.init = init


def estimate_pose_kabsch(corr: CorrespondenceSet) -> Pose:
    """Least-squares rigid transform mapping source onto target points.

    Solves min_T sum ||T(s_i) - t_i||^2 over proper rotations (no scale,
    det = +1).  Raises ValueError when the points are collinear or coincident,
    which leaves a rotation degree of freedom unconstrained.
    """
    src, tgt = corr.source, corr.target
    cen_s = src.mean(axis=0)
    cen_t = tgt.mean(axis=0)
    cross = (src - cen_s).T @ (tgt - cen_t)
    u, sing, vt = np.linalg.svd(cross)
    spread = np.linalg.norm(src - cen_s, axis=1).max()
    if spread < 1e-12 or sing[1] <= 1e-9 * max(sing[0], 1e-12):
        raise ValueError("correspondences are collinear or coincident; "
                         "rotation is not determined")
    det = np.linalg.det(vt.T @ u.T)
    rot = vt.T @ np.diag([1.0, 1.0, det]) @ u.T
    pose_mat = np.eye(4)
    pose_mat[:3, :3] = rot
    pose_mat[:3, 3] = cen_t - rot @ cen_s
    return Pose.from_matrix(pose_mat)


def _delta_pose(omega: np.ndarray, trans: np.ndarray) -> Pose:
    angle = float(np.linalg.norm(omega))
    if angle < 1e-18:
        return Pose(translation=trans)
    return Pose(quat_from_axis_angle(omega / angle, angle), trans)


def _trimmed_pairs(tree: cKDTree, target: PointCloud, moved: np.ndarray,
                   params: IcpParams):
    """Trimmed nearest-neighbor pairing of moved source points.

    Returns (rms, points, normals, residuals) over the kept pairs, or None
    when fewer than the minimum count lie within the distance cutoff.
    """
    dist, idx = tree.query(moved, distance_upper_bound=params.max_distance)
    mask = np.isfinite(dist)
    if mask.sum() < _MIN_CORRESPONDENCES:
        return None
    pts = moved[mask]
    nrm = target.normals[idx[mask]]
    res = np.einsum("ij,ij->i", pts - target.points[idx[mask]], nrm)
    keep = max(_MIN_CORRESPONDENCES,
               int(np.ceil((1.0 - params.trim_fraction) * len(res))))
    order = np.argsort(np.abs(res))[:keep]
    rms = float(np.sqrt(np.mean(res[order] ** 2)))
    return rms, pts[order], nrm[order], res[order]


def icp_point_to_plane(source: PointCloud, target: PointCloud,
                       init: Pose | None = None,
                       params: IcpParams | None = None) -> AlignmentResult:
    """Register ``source`` onto ``target`` (which must carry normals).

    Each iteration pairs every transformed source point with its nearest
    target point, drops pairs farther than ``params.max_distance`` plus the
    worst ``trim_fraction`` of the rest, and solves the linearized
    point-to-plane system for a rotation/translation update.  The update is
    step-halved until it does not increase the trimmed RMS residual (the
    linearization can overshoot on large rotations), so the residual history
    is non-increasing; if no step length helps, the current pose is a local
    optimum and iteration stops.
    """
    if target.normals is None:
        raise ValueError("target cloud must have normals for point-to-plane ICP")
    init = Pose.identity() if init is None else init
    params = IcpParams() if params is None else params
    tree = cKDTree(target.points)

    pose = init
    pairs = _trimmed_pairs(tree, target, pose.apply(source.points), params)
    if pairs is None:
        raise IcpError(f"too few correspondences within {params.max_distance} m "
                       f"of the target (need {_MIN_CORRESPONDENCES})", init)
    history = [pairs[0]]
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        rms, pts, nrm, res = pairs
        a_mat = np.hstack([np.cross(pts, nrm), nrm])
        update, *_ = np.linalg.lstsq(a_mat, -res, rcond=None)
        omega, trans = update[:3], update[3:]

        accepted = None
        step = 1.0
        for _ in range(8):
            cand_pose = _delta_pose(step * omega, step * trans).compose(pose)
            cand = _trimmed_pairs(tree, target,
                                  cand_pose.apply(source.points), params)
            if cand is not None and cand[0] <= rms + 1e-15:
                accepted = (cand_pose, cand)
                break
            step *= 0.5
        if accepted is None:
            break  # no step length reduces the residual: local optimum
        pose, pairs = accepted
        history.append(pairs[0])
        # convergence is judged on the full proposed update, not the damped
        # step: a backtracked sliver of a large correction is not convergence
        if (np.linalg.norm(trans) < params.tol_translation
                and np.linalg.norm(omega) < params.tol_rotation):
            break

    return AlignmentResult(pose=pose, residual=history[-1],
                           iterations=iterations, inliers=len(pairs[1]),
                           residual_history=tuple(history))


def load_correspondences(path) -> CorrespondenceSet:
    """Read a marker/correspondence file.

    Plain text, one pair per line: ``sx sy sz tx ty tz`` (meters).  Blank
    lines and ``#`` comments are ignored.
    """
    rows = []
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 numbers, "
                                 f"got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no correspondences found")
    table = np.asarray(rows)
    return CorrespondenceSet(source=table[:, :3], target=table[:, 3:])


def save_correspondences(corr: CorrespondenceSet, path) -> None:
    with open(path, "w") as handle:
        handle.write("# sx sy sz tx ty tz (meters)\n")
        for s, t in zip(corr.source, corr.target):
            handle.write(" ".join(repr(float(v)) for v in (*s, *t)) + "\n")


def align_scene(scene: Scene, observed_depth: DepthImage, cam: CameraView,
                marker_corr: CorrespondenceSet, *,
                params: IcpParams | None = None, use_icp: bool = True,
                mesh_samples: int = 20000, depth_samples: int = 8000,
                seed: int = 0) -> tuple[AlignmentResult, Scene]:
    """Place the reconstructed scene in the camera/robot world frame.

    Marker correspondences (reconstruction-frame corners -> world-frame
    corners) give the coarse pose; ICP then registers the back-projected
    depth cloud against points sampled from the background mesh to refine it.
    Returns the refined alignment and the scene with it applied.  With
    ``use_icp=False`` the marker fit is returned untouched.
    """
    coarse = estimate_pose_kabsch(marker_corr)
    if not use_icp:
        fit = coarse.apply(marker_corr.source) - marker_corr.target
        rms = float(np.sqrt(np.mean(np.sum(fit ** 2, axis=1))))
        result = AlignmentResult(pose=coarse, residual=rms, iterations=0,
                                 inliers=len(marker_corr))
        return result, scene.with_alignment(coarse)

    rng = np.random.default_rng(seed)
    observed = depth_to_pointcloud(observed_depth, cam)
    pts = observed.points
    if len(pts) > depth_samples:
        pts = pts[rng.choice(len(pts), depth_samples, replace=False)]
    if len(pts) < _MIN_CORRESPONDENCES:
        raise IcpError("observed depth image has too few valid pixels", coarse)
    target = sample_points_on_mesh(scene.background_mesh, mesh_samples, rng,
                                   with_normals=True)

    # ICP maps world-frame observations onto the reconstruction-frame mesh;
    # the scene alignment is the inverse of that registration.
    refined = icp_point_to_plane(PointCloud(pts), target,
                                 init=coarse.inverse(), params=params)
    alignment = refined.pose.inverse()
    result = AlignmentResult(pose=alignment, residual=refined.residual,
                             iterations=refined.iterations,
                             inliers=refined.inliers,
                             residual_history=refined.residual_history)
    return result, scene.with_alignment(alignment)
