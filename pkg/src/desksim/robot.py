"""Serial-chain robot model: FK, geometric Jacobian, and damped-least-squares IK.

A chain is a sequence of revolute joints.  Each joint carries a fixed pose
(parent link frame to joint frame), a unit rotation axis expressed in the
joint frame, position limits, and the collision capsules of the link that
moves with it.  Link frame ``i`` is::

    frame_i = frame_{i-1} * fixed_i * Rot(axis_i, q_i)

and the end effector sits at ``frame_n * flange``.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .pose import Pose, quat_conjugate, quat_multiply, quat_normalize


@dataclass(frozen=True)
class Capsule:
    """Segment-swept sphere in the owning link's frame."""

    a: np.ndarray       # (3,) segment start
    b: np.ndarray       # (3,) segment end
    radius: float       # meters, > 0

    def __post_init__(self):
        for name in ("a", "b"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"capsule endpoint {name} must be a finite 3-vector")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "radius", float(self.radius))
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ValueError(f"capsule radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Joint:
    """One revolute joint plus the collision geometry of its link."""

    pose: Pose                      # parent link frame -> joint frame
    axis: np.ndarray                # (3,) unit rotation axis, joint frame
    limits: tuple[float, float]     # (lo, hi) radians, lo < hi
    capsules: tuple[Capsule, ...] = ()

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if axis.shape != (3,) or not np.all(np.isfinite(axis)):
            raise ValueError("joint axis must be a finite 3-vector")
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise ValueError("joint axis must be non-zero")
        object.__setattr__(self, "axis", axis / norm)
        lo, hi = (float(v) for v in self.limits)
        if not (lo < hi):
            raise ValueError(f"joint limits must satisfy lo < hi, got ({lo}, {hi})")
        object.__setattr__(self, "limits", (lo, hi))
        object.__setattr__(self, "capsules", tuple(self.capsules))


@dataclass(frozen=True)
class KinematicChain:
    """Immutable serial chain with collision capsules and gripper geometry."""

    name: str
    joints: tuple[Joint, ...]
    flange: Pose                    # last link frame -> gripper TCP
    gripper_max_opening: float      # meters
    home: np.ndarray                # (n,) default configuration

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise ValueError("chain needs at least one joint")
        home = np.asarray(self.home, dtype=np.float64)
        if home.shape != (len(self.joints),):
            raise ValueError(
                f"home config has {home.shape} entries for {len(self.joints)} joints")
        object.__setattr__(self, "home", home)
        opening = float(self.gripper_max_opening)
        if not (opening > 0.0):
            raise ValueError("gripper_max_opening must be positive")
        object.__setattr__(self, "gripper_max_opening", opening)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def lower_limits(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper_limits(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        """Project a configuration onto the joint-limit box."""
        q = self._check_config(q)
        return np.clip(q, self.lower_limits, self.upper_limits)

    def within_limits(self, q: np.ndarray, tol: float = 0.0) -> bool:
        q = self._check_config(q)
        return bool(np.all(q >= self.lower_limits - tol)
                    and np.all(q <= self.upper_limits + tol))

    def random_config(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform sample inside the joint-limit box."""
        return rng.uniform(self.lower_limits, self.upper_limits)

    def _check_config(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.n_joints,):
            raise ValueError(
                f"configuration has shape {q.shape}, chain has {self.n_joints} joints")
        return q


@dataclass(frozen=True)
class JointConfig:
    """Joint angles plus gripper opening (the proprioceptive state)."""

    q: np.ndarray           # (n,) radians
    gripper: float = 0.0    # opening in meters, >= 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 1 or not np.all(np.isfinite(q)):
            raise ValueError("q must be a finite 1-D vector")
        object.__setattr__(self, "q", q)
        g = float(self.gripper)
        if not (g >= 0.0 and math.isfinite(g)):
            raise ValueError(f"gripper opening must be >= 0, got {g}")
        object.__setattr__(self, "gripper", g)

    def with_q(self, q: np.ndarray) -> "JointConfig":
        return JointConfig(q=q, gripper=self.gripper)

    def with_gripper(self, opening: float) -> "JointConfig":
        return JointConfig(q=self.q, gripper=opening)


# ---------------------------------------------------------------------------
# chain configuration files
# ---------------------------------------------------------------------------

def _pose_from_dict(d: dict, where: str) -> Pose:
    try:
        rotation = np.asarray(d["rotation"], dtype=np.float64)
        translation = np.asarray(d["translation"], dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{where}: pose needs 'rotation' and 'translation'") from exc
    if rotation.shape != (4,) or translation.shape != (3,):
        raise ValueError(f"{where}: pose must be a quaternion (w,x,y,z) and a 3-vector")
    return Pose(rotation=quat_normalize(rotation), translation=translation)


def _chain_from_dict(data: dict, where: str) -> KinematicChain:
    try:
        joint_dicts = data["joints"]
        flange = _pose_from_dict(data["flange"], f"{where}: flange")
        opening = float(data["gripper_max_opening"])
        home = data["home"]
    except (KeyError, TypeError) as exc:
        raise ValueError(
            f"{where}: chain config needs 'joints', 'flange', "
            "'gripper_max_opening' and 'home'") from exc
    joints = []
    for i, jd in enumerate(joint_dicts):
        label = f"{where}: joint {i}"
        try:
            capsules = tuple(
                Capsule(a=c["a"], b=c["b"], radius=c["radius"])
                for c in jd.get("capsules", ()))
            joint = Joint(pose=_pose_from_dict(jd["pose"], label),
                          axis=jd["axis"], limits=tuple(jd["limits"]),
                          capsules=capsules)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{label}: malformed joint entry") from exc
        joints.append(joint)
    return KinematicChain(name=str(data.get("name", "chain")),
                          joints=tuple(joints), flange=flange,
                          gripper_max_opening=opening, home=home)


def load_chain(path: str | Path) -> KinematicChain:
    """Read a chain description (joint poses, axes, limits, capsules) from JSON."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    return _chain_from_dict(data, str(path))


@functools.lru_cache(maxsize=1)
def default_arm() -> KinematicChain:
    """The packaged 7-DoF tabletop arm (Franka-class dimensions)."""
    text = resources.files("desksim").joinpath("data/arm7.json").read_text()
    return _chain_from_dict(json.loads(text), "data/arm7.json")


# ---------------------------------------------------------------------------
# kinematics
# ---------------------------------------------------------------------------

def forward_kinematics(chain: KinematicChain,
                       q: np.ndarray) -> tuple[list[Pose], Pose]:
    """Pose of every link frame plus the end-effector (gripper TCP) pose.

    Link frame i includes the joint's own rotation, so capsules and child
    joints expressed in that frame move with the joint.
    """
    q = chain._check_config(q)
    links: list[Pose] = []
    current = Pose.identity()
    for joint, angle in zip(chain.joints, q):
        current = current.compose(joint.pose).compose(
            Pose.from_axis_angle(joint.axis, angle))
        links.append(current)
    return links, current.compose(chain.flange)


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian (rows: linear xyz then angular xyz) at the TCP."""
    links, ee = forward_kinematics(chain, q)
    jac = np.zeros((6, chain.n_joints))
    tcp = ee.translation
    for i, (joint, link) in enumerate(zip(chain.joints, links)):
        # The link pose includes the joint's own rotation, which leaves the
        # rotation axis invariant, so this is the world-frame axis.
        axis_world = link.rotate(joint.axis)
        jac[:3, i] = np.cross(axis_world, tcp - link.translation)
        jac[3:, i] = axis_world
    return jac


class IkError(RuntimeError):
    """Inverse kinematics did not reach the target within the budget.

    Carries the best configuration seen (``best_config``) and its residual
    (``position_error`` meters, ``rotation_error`` radians).
    """

    def __init__(self, message: str, best_config: JointConfig,
                 position_error: float, rotation_error: float):
        super().__init__(message)
        self.best_config = best_config
        self.position_error = position_error
        self.rotation_error = rotation_error


def _rotation_gap(target_quat: np.ndarray, current_quat: np.ndarray) -> np.ndarray:
    """Rotation vector taking ``current`` onto ``target`` (world frame)."""
    rel = quat_normalize(quat_multiply(target_quat, quat_conjugate(current_quat)))
    if rel[0] < 0.0:
        rel = -rel
    sin_half = np.linalg.norm(rel[1:])
    if sin_half < 1e-12:
        return np.zeros(3)
    return rel[1:] / sin_half * (2.0 * math.atan2(sin_half, rel[0]))


def _dls_solve(chain: KinematicChain, target: Pose, q_init: np.ndarray,
               damping: float, max_step: float, max_iterations: int,
               tol_translation: float, tol_rotation: float):
    """One damped-least-squares descent; returns (converged, q, score, errors)."""
    q = chain.clamp(q_init)
    best_q = q
    best_score = math.inf
    best_errors = (math.inf, math.inf)
    damping_sq = damping * damping
    identity6 = np.eye(6)
    for iteration in range(max_iterations + 1):
        ee = forward_kinematics(chain, q)[1]
        err_pos = target.translation - ee.translation
        err_rot = _rotation_gap(target.rotation, ee.rotation)
        pos_norm = float(np.linalg.norm(err_pos))
        rot_norm = float(np.linalg.norm(err_rot))
        score = max(pos_norm / tol_translation, rot_norm / tol_rotation)
        if score < best_score:
            best_score, best_q = score, q
            best_errors = (pos_norm, rot_norm)
        if pos_norm < tol_translation and rot_norm < tol_rotation:
            return True, q, score, (pos_norm, rot_norm)
        if iteration == max_iterations:
            break
        jac = jacobian(chain, q)
        error = np.concatenate([err_pos, err_rot])
        dq = jac.T @ np.linalg.solve(jac @ jac.T + damping_sq * identity6, error)
        largest = np.max(np.abs(dq))
        if largest > max_step:
            dq *= max_step / largest
        q = chain.clamp(q + dq)
    return False, best_q, best_score, best_errors


def ik_damped_least_squares(chain: KinematicChain, target: Pose,
                            q_init: np.ndarray, *,
                            damping: float = 0.1,
                            max_step: float = 0.2,
                            max_iterations: int = 200,
                            tol_translation: float = 1e-4,
                            tol_rotation: float = 1e-3,
                            restarts: int = 12) -> JointConfig:
    """Iterate ``dq = J^T (J J^T + damping^2 I)^-1 e`` toward a target pose.

    Steps are clamped to ``max_step`` per joint and clipped to the joint
    limits, so the result is always within limits.  A single descent is a
    local method, so after a failed attempt the solver restarts from up to
    ``restarts`` uniformly drawn in-limit configurations (a fixed internal
    seed keeps repeated calls identical).  Raises :class:`IkError` carrying
    the best config seen and its residual when every attempt ends above
    ``(tol_translation, tol_rotation)``.
    """
    if not np.all(np.isfinite(target.translation)):
        raise ValueError("target pose must be finite")
    restart_rng = np.random.default_rng(0)
    best_q = chain.clamp(q_init)
    best_score = math.inf
    best_errors = (math.inf, math.inf)
    for attempt in range(restarts + 1):
        seed = q_init if attempt == 0 else chain.random_config(restart_rng)
        converged, q, score, errors = _dls_solve(
            chain, target, seed, damping, max_step, max_iterations,
            tol_translation, tol_rotation)
        if converged:
            return JointConfig(q=q)
        if score < best_score:
            best_score, best_q, best_errors = score, q, errors
    raise IkError(
        f"no convergence in {restarts + 1} attempts of {max_iterations} "
        f"iterations: residual {best_errors[0]:.2e} m / {best_errors[1]:.2e} rad "
        f"(tolerance {tol_translation:.0e} m / {tol_rotation:.0e} rad)",
        best_config=JointConfig(q=best_q),
        position_error=best_errors[0], rotation_error=best_errors[1])
