"""Joint-space motion planning: collision checking, RRT-Connect, shortcutting.

Configurations are plain joint vectors; a validity callable ``f(q) -> bool``
decides whether a configuration may be used.  Edges between configurations
are straight lines in joint space, validated by dense interpolation at a
fixed per-joint resolution, and that resolution travels along with the
resulting :class:`Path` so later passes (shortcutting, replay audits) check
at the same density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .bvh import Bvh, _segment_segment_dist2, capsule_intersects_mesh
from .robot import JointConfig, KinematicChain, forward_kinematics

Validity = Callable[[np.ndarray], bool]


@dataclass(frozen=True)
class Path:
    """Ordered joint-space waypoints plus the validity resolution they carry."""

    waypoints: tuple[JointConfig, ...]
    resolution: float               # rad per joint used to validate edges

    def __post_init__(self):
        waypoints = tuple(self.waypoints)
        if not waypoints:
            raise ValueError("path needs at least one waypoint")
        n = len(waypoints[0].q)
        if any(len(w.q) != n for w in waypoints):
            raise ValueError("all waypoints must have the same joint count")
        object.__setattr__(self, "waypoints", waypoints)
        resolution = float(self.resolution)
        if not (resolution > 0.0):
            raise ValueError(f"resolution must be positive, got {resolution}")
        object.__setattr__(self, "resolution", resolution)

    def length(self) -> float:
        """Sum of Euclidean joint-space segment lengths."""
        qs = np.array([w.q for w in self.waypoints])
        return float(np.sum(np.linalg.norm(np.diff(qs, axis=0), axis=1)))


# ---------------------------------------------------------------------------
# collision checking
# ---------------------------------------------------------------------------

def _world_capsules(chain: KinematicChain, q: np.ndarray):
    """FK-posed capsule segments: (N,2,3) endpoints, (N,) radii, (N,) link ids."""
    links, _ = forward_kinematics(chain, q)
    segments, radii, owners = [], [], []
    for link_index, (joint, link) in enumerate(zip(chain.joints, links)):
        for capsule in joint.capsules:
            segments.append(link.apply(np.stack([capsule.a, capsule.b])))
            radii.append(capsule.radius)
            owners.append(link_index)
    return (np.asarray(segments, dtype=np.float64),
            np.asarray(radii, dtype=np.float64),
            np.asarray(owners, dtype=np.intp))


def config_in_collision(chain: KinematicChain, q: np.ndarray,
                        bvhs: Iterable[Bvh] = (), *,
                        check_self: bool = True) -> bool:
    """True iff any FK-posed link capsule hits an environment BVH or a
    capsule on a non-adjacent link (links whose indices differ by >= 2)."""
    segments, radii, owners = _world_capsules(chain, q)
    if len(segments) == 0:
        return False
    for bvh in bvhs:
        if np.any(capsule_intersects_mesh(bvh, segments, radii)):
            return True
    if check_self:
        for i in range(len(segments)):
            for j in range(i + 1, len(segments)):
                if abs(int(owners[i]) - int(owners[j])) < 2:
                    continue
                reach = radii[i] + radii[j]
                dist2 = _segment_segment_dist2(segments[i, 0], segments[i, 1],
                                               segments[j, 0], segments[j, 1])
                if dist2 < reach * reach:
                    return True
    return False


def motion_validity(chain: KinematicChain, bvhs: Sequence[Bvh]) -> Validity:
    """Validity callable: within joint limits and collision-free."""
    bvhs = tuple(bvhs)

    def valid(q: np.ndarray) -> bool:
        return (chain.within_limits(q)
                and not config_in_collision(chain, q, bvhs))

    return valid


# ---------------------------------------------------------------------------
# RRT-Connect
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlannerParams:
    """RRT-Connect knobs, sized for tabletop scenes."""

    step: float = 0.1               # max per-joint extension (rad)
    max_iterations: int = 10_000
    resolution: float = 0.01        # dense edge validation (rad per joint)
    goal_tolerance: float = 1e-9    # configs this close (per joint) coincide

    def __post_init__(self):
        if not (self.step > 0.0):
            raise ValueError("step must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (0.0 < self.resolution <= self.step):
            raise ValueError("resolution must be in (0, step]")
        if self.goal_tolerance < 0.0:
            raise ValueError("goal_tolerance must be >= 0")


def _edge_valid(a: np.ndarray, b: np.ndarray, validity: Validity,
                resolution: float) -> bool:
    """Validate the segment a->b at <= resolution per joint.  Checks the
    interior samples and endpoint b; a is assumed already valid."""
    gap = float(np.max(np.abs(b - a)))
    steps = max(1, int(math.ceil(gap / resolution)))
    direction = b - a
    for k in range(1, steps):
        if not validity(a + direction * (k / steps)):
            return False
    return validity(b)


_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


class _Tree:
    """Append-only nearest-neighbor tree (linear scan; tabletop-sized)."""

    def __init__(self, root: np.ndarray, capacity_hint: int = 256):
        self._configs = np.empty((capacity_hint, len(root)))
        self._configs[0] = root
        self.parents = [-1]
        self.size = 1

    @property
    def configs(self) -> np.ndarray:
        return self._configs[:self.size]

    def nearest(self, q: np.ndarray) -> int:
        deltas = self.configs - q
        return int(np.argmin(np.einsum("ij,ij->i", deltas, deltas)))

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.size == len(self._configs):
            grown = np.empty((2 * self.size, self._configs.shape[1]))
            grown[:self.size] = self._configs
            self._configs = grown
        self._configs[self.size] = q
        self.parents.append(parent)
        self.size += 1
        return self.size - 1

    def branch(self, index: int) -> list[np.ndarray]:
        """Configurations from the given node back to the root."""
        out = []
        while index >= 0:
            out.append(self.configs[index].copy())
            index = self.parents[index]
        return out


def _extend(tree: _Tree, target: np.ndarray, validity: Validity,
            params: PlannerParams) -> tuple[int, int]:
    """One RRT extension toward ``target``; returns (status, node_index)."""
    near_index = tree.nearest(target)
    near = tree.configs[near_index]
    gap = float(np.max(np.abs(target - near)))
    if gap <= params.goal_tolerance:
        return _REACHED, near_index
    if gap <= params.step:
        new = target.copy()
        reached = True
    else:
        new = near + (target - near) * (params.step / gap)
        reached = False
    if not _edge_valid(near, new, validity, params.resolution):
        return _TRAPPED, -1
    index = tree.add(new, near_index)
    return (_REACHED if reached else _ADVANCED), index


def _connect(tree: _Tree, target: np.ndarray, validity: Validity,
             params: PlannerParams) -> tuple[int, int]:
    """Greedily extend toward ``target`` until reached or trapped."""
    status, index = _extend(tree, target, validity, params)
    while status == _ADVANCED:
        status, index = _extend(tree, target, validity, params)
    return status, index


def rrt_connect(start: JointConfig, goal: JointConfig, validity: Validity,
                limits: tuple[np.ndarray, np.ndarray], *,
                params: PlannerParams | None = None,
                rng: np.random.Generator | int | None = None) -> Path | None:
    """Bidirectional RRT with the Connect heuristic.

    ``limits`` is the (lower, upper) sampling box.  Returns a validated
    :class:`Path` from ``start`` to ``goal``, or ``None`` when the iteration
    budget runs out (the caller may retry with a fresh ``rng``).  Raises
    ``ValueError`` when either endpoint is outside the box or invalid.
    Deterministic for a given seed.
    """
    params = params or PlannerParams()
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    lower = np.asarray(limits[0], dtype=np.float64)
    upper = np.asarray(limits[1], dtype=np.float64)
    q_start = np.asarray(start.q, dtype=np.float64)
    q_goal = np.asarray(goal.q, dtype=np.float64)
    if q_start.shape != q_goal.shape or q_start.shape != lower.shape:
        raise ValueError("start, goal and limits must share the joint count")
    for label, q in (("start", q_start), ("goal", q_goal)):
        if np.any(q < lower) or np.any(q > upper):
            raise ValueError(f"{label} configuration is outside the limits")
        if not validity(q):
            raise ValueError(f"{label} configuration is invalid")

    def finish(configs: list[np.ndarray]) -> Path:
        waypoints = [start]
        waypoints += [JointConfig(q=q, gripper=start.gripper)
                      for q in configs[1:-1]]
        if len(configs) > 1:
            waypoints.append(goal)
        return Path(waypoints=tuple(waypoints), resolution=params.resolution)

    if _edge_valid(q_start, q_goal, validity, params.resolution):
        return finish([q_start, q_goal])

    start_tree, goal_tree = _Tree(q_start), _Tree(q_goal)
    tree_a, tree_b = start_tree, goal_tree
    for _ in range(params.max_iterations):
        sample = rng.uniform(lower, upper)
        status_a, new_index = _extend(tree_a, sample, validity, params)
        if status_a != _TRAPPED:
            bridge = tree_a.configs[new_index].copy()
            status_b, met_index = _connect(tree_b, bridge, validity, params)
            if status_b == _REACHED:
                half_a = tree_a.branch(new_index)[::-1]   # root_a .. bridge
                half_b = tree_b.branch(met_index)         # bridge .. root_b
                if np.max(np.abs(half_b[0] - bridge)) <= params.goal_tolerance:
                    half_b = half_b[1:]                   # drop duplicate bridge
                configs = half_a + half_b
                if tree_a is goal_tree:
                    configs.reverse()
                return finish(configs)
        tree_a, tree_b = tree_b, tree_a
    return None


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------

def shortcut_path(path: Path, validity: Validity, attempts: int = 100,
                  rng: np.random.Generator | int | None = None) -> Path:
    """Randomized shortcutting: splice straight segments over detours.

    Joint-space length never increases (straight replacements, triangle
    inequality) and endpoints are untouched; every splice is re-validated at
    the path's own resolution.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    waypoints = list(path.waypoints)
    for _ in range(attempts):
        if len(waypoints) <= 2:
            break
        i, j = np.sort(rng.choice(len(waypoints), size=2, replace=False))
        if j - i < 2:
            continue
        if _edge_valid(waypoints[i].q, waypoints[j].q, validity, path.resolution):
            del waypoints[i + 1:j]
    return Path(waypoints=tuple(waypoints), resolution=path.resolution)


def time_parameterize(path: Path, max_velocity: float,
                      dt: float) -> list[tuple[float, JointConfig]]:
    """Uniformly resample the joint-space polyline onto a fixed control clock.

    Samples are ``max_velocity * dt`` apart along the polyline (arc length
    measured per joint, L-inf), so no joint moves more than that between
    consecutive samples.  First and last samples equal the path endpoints;
    gripper opening interpolates linearly alongside the joints.
    """
    if not (dt > 0.0):
        raise ValueError(f"dt must be positive, got {dt}")
    if not (max_velocity > 0.0):
        raise ValueError(f"max_velocity must be positive, got {max_velocity}")
    qs = np.array([w.q for w in path.waypoints])
    grippers = np.array([w.gripper for w in path.waypoints])
    seg_lengths = np.max(np.abs(np.diff(qs, axis=0)), axis=1) if len(qs) > 1 \
        else np.zeros(0)
    total = float(np.sum(seg_lengths))
    if total == 0.0:
        return [(0.0, path.waypoints[0])]
    bound = max_velocity * dt
    steps = max(1, int(math.ceil(total / bound)))
    while total / steps > bound:    # guard the float-division corner
        steps += 1
    cumulative = np.concatenate([[0.0], np.cumsum(seg_lengths)])
    samples: list[tuple[float, JointConfig]] = [(0.0, path.waypoints[0])]
    for k in range(1, steps):
        s = total * (k / steps)
        seg = int(np.searchsorted(cumulative, s, side="right") - 1)
        seg = min(seg, len(seg_lengths) - 1)
        frac = (s - cumulative[seg]) / seg_lengths[seg]
        q = qs[seg] + (qs[seg + 1] - qs[seg]) * frac
        opening = grippers[seg] + (grippers[seg + 1] - grippers[seg]) * frac
        samples.append((k * dt, JointConfig(q=q, gripper=opening)))
    samples.append((steps * dt, path.waypoints[-1]))
    return samples
