"""Bounding-volume hierarchy over triangle meshes.

Median-split build (largest-extent axis on triangle centroids), flat array
node layout so the traversal kernels can run under numba.  Queries are exact
with respect to the triangle set: the tree only prunes, all primitive tests
use the same closed-form routines a brute-force pass would.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .mesh import TriangleMesh

_LEAF_SIZE = 4
_STACK_DEPTH = 64


@dataclass(frozen=True)
class Bvh:
    """Flat-array BVH.  Leaves own contiguous runs of reordered triangles."""

    node_min: np.ndarray   # (n_nodes, 3)
    node_max: np.ndarray   # (n_nodes, 3)
    node_left: np.ndarray  # (n_nodes,) int32, -1 for leaf
    node_right: np.ndarray
    node_start: np.ndarray  # leaf triangle range [start, start+count)
    node_count: np.ndarray
    tri_index: np.ndarray  # (n_tris,) original face index per reordered slot
    tri_a: np.ndarray      # (n_tris, 3) triangle vertices, reordered
    tri_b: np.ndarray
    tri_c: np.ndarray

    @property
    def n_triangles(self) -> int:
        return len(self.tri_index)

    @property
    def n_nodes(self) -> int:
        return len(self.node_left)


def build_bvh(mesh: TriangleMesh, leaf_size: int = _LEAF_SIZE) -> Bvh:
    """Build a BVH over the mesh triangles.  Raises ValueError on empty mesh."""
    if mesh.n_faces == 0:
        raise ValueError("cannot build a BVH over an empty mesh")
    tris = mesh.triangles()  # (n, 3, 3)
    n = len(tris)
    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    centroids = tris.mean(axis=1)

    order = np.arange(n)
    node_min, node_max = [], []
    node_left, node_right, node_start, node_count = [], [], [], []

    def new_node():
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_left) - 1

    # iterative split; stack of (node_id, start, end) over `order`
    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        node, start, end = stack.pop()
        idx = order[start:end]
        node_min[node] = lo[idx].min(axis=0)
        node_max[node] = hi[idx].max(axis=0)
        count = end - start
        if count <= leaf_size:
            node_start[node] = start
            node_count[node] = count
            continue
        spread = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
        axis = int(np.argmax(spread))
        local = np.argsort(centroids[idx, axis], kind="stable")
        order[start:end] = idx[local]
        mid = start + count // 2
        left = new_node()
        right = new_node()
        node_left[node] = left
        node_right[node] = right
        stack.append((left, start, mid))
        stack.append((right, mid, end))

    return Bvh(
        node_min=np.asarray(node_min, dtype=np.float64),
        node_max=np.asarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int32),
        node_right=np.asarray(node_right, dtype=np.int32),
        node_start=np.asarray(node_start, dtype=np.int32),
        node_count=np.asarray(node_count, dtype=np.int32),
        tri_index=order.astype(np.int32),
        tri_a=np.ascontiguousarray(tris[order, 0]),
        tri_b=np.ascontiguousarray(tris[order, 1]),
        tri_c=np.ascontiguousarray(tris[order, 2]),
    )


# ---------------------------------------------------------------------------
# primitive routines (shared by tree traversal and the brute-force oracle)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _closest_on_triangle(p, a, b, c):
    """Closest point on triangle abc to p (Ericson-style region tests)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab[0] * ap[0] + ab[1] * ap[1] + ab[2] * ap[2]
    d2 = ac[0] * ap[0] + ac[1] * ap[1] + ac[2] * ap[2]
    if d1 <= 0.0 and d2 <= 0.0:
        return a.copy()
    bp = p - b
    d3 = ab[0] * bp[0] + ab[1] * bp[1] + ab[2] * bp[2]
    d4 = ac[0] * bp[0] + ac[1] * bp[1] + ac[2] * bp[2]
    if d3 >= 0.0 and d4 <= d3:
        return b.copy()
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        v = d1 / denom if denom != 0.0 else 0.0
        return a + v * ab
    cp = p - c
    d5 = ab[0] * cp[0] + ab[1] * cp[1] + ab[2] * cp[2]
    d6 = ac[0] * cp[0] + ac[1] * cp[1] + ac[2] * cp[2]
    if d6 >= 0.0 and d5 <= d6:
        return c.copy()
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = d2 / denom if denom != 0.0 else 0.0
        return a + w * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / denom if denom != 0.0 else 0.0
        return b + w * (c - b)
    denom = va + vb + vc
    if denom == 0.0:
        # fully degenerate triangle; fall back to vertex a
        return a.copy()
    v = vb / denom
    w = vc / denom
    return a + ab * v + ac * w


@njit(cache=True, inline="always")
def _dist2(p, q):
    d0 = p[0] - q[0]
    d1 = p[1] - q[1]
    d2 = p[2] - q[2]
    return d0 * d0 + d1 * d1 + d2 * d2


@njit(cache=True, inline="always")
def _segment_segment_dist2(p1, q1, p2, q2):
    """Squared distance between segments p1q1 and p2q2 (Ericson 5.1.9)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]
    e = d2[0] * d2[0] + d2[1] * d2[1] + d2[2] * d2[2]
    f = d2[0] * r[0] + d2[1] * r[1] + d2[2] * r[2]
    if a <= 1e-300 and e <= 1e-300:
        return _dist2(p1, p2)
    if a <= 1e-300:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1[0] * r[0] + d1[1] * r[1] + d1[2] * r[2]
        if e <= 1e-300:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2]
            denom = a * e - b * b
            if denom != 0.0:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = b * s + f
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > e:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
            else:
                t = t / e
    c1 = p1 + d1 * s
    c2 = p2 + d2 * t
    return _dist2(c1, c2)


@njit(cache=True, inline="always")
def _segment_crosses_triangle(p, q, a, b, c):
    """True if segment pq intersects triangle abc (watertight enough: uses
    signed volumes with a strict zero tolerance; grazing contact is handled
    by the distance terms, which go to zero anyway)."""
    ab = b - a
    ac = c - a
    n = np.empty(3)
    n[0] = ab[1] * ac[2] - ab[2] * ac[1]
    n[1] = ab[2] * ac[0] - ab[0] * ac[2]
    n[2] = ab[0] * ac[1] - ab[1] * ac[0]
    dp = (p[0] - a[0]) * n[0] + (p[1] - a[1]) * n[1] + (p[2] - a[2]) * n[2]
    dq = (q[0] - a[0]) * n[0] + (q[1] - a[1]) * n[1] + (q[2] - a[2]) * n[2]
    if dp * dq > 0.0:
        return False  # both endpoints strictly on one side
    denom = dp - dq
    if denom == 0.0:
        return False  # coplanar; edge/vertex distances catch contact
    t = dp / denom
    x = p + (q - p) * t
    # barycentric inside test
    v0 = c - a
    v1 = b - a
    v2 = x - a
    dot00 = v0[0] * v0[0] + v0[1] * v0[1] + v0[2] * v0[2]
    dot01 = v0[0] * v1[0] + v0[1] * v1[1] + v0[2] * v1[2]
    dot02 = v0[0] * v2[0] + v0[1] * v2[1] + v0[2] * v2[2]
    dot11 = v1[0] * v1[0] + v1[1] * v1[1] + v1[2] * v1[2]
    dot12 = v1[0] * v2[0] + v1[1] * v2[1] + v1[2] * v2[2]
    den = dot00 * dot11 - dot01 * dot01
    if den == 0.0:
        return False
    u = (dot11 * dot02 - dot01 * dot12) / den
    v = (dot00 * dot12 - dot01 * dot02) / den
    return u >= 0.0 and v >= 0.0 and u + v <= 1.0


@njit(cache=True, inline="always")
def _segment_triangle_dist2(p, q, a, b, c):
    """Squared distance between segment pq and triangle abc.

    The minimum is attained at a segment endpoint (vs the face), on a
    triangle edge (vs the segment), or is zero when the segment pierces the
    face; checking those cases is exhaustive.
    """
    if _segment_crosses_triangle(p, q, a, b, c):
        return 0.0
    best = _dist2(p, _closest_on_triangle(p, a, b, c))
    d = _dist2(q, _closest_on_triangle(q, a, b, c))
    if d < best:
        best = d
    d = _segment_segment_dist2(p, q, a, b)
    if d < best:
        best = d
    d = _segment_segment_dist2(p, q, b, c)
    if d < best:
        best = d
    d = _segment_segment_dist2(p, q, c, a)
    if d < best:
        best = d
    return best


@njit(cache=True, inline="always")
def _point_aabb_dist2(p, lo, hi):
    d2 = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            d = lo[k] - p[k]
            d2 += d * d
        elif p[k] > hi[k]:
            d = p[k] - hi[k]
            d2 += d * d
    return d2


@njit(cache=True, inline="always")
def _segment_hits_aabb(p, q, lo, hi, pad):
    """Slab test: does segment pq intersect the box [lo, hi] grown by pad?

    The grown box contains the Minkowski sum box + sphere(pad), so this is a
    conservative prune for capsule queries — never rejects a true hit.
    """
    tmin = 0.0
    tmax = 1.0
    for k in range(3):
        d = q[k] - p[k]
        if abs(d) < 1e-300:
            if p[k] < lo[k] - pad or p[k] > hi[k] + pad:
                return False
        else:
            inv = 1.0 / d
            t1 = (lo[k] - pad - p[k]) * inv
            t2 = (hi[k] + pad - p[k]) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return False
    return True


# ---------------------------------------------------------------------------
# traversal kernels
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _closest_points_kernel(points, node_min, node_max, node_left, node_right,
                           node_start, node_count, tri_a, tri_b, tri_c,
                           out_dist2, out_point, out_tri):
    for i in prange(points.shape[0]):
        p = points[i]
        best = np.inf
        best_pt = np.zeros(3)
        best_tri = -1
        stack = np.empty(_STACK_DEPTH, dtype=np.int32)
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _point_aabb_dist2(p, node_min[node], node_max[node]) >= best:
                continue
            left = node_left[node]
            if left < 0:
                start = node_start[node]
                for j in range(start, start + node_count[node]):
                    cp = _closest_on_triangle(p, tri_a[j], tri_b[j], tri_c[j])
                    d2 = _dist2(p, cp)
                    if d2 < best:
                        best = d2
                        best_pt = cp
                        best_tri = j
            else:
                right = node_right[node]
                dl = _point_aabb_dist2(p, node_min[left], node_max[left])
                dr = _point_aabb_dist2(p, node_min[right], node_max[right])
                # push farther child first so the nearer one pops next
                if dl <= dr:
                    stack[top] = right
                    stack[top + 1] = left
                else:
                    stack[top] = left
                    stack[top + 1] = right
                top += 2
        out_dist2[i] = best
        out_point[i] = best_pt
        out_tri[i] = best_tri


@njit(cache=True, parallel=True)
def _capsule_hits_kernel(p0, p1, radius, node_min, node_max, node_left,
                         node_right, node_start, node_count,
                         tri_a, tri_b, tri_c, out_hit):
    for i in prange(p0.shape[0]):
        a = p0[i]
        b = p1[i]
        r = radius[i]
        r2 = r * r
        hit = False
        stack = np.empty(_STACK_DEPTH, dtype=np.int32)
        stack[0] = 0
        top = 1
        while top > 0 and not hit:
            top -= 1
            node = stack[top]
            if not _segment_hits_aabb(a, b, node_min[node], node_max[node], r):
                continue
            left = node_left[node]
            if left < 0:
                start = node_start[node]
                for j in range(start, start + node_count[node]):
                    if _segment_triangle_dist2(a, b, tri_a[j], tri_b[j], tri_c[j]) <= r2:
                        hit = True
                        break
            else:
                stack[top] = left
                stack[top + 1] = node_right[node]
                top += 2
        out_hit[i] = hit


@njit(cache=True)
def _segment_mesh_dist2_brute(p, q, tri_a, tri_b, tri_c):
    best = np.inf
    for j in range(tri_a.shape[0]):
        d = _segment_triangle_dist2(p, q, tri_a[j], tri_b[j], tri_c[j])
        if d < best:
            best = d
    return best


# ---------------------------------------------------------------------------
# public queries
# ---------------------------------------------------------------------------

def distance_point_mesh(bvh: Bvh, p: np.ndarray):
    """Distance and closest surface point for one point (3,) or many (N, 3).

    Returns ``(distance, closest)``; scalar + (3,) for a single point,
    (N,) + (N, 3) for a batch.
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    pts = np.ascontiguousarray(np.atleast_2d(p))
    n = len(pts)
    out_d2 = np.empty(n)
    out_pt = np.empty((n, 3))
    out_tri = np.empty(n, dtype=np.int64)
    _closest_points_kernel(pts, bvh.node_min, bvh.node_max, bvh.node_left,
                           bvh.node_right, bvh.node_start, bvh.node_count,
                           bvh.tri_a, bvh.tri_b, bvh.tri_c,
                           out_d2, out_pt, out_tri)
    dist = np.sqrt(out_d2)
    if single:
        return float(dist[0]), out_pt[0]
    return dist, out_pt


def capsule_intersects_mesh(bvh: Bvh, segment: np.ndarray, radius) -> bool:
    """True if the capsule (segment swept by a sphere) touches any triangle.

    ``segment`` is (2, 3) for one capsule or (N, 2, 3) for a batch with
    per-capsule ``radius`` broadcastable to (N,).
    """
    seg = np.asarray(segment, dtype=np.float64)
    single = seg.ndim == 2
    seg = seg.reshape(-1, 2, 3)
    r = np.broadcast_to(np.asarray(radius, dtype=np.float64), (len(seg),))
    out = np.empty(len(seg), dtype=np.bool_)
    _capsule_hits_kernel(np.ascontiguousarray(seg[:, 0]),
                         np.ascontiguousarray(seg[:, 1]),
                         np.ascontiguousarray(r),
                         bvh.node_min, bvh.node_max, bvh.node_left,
                         bvh.node_right, bvh.node_start, bvh.node_count,
                         bvh.tri_a, bvh.tri_b, bvh.tri_c, out)
    if single:
        return bool(out[0])
    return out
