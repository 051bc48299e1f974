"""Mesh cleanup for collision proxies: hole filling, smoothing, decimation.

A reconstructed desk mesh comes out with small voids and far more triangles
than collision checking wants.  The pipeline here is fill_holes ->
smooth_mesh -> simplify_mesh; each step is a pure function returning a new
mesh.
"""
from __future__ import annotations

import heapq
import logging
from collections import defaultdict

import numpy as np
from scipy import sparse

from .mesh import TriangleMesh, drop_degenerate_faces

log = logging.getLogger(__name__)

DEFAULT_MAX_LOOP_LEN = 100


def _boundary_edge_map(faces: np.ndarray) -> dict:
    """Directed boundary edges a->b (edges whose reverse never occurs)."""
    directed = set()
    for f in faces:
        for i in range(3):
            directed.add((int(f[i]), int(f[(i + 1) % 3])))
    return {(a, b): True for (a, b) in directed if (b, a) not in directed}


def boundary_loops(mesh: TriangleMesh) -> list[list[int]]:
    """Closed vertex loops along the mesh boundary, each in face winding order."""
    boundary = _boundary_edge_map(mesh.faces)
    succ = {}
    for a, b in boundary:
        if a in succ:
            # non-manifold boundary vertex: more than one outgoing boundary
            # edge; keep the first, the duplicate loop is left unfilled
            log.warning("non-manifold boundary at vertex %d; skipping an edge", a)
            continue
        succ[a] = b
    loops = []
    visited = set()
    for start in succ:
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur = succ[start]
        broken = False
        while cur != start:
            if cur in visited or cur not in succ:
                broken = True  # open chain, cannot close it
                break
            loop.append(cur)
            visited.add(cur)
            cur = succ[cur]
        if not broken and len(loop) >= 3:
            loops.append(loop)
    return loops


def fill_holes(mesh: TriangleMesh,
               max_loop_len: int = DEFAULT_MAX_LOOP_LEN) -> TriangleMesh:
    """Triangulate every boundary loop of at most max_loop_len edges.

    Each hole gets a centroid vertex and a triangle fan, wound opposite to
    the boundary so adjacent faces stay consistent.  Larger loops are
    reported and left open.  A closed mesh comes back unchanged.
    """
    loops = boundary_loops(mesh)
    if not loops:
        return mesh
    vertices = [mesh.vertices]
    new_faces = []
    next_vertex = len(mesh.vertices)
    for loop in loops:
        if len(loop) > max_loop_len:
            log.warning("leaving a %d-edge boundary loop open (max %d)",
                        len(loop), max_loop_len)
            continue
        centroid = mesh.vertices[loop].mean(axis=0)
        vertices.append(centroid[None])
        for i, a in enumerate(loop):
            b = loop[(i + 1) % len(loop)]
            # boundary runs a->b in face order; the patch traverses b->a
            new_faces.append((b, a, next_vertex))
        next_vertex += 1
    if not new_faces:
        return mesh
    faces = np.vstack([mesh.faces, np.asarray(new_faces, dtype=mesh.faces.dtype)])
    colors = None
    if mesh.colors is not None:
        pad = np.full((next_vertex - len(mesh.vertices), 3),
                      mesh.colors.mean(axis=0))
        colors = np.vstack([mesh.colors, pad])
    return TriangleMesh(np.vstack(vertices), faces, colors=colors)


def _vertex_neighbors(n_vertices: int, faces: np.ndarray) -> sparse.csr_matrix:
    i = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2],
                        faces[:, 1], faces[:, 2], faces[:, 0]])
    j = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0],
                        faces[:, 0], faces[:, 1], faces[:, 2]])
    adj = sparse.coo_matrix((np.ones(len(i)), (i, j)),
                            shape=(n_vertices, n_vertices)).tocsr()
    adj.data[:] = 1.0  # collapse duplicate entries
    return adj


def smooth_mesh(mesh: TriangleMesh, iterations: int = 10,
                lam: float = 0.5, pin_boundary: bool = True) -> TriangleMesh:
    """Uniform (umbrella) Laplacian smoothing: v += lam * (mean(N(v)) - v).

    Boundary vertices are pinned by default so open edges don't shrink
    inward.  Connectivity and vertex count are unchanged.
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError("lambda must be in (0, 1]")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    adj = _vertex_neighbors(len(mesh.vertices), mesh.faces)
    degree = np.asarray(adj.sum(axis=1)).ravel()
    movable = degree > 0
    if pin_boundary:
        boundary = _boundary_edge_map(mesh.faces)
        pinned = {v for e in boundary for v in e}
        movable &= ~np.isin(np.arange(len(mesh.vertices)), list(pinned))
    scale = np.where(degree > 0, 1.0 / np.maximum(degree, 1), 0.0)
    v = mesh.vertices.copy()
    for _ in range(iterations):
        mean = (adj @ v) * scale[:, None]
        v[movable] += lam * (mean[movable] - v[movable])
    return TriangleMesh(v, mesh.faces, colors=mesh.colors)


# ---------------------------------------------------------------------------
# quadric-error decimation
# ---------------------------------------------------------------------------

_BOUNDARY_WEIGHT = 1e3


def _plane_quadric(normal: np.ndarray, point: np.ndarray,
                   weight: float = 1.0) -> np.ndarray:
    d = -float(normal @ point)
    p = np.array([normal[0], normal[1], normal[2], d])
    return weight * np.outer(p, p)


def _optimal_position(q: np.ndarray, va: np.ndarray, vb: np.ndarray):
    """Collapse target minimizing vᵀQv; falls back to best of a, b, midpoint."""
    a = q[:3, :3]
    rhs = -q[:3, 3]
    try:
        if np.linalg.cond(a) < 1e8:
            return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        pass
    best, best_err = None, np.inf
    for cand in (va, vb, 0.5 * (va + vb)):
        h = np.append(cand, 1.0)
        err = float(h @ q @ h)
        if err < best_err:
            best, best_err = cand, err
    return best


def simplify_mesh(mesh: TriangleMesh, target_faces: int) -> TriangleMesh:
    """Quadric-error edge-collapse decimation down to at most target_faces.

    Boundary edges contribute heavily weighted constraint planes so open
    rims keep their shape.  Collapses that would flip a face normal, create
    a degenerate face, or break the edge-link manifold condition are
    rejected.  Stops early (with a warning) if no legal collapse remains.
    """
    if target_faces < 2:
        raise ValueError("target_faces must be >= 2")
    if mesh.n_faces <= target_faces:
        return mesh

    verts = [v.copy() for v in mesh.vertices]
    faces = {i: tuple(int(x) for x in f) for i, f in enumerate(mesh.faces)}
    vert_faces = defaultdict(set)
    for fi, f in faces.items():
        for v in f:
            vert_faces[v].add(fi)

    # per-vertex quadrics from incident face planes
    quadrics = [np.zeros((4, 4)) for _ in verts]
    for f in faces.values():
        a, b, c = (verts[i] for i in f)
        n = np.cross(b - a, c - a)
        area2 = np.linalg.norm(n)
        if area2 <= 1e-300:
            continue
        q = _plane_quadric(n / area2, a)
        for v in f:
            quadrics[v] += q

    # boundary constraint: plane through the edge, perpendicular to its face
    directed = defaultdict(list)
    for fi, f in faces.items():
        for i in range(3):
            directed[(f[i], f[(i + 1) % 3])].append(fi)
    for (a, b), owners in directed.items():
        if (b, a) in directed:
            continue
        fa, fb, fc = (verts[i] for i in faces[owners[0]])
        fn = np.cross(fb - fa, fc - fa)
        nn = np.linalg.norm(fn)
        if nn <= 1e-300:
            continue
        edge = verts[b] - verts[a]
        cn = np.cross(edge, fn / nn)
        cl = np.linalg.norm(cn)
        if cl <= 1e-300:
            continue
        q = _plane_quadric(cn / cl, verts[a], weight=_BOUNDARY_WEIGHT)
        quadrics[a] += q
        quadrics[b] += q

    version = defaultdict(int)  # bumped on every vertex change -> lazy heap
    ticket = iter(range(1 << 60))  # tiebreak so heapq never compares arrays

    def edge_entry(a, b):
        if a > b:
            a, b = b, a
        q = quadrics[a] + quadrics[b]
        pos = _optimal_position(q, verts[a], verts[b])
        h = np.append(pos, 1.0)
        cost = float(h @ q @ h)
        return (cost, next(ticket), a, b, version[a], version[b], pos)

    def current_edges():
        seen = set()
        for f in faces.values():
            for i in range(3):
                e = (min(f[i], f[(i + 1) % 3]), max(f[i], f[(i + 1) % 3]))
                seen.add(e)
        return seen

    heap = [edge_entry(a, b) for a, b in current_edges()]
    heapq.heapify(heap)
    n_faces = len(faces)

    def link_ok(a, b):
        """Edge-collapse link condition: shared neighbors must be exactly
        the opposite vertices of the faces on edge (a, b)."""
        na = {v for fi in vert_faces[a] for v in faces[fi]} - {a}
        nb = {v for fi in vert_faces[b] for v in faces[fi]} - {b}
        shared_faces = vert_faces[a] & vert_faces[b]
        opposite = {v for fi in shared_faces for v in faces[fi]} - {a, b}
        return (na & nb) == opposite and len(shared_faces) in (1, 2)

    def collapse_ok(a, b, pos):
        if not link_ok(a, b):
            return False
        # no face may flip or collapse when a or b moves to pos
        for v_from in (a, b):
            for fi in vert_faces[v_from]:
                f = faces[fi]
                if a in f and b in f:
                    continue  # face disappears
                pts_old = [verts[i] for i in f]
                pts_new = [pos if i == v_from else verts[i] for i in f]
                n_old = np.cross(pts_old[1] - pts_old[0], pts_old[2] - pts_old[0])
                n_new = np.cross(pts_new[1] - pts_new[0], pts_new[2] - pts_new[0])
                if np.linalg.norm(n_new) <= 1e-14:
                    return False
                if n_old @ n_new <= 0:
                    return False
        return True

    while n_faces > target_faces and heap:
        cost, _, a, b, va, vb, pos = heapq.heappop(heap)
        if version[a] != va or version[b] != vb:
            continue  # stale
        if not vert_faces[a] or not vert_faces[b]:
            continue
        if not collapse_ok(a, b, pos):
            continue
        # collapse b into a at pos
        verts[a] = pos
        quadrics[a] = quadrics[a] + quadrics[b]
        dead = vert_faces[a] & vert_faces[b]
        for fi in dead:
            for v in faces[fi]:
                vert_faces[v].discard(fi)
            del faces[fi]
        n_faces -= len(dead)
        for fi in list(vert_faces[b]):
            f = faces[fi]
            faces[fi] = tuple(a if v == b else v for v in f)
            vert_faces[b].discard(fi)
            vert_faces[a].add(fi)
        version[a] += 1
        version[b] += 1
        # refresh edges around a
        touched = {v for fi in vert_faces[a] for v in faces[fi]} - {a}
        for v in touched:
            heapq.heappush(heap, edge_entry(a, v))

    if n_faces > target_faces:
        log.warning("decimation stalled at %d faces (target %d)",
                    n_faces, target_faces)

    used = sorted({v for f in faces.values() for v in f})
    remap = {v: i for i, v in enumerate(used)}
    out_verts = np.array([verts[v] for v in used])
    out_faces = np.array([[remap[v] for v in f] for f in faces.values()],
                         dtype=np.int64)
    out_colors = None
    if mesh.colors is not None and len(mesh.colors) == len(mesh.vertices):
        # collapsed vertices keep the surviving endpoint's color
        out_colors = np.array([
            mesh.colors[v] if v < len(mesh.colors) else mesh.colors.mean(axis=0)
            for v in used])
    result = TriangleMesh(out_verts, out_faces, colors=out_colors)
    result, dropped = drop_degenerate_faces(result)
    if dropped:
        log.warning("dropped %d degenerate faces after decimation", dropped)
    return result
