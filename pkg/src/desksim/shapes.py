"""Procedural primitive meshes (boxes, spheres, cylinders, grids).

Used for synthetic scene assets and as fixtures everywhere a known-good
closed mesh is handy.  All shapes are centered at the origin unless noted
and wound counter-clockwise seen from outside.
"""
from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh

_BOX_FACES = np.array([
    [0, 1, 3], [0, 3, 2],
    [4, 6, 7], [4, 7, 5],
    [0, 4, 5], [0, 5, 1],
    [2, 3, 7], [2, 7, 6],
    [0, 2, 6], [0, 6, 4],
    [1, 5, 7], [1, 7, 3],
])


def box_mesh(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0),
             color=None) -> TriangleMesh:
    """Axis-aligned box with the given full extents (12 triangles)."""
    e = np.asarray(extents, dtype=np.float64) * 0.5
    c = np.asarray(center, dtype=np.float64)
    verts = np.array([[sx, sy, sz] for sx in (-e[0], e[0])
                      for sy in (-e[1], e[1]) for sz in (-e[2], e[2])]) + c
    colors = None if color is None else np.tile(color, (8, 1))
    return TriangleMesh(verts, _BOX_FACES.copy(), colors=colors)


def grid_mesh(nx: int = 10, ny: int = 10, size=(1.0, 1.0),
              center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Planar grid in z=0 with nx*ny cells (2 triangles each)."""
    xs = np.linspace(-size[0] / 2, size[0] / 2, nx + 1)
    ys = np.linspace(-size[1] / 2, size[1] / 2, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    verts += np.asarray(center)
    faces = []
    for i in range(nx):
        for j in range(ny):
            v00 = i * (ny + 1) + j
            v01 = v00 + 1
            v10 = v00 + (ny + 1)
            v11 = v10 + 1
            faces.append([v00, v10, v11])
            faces.append([v00, v11, v01])
    return TriangleMesh(verts, np.asarray(faces))


def uv_sphere(radius: float = 1.0, n_lat: int = 16, n_lon: int = 24,
              center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed latitude/longitude sphere."""
    verts = [np.array([0.0, 0.0, radius]), np.array([0.0, 0.0, -radius])]
    rings = []
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        ring = []
        for j in range(n_lon):
            phi = 2 * np.pi * j / n_lon
            ring.append(len(verts))
            verts.append(radius * np.array([
                np.sin(theta) * np.cos(phi),
                np.sin(theta) * np.sin(phi),
                np.cos(theta)]))
        rings.append(ring)
    faces = []
    top, bottom = 0, 1
    for j in range(n_lon):
        jn = (j + 1) % n_lon
        faces.append([top, rings[0][j], rings[0][jn]])
        faces.append([bottom, rings[-1][jn], rings[-1][j]])
    for i in range(len(rings) - 1):
        for j in range(n_lon):
            jn = (j + 1) % n_lon
            a, b = rings[i][j], rings[i][jn]
            c, d = rings[i + 1][j], rings[i + 1][jn]
            faces.append([a, c, d])
            faces.append([a, d, b])
    return TriangleMesh(np.asarray(verts) + np.asarray(center), np.asarray(faces))


def cylinder_mesh(radius: float = 0.5, height: float = 1.0, n_seg: int = 24,
                  caps: bool = True, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Z-aligned cylinder; ``caps=False`` leaves both rims open."""
    half = height / 2
    verts = []
    for z in (-half, half):
        for j in range(n_seg):
            phi = 2 * np.pi * j / n_seg
            verts.append([radius * np.cos(phi), radius * np.sin(phi), z])
    faces = []
    for j in range(n_seg):
        jn = (j + 1) % n_seg
        a, b = j, jn                    # bottom ring
        c, d = n_seg + j, n_seg + jn    # top ring
        faces.append([a, b, d])
        faces.append([a, d, c])
    if caps:
        cb = len(verts)
        verts.append([0.0, 0.0, -half])
        ct = len(verts)
        verts.append([0.0, 0.0, half])
        for j in range(n_seg):
            jn = (j + 1) % n_seg
            faces.append([cb, jn, j])
            faces.append([ct, n_seg + j, n_seg + jn])
    return TriangleMesh(np.asarray(verts, dtype=np.float64) + np.asarray(center),
                        np.asarray(faces))


def octasphere(radius: float = 1.0, subdivisions: int = 3,
               center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Sphere from a subdivided octahedron; much more uniform vertex
    valence than a lat/lon sphere (valence 4-6 everywhere)."""
    verts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                      [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    faces = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                      [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    mesh = subdivide_midpoint(TriangleMesh(verts, faces), subdivisions)
    unit = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    return TriangleMesh(unit * radius + np.asarray(center), mesh.faces)


def subdivide_midpoint(mesh: TriangleMesh, iterations: int = 1) -> TriangleMesh:
    """1-to-4 midpoint subdivision (no smoothing), shared edge midpoints."""
    verts = mesh.vertices
    faces = mesh.faces
    for _ in range(iterations):
        verts = list(verts)
        midpoint = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                midpoint[key] = len(verts)
                verts.append(0.5 * (np.asarray(verts[a]) + np.asarray(verts[b])))
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        verts = np.asarray(verts)
        faces = np.asarray(new_faces)
    return TriangleMesh(verts, faces, colors=None)


def merge_meshes(meshes) -> TriangleMesh:
    """Concatenate meshes into one, offsetting face indices.

    Vertex colors are kept when every input has them (inputs without colors
    get a neutral gray so a partially colored set still merges).
    """
    meshes = list(meshes)
    if not meshes:
        raise ValueError("nothing to merge")
    verts, faces, colors = [], [], []
    any_colors = any(m.colors is not None for m in meshes)
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if any_colors:
            colors.append(m.colors if m.colors is not None
                          else np.full((m.n_vertices, 3), 0.75))
        offset += m.n_vertices
    return TriangleMesh(np.vstack(verts), np.vstack(faces),
                        colors=np.vstack(colors) if any_colors else None)
