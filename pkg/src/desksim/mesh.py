"""Triangle meshes and OBJ/PLY file I/O.

Loaders validate face indices and drop zero-area faces (count reported
through the module logger).  Quads in input files are fan-triangulated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._ply import PlyError, read_ply, write_ply

log = logging.getLogger(__name__)

_DEGENERATE_AREA = 1e-14


class MeshLoadError(ValueError):
    """Malformed mesh file; message carries file/line context."""


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray                 # (V, 3) meters
    faces: np.ndarray                    # (F, 3) int indices
    colors: np.ndarray | None = None     # optional (V, 3) RGB in [0, 1]
    normals: np.ndarray | None = None    # optional (V, 3) unit vectors

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError(f"face index out of range (V={len(v)})")
        if self.colors is not None:
            object.__setattr__(self, "colors",
                               np.asarray(self.colors, dtype=np.float64).reshape(-1, 3))
        if self.normals is not None:
            object.__setattr__(self, "normals",
                               np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """Corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        t = self.triangles()
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        if normalized:
            lens = np.linalg.norm(n, axis=1)
            lens[lens == 0] = 1.0
            n = n / lens[:, None]
        return n

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, pose) -> "TriangleMesh":
        return TriangleMesh(pose.apply(self.vertices), self.faces.copy(),
                            None if self.colors is None else self.colors.copy(),
                            None if self.normals is None else pose.rotate(self.normals))

    def edges(self, unique: bool = True) -> np.ndarray:
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        if unique:
            e = np.unique(np.sort(e, axis=1), axis=0)
        return e

    def is_watertight(self) -> bool:
        """Every undirected edge shared by exactly two faces."""
        if self.n_faces == 0:
            return False
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                                    self.faces[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def drop_degenerate_faces(mesh: TriangleMesh) -> tuple[TriangleMesh, int]:
    areas = mesh.face_areas()
    repeated = ((mesh.faces[:, 0] == mesh.faces[:, 1])
                | (mesh.faces[:, 1] == mesh.faces[:, 2])
                | (mesh.faces[:, 2] == mesh.faces[:, 0]))
    keep = (areas > _DEGENERATE_AREA) & ~repeated
    dropped = int((~keep).sum())
    if dropped == 0:
        return mesh, 0
    return TriangleMesh(mesh.vertices, mesh.faces[keep], mesh.colors, mesh.normals), dropped


def _fan(idx: list[int]) -> list[tuple[int, int, int]]:
    return [(idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1)]


def _load_obj(path) -> TriangleMesh:
    vertices, colors, faces = [], [], []
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    vals = [float(x) for x in parts[1:]]
                except ValueError as e:
                    raise MeshLoadError(f"{path}:{lineno}: bad vertex: {e}") from e
                if len(vals) < 3:
                    raise MeshLoadError(f"{path}:{lineno}: vertex needs 3 coordinates")
                vertices.append(vals[:3])
                if len(vals) >= 6:
                    colors.append(vals[3:6])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError as e:
                        raise MeshLoadError(f"{path}:{lineno}: bad face token '{tok}'") from e
                    # OBJ is 1-based; negative indices count from the end
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise MeshLoadError(f"{path}:{lineno}: face needs >= 3 vertices")
                faces.extend(_fan(idx))
    v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    fc = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(fc) and (fc.min() < 0 or fc.max() >= len(v)):
        bad = int(fc.max()) + 1 if fc.max() >= len(v) else int(fc.min())
        raise MeshLoadError(f"{path}: face index {bad} out of range (file has {len(v)} vertices)")
    col = np.array(colors, dtype=np.float64) if len(colors) == len(vertices) and colors else None
    return TriangleMesh(v, fc, col)


def _load_mesh_ply(path) -> TriangleMesh:
    try:
        ply = read_ply(path)
    except PlyError as e:
        raise MeshLoadError(str(e)) from e
    if "vertex" not in ply:
        raise MeshLoadError(f"{path}: no 'vertex' element")
    v = ply["vertex"]
    for k in ("x", "y", "z"):
        if k not in v:
            raise MeshLoadError(f"{path}: vertex element missing '{k}'")
    verts = np.stack([np.asarray(v[k], dtype=np.float64) for k in ("x", "y", "z")], axis=1)
    colors = None
    if all(k in v for k in ("red", "green", "blue")):
        rgb = np.stack([np.asarray(v[k], dtype=np.float64) for k in ("red", "green", "blue")],
                       axis=1)
        colors = rgb / 255.0 if rgb.max(initial=0.0) > 1.0 else rgb
    faces: list[tuple[int, int, int]] = []
    if "face" in ply:
        fel = ply["face"]
        key = "vertex_indices" if "vertex_indices" in fel else "vertex_index"
        if key not in fel:
            raise MeshLoadError(f"{path}: face element has no vertex index list")
        for row in fel[key]:
            idx = [int(i) for i in np.asarray(row).ravel()]
            if len(idx) < 3:
                raise MeshLoadError(f"{path}: face with fewer than 3 vertices")
            faces.extend(_fan(idx))
    fc = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(fc) and (fc.min() < 0 or fc.max() >= len(verts)):
        raise MeshLoadError(f"{path}: face index out of range (file has {len(verts)} vertices)")
    return TriangleMesh(verts, fc, colors)


def load_mesh(path) -> TriangleMesh:
    """Load an OBJ or PLY triangle mesh; degenerate faces are dropped."""
    path = str(path)
    if path.lower().endswith(".obj"):
        mesh = _load_obj(path)
    elif path.lower().endswith(".ply"):
        mesh = _load_mesh_ply(path)
    else:
        raise MeshLoadError(f"{path}: unsupported mesh extension (use .obj or .ply)")
    if not np.all(np.isfinite(mesh.vertices)):
        raise MeshLoadError(f"{path}: non-finite vertex coordinates")
    mesh, dropped = drop_degenerate_faces(mesh)
    if dropped:
        log.warning("%s: dropped %d degenerate faces", path, dropped)
    return mesh


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write OBJ (ascii) or PLY (binary) depending on extension."""
    path = str(path)
    if path.lower().endswith(".obj"):
        with open(path, "w", encoding="utf-8") as f:
            for i, v in enumerate(mesh.vertices):
                row = [v[0], v[1], v[2]]
                if mesh.colors is not None:
                    row += list(mesh.colors[i])
                f.write("v " + " ".join(repr(float(x)) for x in row) + "\n")
            for face in mesh.faces:
                f.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")
    elif path.lower().endswith(".ply"):
        props = [("x", "double", mesh.vertices[:, 0]),
                 ("y", "double", mesh.vertices[:, 1]),
                 ("z", "double", mesh.vertices[:, 2])]
        if mesh.colors is not None:
            rgb = np.clip(np.round(mesh.colors * 255), 0, 255).astype(np.uint8)
            props += [("red", "uchar", rgb[:, 0]), ("green", "uchar", rgb[:, 1]),
                      ("blue", "uchar", rgb[:, 2])]
        write_ply(path, [
            ("vertex", props),
            ("face", [("vertex_indices", "list uchar int", list(mesh.faces))]),
        ], binary=True)
    else:
        raise ValueError(f"{path}: unsupported mesh extension (use .obj or .ply)")
