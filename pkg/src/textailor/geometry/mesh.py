"""Wavefront OBJ loading and the normalized triangle mesh.

Meshes are normalized at load time to fit inside the unit sphere with a
margin (radius MESH_RADIUS) so that radius-1 cameras keep the whole object
inside a 45 degree frustum.  UVs are mandatory: texturing is the whole point.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Mesh", "MeshError", "load_mesh", "MESH_RADIUS"]

# Normalized bounding radius.  Chosen so a camera at distance 1 sees the
# full silhouette with the default 45 degree vertical FOV (asin(0.35) < 22.5deg).
MESH_RADIUS = 0.35


class MeshError(ValueError):
    """OBJ parse or validation failure; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class Mesh:
    """Triangle mesh with per-vertex normals and per-face-corner UVs.

    vertices: (N, 3) positions, normalized to radius MESH_RADIUS about origin.
    faces:    (F, 3) vertex indices.
    normals:  (N, 3) unit vertex normals.
    uvs:      (F, 3, 2) texture coordinates in [0, 1]^2 per face corner.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray
    uvs: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 3, 2)
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise MeshError("face index out of range")
        if self.normals.shape != self.vertices.shape:
            raise MeshError("normals must match vertices")
        if self.uvs.shape[0] != self.faces.shape[0]:
            raise MeshError("uvs must provide one triple per face")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(lens, 1e-30)


def _area_weighted_vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    # cross product magnitude is twice the face area, so summing the raw
    # cross products area-weights the average for free
    normals = np.zeros_like(vertices)
    a, b, c = (vertices[faces[:, i]] for i in range(3))
    fn = np.cross(b - a, c - a)
    for i in range(3):
        np.add.at(normals, faces[:, i], fn)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.maximum(lens, 1e-30)


def _normalize(vertices: np.ndarray) -> np.ndarray:
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    center = (lo + hi) / 2.0
    shifted = vertices - center
    radius = np.linalg.norm(shifted, axis=1).max()
    if radius < 1e-12:
        raise MeshError("degenerate mesh: all vertices coincide")
    return shifted * (MESH_RADIUS / radius)


def load_mesh(path) -> Mesh:
    """Parse a triangle/quad OBJ with UVs into a normalized Mesh.

    Quads are split along the 0-2 diagonal.  Vertex normals come from the
    file when present, otherwise from the area-weighted face-normal average.
    """
    path = Path(path)
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    file_normals: list[list[float]] = []
    corners: list[tuple[int, int, int | None]] = []  # (vi, ti, ni) per corner
    face_sizes: list[int] = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            if tag == "v":
                if len(args) < 3:
                    raise MeshError("vertex needs 3 coordinates", lineno)
                positions.append([float(x) for x in args[:3]])
            elif tag == "vt":
                if len(args) < 2:
                    raise MeshError("texture coordinate needs 2 values", lineno)
                texcoords.append([float(x) for x in args[:2]])
            elif tag == "vn":
                if len(args) < 3:
                    raise MeshError("normal needs 3 components", lineno)
                file_normals.append([float(x) for x in args[:3]])
            elif tag == "f":
                if len(args) not in (3, 4):
                    raise MeshError(f"only triangle/quad faces supported, got {len(args)} corners", lineno)
                face = []
                for token in args:
                    fields = token.split("/")
                    try:
                        vi = int(fields[0])
                    except ValueError:
                        raise MeshError(f"bad face token {token!r}", lineno) from None
                    if vi == 0:
                        raise MeshError("OBJ indices are 1-based; index 0 is invalid", lineno)
                    if vi < 0:
                        raise MeshError("negative (relative) indices not supported", lineno)
                    ti = None
                    if len(fields) > 1 and fields[1]:
                        ti = int(fields[1])
                        if ti == 0:
                            raise MeshError("OBJ indices are 1-based; index 0 is invalid", lineno)
                    ni = None
                    if len(fields) > 2 and fields[2]:
                        ni = int(fields[2])
                    if ti is None:
                        raise MeshError("face corner has no UV; UVs are mandatory for texturing", lineno)
                    if vi > len(positions) or ti > len(texcoords):
                        raise MeshError(f"face references undefined element {token!r}", lineno)
                    face.append((vi - 1, ti - 1, (ni - 1) if ni is not None else None))
                tris = [face[:3]] if len(face) == 3 else [face[:3], [face[0], face[2], face[3]]]
                for tri in tris:
                    corners.extend(tri)
                    face_sizes.append(3)
            # other tags (mtllib, usemtl, o, g, s, ...) are ignored

    if not corners:
        raise MeshError(f"{path.name}: no faces found")

    vertices = _normalize(np.asarray(positions, dtype=np.float64))
    n_faces = len(face_sizes)
    faces = np.array([corners[3 * f + i][0] for f in range(n_faces) for i in range(3)],
                     dtype=np.int64).reshape(n_faces, 3)
    uv_arr = np.asarray(texcoords, dtype=np.float64)
    uvs = np.array([uv_arr[corners[3 * f + i][1]] for f in range(n_faces) for i in range(3)],
                   dtype=np.float64).reshape(n_faces, 3, 2)

    normal_ids = [c[2] for c in corners]
    if file_normals and all(ni is not None for ni in normal_ids):
        normals = np.zeros_like(vertices)
        fn = np.asarray(file_normals, dtype=np.float64)
        for corner, (vi, _, ni) in enumerate(corners):
            normals[vi] = fn[ni]
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.maximum(lens, 1e-30)
    else:
        normals = _area_weighted_vertex_normals(vertices, faces)

    return Mesh(vertices=vertices, faces=faces, normals=normals, uvs=uvs)


def save_obj(mesh: Mesh, path, mtl_name: str | None = None,
             material: str = "textailor_material") -> None:
    """Write the mesh back out with per-corner UVs and vertex normals."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        if mtl_name:
            fh.write(f"mtllib {mtl_name}\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.8f} {v[1]:.8f} {v[2]:.8f}\n")
        for f in range(mesh.n_faces):
            for c in range(3):
                u, vv = mesh.uvs[f, c]
                fh.write(f"vt {u:.8f} {vv:.8f}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]:.8f} {n[1]:.8f} {n[2]:.8f}\n")
        if mtl_name:
            fh.write(f"usemtl {material}\n")
        for f in range(mesh.n_faces):
            idx = [(mesh.faces[f, c] + 1, 3 * f + c + 1, mesh.faces[f, c] + 1) for c in range(3)]
            fh.write("f " + " ".join(f"{v}/{t}/{n}" for v, t, n in idx) + "\n")
