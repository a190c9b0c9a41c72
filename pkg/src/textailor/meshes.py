"""Procedural OBJ fixtures: parametric solids with packed per-face UV islands.

Every face gets its own triangular island in UV space (two per grid cell,
separated by margins), so no two faces share texels.  Wasteful but exact,
which is what desk-scale verification wants.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["pack_uv_islands", "write_obj", "triangle", "quad", "two_quads",
           "cube", "tetrahedron", "octahedron", "icosahedron", "icosphere",
           "cylinder", "cone", "torus", "FIXTURES"]


def pack_uv_islands(n_faces: int) -> np.ndarray:
    """(F, 3, 2) UV triangles, two right triangles per grid cell."""
    cells = (n_faces + 1) // 2
    grid = math.ceil(math.sqrt(cells))
    cell = 1.0 / grid
    margin = 0.10 * cell
    gap = 0.08 * cell
    uvs = np.empty((n_faces, 3, 2))
    for f in range(n_faces):
        cx = (f // 2) % grid * cell
        cy = (f // 2) // grid * cell
        if f % 2 == 0:
            uvs[f] = [(cx + margin, cy + margin),
                      (cx + cell - margin - gap, cy + margin),
                      (cx + margin, cy + cell - margin - gap)]
        else:
            uvs[f] = [(cx + cell - margin, cy + cell - margin),
                      (cx + margin + gap, cy + cell - margin),
                      (cx + cell - margin, cy + margin + gap)]
    return uvs


def write_obj(path, verts: np.ndarray, faces: np.ndarray,
              uvs: np.ndarray | None = None, normals: np.ndarray | None = None) -> Path:
    """Write a triangle mesh as OBJ; UV islands are packed when not given."""
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if uvs is None:
        uvs = pack_uv_islands(len(faces))
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for v in verts:
            fh.write(f"v {v[0]:.8f} {v[1]:.8f} {v[2]:.8f}\n")
        for f in range(len(faces)):
            for c in range(3):
                fh.write(f"vt {uvs[f, c, 0]:.8f} {uvs[f, c, 1]:.8f}\n")
        if normals is not None:
            for n in normals:
                fh.write(f"vn {n[0]:.8f} {n[1]:.8f} {n[2]:.8f}\n")
        for f, face in enumerate(faces):
            if normals is not None:
                fh.write("f " + " ".join(f"{face[c]+1}/{3*f+c+1}/{face[c]+1}"
                                         for c in range(3)) + "\n")
            else:
                fh.write("f " + " ".join(f"{face[c]+1}/{3*f+c+1}" for c in range(3)) + "\n")
    return path


def triangle():
    verts = np.array([[-0.5, -0.4, 0.0], [0.5, -0.4, 0.0], [0.0, 0.6, 0.0]])
    return verts, np.array([[0, 1, 2]])


def quad():
    verts = np.array([[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0],
                      [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0]])
    return verts, np.array([[0, 1, 2], [0, 2, 3]])


def two_quads():
    """Two stacked quads; exercises depth resolution between faces."""
    verts = np.array([
        [-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0],
        [-0.3, -0.3, 0.2], [0.4, -0.3, 0.2], [0.4, 0.4, 0.2], [-0.3, 0.4, 0.2],
    ])
    faces = np.array([[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]])
    return verts, faces


def cube():
    verts = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)],
                     dtype=np.float64)
    quads = [
        (0, 1, 3, 2), (6, 7, 5, 4),   # -x, +x
        (0, 4, 5, 1), (2, 3, 7, 6),   # -y, +y
        (0, 2, 6, 4), (1, 5, 7, 3),   # -z, +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return verts, np.array(faces)


def cube_seamed():
    """Cube with duplicated vertices per face (flat normals, hard seams)."""
    verts, faces = [], []
    for axis in range(3):
        u_axis, v_axis = [i for i in range(3) if i != axis]
        # does unit(u) x unit(v) point along +axis?
        parity = 1.0 if (u_axis + 1) % 3 == v_axis and (v_axis + 1) % 3 == axis else -1.0
        for sign in (-1.0, 1.0):
            base = len(verts)
            order = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
            if parity * sign < 0:
                order.reverse()
            for du, dv in order:
                p = [0.0, 0.0, 0.0]
                p[axis] = sign
                p[u_axis] = float(du)
                p[v_axis] = float(dv)
                verts.append(p)
            faces.append([base, base + 1, base + 2])
            faces.append([base, base + 2, base + 3])
    return np.array(verts, dtype=np.float64), np.array(faces)


def tetrahedron():
    verts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return verts, faces


def octahedron():
    verts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                      [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    faces = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                      [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return verts, faces


def icosahedron():
    phi = (1 + math.sqrt(5)) / 2
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return verts, faces


def icosphere(subdivisions: int = 1):
    """Subdivided icosahedron projected to the unit sphere.

    20 * 4^subdivisions faces; vertex normals equal positions.
    """
    verts, faces = icosahedron()
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        new_faces = []
        verts_list = list(verts)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in edge_mid:
                m = verts_list[i] + verts_list[j]
                m = m / np.linalg.norm(m)
                edge_mid[key] = len(verts_list)
                verts_list.append(m)
            return edge_mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces)
    return verts, faces


def cylinder(segments: int = 12):
    top, bottom = [], []
    for k in range(segments):
        a = 2 * math.pi * k / segments
        top.append([math.cos(a), 1.0, math.sin(a)])
        bottom.append([math.cos(a), -1.0, math.sin(a)])
    verts = np.array(top + bottom + [[0, 1, 0], [0, -1, 0]], dtype=np.float64)
    tc, bc = 2 * segments, 2 * segments + 1
    faces = []
    for k in range(segments):
        k2 = (k + 1) % segments
        # side (outward), winding CCW seen from outside
        faces += [[k, k2, segments + k], [k2, segments + k2, segments + k]]
        faces += [[tc, k2, k]]                       # top cap
        faces += [[bc, segments + k, segments + k2]]  # bottom cap
    return verts, np.array(faces)


def cone(segments: int = 16):
    base = [[math.cos(2 * math.pi * k / segments), -0.8, math.sin(2 * math.pi * k / segments)]
            for k in range(segments)]
    verts = np.array(base + [[0, 1.0, 0], [0, -0.8, 0]], dtype=np.float64)
    apex, center = segments, segments + 1
    faces = []
    for k in range(segments):
        k2 = (k + 1) % segments
        faces += [[apex, k2, k], [center, k, k2]]
    return verts, np.array(faces)


def torus(major_segments: int = 12, minor_segments: int = 8,
          major_radius: float = 1.0, minor_radius: float = 0.4):
    verts = []
    for i in range(major_segments):
        a = 2 * math.pi * i / major_segments
        for j in range(minor_segments):
            b = 2 * math.pi * j / minor_segments
            r = major_radius + minor_radius * math.cos(b)
            verts.append([r * math.cos(a), minor_radius * math.sin(b), r * math.sin(a)])
    faces = []
    for i in range(major_segments):
        for j in range(minor_segments):
            a = i * minor_segments + j
            b = i * minor_segments + (j + 1) % minor_segments
            c = ((i + 1) % major_segments) * minor_segments + (j + 1) % minor_segments
            d = ((i + 1) % major_segments) * minor_segments + j
            faces += [[a, b, c], [a, c, d]]
    return np.array(verts, dtype=np.float64), np.array(faces)


FIXTURES = {
    "triangle": triangle,
    "quad": quad,
    "two_quads": two_quads,
    "cube": cube,
    "cube_seamed": cube_seamed,
    "tetrahedron": tetrahedron,
    "octahedron": octahedron,
    "icosahedron": icosahedron,
    "icosphere": lambda: icosphere(1),
    "cylinder": cylinder,
    "cone": cone,
    "torus": lambda: torus(10, 8),
}


def write_fixture(name: str, path, normals_from_position: bool = False) -> Path:
    """Generate a named fixture OBJ; sphere-like shapes can carry exact
    radial normals."""
    verts, faces = FIXTURES[name]()
    normals = None
    if normals_from_position:
        normals = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    return write_obj(path, verts, faces, normals=normals)
