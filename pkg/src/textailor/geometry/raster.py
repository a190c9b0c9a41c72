"""Z-buffered perspective-correct software rasterizer.

Depth is the distance along the camera forward axis (view-space |z|), which
is constant across a fronto-parallel plane and equals the clip-space w of
the projection used here.  Faces are culled when their screen winding says
they face away; OBJ counter-clockwise winding is treated as front-facing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from textailor.geometry.camera import Camera, NEAR
from textailor.geometry.mesh import Mesh

__all__ = ["RasterBuffers", "rasterize", "render_textured"]

NO_FACE = -1


@dataclass
class RasterBuffers:
    """Per-pixel hit data for one view.

    depth:        (H, W) forward-axis distance, +inf where nothing was hit.
    face_id:      (H, W) face index or NO_FACE.
    bary:         (H, W, 3) perspective-correct barycentrics (zeros on background).
    pixel_normal: (H, W, 3) interpolated unit normals (zeros on background).
    uv:           (H, W, 2) interpolated texture coordinates.
    position:     (H, W, 3) interpolated world positions.
    """

    depth: np.ndarray
    face_id: np.ndarray
    bary: np.ndarray
    pixel_normal: np.ndarray
    uv: np.ndarray
    position: np.ndarray

    @property
    def foreground(self) -> np.ndarray:
        return self.face_id != NO_FACE


def _project_vertices(mesh: Mesh, cam: Camera):
    n = len(mesh.vertices)
    hom = np.concatenate([mesh.vertices, np.ones((n, 1))], axis=1)
    clip = hom @ (cam.projection @ cam.view).T
    w = clip[:, 3]
    safe_w = np.where(np.abs(w) < 1e-12, 1e-12, w)
    ndc = clip[:, :3] / safe_w[:, None]
    width, height = cam.resolution
    sx = (ndc[:, 0] * 0.5 + 0.5) * width
    sy = (0.5 - ndc[:, 1] * 0.5) * height
    return sx, sy, w


def rasterize(mesh: Mesh, cam: Camera) -> RasterBuffers:
    """Rasterize with back-face culling and a strict-less z test.

    The z test keeps the first face on exact depth ties, so output is
    deterministic in face order.  Faces crossing the near plane are skipped
    (normalized meshes and outside cameras never produce them).
    """
    width, height = cam.resolution
    depth = np.full((height, width), np.inf)
    face_id = np.full((height, width), NO_FACE, dtype=np.int64)
    bary = np.zeros((height, width, 3))

    sx, sy, w = _project_vertices(mesh, cam)

    for f in range(mesh.n_faces):
        i0, i1, i2 = mesh.faces[f]
        if w[i0] <= NEAR or w[i1] <= NEAR or w[i2] <= NEAR:
            continue
        x0, y0, x1, y1, x2, y2 = sx[i0], sy[i0], sx[i1], sy[i1], sx[i2], sy[i2]
        # screen y grows downward, so front faces (CCW in world) have
        # negative doubled area here
        area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area2 >= -1e-12:
            continue

        xa = max(int(np.floor(min(x0, x1, x2))), 0)
        xb = min(int(np.ceil(max(x0, x1, x2))), width - 1)
        ya = max(int(np.floor(min(y0, y1, y2))), 0)
        yb = min(int(np.ceil(max(y0, y1, y2))), height - 1)
        if xa > xb or ya > yb:
            continue

        px = np.arange(xa, xb + 1) + 0.5
        py = np.arange(ya, yb + 1) + 0.5
        gx, gy = np.meshgrid(px, py)

        e0 = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        e1 = (x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)
        e2 = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
        b0, b1, b2 = e0 / area2, e1 / area2, e2 / area2
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not inside.any():
            continue

        bw0, bw1, bw2 = b0 / w[i0], b1 / w[i1], b2 / w[i2]
        denom = bw0 + bw1 + bw2
        pix_depth = 1.0 / denom

        tile_depth = depth[ya:yb + 1, xa:xb + 1]
        closer = inside & (pix_depth < tile_depth)
        if not closer.any():
            continue
        tile_depth[closer] = pix_depth[closer]
        face_id[ya:yb + 1, xa:xb + 1][closer] = f
        tile_bary = bary[ya:yb + 1, xa:xb + 1]
        persp = np.stack([bw0 / denom, bw1 / denom, bw2 / denom], axis=-1)
        tile_bary[closer] = persp[closer]

    pixel_normal = np.zeros((height, width, 3))
    uv = np.zeros((height, width, 2))
    position = np.zeros((height, width, 3))
    fg = face_id != NO_FACE
    if fg.any():
        fids = face_id[fg]
        b = bary[fg]
        corners = mesh.faces[fids]
        n = (mesh.normals[corners] * b[:, :, None]).sum(axis=1)
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-30)
        pixel_normal[fg] = n
        uv[fg] = (mesh.uvs[fids] * b[:, :, None]).sum(axis=1)
        position[fg] = (mesh.vertices[corners] * b[:, :, None]).sum(axis=1)

    return RasterBuffers(depth=depth, face_id=face_id, bary=bary,
                         pixel_normal=pixel_normal, uv=uv, position=position)


def render_textured(mesh: Mesh, atlas, cam: Camera,
                    bg=(0.2, 0.2, 0.2), buffers: RasterBuffers | None = None) -> np.ndarray:
    """Albedo render: nearest-texel atlas lookup per foreground pixel.

    Unpainted texels show the atlas sentinel color; background pixels show
    ``bg``.  Returns an (H, W, 3) float image in [0, 1].
    """
    if buffers is None:
        buffers = rasterize(mesh, cam)
    height, width = buffers.depth.shape
    img = np.empty((height, width, 3))
    img[:] = np.asarray(bg, dtype=np.float64)
    fg = buffers.foreground
    if fg.any():
        rows, cols = atlas.texel_of(buffers.uv[fg])
        colors = atlas.texels[rows, cols].copy()
        unpainted = ~atlas.painted[rows, cols]
        colors[unpainted] = atlas.sentinel
        img[fg] = colors
    return img
