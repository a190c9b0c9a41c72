"""UV texture atlas: back-projection of view images and coverage accounting.

The atlas stores, per texel, the color, a painted flag and the best view
cosine seen so far.  The best-cosine cache is the single source of truth for
"seen from a better angle": region classification reads it and projection
updates it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from textailor.geometry.mesh import Mesh

__all__ = ["TextureAtlas", "project", "coverage_stats", "referenced_texels"]

SENTINEL = (1.0, 0.0, 1.0)  # magenta: unpainted texel marker in renders


@dataclass
class TextureAtlas:
    """A x A RGB texture with painted flags and a best-view-cosine cache."""

    size: int = 256
    sentinel: tuple = SENTINEL
    texels: np.ndarray = field(init=False)
    painted: np.ndarray = field(init=False)
    best_cos: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.size < 1 or (self.size & (self.size - 1)) != 0:
            raise ValueError("atlas size must be a positive power of two")
        self.texels = np.zeros((self.size, self.size, 3))
        self.painted = np.zeros((self.size, self.size), dtype=bool)
        self.best_cos = np.zeros((self.size, self.size))

    def texel_of(self, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest texel (row, col) for UVs; v=0 maps to the bottom row."""
        uv = np.asarray(uv)
        cols = np.clip((uv[..., 0] * self.size).astype(np.int64), 0, self.size - 1)
        rows = np.clip(((1.0 - uv[..., 1]) * self.size).astype(np.int64), 0, self.size - 1)
        return rows, cols

    def copy(self) -> "TextureAtlas":
        out = TextureAtlas(size=self.size, sentinel=self.sentinel)
        out.texels = self.texels.copy()
        out.painted = self.painted.copy()
        out.best_cos = self.best_cos.copy()
        return out


def view_cosines(buffers, cam) -> np.ndarray:
    """|dot(view direction, pixel normal)| per pixel, 0 on background."""
    cos = np.zeros(buffers.depth.shape)
    fg = buffers.foreground
    if fg.any():
        to_pix = buffers.position[fg] - cam.position[None, :]
        to_pix /= np.maximum(np.linalg.norm(to_pix, axis=1, keepdims=True), 1e-30)
        cos[fg] = np.abs((to_pix * buffers.pixel_normal[fg]).sum(axis=1))
    return cos


def project(image: np.ndarray, buffers, labels, cam, atlas: TextureAtlas) -> TextureAtlas:
    """Scatter view pixels into the atlas, best view cosine winning.

    NEW pixels always write; UPDATE pixels overwrite only when their cosine
    beats the stored best.  When several pixels of this view hit one texel
    the highest cosine wins, earliest pixel in scan order on ties.  KEEP and
    IGNORE pixels never write.  Mutates and returns ``atlas``.
    """
    from textailor.regions import Label

    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != buffers.depth.shape:
        raise ValueError("image and raster buffers disagree on resolution")

    cos = view_cosines(buffers, cam)
    writable = (labels.label == Label.NEW) | (labels.label == Label.UPDATE)
    if not writable.any():
        return atlas

    rows, cols = atlas.texel_of(buffers.uv[writable])
    texel_flat = rows * atlas.size + cols
    pix_cos = cos[writable]
    pix_color = image[writable]
    pix_update = labels.label[writable] == Label.UPDATE

    # order by (texel, -cosine, scan order); scan order is the stable baseline
    order = np.lexsort((-pix_cos, texel_flat))
    texel_sorted = texel_flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = texel_sorted[1:] != texel_sorted[:-1]
    winners = order[first]

    w_rows, w_cols = rows[winners], cols[winners]
    w_cos = pix_cos[winners]
    w_color = pix_color[winners]
    w_update = pix_update[winners]

    stored = atlas.best_cos[w_rows, w_cols]
    write = np.where(w_update, w_cos > stored, True)

    w_rows, w_cols = w_rows[write], w_cols[write]
    atlas.texels[w_rows, w_cols] = w_color[write]
    atlas.painted[w_rows, w_cols] = True
    atlas.best_cos[w_rows, w_cols] = np.maximum(atlas.best_cos[w_rows, w_cols], w_cos[write])
    return atlas


def referenced_texels(mesh: Mesh, atlas_size: int) -> np.ndarray:
    """Boolean (A, A) map of texels whose center lies inside some face's UV
    triangle, tagged with face ownership via :func:`texel_faces`."""
    owner, _ = texel_faces(mesh, atlas_size)
    return owner >= 0


def texel_faces(mesh: Mesh, atlas_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize faces in UV space.

    Returns (owner, count): owner is the (A, A) face index per texel (-1
    where unreferenced, later faces win overlaps), count is the number of
    texels owned by each face.
    """
    a = atlas_size
    owner = np.full((a, a), -1, dtype=np.int64)
    for f in range(mesh.n_faces):
        uv = mesh.uvs[f]
        cols_f = uv[:, 0] * a
        rows_f = (1.0 - uv[:, 1]) * a
        xa = max(int(np.floor(cols_f.min())), 0)
        xb = min(int(np.ceil(cols_f.max())), a - 1)
        ya = max(int(np.floor(rows_f.min())), 0)
        yb = min(int(np.ceil(rows_f.max())), a - 1)
        if xa > xb or ya > yb:
            continue
        gx, gy = np.meshgrid(np.arange(xa, xb + 1) + 0.5, np.arange(ya, yb + 1) + 0.5)
        x0, y0 = cols_f[0], rows_f[0]
        x1, y1 = cols_f[1], rows_f[1]
        x2, y2 = cols_f[2], rows_f[2]
        area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area2) < 1e-12:
            continue
        e0 = ((x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)) / area2
        e1 = ((x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)) / area2
        e2 = ((x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)) / area2
        inside = (e0 >= 0) & (e1 >= 0) & (e2 >= 0)
        owner[ya:yb + 1, xa:xb + 1][inside] = f
    counts = np.bincount(owner[owner >= 0], minlength=mesh.n_faces)
    return owner, counts


def coverage_stats(atlas: TextureAtlas, mesh: Mesh) -> dict:
    """Painted fractions over referenced texels, plain and face-area weighted."""
    owner, counts = texel_faces(mesh, atlas.size)
    referenced = owner >= 0
    total = int(referenced.sum())
    if total == 0:
        return {"painted_texel_fraction": 0.0, "painted_area_fraction": 0.0}
    painted_ref = atlas.painted & referenced

    areas = mesh.face_areas()
    weights = np.zeros((atlas.size, atlas.size))
    owned = owner[referenced]
    weights[referenced] = areas[owned] / np.maximum(counts[owned], 1)

    texel_fraction = float(painted_ref.sum() / total)
    denom = float(weights.sum())
    area_fraction = float(weights[painted_ref].sum() / denom) if denom > 0 else 0.0
    return {"painted_texel_fraction": texel_fraction, "painted_area_fraction": area_fraction}
