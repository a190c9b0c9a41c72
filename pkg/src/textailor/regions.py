"""Region classification: keep / new / update / ignore per pixel, plus the
latent-resolution inpainting mask.

The unknown set for inpainting is NEW plus IGNORE.  UPDATE pixels count as
known during sampling and are only re-projected afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from textailor.atlas import TextureAtlas, view_cosines

__all__ = ["Label", "RegionMasks", "classify_regions", "to_latent_mask",
           "GRAZING_COS", "UPDATE_MARGIN"]

GRAZING_COS = 0.1     # below this view cosine a pixel is IGNORE
UPDATE_MARGIN = 0.1   # re-paint only from an angle better by at least this


class Label(IntEnum):
    BACKGROUND = 0
    KEEP = 1
    NEW = 2
    UPDATE = 3
    IGNORE = 4


LABEL_COLORS = {
    Label.BACKGROUND: (0, 0, 0),
    Label.KEEP: (80, 160, 80),
    Label.NEW: (230, 90, 90),
    Label.UPDATE: (90, 120, 230),
    Label.IGNORE: (150, 150, 150),
}


@dataclass
class RegionMasks:
    """Per-pixel labels for one view plus the latent unknown mask."""

    label: np.ndarray        # (H, W) of Label values
    latent_mask: np.ndarray  # (h, w) uint8, 1 = unknown

    def counts(self) -> dict:
        return {lab.name.lower(): int((self.label == lab).sum()) for lab in Label}

    def to_color_image(self) -> np.ndarray:
        """Color-coded uint8 debug image of the label map."""
        img = np.zeros(self.label.shape + (3,), dtype=np.uint8)
        for lab, color in LABEL_COLORS.items():
            img[self.label == lab] = color
        return img


def classify_regions(buffers, atlas: TextureAtlas, cam, update_margin: float = UPDATE_MARGIN,
                     latent_factor: int = 4) -> RegionMasks:
    """Label every pixel of the view against the current atlas state.

    Order of precedence: background, grazing (IGNORE), unpainted texel (NEW),
    painted and seen better than the cached best cosine by the margin
    (UPDATE), painted otherwise (KEEP).
    """
    label = np.full(buffers.depth.shape, Label.BACKGROUND, dtype=np.int64)
    fg = buffers.foreground
    if fg.any():
        cos = view_cosines(buffers, cam)[fg]
        rows, cols = atlas.texel_of(buffers.uv[fg])
        painted = atlas.painted[rows, cols]
        best = atlas.best_cos[rows, cols]

        lab = np.full(cos.shape, Label.KEEP, dtype=np.int64)
        lab[painted & (cos >= best + update_margin)] = Label.UPDATE
        lab[~painted] = Label.NEW
        lab[cos < GRAZING_COS] = Label.IGNORE
        label[fg] = lab

    return RegionMasks(label=label, latent_mask=to_latent_mask(label, latent_factor))


def to_latent_mask(labels: np.ndarray, factor: int) -> np.ndarray:
    """Downsample labels to the latent grid: cell is 1 iff it covers any
    NEW or IGNORE pixel (conservative any-unknown rule)."""
    labels = np.asarray(labels)
    height, width = labels.shape
    if height % factor or width % factor:
        raise ValueError(f"image size {labels.shape} not divisible by factor {factor}")
    unknown = (labels == Label.NEW) | (labels == Label.IGNORE)
    blocks = unknown.reshape(height // factor, factor, width // factor, factor)
    return blocks.any(axis=(1, 3)).astype(np.uint8)
