"""Spherical viewpoints and look-at-origin perspective cameras.

World conventions: right handed, Y up, azimuth 0 along +Z, azimuth measured
about the Y axis toward +X, elevation up from the horizontal plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Viewpoint", "Camera", "viewpoint_to_camera"]

DEFAULT_FOV_DEG = 45.0
NEAR = 0.05
FAR = 20.0


@dataclass(frozen=True)
class Viewpoint:
    """Spherical camera position (azimuth deg, elevation deg, radius)."""

    azimuth: float
    elevation: float
    radius: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            object.__setattr__(self, "azimuth", self.azimuth % 360.0)
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation must be in [-90, 90], got {self.elevation}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def position(self) -> np.ndarray:
        theta = np.deg2rad(self.azimuth)
        psi = np.deg2rad(self.elevation)
        return self.radius * np.array([
            np.cos(psi) * np.sin(theta),
            np.sin(psi),
            np.cos(psi) * np.cos(theta),
        ])


@dataclass(frozen=True)
class Camera:
    """Perspective camera looking at the origin."""

    position: np.ndarray
    view: np.ndarray        # 4x4 world -> camera, looking down -Z
    projection: np.ndarray  # 4x4 OpenGL-style perspective
    resolution: tuple[int, int]  # (W, H)
    fov_deg: float

    @property
    def forward(self) -> np.ndarray:
        return -self.view[2, :3]

    @property
    def right(self) -> np.ndarray:
        return self.view[0, :3]

    @property
    def up(self) -> np.ndarray:
        return self.view[1, :3]


def viewpoint_to_camera(v: Viewpoint, res: tuple[int, int] = (64, 64),
                        fov: float = DEFAULT_FOV_DEG) -> Camera:
    """Place a camera at the spherical viewpoint, aimed at the origin, Y up.

    The right vector has the closed form (cos theta, 0, -sin theta) for this
    look-at-origin geometry, which stays valid at the poles where a naive
    cross product with world-up degenerates.
    """
    eye = v.position()
    theta = np.deg2rad(v.azimuth)
    f = -eye / np.linalg.norm(eye)
    r = np.array([np.cos(theta), 0.0, -np.sin(theta)])
    u = np.cross(r, f)

    view = np.eye(4)
    view[0, :3], view[1, :3], view[2, :3] = r, u, -f
    view[:3, 3] = -view[:3, :3] @ eye

    w, h = res
    aspect = w / h
    g = 1.0 / np.tan(np.deg2rad(fov) / 2.0)
    proj = np.zeros((4, 4))
    proj[0, 0] = g / aspect
    proj[1, 1] = g
    proj[2, 2] = (FAR + NEAR) / (NEAR - FAR)
    proj[2, 3] = 2.0 * FAR * NEAR / (NEAR - FAR)
    proj[3, 2] = -1.0
    return Camera(position=eye, view=view, projection=proj, resolution=(w, h), fov_deg=fov)
