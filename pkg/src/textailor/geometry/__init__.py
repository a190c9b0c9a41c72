"""Mesh ingestion, spherical cameras, and software rasterization."""

from textailor.geometry.mesh import Mesh, MeshError, load_mesh, MESH_RADIUS
from textailor.geometry.camera import Camera, Viewpoint, viewpoint_to_camera
from textailor.geometry.raster import RasterBuffers, rasterize, render_textured

__all__ = [
    "Mesh",
    "MeshError",
    "load_mesh",
    "MESH_RADIUS",
    "Camera",
    "Viewpoint",
    "viewpoint_to_camera",
    "RasterBuffers",
    "rasterize",
    "render_textured",
]
