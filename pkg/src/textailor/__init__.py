"""textailor: paints an untextured mesh view by view with a depth-conditioned
diffusion denoiser, using resampling inpainting and adaptive view scheduling."""

__version__ = "0.1.0"

from textailor.schedule import NoiseSchedule, make_schedule
from textailor.geometry import Mesh, Viewpoint, Camera, load_mesh, viewpoint_to_camera

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "Mesh",
    "Viewpoint",
    "Camera",
    "load_mesh",
    "viewpoint_to_camera",
    "__version__",
]
