"""Visuotactile sensing toolkit for compliant Fin Ray fingers.

Reconstructs global finger deformation and local contact geometry from
monocular grayscale images, detects omni-directional contacts, and
estimates contact force and in-hand object pose. A synthetic finger
renderer provides ground truth for verification.
"""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, backproject_ray, default_intrinsics, project, ray_sphere_intersect
from .global_recon import FingerConfig, SurfaceCloud
from .image import Frame
from .local_recon import DepthMap, MappingPolynomial
from .markers import MarkerLayout, MarkerSet
from .simulator import FingerState, Press, Renderer, SceneConfig

__all__ = [
    "CameraIntrinsics",
    "DepthMap",
    "FingerConfig",
    "FingerState",
    "Frame",
    "MappingPolynomial",
    "MarkerLayout",
    "MarkerSet",
    "Press",
    "Renderer",
    "SceneConfig",
    "SurfaceCloud",
    "backproject_ray",
    "default_intrinsics",
    "project",
    "ray_sphere_intersect",
]
