"""Pinhole projection, back-projection and ray/sphere primitives.

COORDINATE CONVENTIONS
======================
Camera frame (right-handed, standard computer vision):
  - Origin: camera optical center, fixed at (0, 0, 0).
  - x-axis: right in the image, millimeters.
  - y-axis: down in the image, millimeters.
  - z-axis: forward along the optical axis, millimeters. Visible points
    have z > 0.

Image frame:
  - u-axis: column index, right, pixels (sub-pixel values allowed).
  - v-axis: row index, down, pixels.

The finger is mounted so its length axis runs along v (rows) and its
width axis along u (columns); the two silhouette edges of the contact
face therefore appear as left/right pixel chains.

3D points and directions are plain numpy arrays of shape (3,) or (N, 3);
pixels are arrays of shape (2,) or (N, 2) ordered (u, v).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonPositiveDepth


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; fx, fy, cx, cy in pixels for a width x height image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError("principal point outside image bounds")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def scaled(self, width: int) -> "CameraIntrinsics":
        """Intrinsics for the same camera resampled to a new image width."""
        s = width / self.width
        return CameraIntrinsics(
            fx=self.fx * s,
            fy=self.fy * s,
            cx=self.cx * s,
            cy=self.cy * s,
            width=width,
            height=int(round(self.height * s)),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def from_json(cls, path) -> "CameraIntrinsics":
        try:
            raw = json.loads(Path(path).read_text())
            return cls(**raw)
        except (OSError, ValueError, TypeError) as e:
            raise ConfigError(f"cannot load intrinsics from {path}: {e}") from e


def default_intrinsics(width: int = 1920, height: int = 1080, hfov_deg: float = 85.0) -> CameraIntrinsics:
    """Square-pixel intrinsics derived from a horizontal field of view."""
    f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    return CameraIntrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def project(p, k: CameraIntrinsics):
    """Project camera-frame point(s) with z > 0 to pixel coordinates (u, v)."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("cannot project point with z <= 0")
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1)


def backproject_ray(q, k: CameraIntrinsics):
    """Ray direction(s) through pixel(s) q; the z component is exactly 1."""
    q = np.asarray(q, dtype=float)
    dx = (q[..., 0] - k.cx) / k.fx
    dy = (q[..., 1] - k.cy) / k.fy
    return np.stack([dx, dy, np.ones_like(dx)], axis=-1)


def ray_sphere_intersect(direction, center, radius: float):
    """Near intersection of the ray t*direction (t > 0, origin at camera) with a sphere.

    Returns the 3D hit point, or None on a miss. Tangency returns the
    single touch point.
    """
    d = np.asarray(direction, dtype=float)
    c = np.asarray(center, dtype=float)
    if radius <= 0:
        raise ConfigError("sphere radius must be positive")
    a = float(d @ d)
    if a == 0.0:
        raise ConfigError("ray direction must be nonzero")
    b = -2.0 * float(d @ c)
    cc = float(c @ c) - radius * radius
    disc = b * b - 4.0 * a * cc
    # absorb tiny negative discriminants so exact tangency survives rounding
    if disc < 0.0:
        if disc > -1e-9 * max(1.0, b * b):
            disc = 0.0
        else:
            return None
    sq = math.sqrt(disc)
    t0 = (-b - sq) / (2.0 * a)
    t1 = (-b + sq) / (2.0 * a)
    t = t0 if t0 > 0 else t1
    if t <= 0:
        return None
    return t * d


def ray_sphere_intersect_batch(directions, center, radius: float):
    """Vectorized near-hit depths for rays t*directions against one sphere.

    Returns an (N,) array of hit parameters t (NaN where the ray misses).
    """
    d = np.asarray(directions, dtype=float)
    c = np.asarray(center, dtype=float)
    a = np.einsum("ij,ij->i", d, d)
    b = -2.0 * d @ c
    cc = float(c @ c) - radius * radius
    disc = b * b - 4.0 * a * cc
    t = np.full(len(d), np.nan)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = (-b - sq) / (2.0 * a)
    t1 = (-b + sq) / (2.0 * a)
    near = np.where(t0 > 0, t0, t1)
    ok &= near > 0
    t[ok] = near[ok]
    return t
