"""Global deformation: view-face reconstruction from silhouette edges.

Each image row crossing the finger sees the two contact-face edges at
columns uL, uR. Corresponding edge points share the row and the depth,
and their 3D distance equals the finger width W, which fixes the depth
per row in closed form:

    z = W * fx / (uR - uL)

Edge 3D points follow from back-projection, interior points by linear
interpolation in 3D. The locally undeformed face (LUF) is the outer
contact surface under pure bending: the view face pushed along +z by
t0 = tv / cos(theta), with theta the local incline of the face.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateWidth, ExtremeIncline, InsufficientRows
from .geometry import CameraIntrinsics
from .image import EdgePair

MIN_COS_INCLINE = 0.2  # beyond this the layer offset would exceed 5*tv

FACE_NAMES = ("contact", "back", "side_left", "side_right")

# Image-plane directions a press on each face drives the markers toward;
# used as the classification normals (unit vectors, camera frame).
DEFAULT_FACE_NORMALS = {
    "contact": (0.0, 1.0, 0.0),
    "back": (0.0, -1.0, 0.0),
    "side_left": (1.0, 0.0, 0.0),
    "side_right": (-1.0, 0.0, 0.0),
}


@dataclass(frozen=True)
class FingerConfig:
    """Physical finger parameters. Millimeters throughout."""

    width_mm: float = 25.0
    layer_thickness_mm: float = 1.5
    length_mm: float = 60.0
    markers_per_side: int = 6
    face_normals: dict = field(default_factory=lambda: dict(DEFAULT_FACE_NORMALS))

    def __post_init__(self):
        if self.width_mm <= 0 or self.layer_thickness_mm <= 0 or self.length_mm <= 0:
            raise ConfigError("finger dimensions must be positive")
        normals = {}
        for name in FACE_NAMES:
            if name not in self.face_normals:
                raise ConfigError(f"missing face normal: {name}")
            n = np.asarray(self.face_normals[name], dtype=float)
            if abs(np.linalg.norm(n) - 1.0) > 1e-9:
                raise ConfigError(f"face normal {name} is not unit length")
            n.setflags(write=False)
            normals[name] = n
        object.__setattr__(self, "face_normals", normals)

    def to_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "width_mm": self.width_mm,
                    "layer_thickness_mm": self.layer_thickness_mm,
                    "length_mm": self.length_mm,
                    "markers_per_side": self.markers_per_side,
                    "face_normals": {k: list(v) for k, v in self.face_normals.items()},
                },
                indent=2,
            )
        )

    @classmethod
    def from_json(cls, path) -> "FingerConfig":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, ValueError, TypeError) as e:
            raise ConfigError(f"cannot load finger config from {path}: {e}") from e


@dataclass(frozen=True)
class SurfaceCloud:
    """Grid of camera-frame points aligned to the pixel lattice.

    Cell (r, c) corresponds to pixel (u0 + c, v0 + r); invalid cells are
    outside the reconstructed face.
    """

    points: np.ndarray = field(repr=False)  # (R, C, 3) float64 mm
    valid: np.ndarray = field(repr=False)  # (R, C) bool
    origin: tuple = (0, 0)  # (u0, v0)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        val = np.asarray(self.valid, dtype=bool)
        if pts.shape[:2] != val.shape or pts.shape[-1] != 3:
            raise ValueError("points and valid mask shapes disagree")
        pts.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "valid", val)

    @property
    def shape(self) -> tuple:
        return self.valid.shape

    def aligned_with(self, other) -> bool:
        return self.shape == other.shape and tuple(self.origin) == tuple(other.origin)


@dataclass(frozen=True)
class InclineProfile:
    """Depth-vs-length polynomial of the face edge and the derived incline angles."""

    poly: np.polynomial.Polynomial = field(repr=False)
    theta: np.ndarray = field(repr=False)  # (R,) radians, one per grid row
    v0: int = 0

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        if np.any(np.abs(th) >= np.pi / 2):
            raise ValueError("incline angle must stay below 90 degrees")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)


def fill_edge_gaps(edges: EdgePair) -> EdgePair:
    """Interpolate edge columns over missing rows so every row has a sample."""
    rows = edges.rows
    full = np.arange(rows[0], rows[-1] + 1)
    if len(full) == len(rows):
        return edges
    left = np.interp(full, rows, edges.left_u)
    right = np.interp(full, rows, edges.right_u)
    return EdgePair(rows=full, left_u=left, right_u=right)


def solve_edge_depth(p1q, p2q, k: CameraIntrinsics, width_mm: float) -> float:
    """Depth shared by two corresponding edge pixels on the same image row."""
    p1q = np.asarray(p1q, dtype=float)
    p2q = np.asarray(p2q, dtype=float)
    if p1q[1] != p2q[1]:
        raise DegenerateWidth("edge points must share the row coordinate")
    gap = abs(p1q[0] - p2q[0])
    if gap < 1.0:
        raise DegenerateWidth(f"edge gap {gap:.3f} px is below 1 px")
    return width_mm * k.fx / gap


def _edge_depths(edges: EdgePair, k: CameraIntrinsics, width_mm: float) -> np.ndarray:
    gap = edges.right_u - edges.left_u
    if np.any(gap < 1.0):
        raise DegenerateWidth("edge gap below 1 px")
    return width_mm * k.fx / gap


def reconstruct_view_face(edges: EdgePair, k: CameraIntrinsics, cfg: FingerConfig) -> SurfaceCloud:
    """3D view face from the silhouette edges and the width constraint."""
    edges = fill_edge_gaps(edges)
    z = _edge_depths(edges, k, cfg.width_mm)
    rows = edges.rows
    dy = (rows - k.cy) / k.fy
    pl = np.stack([(edges.left_u - k.cx) / k.fx * z, dy * z, z], axis=1)
    pr = np.stack([(edges.right_u - k.cx) / k.fx * z, dy * z, z], axis=1)

    u0 = int(np.floor(edges.left_u.min()))
    u1 = int(np.ceil(edges.right_u.max()))
    cols = np.arange(u0, u1 + 1)
    # fraction along the row between the two edge points; same z everywhere
    span = (edges.right_u - edges.left_u)[:, None]
    t = (cols[None, :] - edges.left_u[:, None]) / span
    valid = (t >= 0.0) & (t <= 1.0)
    pts = pl[:, None, :] + t[:, :, None] * (pr - pl)[:, None, :]
    pts[~valid] = 0.0
    return SurfaceCloud(points=pts, valid=valid, origin=(u0, int(rows[0])))


def fit_incline_profile(edges: EdgePair, k: CameraIntrinsics, cfg: FingerConfig, degree: int = 4) -> InclineProfile:
    """Polynomial fit of edge depth against length position; theta = atan(dz/ds)."""
    edges = fill_edge_gaps(edges)
    if len(edges) < degree + 1:
        raise InsufficientRows(f"{len(edges)} rows for a degree-{degree} fit")
    z = _edge_depths(edges, k, cfg.width_mm)
    s = z * (edges.rows - k.cy) / k.fy  # 3D coordinate along the finger length
    poly = np.polynomial.Polynomial.fit(s, z, degree)
    theta = np.arctan(poly.deriv()(s))
    return InclineProfile(poly=poly, theta=theta, v0=int(edges.rows[0]))


def to_locally_undeformed_face(vf: SurfaceCloud, incline: InclineProfile, cfg: FingerConfig) -> SurfaceCloud:
    """Offset the view face along +z by the layer thickness over cos(incline)."""
    if len(incline.theta) != vf.shape[0] or incline.v0 != vf.origin[1]:
        raise ValueError("incline profile does not align with the cloud grid")
    cos_t = np.cos(incline.theta)
    if np.any(cos_t[vf.valid.any(axis=1)] < MIN_COS_INCLINE):
        raise ExtremeIncline("incline too steep for the layer-offset model")
    pts = vf.points.copy()
    pts[..., 2] += (cfg.layer_thickness_mm / cos_t)[:, None]
    return SurfaceCloud(points=pts, valid=vf.valid, origin=vf.origin)
