"""Local contact geometry: normalized brightness difference to press depth.

The live frame is compared against a dynamically retrieved contact-free
reference frame with matching global deformation; the normalized
difference (ref - live) / ref feeds a calibrated polynomial mapping to
indentation depth, which is subtracted from the locally undeformed face
along -z to yield the contact-face cloud.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridMismatch, SizeMismatch
from .global_recon import SurfaceCloud
from .image import Frame

MIN_REF_INTENSITY = 8  # reference pixels darker than this are unusable
DEFAULT_CONTACT_THRESHOLD = 0.04  # ~3x the noise-floor brightness ratio at sigma=2


@dataclass(frozen=True)
class MappingPolynomial:
    """Polynomial mapping normalized brightness difference to press depth (mm).

    Coefficients are ascending powers; `domain` is the input range the
    calibration samples covered. A well-calibrated mapping has a near-zero
    constant term and is strictly increasing on its domain.
    """

    coeffs: np.ndarray = field(repr=False)  # ascending powers
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or len(c) < 2:
            raise ConfigError("mapping polynomial needs at least two coefficients")
        lo, hi = self.domain
        if not (0.0 <= lo < hi):
            raise ConfigError(f"bad mapping domain: {self.domain}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def constant_term(self) -> float:
        return float(self.coeffs[0])

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.domain[0], self.domain[1])
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def is_increasing(self, n: int = 100) -> bool:
        grid = np.linspace(self.domain[0], self.domain[1], n)
        vals = np.polynomial.polynomial.polyval(grid, self.coeffs)
        return bool(np.all(np.diff(vals) > 0))

    def to_json(self, path, extra: dict | None = None) -> None:
        doc = {
            "coeffs": [float(c) for c in self.coeffs],
            "domain": [float(self.domain[0]), float(self.domain[1])],
            "degree": self.degree,
        }
        if extra:
            doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def from_json(cls, path) -> "MappingPolynomial":
        try:
            raw = json.loads(Path(path).read_text())
            return cls(coeffs=np.array(raw["coeffs"]), domain=tuple(raw["domain"]))
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot load mapping from {path}: {e}") from e


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel press depth (mm) over a face-aligned grid with a contact mask."""

    depth: np.ndarray = field(repr=False)  # (R, C) float64, >= 0
    mask: np.ndarray = field(repr=False)  # (R, C) bool, True where in contact
    origin: tuple = (0, 0)
    saturated: np.ndarray | None = field(default=None, repr=False)  # inputs past the domain

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if d.shape != m.shape:
            raise ValueError("depth and mask shapes disagree")
        if np.any(d[~m] != 0.0):
            raise ValueError("masked-out pixels must carry zero depth")
        d.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "mask", m)
        if self.saturated is not None:
            s = np.asarray(self.saturated, dtype=bool)
            s.setflags(write=False)
            object.__setattr__(self, "saturated", s)

    @property
    def shape(self) -> tuple:
        return self.depth.shape


@dataclass(frozen=True)
class DiffField:
    """Normalized brightness difference over a pixel window, with validity mask."""

    values: np.ndarray = field(repr=False)  # (R, C) float64 in [0, 1]
    valid: np.ndarray = field(repr=False)  # (R, C) bool
    origin: tuple = (0, 0)

    @property
    def shape(self) -> tuple:
        return self.values.shape


def normalized_diff(live: Frame, ref: Frame, window=None) -> DiffField:
    """Per-pixel (ref - live) / ref, clamped to [0, 1].

    `window` is ((u0, v0), (rows, cols)); omitted means the whole frame.
    Pixels whose reference intensity is below MIN_REF_INTENSITY are
    masked invalid rather than divided through.
    """
    if live.pixels.shape != ref.pixels.shape:
        raise SizeMismatch(f"live {live.pixels.shape} vs ref {ref.pixels.shape}")
    if window is None:
        (u0, v0), (rows, cols) = (0, 0), live.pixels.shape
    else:
        (u0, v0), (rows, cols) = window
        if v0 < 0 or u0 < 0 or v0 + rows > live.height or u0 + cols > live.width:
            raise SizeMismatch("window exceeds frame bounds")
    lv = live.pixels[v0 : v0 + rows, u0 : u0 + cols].astype(np.float64)
    rf = ref.pixels[v0 : v0 + rows, u0 : u0 + cols].astype(np.float64)
    valid = rf >= MIN_REF_INTENSITY
    out = np.zeros_like(rf)
    np.divide(rf - lv, rf, out=out, where=valid)
    np.clip(out, 0.0, 1.0, out=out)
    out[~valid] = 0.0
    return DiffField(values=out, valid=valid, origin=(u0, v0))


def apply_mapping(
    field_: DiffField,
    mapping: MappingPolynomial,
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD,
) -> DepthMap:
    """Map the difference field to press depth where it exceeds the threshold."""
    vals = field_.values
    mask = field_.valid & (vals >= contact_threshold)
    saturated = mask & (vals > mapping.domain[1])
    depth = np.zeros_like(vals)
    if mask.any():
        depth[mask] = np.maximum(0.0, mapping(vals[mask]))
    return DepthMap(depth=depth, mask=mask & (depth > 0), origin=field_.origin, saturated=saturated)


def compose_contact_cloud(luf: SurfaceCloud, depth: DepthMap) -> SurfaceCloud:
    """Subtract (0, 0, d) from the locally undeformed face inside the contact mask."""
    if depth.shape != luf.shape or tuple(depth.origin) != tuple(luf.origin):
        raise GridMismatch(
            f"depth grid {depth.shape}@{depth.origin} vs cloud {luf.shape}@{luf.origin}"
        )
    pts = luf.points.copy()
    pts[..., 2] -= np.where(depth.mask, depth.depth, 0.0)
    return SurfaceCloud(points=pts, valid=luf.valid, origin=luf.origin)
