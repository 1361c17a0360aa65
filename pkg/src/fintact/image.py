"""Grayscale frame container, preprocessing, binarization, edge and blob extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import BadTarget, DegenerateHistogram, MultipleRegions, NoRegion


@dataclass(frozen=True)
class Frame:
    """8-bit grayscale image plus a monotonically increasing sequence number."""

    pixels: np.ndarray  # (H, W) uint8, read-only
    frame_id: int = 0

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.dtype != np.uint8 or px.ndim != 2:
            raise ValueError("Frame.pixels must be a 2D uint8 array")
        px = px.copy() if px.base is not None or px.flags.writeable else px
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Blob:
    """Connected component detection: area-weighted centroid, pixel count, bbox."""

    centroid: tuple  # (u, v), sub-pixel
    area: int
    bbox: tuple  # (u0, v0, w, h) integer rectangle

    def __post_init__(self):
        u0, v0, w, h = self.bbox
        cu, cv_ = self.centroid
        if self.area < 1:
            raise ValueError("blob area must be >= 1")
        if not (u0 - 0.5 <= cu <= u0 + w - 0.5 and v0 - 0.5 <= cv_ <= v0 + h - 0.5):
            raise ValueError("blob centroid outside bbox")


@dataclass(frozen=True)
class EdgePair:
    """Left/right silhouette boundary columns, one sample per occupied image row.

    `rows` holds the row (v) coordinates; `left_u`/`right_u` the boundary
    column per row, with left_u <= right_u everywhere.
    """

    rows: np.ndarray = field(repr=False)  # (R,) int
    left_u: np.ndarray = field(repr=False)  # (R,) float
    right_u: np.ndarray = field(repr=False)  # (R,) float

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=int)
        lu = np.asarray(self.left_u, dtype=float)
        ru = np.asarray(self.right_u, dtype=float)
        if not (len(r) == len(lu) == len(ru)) or len(r) < 2:
            raise ValueError("edge chains must share a length >= 2")
        if np.any(lu > ru):
            raise ValueError("left edge must not cross right edge")
        for a in (r, lu, ru):
            a.setflags(write=False)
        object.__setattr__(self, "rows", r)
        object.__setattr__(self, "left_u", lu)
        object.__setattr__(self, "right_u", ru)

    def __len__(self) -> int:
        return len(self.rows)


def preprocess(raw: Frame, target_width: int, flip_h: bool = False, flip_v: bool = False) -> Frame:
    """Aspect-preserving area-average downscale plus optional flips.

    target_width == raw.width with no flips returns a byte-identical frame.
    """
    if target_width < 16:
        raise BadTarget(f"target width {target_width} < 16")
    if target_width > raw.width:
        raise BadTarget(f"target width {target_width} exceeds source width {raw.width}")
    px = raw.pixels
    if target_width != raw.width:
        th = int(round(raw.height * target_width / raw.width))
        px = cv2.resize(px, (target_width, th), interpolation=cv2.INTER_AREA)
    if flip_h:
        px = px[:, ::-1]
    if flip_v:
        px = px[::-1, :]
    return Frame(pixels=np.ascontiguousarray(px), frame_id=raw.frame_id)


def average_frames(frames) -> Frame:
    """Pixelwise mean of same-sized frames; suppresses sensor noise in bursts."""
    frames = list(frames)
    if not frames:
        raise ValueError("cannot average zero frames")
    acc = np.zeros(frames[0].pixels.shape, dtype=np.float64)
    for f in frames:
        if f.pixels.shape != acc.shape:
            raise ValueError("frames differ in size")
        acc += f.pixels
    out = np.clip(np.round(acc / len(frames)), 0, 255).astype(np.uint8)
    return Frame(pixels=out, frame_id=frames[-1].frame_id)


def otsu_threshold(pixels: np.ndarray) -> int:
    """Otsu's threshold on an 8-bit image; foreground is intensity > t.

    Deterministic: the lowest maximizer of the between-class variance wins.
    """
    hist = np.bincount(pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    omega0 = np.cumsum(hist) / total
    mu = np.cumsum(hist * np.arange(256)) / total
    mu_t = mu[-1]
    omega1 = 1.0 - omega0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_t * omega0 - mu) ** 2 / (omega0 * omega1)
    sigma_b[~np.isfinite(sigma_b)] = -1.0
    return int(np.argmax(sigma_b))


def binarize(f: Frame) -> Frame:
    """Otsu-threshold binarization to {0, 255}."""
    px = f.pixels
    if px.min() == px.max():
        raise DegenerateHistogram("constant frame has no threshold")
    t = otsu_threshold(px)
    out = np.where(px > t, 255, 0).astype(np.uint8)
    return Frame(pixels=out, frame_id=f.frame_id)


def extract_silhouette_edges(binary: Frame, min_height_frac: float = 0.5) -> EdgePair:
    """Left and right boundary chains of the single large foreground region.

    The foreground must form one connected region spanning at least
    `min_height_frac` of the image height; smaller components (e.g. marker
    dots) are ignored.
    """
    px = binary.pixels
    vals = np.unique(px)
    if not np.all(np.isin(vals, (0, 255))):
        raise ValueError("extract_silhouette_edges expects a binary {0,255} frame")
    n, labels, stats, _ = cv2.connectedComponentsWithStats((px > 0).astype(np.uint8), connectivity=8)
    min_h = binary.height * min_height_frac
    large = [i for i in range(1, n) if stats[i, cv2.CC_STAT_HEIGHT] >= min_h]
    if not large:
        raise NoRegion("no foreground region spans enough image height")
    if len(large) > 1:
        raise MultipleRegions(f"{len(large)} large connected components")
    mask = labels == large[0]
    occupied = mask.any(axis=1)
    rows = np.flatnonzero(occupied)
    left = np.argmax(mask[rows], axis=1)
    right = binary.width - 1 - np.argmax(mask[rows, ::-1], axis=1)
    return EdgePair(rows=rows, left_u=left.astype(float), right_u=right.astype(float))


def refine_edges_subpixel(edges: EdgePair, gray: Frame, probe: int = 4) -> EdgePair:
    """Sub-pixel silhouette edges from the intensity ramp of the gray frame.

    Boundary pixels of an anti-aliased silhouette carry an intensity
    proportional to their coverage; the covered fraction of the boundary
    pixel and its outer neighbor locate the edge to a fraction of a pixel.
    `probe` is how far inside the face the full interior intensity is read.
    """
    px = gray.pixels.astype(np.float64)
    h, w = px.shape
    rows = edges.rows
    li = edges.left_u.astype(int)
    ri = edges.right_u.astype(int)

    def coverage(cols, inner):
        cols = np.clip(cols, 0, w - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = px[rows, cols] / inner
        return np.clip(np.where(np.isfinite(a), a, 0.0), 0.0, 1.0)

    inner_l = px[rows, np.clip(li + probe, 0, w - 1)]
    inner_r = px[rows, np.clip(ri - probe, 0, w - 1)]
    usable = (inner_l > 1.0) & (inner_r > 1.0)
    left = li + 0.5 - coverage(li, inner_l) - coverage(li - 1, inner_l)
    right = ri - 0.5 + coverage(ri, inner_r) + coverage(ri + 1, inner_r)
    left = np.where(usable, left, edges.left_u)
    right = np.where(usable, np.maximum(right, left + 1e-6), edges.right_u)
    return EdgePair(rows=rows, left_u=left, right_u=right)


def detect_blobs(f: Frame, intensity_range, area_range) -> list:
    """Connected components with intensity and area in range, row-major order.

    Centroids are area-weighted means of the component's pixel coordinates.
    """
    lo, hi = intensity_range
    amin, amax = area_range
    if lo > hi:
        raise ValueError("intensity range lo > hi")
    mask = ((f.pixels >= lo) & (f.pixels <= hi)).astype(np.uint8)
    n, _, stats, centroids = cv2.connectedComponentsWithStats(mask, connectivity=8)
    blobs = []
    for i in range(1, n):
        area = int(stats[i, cv2.CC_STAT_AREA])
        if not (amin <= area <= amax):
            continue
        bbox = (
            int(stats[i, cv2.CC_STAT_LEFT]),
            int(stats[i, cv2.CC_STAT_TOP]),
            int(stats[i, cv2.CC_STAT_WIDTH]),
            int(stats[i, cv2.CC_STAT_HEIGHT]),
        )
        blobs.append(Blob(centroid=(float(centroids[i, 0]), float(centroids[i, 1])), area=area, bbox=bbox))
    blobs.sort(key=lambda b: (b.centroid[1], b.centroid[0]))
    return blobs
