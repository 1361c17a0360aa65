"""Ball-press calibration of the brightness-to-depth mapping.

A ball of known radius is pressed onto the contact face. The darkened
region is circle-fitted, the ball center is localized in 3D from the
tangency relation R / ||c|| = sin(angle between the center ray and the
rim ray), and every dark pixel yields a (brightness difference, depth)
pair by intersecting its ray with the ball. A polynomial fit of those
pairs is the mapping; since zero press depth must map to zero difference,
the fit's constant term is the self-calibration criterion: a small search
around the initial circle minimizes |constant term|.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .errors import (
    ConfigError,
    DegenerateBoundary,
    DegenerateTangent,
    IllConditioned,
    NoDarkRegion,
    NoIntersections,
)
from .geometry import CameraIntrinsics, backproject_ray, ray_sphere_intersect_batch
from .global_recon import SurfaceCloud
from .image import Frame
from .local_recon import DiffField, MappingPolynomial, normalized_diff

DEFAULT_DARK_THRESHOLD = 0.12  # crisp boundary for the circle fit
SAMPLE_THRESHOLD = 0.03  # faint-contact floor; anchors the fit near zero depth
MIN_DARK_AREA = 200
MIN_BOUNDARY_PIXELS = 8
MIN_SAMPLES = 50
MAX_EVALUATIONS = 200
SEARCH_LIMIT_PX = 3.0
INITIAL_STEP_PX = 0.5
MIN_STEP_PX = 0.02  # refined step floor of the coordinate descent
GOOD_CONSTANT_TERM = 0.05  # mm
STOP_CONSTANT_TERM = 0.04  # descent stops here; pushing to zero overfits geometry


@dataclass(frozen=True)
class BallSpec:
    radius_mm: float = 4.0

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ConfigError("ball radius must be positive")


@dataclass(frozen=True)
class CircleFit:
    """Image circle of the pressed region: center, radius, and a rim point."""

    center: tuple  # (cu, cv) px
    radius: float  # px
    edge_point: tuple  # (u, v) on the circle

    def __post_init__(self):
        off = np.hypot(
            self.edge_point[0] - self.center[0], self.edge_point[1] - self.center[1]
        )
        if abs(off - self.radius) > 0.5:
            raise ConfigError("edge point must lie on the circle (within 0.5 px)")

    def with_geometry(self, cu: float, cv: float, r: float) -> "CircleFit":
        return CircleFit(center=(cu, cv), radius=r, edge_point=(cu + r, cv))


@dataclass(frozen=True)
class CalibSample:
    """One (brightness difference, depth) pair.

    Depths may come out negative while the press circle estimate is off;
    the self-calibration drives the population toward non-negative depths
    with a near-zero mapping constant term.
    """

    delta_i: float  # normalized brightness difference
    depth_mm: float
    pixel: tuple  # (u, v)

    def __post_init__(self):
        if not (0.0 <= self.delta_i <= 1.0):
            raise ConfigError("calibration sample out of range")


def kasa_circle_fit(points: np.ndarray):
    """Algebraic least-squares circle through 2D points; returns (cu, cv, r).

    Robust to partial arcs, which is what a half-occluded press boundary
    provides.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegenerateBoundary("need at least 3 boundary points")
    a = np.column_stack([2.0 * pts[:, 0], 2.0 * pts[:, 1], np.ones(len(pts))])
    b = (pts**2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    cu, cv = sol[0], sol[1]
    r2 = sol[2] + cu**2 + cv**2
    if r2 <= 0:
        raise DegenerateBoundary("circle fit collapsed")
    return float(cu), float(cv), float(np.sqrt(r2))


def dark_region_mask(diff: DiffField, dark_threshold: float) -> np.ndarray:
    mask = (diff.values >= dark_threshold) & diff.valid
    if mask.sum() < MIN_DARK_AREA:
        raise NoDarkRegion(f"dark region of {int(mask.sum())} px is below {MIN_DARK_AREA}")
    n, labels, stats, _ = cv2.connectedComponentsWithStats(mask.astype(np.uint8), connectivity=8)
    biggest = 1 + int(np.argmax(stats[1:, cv2.CC_STAT_AREA]))
    region = labels == biggest
    if region.sum() < MIN_DARK_AREA:
        raise NoDarkRegion("largest dark component is too small")
    return region


def fit_dark_circle(live: Frame, ref: Frame, dark_threshold: float = DEFAULT_DARK_THRESHOLD) -> CircleFit:
    """Kasa circle fit to the boundary of the thresholded dark region.

    Boundary pixels bordering invalid pixels or the image frame are cut
    edges, not the press contour, and are excluded so a partially occluded
    circle is fit from its visible arc only.
    """
    diff = normalized_diff(live, ref)
    region = dark_region_mask(diff, dark_threshold)
    kernel = np.ones((3, 3), np.uint8)
    eroded = cv2.erode(region.astype(np.uint8), kernel).astype(bool)
    boundary = region & ~eroded
    occluders = ~diff.valid
    occluders[0, :] = occluders[-1, :] = occluders[:, 0] = occluders[:, -1] = True
    near_occluder = cv2.dilate(occluders.astype(np.uint8), kernel, iterations=2).astype(bool)
    arc = boundary & ~near_occluder
    if arc.sum() >= MIN_BOUNDARY_PIXELS:
        boundary = arc
    vs, us = np.nonzero(boundary)
    if len(us) < MIN_BOUNDARY_PIXELS:
        raise DegenerateBoundary(f"{len(us)} boundary pixels")
    cu, cv_, r = kasa_circle_fit(np.column_stack([us, vs]))
    # rim point: boundary pixel closest to the fitted circle
    resid = np.abs(np.hypot(us - cu, vs - cv_) - r)
    i = int(np.argmin(resid))
    edge = (float(us[i]), float(vs[i]))
    off = np.hypot(edge[0] - cu, edge[1] - cv_)
    if abs(off - r) > 0.5:
        # snap the rim point onto the circle along its radial direction
        edge = (cu + (edge[0] - cu) * r / off, cv_ + (edge[1] - cv_) * r / off)
    return CircleFit(center=(float(cu), float(cv_)), radius=float(r), edge_point=edge)


def locate_ball_center(fit: CircleFit, k: CameraIntrinsics, ball: BallSpec) -> np.ndarray:
    """3D ball center from the circle center ray and the rim tangency ray."""
    p_n = backproject_ray(np.asarray(fit.edge_point, dtype=float), k)
    c_n = backproject_ray(np.asarray(fit.center, dtype=float), k)
    cos_a = float(p_n @ c_n / (np.linalg.norm(p_n) * np.linalg.norm(c_n)))
    cos_a = min(1.0, max(-1.0, cos_a))
    angle = np.arccos(cos_a)
    if angle < 1e-4:
        raise DegenerateTangent("rim point coincides with the center ray")
    sin_a = np.sqrt(1.0 - cos_a**2)
    dist = ball.radius_mm / sin_a
    return (dist / np.linalg.norm(c_n)) * c_n


def collect_samples(
    live: Frame,
    ref: Frame,
    fit: CircleFit,
    center: np.ndarray,
    ball: BallSpec,
    luf: SurfaceCloud,
    k: CameraIntrinsics,
    sample_threshold: float = SAMPLE_THRESHOLD,
) -> list:
    """(brightness difference, depth) pairs over the pressed region.

    Sampling reaches down to faint contact (sample_threshold, well below
    the circle-fit threshold) so the mapping is anchored near zero depth.
    Each dark pixel's ray is intersected with the ball (near side); depth
    is the locally undeformed face's z minus the intersection z. Rays that
    miss the ball or fall outside the reconstructed face are skipped.
    """
    diff = normalized_diff(live, ref)
    region = dark_region_mask(diff, sample_threshold)
    vs, us = np.nonzero(region)
    u0, v0 = luf.origin
    rows = vs - v0
    cols = us - u0
    shape = luf.shape
    on_grid = (rows >= 0) & (rows < shape[0]) & (cols >= 0) & (cols < shape[1])
    on_grid[on_grid] &= luf.valid[rows[on_grid], cols[on_grid]]
    us, vs, rows, cols = us[on_grid], vs[on_grid], rows[on_grid], cols[on_grid]

    dirs = backproject_ray(np.column_stack([us, vs]).astype(float), k)
    t = ray_sphere_intersect_batch(dirs, center, ball.radius_mm)
    hit = np.isfinite(t)
    z_d = t[hit] * dirs[hit, 2]
    z_luf = luf.points[rows[hit], cols[hit], 2]
    depth = z_luf - z_d
    di = diff.values[vs[hit], us[hit]]
    samples = [
        CalibSample(delta_i=float(w), depth_mm=float(d), pixel=(float(u), float(v)))
        for w, d, u, v in zip(di, depth, us[hit], vs[hit])
    ]
    if len(samples) < MIN_SAMPLES:
        raise NoIntersections(f"only {len(samples)} usable calibration samples")
    return samples


def fit_mapping(samples, degree: int = 4) -> MappingPolynomial:
    """Least-squares polynomial depth = M(brightness difference).

    The fit is rejected and retried one degree lower if it is not strictly
    increasing on its domain.
    """
    if len(samples) < degree + 2:
        raise ConfigError(f"{len(samples)} samples cannot constrain degree {degree}")
    w = np.array([s.delta_i for s in samples])
    d = np.array([s.depth_mm for s in samples])
    if np.ptp(w) < 1e-6:
        raise IllConditioned("samples cover a single brightness value")
    if np.ptp(d) < 0.5:
        raise ConfigError("samples span less than 0.5 mm of depth")
    domain = (0.0, float(w.max()))
    for deg in range(degree, 0, -1):
        vander = np.vander((w - w.mean()) / np.std(w), deg + 1, increasing=True)
        sv = np.linalg.svd(vander, compute_uv=False)
        if sv[-1] == 0 or sv[0] / sv[-1] > 1e10:
            raise IllConditioned("normal system condition exceeds 1e10")
        coeffs = np.polynomial.polynomial.polyfit(w, d, deg)
        mapping = MappingPolynomial(coeffs=coeffs, domain=domain)
        if mapping.is_increasing():
            return mapping
    raise IllConditioned("no increasing polynomial fit at any degree")


def _evaluate_circle(params, live, ref, k, ball, luf, degree, sample_threshold):
    cu, cv_, r = params
    fit = CircleFit(center=(cu, cv_), radius=r, edge_point=(cu + r, cv_))
    center = locate_ball_center(fit, k, ball)
    samples = collect_samples(live, ref, fit, center, ball, luf, k, sample_threshold)
    mapping = fit_mapping(samples, degree)
    return fit, mapping, abs(mapping.constant_term)


def self_calibrate(
    live: Frame,
    ref: Frame,
    init: CircleFit,
    k: CameraIntrinsics,
    ball: BallSpec,
    luf: SurfaceCloud,
    degree: int = 4,
    sample_threshold: float = SAMPLE_THRESHOLD,
):
    """Refine the press circle by coordinate descent on |constant term|.

    Searches center and radius within +-3 px of the initial fit, starting
    at 0.5 px steps and halving on stagnation, with a hard budget of 200
    mapping evaluations. Returns (fit, mapping, info); info carries the
    evaluation count and a no-improvement warning flag.
    """
    x0 = np.array([init.center[0], init.center[1], init.radius], dtype=float)
    # the user-supplied circle is a hint; the data-driven refit is usually the
    # better seed when the hint is a few pixels off
    try:
        refit = fit_dark_circle(live, ref)
        x_refit = np.array([refit.center[0], refit.center[1], refit.radius])
        if np.linalg.norm(x_refit[:2] - x0[:2]) > 10.0:
            x_refit = None  # hint and data disagree wildly; trust the hint
    except (NoDarkRegion, DegenerateBoundary):
        x_refit = None
    cache = {}
    evals = 0

    def evaluate(params):
        nonlocal evals
        key = tuple(np.round(params, 6))
        if key not in cache:
            if evals >= MAX_EVALUATIONS:
                return None
            evals += 1
            try:
                cache[key] = _evaluate_circle(params, live, ref, k, ball, luf, degree, sample_threshold)
            except (NoDarkRegion, NoIntersections, IllConditioned, DegenerateTangent, ConfigError):
                cache[key] = None
        return cache[key]

    seed = x_refit if x_refit is not None else x0
    best_params = seed.copy()
    best = evaluate(best_params)
    if best is None and x_refit is not None:
        best_params = x0.copy()
        best = evaluate(best_params)
    if best is None:
        raise NoIntersections("initial circle yields no usable calibration")
    lo = best_params - SEARCH_LIMIT_PX
    hi = best_params + SEARCH_LIMIT_PX

    def descend(axes):
        nonlocal best_params, best
        step = INITIAL_STEP_PX
        while step >= MIN_STEP_PX and evals < MAX_EVALUATIONS:
            if best[2] < STOP_CONSTANT_TERM:
                return
            improved = False
            for axis in axes:
                for sign in (+1.0, -1.0):
                    cand = best_params.copy()
                    cand[axis] = np.clip(cand[axis] + sign * step, lo[axis], hi[axis])
                    if np.array_equal(cand, best_params):
                        continue
                    res = evaluate(cand)
                    if res is not None and res[2] < best[2]:
                        best_params, best = cand, res
                        improved = True
            if not improved:
                step *= 0.5

    # the ball distance (radius axis) dominates the constant term; settle it
    # before letting the center move, otherwise early center steps can absorb
    # a radius error they cannot represent. One restart escapes half-pixel
    # stagnation after a large center correction.
    for _ in range(2):
        descend(axes=(2,))
        descend(axes=(0, 1, 2))
        if best[2] < STOP_CONSTANT_TERM:
            break
    fit, mapping, a0 = best
    info = {
        "evaluations": evals,
        "constant_term_mm": mapping.constant_term,
        "no_improvement": bool(np.array_equal(best_params, x0)),
        "converged": a0 <= GOOD_CONSTANT_TERM,
    }
    return fit, mapping, info


def calibrate_session(
    live: Frame,
    ref: Frame,
    k: CameraIntrinsics,
    ball: BallSpec,
    finger,
    degree: int = 4,
    init: CircleFit | None = None,
    dark_threshold: float = DEFAULT_DARK_THRESHOLD,
):
    """End-to-end calibration from one live/reference frame pair.

    Reconstructs the locally undeformed face from the live frame's own
    silhouette, fits the press circle (unless an initial circle is given),
    and self-refines. Returns (fit, mapping, info) with the artifact fields
    in info.
    """
    from .global_recon import fit_incline_profile, reconstruct_view_face, to_locally_undeformed_face
    from .image import binarize, extract_silhouette_edges, refine_edges_subpixel

    edges = refine_edges_subpixel(extract_silhouette_edges(binarize(live)), live)
    vf = reconstruct_view_face(edges, k, finger)
    luf = to_locally_undeformed_face(vf, fit_incline_profile(edges, k, finger), finger)
    fit0 = init or fit_dark_circle(live, ref, dark_threshold)
    fit, mapping, info = self_calibrate(live, ref, fit0, k, ball, luf, degree)
    samples = collect_samples(live, ref, fit, locate_ball_center(fit, k, ball), ball, luf, k)
    resid = float(
        np.sqrt(np.mean([(mapping(s.delta_i) - s.depth_mm) ** 2 for s in samples]))
    )
    info.update(
        {
            "ball_radius_mm": ball.radius_mm,
            "circle": {"cu": fit.center[0], "cv": fit.center[1], "r": fit.radius},
            "residual_mm": resid,
        }
    )
    return fit, mapping, info
