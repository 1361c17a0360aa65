"""Parametric finger renderer used as the ground-truth oracle.

Model
=====
The view face (inner contact surface) is a height field over the finger
length: a point at arc position s in [0, L] and lateral offset x in
[-W/2, W/2] sits at camera depth z = f(s), where f is the per-state bend
polynomial. The finger length axis is the camera y-axis (image rows);
`side_pull` translates the whole body in camera x/y.

Shading: base intensity falls linearly from the root to the tip; a press
of depth d darkens a pixel by the factor (1 - b(d)) with
b(d) = min(cap, 1 - exp(-d / tau)). Presses are spheres indenting the
locally undeformed face; the indentation under a sphere is evaluated
along -z (parallel projection), so the deformed surface coincides with
the sphere's near side inside the contact circle.

Markers are bright discs anchored to the side walls (x = +-W/2) at a
fraction `marker_inset` of the local face depth, so they project just
outside the silhouette edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, StateOutOfView
from .geometry import CameraIntrinsics, default_intrinsics
from .global_recon import MIN_COS_INCLINE, FingerConfig, SurfaceCloud
from .image import Frame
from .local_recon import DepthMap
from .markers import GROUPS, MarkerLayout, MarkerSet

MAX_PRESS_DEPTH = 3.0  # mm


@dataclass(frozen=True)
class Press:
    """Sphere press on the contact face: position along/across the face, mm."""

    s_mm: float
    lateral_mm: float
    radius_mm: float
    depth_mm: float

    def __post_init__(self):
        if self.radius_mm <= 0:
            raise ConfigError("press radius must be positive")
        if not (0.0 <= self.depth_mm <= MAX_PRESS_DEPTH):
            raise ConfigError(f"press depth must lie in [0, {MAX_PRESS_DEPTH}] mm")


@dataclass(frozen=True)
class FingerState:
    """Bend profile, active presses and rigid side pull for one instant."""

    bend: tuple = (75.0,)  # z(s) polynomial coefficients, ascending, mm
    presses: tuple = ()
    side_pull: tuple = (0.0, 0.0)  # rigid (dx, dy) translation, mm

    def __post_init__(self):
        object.__setattr__(self, "bend", tuple(float(c) for c in self.bend))
        object.__setattr__(self, "presses", tuple(self.presses))
        object.__setattr__(self, "side_pull", tuple(float(c) for c in self.side_pull))

    def depth_at(self, s):
        return np.polynomial.polynomial.polyval(np.asarray(s, dtype=float), self.bend)

    def slope_at(self, s):
        return np.polynomial.polynomial.polyval(
            np.asarray(s, dtype=float), np.polynomial.polynomial.polyder(self.bend)
        )

    def to_dict(self) -> dict:
        return {
            "bend": list(self.bend),
            "presses": [
                [p.s_mm, p.lateral_mm, p.radius_mm, p.depth_mm] for p in self.presses
            ],
            "side_pull": list(self.side_pull),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FingerState":
        return cls(
            bend=tuple(raw["bend"]),
            presses=tuple(Press(*p) for p in raw.get("presses", [])),
            side_pull=tuple(raw.get("side_pull", (0.0, 0.0))),
        )


@dataclass(frozen=True)
class SceneConfig:
    """Camera, finger, marker anchors and the photometric laws of the renderer."""

    intrinsics: CameraIntrinsics = field(default_factory=lambda: default_intrinsics().scaled(960))
    finger: FingerConfig = field(default_factory=FingerConfig)
    marker_inset: float = 0.68  # marker depth as a fraction of the local face depth
    marker_span: tuple = (8.0, 44.0)  # arc range carrying markers, mm
    marker_radius_px: float = 5.0
    marker_intensity: int = 245
    i0_root: float = 220.0  # base intensity at the finger root
    i0_tip: float = 120.0
    brightness_tau: float = 1.2  # mm
    brightness_cap: float = 0.9
    noise_sigma: float = 2.0

    def __post_init__(self):
        if not (40 <= self.i0_tip <= 255 and 40 <= self.i0_root <= 255):
            raise ConfigError("base intensity must stay within [40, 255]")
        if not (0.0 < self.marker_inset < 1.0):
            raise ConfigError("marker inset must lie in (0, 1)")

    # --- photometric laws -------------------------------------------------
    def brightness_drop(self, depth_mm):
        """b(d): fraction of light lost under a press of depth d."""
        d = np.asarray(depth_mm, dtype=float)
        return np.minimum(self.brightness_cap, 1.0 - np.exp(-d / self.brightness_tau))

    def invert_brightness_drop(self, rel):
        """Exact inverse of brightness_drop below the cap (oracle only)."""
        rel = np.asarray(rel, dtype=float)
        if np.any(rel >= self.brightness_cap):
            raise ConfigError("brightness drop saturated, not invertible")
        return -self.brightness_tau * np.log(1.0 - rel)

    def base_intensity(self, s):
        frac = np.clip(np.asarray(s, dtype=float) / self.finger.length_mm, 0.0, 1.0)
        return self.i0_root + (self.i0_tip - self.i0_root) * frac

    # --- marker anchors ---------------------------------------------------
    def marker_arcs(self) -> np.ndarray:
        n = self.finger.markers_per_side
        lo, hi = self.marker_span
        return lo + (hi - lo) * (np.arange(n) + 0.5) / n

    def marker_anchors(self, state: FingerState) -> np.ndarray:
        """3D anchor per marker, ordered (group, k); groups are left/right walls."""
        arcs = self.marker_arcs()
        dx, dy = state.side_pull
        half_w = self.finger.width_mm / 2.0
        y = arcs - self.finger.length_mm / 2.0 + dy
        z = self.marker_inset * state.depth_at(arcs)
        left = np.stack([np.full_like(arcs, -half_w + dx), y, z], axis=1)
        right = np.stack([np.full_like(arcs, half_w + dx), y, z], axis=1)
        return np.concatenate([left, right], axis=0)

    def to_json(self, path) -> None:
        doc = {
            "intrinsics": {
                "fx": self.intrinsics.fx,
                "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx,
                "cy": self.intrinsics.cy,
                "width": self.intrinsics.width,
                "height": self.intrinsics.height,
            },
            "finger": {
                "width_mm": self.finger.width_mm,
                "layer_thickness_mm": self.finger.layer_thickness_mm,
                "length_mm": self.finger.length_mm,
                "markers_per_side": self.finger.markers_per_side,
                "face_normals": {k: list(v) for k, v in self.finger.face_normals.items()},
            },
            "marker_inset": self.marker_inset,
            "marker_span": list(self.marker_span),
            "marker_radius_px": self.marker_radius_px,
            "marker_intensity": self.marker_intensity,
            "i0_root": self.i0_root,
            "i0_tip": self.i0_tip,
            "brightness_tau": self.brightness_tau,
            "brightness_cap": self.brightness_cap,
            "noise_sigma": self.noise_sigma,
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def from_json(cls, path) -> "SceneConfig":
        try:
            raw = json.loads(Path(path).read_text())
            raw["intrinsics"] = CameraIntrinsics(**raw["intrinsics"])
            raw["finger"] = FingerConfig(**raw["finger"])
            raw["marker_span"] = tuple(raw["marker_span"])
            return cls(**raw)
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot load scene from {path}: {e}") from e


@dataclass(frozen=True)
class GroundTruth:
    """Analytic labels on the grid the pipeline reconstructs."""

    view_face: SurfaceCloud
    luf: SurfaceCloud
    depth: DepthMap
    markers: MarkerSet
    press_points: np.ndarray  # (P, 3) face point per press, camera frame


class Renderer:
    """Renders frames and analytic ground truth for one scene."""

    def __init__(self, scene: SceneConfig):
        self.scene = scene
        k = scene.intrinsics
        self._dy = (np.arange(k.height) - k.cy) / k.fy
        self._du = (np.arange(k.width) - k.cx) / k.fx

    # --- geometry ---------------------------------------------------------
    def _row_depths(self, state: FingerState) -> np.ndarray:
        """Depth of the ray-face hit per image row, by bisection (tol 1e-4 mm)."""
        dy = self._dy
        _, pull_y = state.side_pull
        half_len = self.scene.finger.length_mm / 2.0

        def g(z):
            s = z * dy - pull_y + half_len
            return z - state.depth_at(s)

        lo = np.full_like(dy, 2.0)
        hi = np.full_like(dy, 400.0)
        glo, ghi = g(lo), g(hi)
        bad = (glo > 0) | (ghi < 0)
        for _ in range(35):
            mid = 0.5 * (lo + hi)
            below = g(mid) < 0  # root lies above mid
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        z = 0.5 * (lo + hi)
        z[bad] = np.nan
        return z

    def _face_geometry(self, state: FingerState):
        """Per-row hit depth, arc position, face-row mask and edge columns."""
        k = self.scene.intrinsics
        fin = self.scene.finger
        pull_x, pull_y = state.side_pull
        z = self._row_depths(state)
        s = z * self._dy - pull_y + fin.length_mm / 2.0
        rows_on = np.isfinite(z) & (s >= 0.0) & (s <= fin.length_mm) & (z > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            u_left = k.cx + k.fx * (pull_x - fin.width_mm / 2.0) / z
            u_right = k.cx + k.fx * (pull_x + fin.width_mm / 2.0) / z
        return z, s, rows_on, u_left, u_right

    def _luf_depth_rows(self, state: FingerState, s: np.ndarray) -> np.ndarray:
        theta = np.arctan(state.slope_at(s))
        cos_t = np.cos(theta)
        if np.any(cos_t < MIN_COS_INCLINE):
            raise StateOutOfView("bend incline exceeds the renderable range")
        return state.depth_at(s) + self.scene.finger.layer_thickness_mm / cos_t

    def _press_depth_field(self, state: FingerState, x, y, z_luf):
        """Indentation depth at face points (x, y) whose LUF depth is z_luf."""
        d = np.zeros_like(z_luf)
        pull_x, pull_y = state.side_pull
        half_len = self.scene.finger.length_mm / 2.0
        for p in state.presses:
            if p.depth_mm <= 0:
                continue
            xc = p.lateral_mm + pull_x
            yc = p.s_mm - half_len + pull_y
            zc = self._luf_center_depth(state, p) + p.radius_mm - p.depth_mm
            rho2 = (x - xc) ** 2 + (y - yc) ** 2
            inside = rho2 < p.radius_mm**2
            if not np.any(inside):
                continue
            z_near = zc - np.sqrt(np.maximum(0.0, p.radius_mm**2 - rho2[inside]))
            pen = z_luf[inside] - z_near
            d_in = d[inside]
            d[inside] = np.maximum(d_in, np.maximum(0.0, pen))
        return d

    def _luf_center_depth(self, state: FingerState, p: Press) -> float:
        theta = np.arctan(state.slope_at(p.s_mm))
        return float(
            state.depth_at(p.s_mm) + self.scene.finger.layer_thickness_mm / np.cos(theta)
        )

    def press_center_3d(self, state: FingerState, p: Press) -> np.ndarray:
        """Camera-frame center of a press sphere."""
        pull_x, pull_y = state.side_pull
        zc = self._luf_center_depth(state, p) + p.radius_mm - p.depth_mm
        return np.array(
            [p.lateral_mm + pull_x, p.s_mm - self.scene.finger.length_mm / 2.0 + pull_y, zc]
        )

    def _check_in_view(self, rows_on, u_left, u_right) -> None:
        k = self.scene.intrinsics
        if not rows_on.any():
            raise StateOutOfView("face does not intersect any image row")
        if rows_on.sum() < 0.5 * k.height:
            raise StateOutOfView("face covers less than half the image height")
        if u_left[rows_on].min() < 1.0 or u_right[rows_on].max() > k.width - 2.0:
            raise StateOutOfView("silhouette edges leave the image")

    # --- rendering ----------------------------------------------------------
    def render(self, state: FingerState, seed: int = 0, frame_id: int = 0) -> Frame:
        scene = self.scene
        k = scene.intrinsics
        z, s, rows_on, u_left, u_right = self._face_geometry(state)
        self._check_in_view(rows_on, u_left, u_right)

        img = np.zeros((k.height, k.width), dtype=np.float64)
        rows = np.flatnonzero(rows_on)
        i0 = scene.base_intensity(s[rows])
        z_luf_rows = self._luf_depth_rows(state, s[rows])

        # anti-aliased silhouette: boundary pixels carry their partial coverage
        cols_grid = np.arange(k.width)
        cover = np.clip(
            np.minimum(cols_grid[None, :] + 0.5, u_right[rows, None])
            - np.maximum(cols_grid[None, :] - 0.5, u_left[rows, None]),
            0.0,
            1.0,
        )
        rr, cc = np.nonzero(cover > 0)
        shade = i0[rr] * cover[rr, cc]
        if state.presses:
            # the sensing layer sits at the locally undeformed face, so a
            # pixel's darkening is sampled where its ray crosses that depth
            x = z_luf_rows[rr] * self._du[cc]
            y = z_luf_rows[rr] * self._dy[rows][rr]
            d = self._press_depth_field(state, x, y, z_luf_rows[rr])
            shade = shade * (1.0 - scene.brightness_drop(d))
        img[rows[rr], cc] = shade

        # markers as bright discs
        anchors = self.scene.marker_anchors(state)
        r = scene.marker_radius_px
        for ax, ay, az in anchors:
            if az <= 0:
                continue
            mu = k.cx + k.fx * ax / az
            mv = k.cy + k.fy * ay / az
            if not (-r <= mu < k.width + r and -r <= mv < k.height + r):
                continue
            u_lo = max(0, int(np.floor(mu - r)))
            u_hi = min(k.width - 1, int(np.ceil(mu + r)))
            v_lo = max(0, int(np.floor(mv - r)))
            v_hi = min(k.height - 1, int(np.ceil(mv + r)))
            uu, vv = np.meshgrid(np.arange(u_lo, u_hi + 1), np.arange(v_lo, v_hi + 1))
            disc = (uu - mu) ** 2 + (vv - mv) ** 2 <= r * r
            img[vv[disc], uu[disc]] = scene.marker_intensity

        if scene.noise_sigma > 0:
            rng = np.random.default_rng(seed)
            img = img + rng.normal(0.0, scene.noise_sigma, img.shape)
        return Frame(pixels=np.clip(np.round(img), 0, 255).astype(np.uint8), frame_id=frame_id)

    # --- ground truth -------------------------------------------------------
    def ground_truth(self, state: FingerState, frame_id: int = 0) -> GroundTruth:
        k = self.scene.intrinsics
        z, s, rows_on, u_left, u_right = self._face_geometry(state)
        self._check_in_view(rows_on, u_left, u_right)
        rows = np.flatnonzero(rows_on)

        u0 = int(np.floor(u_left[rows].min()))
        u1 = int(np.ceil(u_right[rows].max()))
        cols = np.arange(u0, u1 + 1)
        valid = (cols[None, :] >= u_left[rows, None]) & (cols[None, :] <= u_right[rows, None])

        zz = np.repeat(z[rows][:, None], len(cols), axis=1)
        x = zz * self._du[cols][None, :]
        y = zz * self._dy[rows][:, None]
        pts = np.stack([x, y, zz], axis=-1)
        pts[~valid] = 0.0
        origin = (u0, int(rows[0]))
        vf = SurfaceCloud(points=pts, valid=valid, origin=origin)

        z_luf_rows = self._luf_depth_rows(state, s[rows])
        luf_pts = pts.copy()
        luf_pts[..., 2] = np.where(valid, z_luf_rows[:, None], 0.0)
        luf_pts[~valid] = 0.0
        luf = SurfaceCloud(points=luf_pts, valid=valid, origin=origin)

        z_luf_grid = np.repeat(z_luf_rows[:, None], len(cols), axis=1)
        x_luf = z_luf_grid * self._du[cols][None, :]
        y_luf = z_luf_grid * self._dy[rows][:, None]
        d = self._press_depth_field(state, x_luf, y_luf, z_luf_grid)
        d[~valid] = 0.0
        depth = DepthMap(depth=d, mask=valid & (d > 0), origin=origin)

        markers = self.true_markers(state, frame_id=frame_id)
        press_points = np.array(
            [
                [
                    p.lateral_mm + state.side_pull[0],
                    p.s_mm - self.scene.finger.length_mm / 2.0 + state.side_pull[1],
                    self._luf_center_depth(state, p),
                ]
                for p in state.presses
            ]
        ).reshape(-1, 3)
        return GroundTruth(view_face=vf, luf=luf, depth=depth, markers=markers, press_points=press_points)

    def true_markers(self, state: FingerState, frame_id: int = 0) -> MarkerSet:
        k = self.scene.intrinsics
        anchors = self.scene.marker_anchors(state)
        uv = np.stack(
            [
                k.cx + k.fx * anchors[:, 0] / anchors[:, 2],
                k.cy + k.fy * anchors[:, 1] / anchors[:, 2],
            ],
            axis=1,
        )
        r = self.scene.marker_radius_px
        visible = (
            (uv[:, 0] >= r)
            & (uv[:, 0] < k.width - r)
            & (uv[:, 1] >= r)
            & (uv[:, 1] < k.height - r)
        )
        n = self.scene.finger.markers_per_side
        return MarkerSet(
            frame_id=frame_id,
            group=np.repeat(np.arange(2), n).astype(np.int8),
            k=np.concatenate([np.arange(n), np.arange(n)]),
            uv=uv,
            visible=visible,
            estimated=np.zeros(2 * n, dtype=bool),
        )

    def rest_layout(self, rest_state: FingerState | None = None) -> MarkerLayout:
        rest = rest_state or FingerState()
        ms = self.true_markers(rest)
        return MarkerLayout(counts=ms.counts, nominal=ms.uv.copy())


# --- state generators -------------------------------------------------------

WALK_BOUNDS = {
    "z0": (70.0, 82.0),
    "c1": (-0.3, 0.3),
    "c2": (-0.003, 0.003),
    "pull": (-7.0, 7.0),
}
# velocity caps per frame; worst-case image gains (px/unit: z0 5, c1 229,
# c2 10615, pull 12.6) keep the total marker motion under 5 px/frame
WALK_VMAX = {"z0": 0.15, "c1": 0.004, "c2": 0.00004, "pull": 0.11}
WALK_PERSIST = 0.97  # velocity autocorrelation of the momentum walk


def _reflect(x, lo, hi):
    if x < lo:
        return 2 * lo - x, True
    if x > hi:
        return 2 * hi - x, True
    return x, False


def walk_states(scene: SceneConfig, n_frames: int, seed: int, start=None):
    """Smooth bounded momentum walk over bend and side pull, no presses.

    Velocities persist between frames so the walk sweeps its bounds
    ballistically while consecutive marker motion stays below 5 px.
    """
    rng = np.random.default_rng(seed)
    keys = ("z0", "c1", "c2", "px", "py")
    caps = [WALK_VMAX["z0"], WALK_VMAX["c1"], WALK_VMAX["c2"], WALK_VMAX["pull"], WALK_VMAX["pull"]]
    bounds = [WALK_BOUNDS["z0"], WALK_BOUNDS["c1"], WALK_BOUNDS["c2"], WALK_BOUNDS["pull"], WALK_BOUNDS["pull"]]
    x = np.array([*(start or (75.0, 0.0, 0.0))[:3], 0.0, 0.0], dtype=float)
    v = np.zeros(5)
    states = []
    for _ in range(n_frames):
        states.append(FingerState(bend=tuple(x[:3]), presses=(), side_pull=(x[3], x[4])))
        v = WALK_PERSIST * v + rng.normal(0, 0.35, 5) * caps
        v = np.clip(v, [-c for c in caps], caps)
        for i in range(5):
            xi, bounced = _reflect(x[i] + v[i], *bounds[i])
            x[i] = xi
            if bounced:
                v[i] = -v[i]
    return states


def gen_reference_sequence(scene: SceneConfig, n_frames: int, seed: int):
    """Yield (state, frame, true_markers) for a contact-free deformation walk."""
    if n_frames < 1:
        raise ConfigError("need at least one frame")
    renderer = Renderer(scene)
    states = walk_states(scene, n_frames, seed)
    for i, state in enumerate(states):
        frame = renderer.render(state, seed=seed + 1000 + i, frame_id=i)
        yield state, frame, renderer.true_markers(state, frame_id=i)


# Global reaction of the body to a press: mm of rigid pull per mm of press
# depth, mostly along the finger length (markers sway when something pushes
# the contact face).
PRESS_PULL_GAIN = (0.5, 2.2)


def press_sequence_states(scene: SceneConfig, ref_states, n_frames: int, seed: int):
    """Press/release cycles riding on deformations drawn from a reference walk.

    Each output state revisits a (slightly perturbed) reference state; press
    depth follows smooth cycles so the finger gradually contacts and
    separates, and each press adds a proportional rigid pull.
    """
    rng = np.random.default_rng(seed)
    fin = scene.finger
    states = []
    idx = 0.0
    press = None
    cycle_len = 70
    for t in range(n_frames):
        phase = (t % cycle_len) / cycle_len
        depth = 2.2 * max(0.0, np.sin(np.pi * phase)) ** 2
        if phase < 1.0 / cycle_len or press is None:
            press = Press(
                s_mm=rng.uniform(12.0, fin.length_mm - 12.0),
                lateral_mm=rng.uniform(-6.0, 6.0),
                radius_mm=rng.uniform(3.0, 6.0),
                depth_mm=0.0,
            )
        base = ref_states[int(idx) % len(ref_states)]
        idx += rng.uniform(0.5, 2.5)
        z0, c1, c2 = (list(base.bend) + [0.0, 0.0])[:3]
        z0 = _reflect(z0 + rng.normal(0, 0.25), *WALK_BOUNDS["z0"])[0]
        c1 = _reflect(c1 + rng.normal(0, 0.006), *WALK_BOUNDS["c1"])[0]
        c2 = _reflect(c2 + rng.normal(0, 0.00008), *WALK_BOUNDS["c2"])[0]
        px = base.side_pull[0] + rng.normal(0, 0.15) + PRESS_PULL_GAIN[0] * depth
        py = base.side_pull[1] + rng.normal(0, 0.15) + PRESS_PULL_GAIN[1] * depth
        presses = (replace(press, depth_mm=round(depth, 4)),) if depth > 0.02 else ()
        states.append(FingerState(bend=(z0, c1, c2), presses=presses, side_pull=(px, py)))
    return states


def gen_force_dataset(scene: SceneConfig, n_samples: int, seed: int):
    """Synthetic force-regression dataset: marker displacements + contact point.

    Inputs are 24 marker displacement components (px, ordered group/index,
    u before v) followed by the 3D contact point (mm). Displacements follow
    a linear-elastic response: pressing the contact face sways markers
    along +v with a lever-arm kernel growing toward the tip; tangential
    force along the width sways them along u. Labels are the applied
    (F_press, F_tangential) in newtons, ranges [0, 10] and [-4, 4].
    """
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    rng = np.random.default_rng(seed)
    fin = scene.finger
    arcs = np.concatenate([scene.marker_arcs()] * 2)
    length = fin.length_mm
    g_press, g_tan = 2.2, 3.0  # px per newton
    rest = FingerState()
    renderer = Renderer(scene)

    n_zero = max(1, int(np.ceil(0.05 * n_samples)))
    xs = np.zeros((n_samples, 27))
    ys = np.zeros((n_samples, 2))
    for i in range(n_samples):
        if i < n_zero:
            f_press, f_tan = 0.0, 0.0
        else:
            f_press = rng.uniform(0.0, 10.0)
            f_tan = rng.uniform(-4.0, 4.0)
        s_c = rng.uniform(10.0, length - 10.0)
        w_c = rng.uniform(-8.0, 8.0)
        kappa = (arcs / length) ** 1.5 * (0.4 + 0.6 * s_c / length)
        dv = g_press * f_press * kappa
        du = g_tan * f_tan * (0.6 + 0.4 * arcs / length)
        disp = np.stack([du, dv], axis=1)
        disp = disp * (1.0 + 0.02 * rng.normal(size=disp.shape)) + 0.05 * rng.normal(size=disp.shape)
        theta = np.arctan(rest.slope_at(s_c))
        z_luf = float(rest.depth_at(s_c)) + fin.layer_thickness_mm / np.cos(theta)
        contact = [w_c, s_c - length / 2.0, z_luf]
        xs[i] = np.concatenate([disp.ravel(), contact])
        ys[i] = (f_press, f_tan)
    del renderer
    return xs, ys


def sway_state(scene: SceneConfig, direction_rad: float, sway_px: float, base: FingerState | None = None) -> FingerState:
    """State whose markers are swayed by ~sway_px along an image direction."""
    base = base or FingerState()
    k = scene.intrinsics
    z_bar = scene.marker_inset * float(np.mean(base.depth_at(scene.marker_arcs())))
    dx = sway_px * z_bar / k.fx * np.cos(direction_rad)
    dy = sway_px * z_bar / k.fy * np.sin(direction_rad)
    return replace(
        base, side_pull=(base.side_pull[0] + dx, base.side_pull[1] + dy)
    )
