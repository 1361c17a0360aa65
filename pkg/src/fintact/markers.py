"""Side-face dot markers: indexing, frame-to-frame tracking, occlusion fill, distances.

Markers sit on the two side faces of the finger and appear as two bands
left and right of the contact-face silhouette. Within a band they are
indexed 0..n-1 along the finger length (increasing image row v).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GroupBlind, LayoutMismatch, TooManyBlobs, TrackingLost

GROUPS = ("left", "right")

DEFAULT_MAX_JUMP = 20.0  # px at 960-px processing width


@dataclass(frozen=True)
class MarkerLayout:
    """Expected marker counts per group plus nominal rest-state centroids."""

    counts: tuple  # (n_left, n_right)
    nominal: np.ndarray = field(repr=False)  # (N, 2) ordered by (group, k)

    def __post_init__(self):
        if min(self.counts) < 2:
            raise ConfigError("each marker group needs at least 2 markers")
        nom = np.asarray(self.nominal, dtype=float)
        if nom.shape != (sum(self.counts), 2):
            raise ConfigError("nominal centroid count does not match layout counts")
        nom.setflags(write=False)
        object.__setattr__(self, "nominal", nom)

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def group_of(self, i: int) -> int:
        return 0 if i < self.counts[0] else 1

    def group_slice(self, g: int) -> slice:
        return slice(0, self.counts[0]) if g == 0 else slice(self.counts[0], self.total)

    def groups(self) -> np.ndarray:
        return np.repeat(np.arange(2), self.counts)

    def ks(self) -> np.ndarray:
        return np.concatenate([np.arange(n) for n in self.counts])

    def to_json(self, path) -> None:
        recs = [
            {"k": int(k), "group": GROUPS[g], "u": float(uv[0]), "v": float(uv[1])}
            for k, g, uv in zip(self.ks(), self.groups(), self.nominal)
        ]
        Path(path).write_text(
            json.dumps({"counts": {"left": self.counts[0], "right": self.counts[1]}, "nominal": recs}, indent=2)
        )

    @classmethod
    def from_json(cls, path) -> "MarkerLayout":
        try:
            raw = json.loads(Path(path).read_text())
            counts = (raw["counts"]["left"], raw["counts"]["right"])
            recs = sorted(raw["nominal"], key=lambda r: (GROUPS.index(r["group"]), r["k"]))
            nominal = np.array([[r["u"], r["v"]] for r in recs])
            return cls(counts=counts, nominal=nominal)
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot load marker layout from {path}: {e}") from e


@dataclass(frozen=True)
class MarkerSet:
    """Per-marker centroids with visibility flags, ordered by (group, k)."""

    frame_id: int
    group: np.ndarray = field(repr=False)  # (N,) int8, 0=left 1=right
    k: np.ndarray = field(repr=False)  # (N,) int, contiguous per group
    uv: np.ndarray = field(repr=False)  # (N, 2) float
    visible: np.ndarray = field(repr=False)  # (N,) bool
    estimated: np.ndarray = field(repr=False)  # (N,) bool, occlusion-filled

    def __post_init__(self):
        for name in ("group", "k", "uv", "visible", "estimated"):
            a = np.asarray(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for g in (0, 1):
            ks = self.k[self.group == g]
            if len(ks) and not np.array_equal(np.sort(ks), np.arange(len(ks))):
                raise ValueError(f"group {GROUPS[g]} indices must be contiguous 0..n-1")

    def __len__(self) -> int:
        return len(self.k)

    @property
    def counts(self) -> tuple:
        return (int(np.sum(self.group == 0)), int(np.sum(self.group == 1)))

    def filled(self) -> bool:
        return bool(np.all(self.visible | self.estimated))

    def same_layout(self, other: "MarkerSet") -> bool:
        return np.array_equal(self.group, other.group) and np.array_equal(self.k, other.k)

    def to_record(self) -> dict:
        return {
            "frame_id": int(self.frame_id),
            "markers": [
                {
                    "k": int(k),
                    "group": GROUPS[g],
                    "u": float(uv[0]),
                    "v": float(uv[1]),
                    "visible": bool(vis),
                }
                for k, g, uv, vis in zip(self.k, self.group, self.uv, self.visible)
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "MarkerSet":
        ms = sorted(rec["markers"], key=lambda m: (GROUPS.index(m["group"]), m["k"]))
        return cls(
            frame_id=rec["frame_id"],
            group=np.array([GROUPS.index(m["group"]) for m in ms], dtype=np.int8),
            k=np.array([m["k"] for m in ms], dtype=int),
            uv=np.array([[m["u"], m["v"]] for m in ms], dtype=float),
            visible=np.array([m["visible"] for m in ms], dtype=bool),
            estimated=np.array([not m["visible"] for m in ms], dtype=bool),
        )


def layout_from_markerset(ms: MarkerSet) -> MarkerLayout:
    if not np.all(ms.visible):
        raise ConfigError("layout requires a fully visible marker set")
    return MarkerLayout(counts=ms.counts, nominal=ms.uv.copy())


def _greedy_mutual_nn(a: np.ndarray, b: np.ndarray, max_dist: float):
    """Greedy globally-closest-pair matching; returns list of (i, j) index pairs."""
    if len(a) == 0 or len(b) == 0:
        return []
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    d = d.copy()
    pairs = []
    for _ in range(min(len(a), len(b))):
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] > max_dist:
            break
        pairs.append((int(i), int(j)))
        d[i, :] = np.inf
        d[:, j] = np.inf
    return pairs


def index_markers(blobs, layout: MarkerLayout) -> MarkerSet:
    """Assign detected blobs to layout slots: split by column, order by row.

    Blobs are split into the two side groups at the midpoint between the
    group column means, sorted top-to-bottom within each group, and
    indexed 0..n-1. When fewer blobs than expected are present, blobs are
    associated to the nearest nominal positions and the remaining slots
    are flagged invisible.
    """
    if len(blobs) > layout.total:
        raise TooManyBlobs(f"{len(blobs)} blobs for {layout.total} marker slots")
    uv = np.array([b.centroid for b in blobs], dtype=float).reshape(-1, 2)

    # split on u, seeded from the nominal group means and refined once
    thresh = 0.5 * (
        layout.nominal[layout.group_slice(0), 0].mean() + layout.nominal[layout.group_slice(1), 0].mean()
    )
    for _ in range(2):
        left = uv[:, 0] < thresh
        if left.any() and (~left).any():
            thresh = 0.5 * (uv[left, 0].mean() + uv[~left, 0].mean())
    left = uv[:, 0] < thresh

    n = layout.total
    out_uv = layout.nominal.copy()
    visible = np.zeros(n, dtype=bool)
    for g in (0, 1):
        sl = layout.group_slice(g)
        expected = layout.counts[g]
        guv = uv[left] if g == 0 else uv[~left]
        if len(guv) > expected:
            raise TooManyBlobs(f"{len(guv)} blobs in group {GROUPS[g]} for {expected} slots")
        guv = guv[np.argsort(guv[:, 1], kind="stable")]
        if len(guv) == expected:
            out_uv[sl] = guv
            visible[sl] = True
        else:
            nominal_g = layout.nominal[sl]
            for bi, ki in _greedy_mutual_nn(guv, nominal_g, np.inf):
                out_uv[sl][ki] = guv[bi]
                visible[sl][ki] = True
    return MarkerSet(
        frame_id=0,
        group=layout.groups().astype(np.int8),
        k=layout.ks(),
        uv=out_uv,
        visible=visible,
        estimated=np.zeros(n, dtype=bool),
    )


def track(prev: MarkerSet, blobs, max_jump: float = DEFAULT_MAX_JUMP, frame_id: int = 0) -> MarkerSet:
    """Associate blobs to the previous marker set by greedy mutual nearest neighbor.

    Unmatched markers keep their last centroid but are flagged invisible.
    Raises TrackingLost when fewer than half of the markers match.
    """
    buv = np.array([b.centroid for b in blobs], dtype=float).reshape(-1, 2)
    pairs = _greedy_mutual_nn(prev.uv, buv, max_jump)
    n = len(prev)
    uv = prev.uv.copy()
    visible = np.zeros(n, dtype=bool)
    for mi, bi in pairs:
        uv[mi] = buv[bi]
        visible[mi] = True
    if visible.sum() < 0.5 * n:
        raise TrackingLost(f"only {int(visible.sum())}/{n} markers matched")
    return MarkerSet(
        frame_id=frame_id,
        group=prev.group,
        k=prev.k,
        uv=uv,
        visible=visible,
        estimated=np.zeros(n, dtype=bool),
    )


def estimate_occluded(ms: MarkerSet, layout: MarkerLayout) -> MarkerSet:
    """Fill occluded markers from the two nearest visible same-group neighbors.

    The occluded marker's displacement from its nominal position is set to
    the mean displacement of the two index-nearest visible neighbors.
    """
    if np.all(ms.visible):
        return ms
    uv = ms.uv.copy()
    estimated = ms.estimated.copy()
    disp = ms.uv - layout.nominal
    for g in (0, 1):
        sl = layout.group_slice(g)
        vis = ms.visible[sl]
        hidden = np.flatnonzero(~vis)
        if len(hidden) == 0:
            continue
        vis_idx = np.flatnonzero(vis)
        if len(vis_idx) < 2:
            raise GroupBlind(f"group {GROUPS[g]} has {len(vis_idx)} visible markers")
        base = sl.start
        for k in hidden:
            order = np.argsort(np.abs(vis_idx - k), kind="stable")
            nbrs = vis_idx[order[:2]]
            est = disp[base + nbrs].mean(axis=0)
            uv[base + k] = layout.nominal[base + k] + est
            estimated[base + k] = True
    return MarkerSet(
        frame_id=ms.frame_id,
        group=ms.group,
        k=ms.k,
        uv=uv,
        visible=ms.visible,
        estimated=estimated,
    )


def marker_distance(a: MarkerSet, b: MarkerSet) -> float:
    """Total Euclidean distance between corresponding markers of two sets."""
    if not a.same_layout(b):
        raise LayoutMismatch("marker sets have different layouts")
    if not (a.filled() and b.filled()):
        raise LayoutMismatch("marker sets must be occlusion-filled before comparison")
    return float(np.linalg.norm(a.uv - b.uv, axis=1).sum())
