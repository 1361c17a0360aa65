"""Reference store: pre-recorded contact-free frames and per-frame retrieval.

The store holds a deformation-diverse, contact-free sequence with
precomputed occlusion-filled marker sets. Retrieval scans all entries for
the one whose markers are closest to the live frame's, and that frame
serves as the brightness reference for local reconstruction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ioutil
from .errors import ConfigError, DataError, EmptyStore, SparseMarkers
from .image import Frame, detect_blobs
from .markers import (
    DEFAULT_MAX_JUMP,
    MarkerLayout,
    MarkerSet,
    estimate_occluded,
    index_markers,
    marker_distance,
    track,
)

MARKER_INTENSITY_RANGE = (235, 255)
MARKER_AREA_RANGE = (15, 400)
MIN_DETECTABLE_FRACTION = 0.95
EPSILON_SCALE = 1.5  # contact threshold = scale * p99 of contact-free offsets


@dataclass(frozen=True)
class ReferenceStore:
    """Ordered contact-free frames with complete marker sets."""

    frames: tuple  # tuple[Frame]
    marker_sets: tuple  # tuple[MarkerSet], occlusion-filled
    layout: MarkerLayout
    fps: float = 30.0
    epsilon_px: float = 0.0  # calibrated contact-detection threshold
    marker_array: np.ndarray = field(init=False, repr=False)  # (N, K, 2)

    def __post_init__(self):
        if len(self.frames) < 1:
            raise EmptyStore("reference store needs at least one entry")
        if len(self.frames) != len(self.marker_sets):
            raise ConfigError("frames and marker sets disagree in length")
        for ms in self.marker_sets:
            if not ms.filled():
                raise ConfigError("store entries must have occlusion-filled markers")
        arr = np.stack([ms.uv for ms in self.marker_sets])
        arr.setflags(write=False)
        object.__setattr__(self, "marker_array", arr)

    def __len__(self) -> int:
        return len(self.frames)


def detect_markers(frame: Frame):
    return detect_blobs(frame, MARKER_INTENSITY_RANGE, MARKER_AREA_RANGE)


def build_store(frames, layout: MarkerLayout, fps: float = 30.0, max_jump: float = DEFAULT_MAX_JUMP) -> ReferenceStore:
    """Detect, index, track and fill markers over a contact-free sequence.

    Frames whose markers cannot be recovered are dropped; if more than 5%
    fail the sequence is rejected as SparseMarkers.
    """
    kept_frames = []
    kept_sets = []
    failures = 0
    total = 0
    prev = None
    for frame in frames:
        total += 1
        try:
            blobs = detect_markers(frame)
            if prev is None:
                ms = index_markers(blobs, layout)
                if ms.visible.sum() < 0.5 * layout.total:
                    raise SparseMarkers("initial frame shows too few markers")
            else:
                ms = track(prev, blobs, max_jump=max_jump, frame_id=frame.frame_id)
            filled = estimate_occluded(ms, layout)
            prev = filled
        except DataError:
            failures += 1
            prev = None  # reinitialize from layout on the next frame
            continue
        kept_frames.append(frame)
        kept_sets.append(
            MarkerSet(
                frame_id=frame.frame_id,
                group=filled.group,
                k=filled.k,
                uv=filled.uv,
                visible=filled.visible,
                estimated=filled.estimated,
            )
        )
    if total == 0:
        raise EmptyStore("empty reference sequence")
    if len(kept_frames) < MIN_DETECTABLE_FRACTION * total:
        raise SparseMarkers(f"markers detectable in only {len(kept_frames)}/{total} frames")
    epsilon = estimate_epsilon(kept_sets, layout)
    return ReferenceStore(
        frames=tuple(kept_frames),
        marker_sets=tuple(kept_sets),
        layout=layout,
        fps=fps,
        epsilon_px=epsilon,
    )


def estimate_epsilon(marker_sets, layout: MarkerLayout) -> float:
    """Contact threshold from the contact-free offset distribution (p99 * 1.5)."""
    norms = [
        float(np.linalg.norm((ms.uv - layout.nominal).sum(axis=0))) for ms in marker_sets
    ]
    return EPSILON_SCALE * float(np.percentile(norms, 99))


def retrieve(store: ReferenceStore, query: MarkerSet, coarse: bool = False):
    """Index and marker distance of the store entry closest to the query.

    `coarse` scans every 8th entry and refines around the winner; it can
    return a near-optimal frame on stores whose motion is not smooth.
    """
    if len(store) == 0:
        raise EmptyStore("cannot retrieve from an empty store")
    if not query.filled():
        raise ConfigError("query marker set must be occlusion-filled")
    if not query.same_layout(store.marker_sets[0]):
        from .errors import LayoutMismatch

        raise LayoutMismatch("query layout differs from the store layout")
    diffs = store.marker_array - query.uv[None, :, :]
    dists = np.linalg.norm(diffs, axis=2).sum(axis=1)
    if coarse and len(store) > 24:
        stride_idx = np.arange(0, len(store), 8)
        best_c = stride_idx[int(np.argmin(dists[stride_idx]))]
        lo = max(0, best_c - 8)
        hi = min(len(store), best_c + 9)
        best = lo + int(np.argmin(dists[lo:hi]))
    else:
        best = int(np.argmin(dists))
    return best, float(dists[best])


# --- persistence -------------------------------------------------------------


def save_store(store: ReferenceStore, dirpath) -> Path:
    """Store directory: frames/ (PGM), markers.jsonl, meta.json."""
    d = Path(dirpath)
    (d / "frames").mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(store.frames):
        ioutil.write_pgm(d / "frames" / f"{i:06d}.pgm", frame.pixels)
    ioutil.write_jsonl(d / "markers.jsonl", (ms.to_record() for ms in store.marker_sets))
    layout_doc = json.loads(Path(_layout_tmp(store.layout, d)).read_text())
    meta = {
        "fps": store.fps,
        "count": len(store),
        "layout": layout_doc,
        "epsilon_px": store.epsilon_px,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    return d


def _layout_tmp(layout: MarkerLayout, d: Path) -> Path:
    p = d / "layout.json"
    layout.to_json(p)
    return p


def load_store(dirpath) -> ReferenceStore:
    d = Path(dirpath)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except OSError as e:
        raise ConfigError(f"not a reference store: {d}") from e
    layout = MarkerLayout.from_json(d / "layout.json")
    records = ioutil.read_jsonl(d / "markers.jsonl")
    frame_paths = sorted((d / "frames").glob("*.pgm"))
    if len(frame_paths) != len(records):
        raise ConfigError("store frames and marker records disagree")
    frames = tuple(ioutil.read_frame(p, frame_id=i) for i, p in enumerate(frame_paths))
    sets = tuple(MarkerSet.from_record(r) for r in records)
    # records carry visibility only; recover the estimated flag for fill status
    sets = tuple(
        MarkerSet(
            frame_id=ms.frame_id,
            group=ms.group,
            k=ms.k,
            uv=ms.uv,
            visible=ms.visible,
            estimated=~ms.visible,
        )
        for ms in sets
    )
    return ReferenceStore(
        frames=frames,
        marker_sets=sets,
        layout=layout,
        fps=meta.get("fps", 30.0),
        epsilon_px=meta.get("epsilon_px", 0.0),
    )
