"""Per-frame sensing pipeline and its two-worker execution model.

Each frame is preprocessed, then two independent stage groups run
concurrently: marker detection/tracking/fill on one worker, silhouette
edges and global reconstruction on the other. Their outputs join for
reference retrieval, local depth reconstruction and contact analysis.
Results stream out lossless and ordered; a latest-wins mode serves live
display paths.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import contact as contact_mod
from . import ioutil
from .errors import ConfigError, DataError
from .geometry import CameraIntrinsics, default_intrinsics
from .global_recon import (
    FingerConfig,
    fit_incline_profile,
    reconstruct_view_face,
    to_locally_undeformed_face,
)
from .image import Frame, binarize, extract_silhouette_edges, preprocess, refine_edges_subpixel
from .local_recon import DEFAULT_CONTACT_THRESHOLD, MappingPolynomial, apply_mapping, normalized_diff
from .markers import estimate_occluded, index_markers, track
from .reference import ReferenceStore, detect_markers, load_store, retrieve

STAGE_BUDGET_MS = {"preprocess": 2.0, "markers+global": 10.0, "local+merge": 6.0, "total": 33.0}


@dataclass
class PipelineConfig:
    """Paths to the pipeline artifacts plus runtime knobs."""

    store_path: str
    intrinsics_path: str | None = None
    finger_path: str | None = None
    calibration_path: str | None = None
    force_net_path: str | None = None
    processing_width: int = 960
    epsilon_px: float | None = None  # None: use the store's calibrated threshold
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD
    workers: int = 2
    realtime: bool = False
    flip_h: bool = False
    flip_v: bool = False

    def __post_init__(self):
        if self.processing_width < 320:
            raise ConfigError("processing width must be at least 320 px")
        if self.workers < 1:
            raise ConfigError("worker count must be positive")

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2))

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, ValueError, TypeError) as e:
            raise ConfigError(f"cannot load pipeline config from {path}: {e}") from e


@dataclass
class FrameResult:
    frame_id: int
    view_face: object = None
    luf: object = None
    contact_cloud: object = None
    depth: object = None
    event: object = None
    markers: object = None
    ref_id: int | None = None
    ref_distance: float | None = None
    timings_ms: dict = field(default_factory=dict)
    error: str | None = None

    def to_record(self, include_timings: bool = True) -> dict:
        def arr_digest(a):
            return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()

        rec = {
            "frame_id": int(self.frame_id),
            "ref_id": self.ref_id,
            "ref_distance": None if self.ref_distance is None else round(self.ref_distance, 6),
            "event": self.event.to_record() if self.event is not None else None,
            "error": self.error,
        }
        if self.view_face is not None:
            rec["view_face_sha"] = arr_digest(self.view_face.points)
        if self.contact_cloud is not None:
            rec["contact_cloud_sha"] = arr_digest(self.contact_cloud.points)
        if self.depth is not None:
            rec["depth_sha"] = arr_digest(self.depth.depth)
        if self.markers is not None:
            rec["markers"] = self.markers.to_record()
        if include_timings:
            rec["timings_ms"] = {k: round(v, 3) for k, v in self.timings_ms.items()}
        return rec


class Pipeline:
    """Stateful frame processor; owns the tracker state and artifacts."""

    def __init__(
        self,
        store: ReferenceStore,
        intrinsics: CameraIntrinsics,
        finger: FingerConfig,
        mapping: MappingPolynomial | None = None,
        force_net=None,
        epsilon_px: float | None = None,
        contact_threshold: float = DEFAULT_CONTACT_THRESHOLD,
        processing_width: int = 960,
        flip_h: bool = False,
        flip_v: bool = False,
    ):
        self.store = store
        self.layout = store.layout
        self.intrinsics = intrinsics
        self.finger = finger
        self.mapping = mapping
        self.force_net = force_net
        self.epsilon_px = epsilon_px if epsilon_px is not None else store.epsilon_px
        if self.epsilon_px <= 0:
            self.epsilon_px = 1.0
        self.contact_threshold = contact_threshold
        self.processing_width = processing_width
        self.flip_h = flip_h
        self.flip_v = flip_v
        self._prev_markers = None

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "Pipeline":
        store = load_store(cfg.store_path)
        if cfg.intrinsics_path:
            k = CameraIntrinsics.from_json(cfg.intrinsics_path)
        else:
            k = default_intrinsics()
        k = k.scaled(cfg.processing_width)
        finger = FingerConfig.from_json(cfg.finger_path) if cfg.finger_path else FingerConfig()
        mapping = (
            MappingPolynomial.from_json(cfg.calibration_path) if cfg.calibration_path else None
        )
        net = (
            contact_mod.ForceNet.from_json(cfg.force_net_path) if cfg.force_net_path else None
        )
        return cls(
            store=store,
            intrinsics=k,
            finger=finger,
            mapping=mapping,
            force_net=net,
            epsilon_px=cfg.epsilon_px,
            contact_threshold=cfg.contact_threshold,
            processing_width=cfg.processing_width,
            flip_h=cfg.flip_h,
            flip_v=cfg.flip_v,
        )

    def reset_tracking(self) -> None:
        self._prev_markers = None

    # --- stage groups ------------------------------------------------------
    def _markers_stage(self, frame: Frame):
        blobs = detect_markers(frame)
        if self._prev_markers is None:
            ms = index_markers(blobs, self.layout)
        else:
            ms = track(self._prev_markers, blobs, frame_id=frame.frame_id)
        filled = estimate_occluded(ms, self.layout)
        self._prev_markers = filled
        return filled

    def _global_stage(self, frame: Frame):
        edges = refine_edges_subpixel(extract_silhouette_edges(binarize(frame)), frame)
        vf = reconstruct_view_face(edges, self.intrinsics, self.finger)
        incline = fit_incline_profile(edges, self.intrinsics, self.finger)
        luf = to_locally_undeformed_face(vf, incline, self.finger)
        return vf, luf

    def process(self, raw: Frame, executor: ThreadPoolExecutor | None = None) -> FrameResult:
        """One frame through all stages; errors degrade the result."""
        result = FrameResult(frame_id=raw.frame_id)
        timings = result.timings_ms
        t_start = time.perf_counter()
        try:
            frame = preprocess(raw, self.processing_width, self.flip_h, self.flip_v)
        except DataError as e:
            result.error = f"preprocess: {e}"
            return result
        timings["preprocess"] = (time.perf_counter() - t_start) * 1e3

        t0 = time.perf_counter()
        markers = None
        marker_err = None
        if executor is not None:
            fut = executor.submit(self._guarded_markers, frame)
        try:
            result.view_face, result.luf = self._global_stage(frame)
        except DataError as e:
            result.error = f"global: {e}"
        if executor is not None:
            markers, marker_err = fut.result()
        else:
            markers, marker_err = self._guarded_markers(frame)
        timings["markers+global"] = (time.perf_counter() - t0) * 1e3
        if marker_err is not None and result.error is None:
            result.error = f"markers: {marker_err}"
        result.markers = markers
        if result.error is not None:
            timings["total"] = (time.perf_counter() - t_start) * 1e3
            return result

        t1 = time.perf_counter()
        try:
            ref_id, dist = retrieve(self.store, markers)
            result.ref_id, result.ref_distance = ref_id, dist
            if self.mapping is not None:
                window = ((result.luf.origin[0], result.luf.origin[1]), result.luf.shape)
                diff = normalized_diff(frame, self.store.frames[ref_id], window=window)
                result.depth = apply_mapping(diff, self.mapping, self.contact_threshold)
                from .local_recon import compose_contact_cloud

                result.contact_cloud = compose_contact_cloud(result.luf, result.depth)
            result.event = self._contact_stage(markers, result)
        except DataError as e:
            result.error = f"local: {e}"
        timings["local+merge"] = (time.perf_counter() - t1) * 1e3
        timings["total"] = (time.perf_counter() - t_start) * 1e3
        return result

    def _guarded_markers(self, frame: Frame):
        try:
            return self._markers_stage(frame), None
        except DataError as e:
            self.reset_tracking()
            return None, e

    def _contact_stage(self, markers, result: FrameResult):
        offset = contact_mod.global_offset(markers, self.layout)
        norm = float(np.linalg.norm(offset))
        detected = contact_mod.detect_contact(offset, self.epsilon_px)
        direction = face = None
        force = pose = None
        if detected:
            o, face = contact_mod.classify_direction(offset, self.finger)
            direction = tuple(o)
            if result.depth is not None and result.depth.mask.any():
                if self.force_net is not None:
                    point = contact_mod.depth_weighted_contact_point(result.contact_cloud, result.depth)
                    disp = (markers.uv - self.layout.nominal).ravel()
                    force = contact_mod.predict_force(self.force_net, disp, point)
                try:
                    pose = contact_mod.estimate_pose(
                        result.contact_cloud.points, result.depth.mask & result.contact_cloud.valid
                    )
                except DataError:
                    pose = None
        return contact_mod.ContactEvent(
            frame_id=result.frame_id,
            detected=detected,
            direction=direction,
            face=face,
            offset_norm=norm,
            force=force,
            pose_deg=pose,
        )

    # --- streaming --------------------------------------------------------
    def run(self, frames, workers: int = 2, realtime: bool = False):
        """Yield FrameResults for a frame iterable, in input order.

        workers=2 runs the marker and global stage groups concurrently per
        frame; workers=1 is fully sequential and yields value-identical
        results. realtime=True drops stale frames (latest-wins), trading
        losslessness for latency.
        """
        source = _latest_wins(frames) if realtime else frames
        if workers <= 1:
            for frame in source:
                yield self.process(frame)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for frame in source:
                yield self.process(frame, executor=pool)


def _latest_wins(frames):
    """Producer thread fills a depth-1 slot; stale frames are skipped."""
    slot = {}
    lock = threading.Lock()
    fresh = threading.Event()
    done = threading.Event()

    def producer():
        for frame in frames:
            with lock:
                slot["frame"] = frame
            fresh.set()
        done.set()
        fresh.set()

    t = threading.Thread(target=producer, daemon=True)
    t.start()
    while True:
        fresh.wait()
        with lock:
            frame = slot.pop("frame", None)
            fresh.clear()
        if frame is not None:
            yield frame
        if done.is_set():
            with lock:
                tail = slot.pop("frame", None)
            if tail is not None:
                yield tail
            return


def bench(pipeline: Pipeline, frames, workers: int = 2):
    """Mean per-stage timings over a sequence, with the budget table."""
    totals = {}
    count = 0
    for result in pipeline.run(frames, workers=workers):
        for key, ms in result.timings_ms.items():
            totals[key] = totals.get(key, 0.0) + ms
        count += 1
    means = {k: v / max(count, 1) for k, v in totals.items()}
    lines = [f"{'stage':<16}{'mean ms':>10}{'budget ms':>12}"]
    for key in ("preprocess", "markers+global", "local+merge", "total"):
        got = means.get(key, float('nan'))
        lines.append(f"{key:<16}{got:>10.2f}{STAGE_BUDGET_MS[key]:>12.1f}")
    return means, "\n".join(lines)
