"""File formats: PGM/PNG frames, sequence directories, PLY clouds, depth maps, JSONL."""

from __future__ import annotations

import json
import re
from pathlib import Path

import cv2
import numpy as np

from .errors import ConfigError
from .image import Frame

DEPTH_SCALE_UM = 100  # one 16-bit unit in exported depth maps


def write_pgm(path, pixels: np.ndarray) -> None:
    """Binary PGM (P5); 8-bit arrays as maxval 255, 16-bit as big-endian 65535."""
    path = Path(path)
    h, w = pixels.shape
    if pixels.dtype == np.uint8:
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        payload = pixels.tobytes()
    elif pixels.dtype == np.uint16:
        header = f"P5\n{w} {h}\n65535\n".encode("ascii")
        payload = pixels.astype(">u2").tobytes()
    else:
        raise ValueError(f"unsupported dtype for PGM: {pixels.dtype}")
    path.write_bytes(header + payload)


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)?(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise ConfigError(f"{path} is not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    body = data[m.end() :]
    if maxval < 256:
        arr = np.frombuffer(body, dtype=np.uint8, count=w * h)
    else:
        arr = np.frombuffer(body, dtype=">u2", count=w * h).astype(np.uint16)
    return arr.reshape(h, w).copy()


def write_frame(path, frame: Frame) -> None:
    """Write a frame as PGM or 8-bit grayscale PNG depending on the suffix."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, frame.pixels)
    elif path.suffix.lower() == ".png":
        if not cv2.imwrite(str(path), frame.pixels):
            raise ConfigError(f"cannot write {path}")
    else:
        raise ConfigError(f"unsupported frame format: {path.suffix}")


def read_frame(path, frame_id: int = 0) -> Frame:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        px = read_pgm(path)
        if px.dtype != np.uint8:
            raise ConfigError(f"{path}: expected an 8-bit frame")
    else:
        px = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
        if px is None:
            raise ConfigError(f"cannot read frame {path}")
    return Frame(pixels=px, frame_id=frame_id)


def write_sequence(dirpath, frames, fps: float = 30.0, fmt: str = "pgm") -> Path:
    """Write frames as zero-padded numbered files plus a JSON manifest."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    count = 0
    width = height = None
    for i, frame in enumerate(frames):
        write_frame(d / f"{i:06d}.{fmt}", frame)
        width, height = frame.width, frame.height
        count += 1
    (d / "manifest.json").write_text(
        json.dumps({"fps": fps, "count": count, "width": width, "height": height}, indent=2)
    )
    return d


def sequence_paths(dirpath) -> list:
    d = Path(dirpath)
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in (".pgm", ".png"))
    if not paths:
        raise ConfigError(f"no frames found in {d}")
    return paths


def read_sequence(dirpath):
    """Yield frames of a sequence directory in filename order."""
    for i, p in enumerate(sequence_paths(dirpath)):
        yield read_frame(p, frame_id=i)


def read_manifest(dirpath) -> dict:
    p = Path(dirpath) / "manifest.json"
    if not p.exists():
        raise ConfigError(f"missing manifest: {p}")
    return json.loads(p.read_text())


def write_ply(path, points: np.ndarray, valid=None) -> None:
    """ASCII PLY with one float x y z vertex per valid point, row-major order."""
    pts = points.reshape(-1, 3)
    if valid is not None:
        pts = pts[np.asarray(valid).reshape(-1)]
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = "\n".join(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}" for p in pts)
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if len(pts) else ""))


def read_ply(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    try:
        end = lines.index("end_header")
    except ValueError as e:
        raise ConfigError(f"{path}: missing PLY header") from e
    pts = [tuple(float(x) for x in ln.split()[:3]) for ln in lines[end + 1 :] if ln.strip()]
    return np.array(pts, dtype=float).reshape(-1, 3)


def write_depth_pgm(path, depth_mm: np.ndarray) -> None:
    """16-bit PGM at DEPTH_SCALE_UM per unit, plus a JSON sidecar with the scale."""
    path = Path(path)
    units = np.clip(np.round(depth_mm * 1000.0 / DEPTH_SCALE_UM), 0, 65535).astype(np.uint16)
    write_pgm(path, units)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps({"scale_um": DEPTH_SCALE_UM}))


def read_depth_pgm(path) -> np.ndarray:
    path = Path(path)
    scale = json.loads(path.with_suffix(path.suffix + ".json").read_text())["scale_um"]
    return read_pgm(path).astype(np.float64) * scale / 1000.0


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
