"""Omni-directional contact detection, force regression and pose estimation.

Contact is detected from the summed marker offset against the rest
layout; its direction classifies the pressed face by inner product with
the configured face response directions. Force magnitude on the contact
face is regressed by a small fully-connected network from the 24 marker
displacement components plus the 3D contact point. Object pose on the
contact face comes from the principal axis of the contact-point cloud.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    IsotropicCloud,
    LayoutMismatch,
    TooFewPoints,
    TooFewSamples,
    UntrainedNet,
    ZeroOffset,
)
from .global_recon import FACE_NAMES, FingerConfig
from .markers import MarkerLayout, MarkerSet

FORCE_INPUT_DIM = 27  # 6 markers x 2 sides x 2 coords + 3D contact point
FORCE_OUTPUT_DIM = 2
HIDDEN = (64, 64)


@dataclass(frozen=True)
class ContactEvent:
    frame_id: int
    detected: bool
    direction: tuple | None = None  # unit (dx, dy, 0) in the image plane
    face: str | None = None
    offset_norm: float = 0.0
    force: tuple | None = None  # (N, N) on the contact face, when a net is loaded
    pose_deg: float | None = None

    def __post_init__(self):
        if self.detected and self.direction is not None:
            d = np.asarray(self.direction)
            if abs(np.linalg.norm(d) - 1.0) > 1e-9 or d[2] != 0.0:
                raise ConfigError("contact direction must be a unit image-plane vector")

    def to_record(self) -> dict:
        return {
            "frame_id": int(self.frame_id),
            "detected": bool(self.detected),
            "direction": list(self.direction) if self.direction is not None else None,
            "face": self.face,
            "offset_norm": float(self.offset_norm),
            "force": list(self.force) if self.force is not None else None,
            "pose_deg": self.pose_deg if self.pose_deg is None else float(self.pose_deg),
        }


def global_offset(ms: MarkerSet, layout: MarkerLayout) -> np.ndarray:
    """Summed marker displacement from the nominal rest positions, px."""
    if len(ms) != layout.total or not np.array_equal(ms.group, layout.groups()):
        raise LayoutMismatch("marker set does not match the layout")
    return (ms.uv - layout.nominal).sum(axis=0)


def detect_contact(offset: np.ndarray, epsilon: float) -> bool:
    """True iff the offset norm strictly exceeds the threshold."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    return bool(np.linalg.norm(offset) > epsilon)


def classify_direction(offset: np.ndarray, cfg: FingerConfig):
    """Unit contact direction and the best-matching face.

    The direction is the image-plane offset with zero z; the face is the
    configured response direction with the largest inner product. Both are
    invariant under positive scaling of the offset.
    """
    norm = float(np.linalg.norm(offset))
    if norm == 0.0:
        raise ZeroOffset("offset has no direction")
    o = np.array([offset[0] / norm, offset[1] / norm, 0.0])
    scores = {name: float(cfg.face_normals[name] @ o) for name in FACE_NAMES}
    face = max(FACE_NAMES, key=lambda n: scores[n])
    return o, face


@dataclass(frozen=True)
class ForceNet:
    """Two-hidden-layer ReLU regressor with stored input standardization."""

    weights: tuple  # per layer, (in, out)
    biases: tuple
    x_mean: np.ndarray = field(repr=False)
    x_std: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        dims = self.dims
        if dims[0] != FORCE_INPUT_DIM or dims[-1] != FORCE_OUTPUT_DIM:
            raise ConfigError(f"force net must map {FORCE_INPUT_DIM} -> {FORCE_OUTPUT_DIM}")

    @property
    def dims(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != FORCE_INPUT_DIM:
            raise ConfigError(f"expected {FORCE_INPUT_DIM} inputs, got {x.shape[1]}")
        h = (x - self.x_mean) / self.x_std
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(0.0, h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def to_json(self, path) -> None:
        doc = {
            "dims": list(self.dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "seed": self.seed,
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def from_json(cls, path) -> "ForceNet":
        try:
            raw = json.loads(Path(path).read_text())
            return cls(
                weights=tuple(np.array(w) for w in raw["weights"]),
                biases=tuple(np.array(b) for b in raw["biases"]),
                x_mean=np.array(raw["x_mean"]),
                x_std=np.array(raw["x_std"]),
                seed=raw.get("seed", 0),
            )
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"cannot load force net from {path}: {e}") from e


def predict_force(net: ForceNet | None, displacements, contact_point) -> tuple:
    """Forward pass on 24 displacement values plus the 3D contact point."""
    if net is None:
        raise UntrainedNet("no force net loaded")
    displacements = np.asarray(displacements, dtype=float).ravel()
    contact_point = np.asarray(contact_point, dtype=float).ravel()
    if displacements.size != 24 or contact_point.size != 3:
        raise ConfigError("force input must be 24 displacements plus a 3D point")
    x = np.concatenate([displacements, contact_point])
    out = net.predict(x)[0]
    return float(out[0]), float(out[1])


def _adam_train(x, y, dims, seed, epochs, batch, lr, patience, val_frac):
    rng = np.random.default_rng(seed)
    n = len(x)
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_frac * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    xt, yt = x[train_idx], y[train_idx]
    xv, yv = x[val_idx], y[val_idx]
    lr_floor = lr / 30.0

    ws = [rng.normal(0, np.sqrt(2.0 / dims[i]), (dims[i], dims[i + 1])) for i in range(len(dims) - 1)]
    bs = [np.zeros(d) for d in dims[1:]]
    m_w = [np.zeros_like(w) for w in ws]
    v_w = [np.zeros_like(w) for w in ws]
    m_b = [np.zeros_like(b) for b in bs]
    v_b = [np.zeros_like(b) for b in bs]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0

    def forward(xb):
        acts = [xb]
        h = xb
        for w, b in zip(ws[:-1], bs[:-1]):
            h = np.maximum(0.0, h @ w + b)
            acts.append(h)
        acts.append(h @ ws[-1] + bs[-1])
        return acts

    def val_loss():
        pred = forward(xv)[-1]
        return float(np.mean((pred - yv) ** 2))

    best = (val_loss(), [w.copy() for w in ws], [b.copy() for b in bs], 0)
    stale = 0
    for epoch in range(epochs):
        lr_t = lr_floor + 0.5 * (lr - lr_floor) * (1 + np.cos(np.pi * epoch / max(1, epochs)))
        order = rng.permutation(len(xt))
        for s in range(0, len(xt), batch):
            idx = order[s : s + batch]
            acts = forward(xt[idx])
            grad = 2.0 * (acts[-1] - yt[idx]) / len(idx)
            grads_w, grads_b = [], []
            for li in range(len(ws) - 1, -1, -1):
                grads_w.append(acts[li].T @ grad)
                grads_b.append(grad.sum(axis=0))
                if li > 0:
                    grad = grad @ ws[li].T
                    grad[acts[li] <= 0] = 0.0
            grads_w.reverse()
            grads_b.reverse()
            t += 1
            for li in range(len(ws)):
                m_w[li] = beta1 * m_w[li] + (1 - beta1) * grads_w[li]
                v_w[li] = beta2 * v_w[li] + (1 - beta2) * grads_w[li] ** 2
                m_b[li] = beta1 * m_b[li] + (1 - beta1) * grads_b[li]
                v_b[li] = beta2 * v_b[li] + (1 - beta2) * grads_b[li] ** 2
                mw_hat = m_w[li] / (1 - beta1**t)
                vw_hat = v_w[li] / (1 - beta2**t)
                mb_hat = m_b[li] / (1 - beta1**t)
                vb_hat = v_b[li] / (1 - beta2**t)
                ws[li] -= lr_t * mw_hat / (np.sqrt(vw_hat) + eps)
                bs[li] -= lr_t * mb_hat / (np.sqrt(vb_hat) + eps)
        loss = val_loss()
        if loss < best[0] - 1e-9:
            best = (loss, [w.copy() for w in ws], [b.copy() for b in bs], epoch)
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best


def train_force(
    dataset,
    seed: int = 0,
    split: float = 0.2,
    epochs: int = 400,
    batch: int = 32,
    lr: float = 3e-3,
    patience: int = 20,
    hidden: tuple = HIDDEN,
):
    """Train the force regressor on (27-vector, 2-vector) samples.

    The dataset splits 80/20 into train and held-out test; a validation
    slice carved from the training part drives early stopping. Returns
    (ForceNet, report) where the report carries per-axis train/test MAE.
    """
    if isinstance(dataset, tuple):
        x, y = dataset
    else:
        x = np.array([row[0] for row in dataset], dtype=float)
        y = np.array([row[1] for row in dataset], dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 200:
        raise TooFewSamples(f"{len(x)} samples; need at least 200")
    if x.shape[1] != FORCE_INPUT_DIM or y.shape[1] != FORCE_OUTPUT_DIM:
        raise ConfigError("dataset must be 27-in, 2-out")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(x))
    n_test = int(round(split * len(x)))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_test, y_test = x[test_idx], y[test_idx]

    x_mean = x_train.mean(axis=0)
    x_std = x_train.std(axis=0)
    x_std[x_std < 1e-9] = 1.0
    xs = (x_train - x_mean) / x_std
    # train on standardized targets, then fold the de-normalization into the
    # output layer so the stored artifact stays a plain 27 -> 2 network
    y_mean = y_train.mean(axis=0)
    y_std = y_train.std(axis=0)
    y_std[y_std < 1e-9] = 1.0
    ys = (y_train - y_mean) / y_std

    dims = (FORCE_INPUT_DIM, *hidden, FORCE_OUTPUT_DIM)
    _, ws, bs, best_epoch = _adam_train(
        xs, ys, dims, seed, epochs, batch, lr, patience, val_frac=0.15
    )
    ws[-1] = ws[-1] * y_std[None, :]
    bs[-1] = bs[-1] * y_std + y_mean
    net = ForceNet(
        weights=tuple(ws), biases=tuple(bs), x_mean=x_mean, x_std=x_std, seed=seed
    )
    report = {
        "train_mae": np.abs(net.predict(x_train) - y_train).mean(axis=0).tolist(),
        "test_mae": np.abs(net.predict(x_test) - y_test).mean(axis=0).tolist(),
        "n_train": int(len(x_train)),
        "n_test": int(len(x_test)),
        "best_epoch": int(best_epoch),
        "seed": int(seed),
    }
    return net, report


def estimate_pose(cloud_points: np.ndarray, mask=None) -> float:
    """Orientation of a contact cloud from its principal x-y axis, degrees.

    The angle is measured from the image vertical, positive clockwise as
    seen by the camera, folded into (-90, 90]. The principal axis sign is
    taken toward positive x.
    """
    pts = np.asarray(cloud_points, dtype=float).reshape(-1, cloud_points.shape[-1])
    if mask is not None:
        pts = pts[np.asarray(mask, dtype=bool).reshape(-1)]
    if len(pts) < 10:
        raise TooFewPoints(f"{len(pts)} contact points; need at least 10")
    xy = pts[:, :2] - pts[:, :2].mean(axis=0)
    cov = xy.T @ xy / len(xy)
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] <= 0 or evals[1] / max(evals[0], 1e-12 * evals[1]) < 1.2:
        raise IsotropicCloud("no dominant axis in the contact cloud")
    axis = evecs[:, 1]
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    angle = np.degrees(np.arctan2(-axis[0], axis[1]))
    angle = (angle + 90.0) % 180.0 - 90.0
    if angle == -90.0:
        angle = 90.0
    return float(angle)


def depth_weighted_contact_point(cloud, depth_map) -> np.ndarray:
    """Contact point fed to the force net: depth-weighted centroid of the mask."""
    mask = depth_map.mask & cloud.valid
    if not mask.any():
        raise TooFewPoints("no contact pixels")
    w = depth_map.depth[mask]
    pts = cloud.points[mask]
    return (pts * w[:, None]).sum(axis=0) / w.sum()
