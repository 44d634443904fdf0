"""Evaluation measures: MPJPE, MPJVE, PA-MPJPE (per-frame similarity
Procrustes), MPVE, and top-k accuracy. Position metrics take data units
(meters) and report millimeters.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError

MM = 1000.0


def _check_same_shape(pred: np.ndarray, gt: np.ndarray, what: str) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"{what}: pred {pred.shape} vs gt {gt.shape}")


def _root_align(x: np.ndarray, root: int) -> np.ndarray:
    return x - x[:, root : root + 1, :]


def mpjpe(pred: np.ndarray, gt: np.ndarray, root: int = 0) -> float:
    """Mean per-joint position error (mm) after per-frame root alignment."""
    _check_same_shape(pred, gt, "mpjpe")
    d = _root_align(pred, root) - _root_align(gt, root)
    return float(np.linalg.norm(d, axis=-1).mean() * MM)


def mpjve(pred: np.ndarray, gt: np.ndarray, root: int = 0) -> float:
    """Mean per-joint velocity (first-difference) error in mm."""
    _check_same_shape(pred, gt, "mpjve")
    if pred.shape[0] < 2:
        raise DataError(f"mpjve needs T >= 2, got T={pred.shape[0]}")
    vp = np.diff(_root_align(pred, root), axis=0)
    vg = np.diff(_root_align(gt, root), axis=0)
    return float(np.linalg.norm(vp - vg, axis=-1).mean() * MM)


def _procrustes_frame(pred: np.ndarray, gt: np.ndarray) -> np.ndarray | None:
    """Optimal similarity transform of one (J, 3) frame onto gt; returns the
    aligned prediction, or None for a degenerate (rank < 2) frame.
    """
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    pc = pred - mu_p
    gc = gt - mu_g
    var_p = (pc * pc).sum()
    if var_p < 1e-18:
        return None
    h = pc.T @ gc
    u, s, vt = np.linalg.svd(h)
    if np.linalg.matrix_rank(h, tol=1e-12) < 2:
        return None
    sign = np.ones(3)
    if np.linalg.det(u @ vt) < 0:  # exclude reflections
        sign[-1] = -1.0
    r = (u * sign) @ vt
    scale = (s * sign).sum() / var_p
    return scale * pc @ r + mu_g


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE (mm) after per-frame Procrustes alignment in translation,
    rotation, and scale. Degenerate frames are skipped with a warning.
    """
    _check_same_shape(pred, gt, "pa_mpjpe")
    errs = []
    skipped = 0
    for t in range(pred.shape[0]):
        aligned = _procrustes_frame(pred[t], gt[t])
        if aligned is None:
            skipped += 1
            continue
        errs.append(np.linalg.norm(aligned - gt[t], axis=-1).mean())
    if skipped:
        warnings.warn(f"pa_mpjpe: skipped {skipped} degenerate frame(s)")
    if not errs:
        raise DataError("pa_mpjpe: all frames degenerate")
    return float(np.mean(errs) * MM)


def mpve(
    pred_vertices: np.ndarray,
    gt_vertices: np.ndarray,
    pred_root: np.ndarray,
    gt_root: np.ndarray,
) -> float:
    """Mean per-vertex error (mm) after aligning the provided root joints."""
    _check_same_shape(pred_vertices, gt_vertices, "mpve")
    d = (pred_vertices - pred_root[:, None, :]) - (gt_vertices - gt_root[:, None, :])
    return float(np.linalg.norm(d, axis=-1).mean() * MM)


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int = 1) -> float:
    """Fraction of rows whose label is among the k largest logits; ties go to
    the lower class index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if k > logits.shape[1]:
        raise DataError(f"top-{k} with only {logits.shape[1]} classes")
    # stable sort on (-logit, index): equal logits keep ascending class order
    order = np.argsort(-logits, axis=1, kind="stable")
    hits = (order[:, :k] == labels[:, None]).any(axis=1)
    return float(hits.mean())


# -- run records ----------------------------------------------------------------

@dataclass
class MetricsRecord:
    name: str
    value: float
    units: str  # "mm" | "fraction" | loss units
    context: dict = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    def to_dict(self) -> dict:
        if not np.isfinite(self.value):
            raise DataError(f"metrics record '{self.name}' has non-finite value")
        return {
            "name": self.name,
            "value": float(self.value),
            "units": self.units,
            "context": self.context,
            "timestamp": self.timestamp,
        }


def append_jsonl(path: str | Path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        fh.write(json.dumps(record) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open("r") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
