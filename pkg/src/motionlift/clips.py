"""Motion clips: the universal skeleton-sequence record, its transforms,
and JSON-lines file I/O (`.mclip.jsonl`, one clip per line).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import SeededRng
from .skeleton import SkeletonDef

SOURCES = ("mocap3d", "video2d")


@dataclass
class MotionClip:
    """One skeleton sequence; pose2d rows are (x, y, confidence)."""

    id: str
    fps: float
    skeleton: SkeletonDef
    pose3d: np.ndarray | None = None  # (T, J, 3)
    pose2d: np.ndarray | None = None  # (T, J, 3)
    label: int | None = None
    source: str = "mocap3d"

    @property
    def T(self) -> int:
        ref = self.pose3d if self.pose3d is not None else self.pose2d
        return ref.shape[0]

    @property
    def J(self) -> int:
        return self.skeleton.num_joints

    def validate(self) -> None:
        if self.pose3d is None and self.pose2d is None:
            raise DataError(f"clip '{self.id}': needs pose3d or pose2d")
        if self.source not in SOURCES:
            raise DataError(f"clip '{self.id}': unknown source '{self.source}'")
        j = self.skeleton.num_joints
        for name, arr in (("pose3d", self.pose3d), ("pose2d", self.pose2d)):
            if arr is None:
                continue
            if arr.ndim != 3 or arr.shape[1] != j or arr.shape[2] != 3:
                raise DataError(f"clip '{self.id}': {name} shape {arr.shape} not (T, {j}, 3)")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"clip '{self.id}': non-finite values in {name}")
        if self.pose3d is not None and self.pose2d is not None:
            if self.pose3d.shape[0] != self.pose2d.shape[0]:
                raise DataError(f"clip '{self.id}': pose3d/pose2d frame counts differ")
        if self.pose2d is not None:
            conf = self.pose2d[:, :, 2]
            if conf.min() < 0.0 or conf.max() > 1.0:
                raise DataError(f"clip '{self.id}': confidence outside [0, 1]")
        self.skeleton.validate()

    def copy(self, **updates) -> "MotionClip":
        fields = {
            "id": self.id,
            "fps": self.fps,
            "skeleton": self.skeleton,
            "pose3d": None if self.pose3d is None else self.pose3d.copy(),
            "pose2d": None if self.pose2d is None else self.pose2d.copy(),
            "label": self.label,
            "source": self.source,
        }
        fields.update(updates)
        return MotionClip(**fields)


# -- transforms ---------------------------------------------------------------

def orthographic_project(clip: MotionClip) -> MotionClip:
    """Fill pose2d with the (x, y) channels of pose3d at confidence 1."""
    if clip.pose3d is None:
        raise DataError(f"clip '{clip.id}': orthographic projection needs pose3d")
    pose2d = np.empty_like(clip.pose3d)
    pose2d[:, :, 0] = clip.pose3d[:, :, 0]
    pose2d[:, :, 1] = clip.pose3d[:, :, 1]
    pose2d[:, :, 2] = 1.0
    return clip.copy(pose2d=pose2d)


def horizontal_flip(clip: MotionClip, skeleton: SkeletonDef | None = None) -> MotionClip:
    """Negate the x channel and swap left/right joints; labels unchanged."""
    sk = skeleton if skeleton is not None else clip.skeleton
    perm = sk.mirror_permutation()
    out = clip.copy()
    for attr in ("pose3d", "pose2d"):
        arr = getattr(out, attr)
        if arr is None:
            continue
        flipped = arr[:, perm, :].copy()
        flipped[:, :, 0] = -flipped[:, :, 0]
        setattr(out, attr, flipped)
    return out


def sample_subclip(
    clip: MotionClip,
    T: int,
    stride: int = 1,
    offset: int | None = None,
    rng: SeededRng | None = None,
) -> MotionClip:
    """Contiguous length-T window. Valid offsets are multiples of stride that
    fit in the clip; rng mode draws one uniformly, or pass offset directly.
    """
    if clip.T < T:
        raise DataError(f"clip '{clip.id}': length {clip.T} < requested window {T}")
    if offset is None:
        if rng is None:
            offset = 0
        else:
            n_offsets = (clip.T - T) // stride + 1
            offset = stride * int(rng.integers(0, n_offsets))
    if not 0 <= offset <= clip.T - T:
        raise DataError(f"clip '{clip.id}': offset {offset} out of range for window {T}")
    out = clip.copy(id=f"{clip.id}+{offset}")
    if out.pose3d is not None:
        out.pose3d = out.pose3d[offset : offset + T]
    if out.pose2d is not None:
        out.pose2d = out.pose2d[offset : offset + T]
    return out


def _lerp_time(arr: np.ndarray, T_out: int) -> np.ndarray:
    """Linear resample of (T, ...) onto T_out uniform times, endpoints exact."""
    T = arr.shape[0]
    if T_out == T:
        return arr.copy()
    pos = np.linspace(0.0, T - 1.0, T_out)
    lo = np.clip(np.floor(pos).astype(int), 0, T - 2)
    frac = (pos - lo).reshape((T_out,) + (1,) * (arr.ndim - 1))
    return arr[lo] * (1.0 - frac) + arr[lo + 1] * frac


def resample_length(clip: MotionClip, T_out: int) -> MotionClip:
    """Linear interpolation onto T_out frames; confidence clamped to [0, 1]."""
    if clip.T < 2:
        raise DataError(f"clip '{clip.id}': resample needs at least 2 frames")
    out = clip.copy(id=f"{clip.id}~{T_out}")
    if out.pose3d is not None:
        out.pose3d = _lerp_time(out.pose3d, T_out)
    if out.pose2d is not None:
        out.pose2d = _lerp_time(out.pose2d, T_out)
        np.clip(out.pose2d[:, :, 2], 0.0, 1.0, out=out.pose2d[:, :, 2])
    return out


def remap_joints(
    clip: MotionClip,
    mapping: list[tuple],
    target_skeleton: SkeletonDef | None = None,
) -> MotionClip:
    """Re-layout joints. Each target-joint recipe is ("copy", j) or
    ("mid", j, k); midpoints average positions and take the min confidence.
    """
    j_src = clip.J
    for recipe in mapping:
        for idx in recipe[1:]:
            if not 0 <= idx < j_src:
                raise DataError(f"remap recipe {recipe} references joint {idx} of {j_src}")
    j_out = len(mapping)
    if target_skeleton is None:
        if j_out == j_src:
            target_skeleton = clip.skeleton
        else:
            # trivial chain stand-in; callers with a real layout should pass it
            target_skeleton = SkeletonDef(
                name=f"remap{j_out}",
                parents=(0,) + tuple(range(j_out - 1)),
                mirror_pairs=(),
            )

    def apply(arr: np.ndarray, is2d: bool) -> np.ndarray:
        out = np.empty((arr.shape[0], j_out, 3))
        for t_idx, recipe in enumerate(mapping):
            if recipe[0] == "copy":
                out[:, t_idx] = arr[:, recipe[1]]
            elif recipe[0] == "mid":
                a, b = arr[:, recipe[1]], arr[:, recipe[2]]
                out[:, t_idx] = 0.5 * (a + b)
                if is2d:
                    out[:, t_idx, 2] = np.minimum(a[:, 2], b[:, 2])
            else:
                raise DataError(f"unknown remap recipe kind '{recipe[0]}'")
        return out

    out = clip.copy(skeleton=target_skeleton)
    if out.pose3d is not None:
        out.pose3d = apply(out.pose3d, is2d=False)
    if out.pose2d is not None:
        out.pose2d = apply(out.pose2d, is2d=True)
    return out


# -- file I/O -------------------------------------------------------------------

def _arr_to_json(arr: np.ndarray | None):
    return None if arr is None else arr.tolist()


def clip_to_dict(clip: MotionClip) -> dict:
    return {
        "id": clip.id,
        "fps": clip.fps,
        "J": clip.J,
        "T": clip.T,
        "pose3d": _arr_to_json(clip.pose3d),
        "pose2d": _arr_to_json(clip.pose2d),
        "label": clip.label,
        "source": clip.source,
        "skeleton_def": clip.skeleton.to_dict(),
    }


def clip_from_dict(d: dict) -> MotionClip:
    required = {"id", "fps", "J", "T", "pose3d", "pose2d", "label", "source", "skeleton_def"}
    missing = required - set(d)
    if missing:
        raise DataError(f"clip record missing fields: {sorted(missing)}")
    clip = MotionClip(
        id=str(d["id"]),
        fps=float(d["fps"]),
        skeleton=SkeletonDef.from_dict(d["skeleton_def"]),
        pose3d=None if d["pose3d"] is None else np.asarray(d["pose3d"], dtype=np.float64),
        pose2d=None if d["pose2d"] is None else np.asarray(d["pose2d"], dtype=np.float64),
        label=None if d["label"] is None else int(d["label"]),
        source=str(d["source"]),
    )
    clip.validate()
    if clip.T != int(d["T"]) or clip.J != int(d["J"]):
        raise DataError(f"clip '{clip.id}': declared T/J do not match arrays")
    return clip


def write_clip_file(path: str | Path, clips: list[MotionClip]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for clip in clips:
            clip.validate()
            fh.write(json.dumps(clip_to_dict(clip)) + "\n")


def read_clip_file(path: str | Path) -> list[MotionClip]:
    path = Path(path)
    clips: list[MotionClip] = []
    with path.open("r") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed JSON: {e}") from e
            try:
                clips.append(clip_from_dict(record))
            except DataError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return clips
