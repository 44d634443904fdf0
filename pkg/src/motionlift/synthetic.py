"""Synthetic motion generation: kinematically valid skeleton sequences whose
class identity is encoded in sinusoid frequency bands, so classes are
separable in simple trajectory statistics by construction.
"""

from __future__ import annotations

import numpy as np

from .clips import MotionClip
from .errors import ConfigError
from .rng import SeededRng
from .skeleton import SkeletonDef

# Rest offsets for the default 17-joint layout (meters, y up, left = +x).
_H36M17_OFFSETS = np.array(
    [
        [0.00, 0.00, 0.00],  # hip (root)
        [-0.13, 0.00, 0.00],  # r_hip
        [0.00, -0.45, 0.00],  # r_knee
        [0.00, -0.45, 0.00],  # r_ankle
        [0.13, 0.00, 0.00],  # l_hip
        [0.00, -0.45, 0.00],  # l_knee
        [0.00, -0.45, 0.00],  # l_ankle
        [0.00, 0.25, 0.00],  # spine
        [0.00, 0.25, 0.00],  # thorax
        [0.00, 0.12, 0.00],  # neck
        [0.00, 0.12, 0.00],  # head
        [0.19, 0.03, 0.00],  # l_shoulder
        [0.05, -0.26, 0.00],  # l_elbow
        [0.03, -0.25, 0.00],  # l_wrist
        [-0.19, 0.03, 0.00],  # r_shoulder
        [-0.05, -0.26, 0.00],  # r_elbow
        [-0.03, -0.25, 0.00],  # r_wrist
    ]
)


def rest_offsets(skeleton: SkeletonDef) -> np.ndarray:
    """Per-joint bone vector from the parent; root row is zero."""
    if skeleton.name == "h36m17" and skeleton.num_joints == 17:
        return _H36M17_OFFSETS.copy()
    # deterministic stand-in geometry for non-default layouts
    rng = SeededRng(0).derive(f"offsets/{skeleton.name}/{skeleton.num_joints}")
    dirs = rng.normal((skeleton.num_joints, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lengths = rng.uniform(0.15, 0.35, (skeleton.num_joints, 1))
    offs = dirs * lengths
    offs[skeleton.root] = 0.0
    return offs


def _topo_order(skeleton: SkeletonDef) -> list[int]:
    depth = [0] * skeleton.num_joints
    for j in range(skeleton.num_joints):
        k, d = j, 0
        while k != skeleton.root:
            k = skeleton.parents[k]
            d += 1
        depth[j] = d
    return sorted(range(skeleton.num_joints), key=lambda j: depth[j])


def _rot_x(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def _rot_z(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 2, 2] = 1.0
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def class_base_frequency(motion_class: int) -> float:
    """Disjoint per-class frequency bands: speed statistics scale with this."""
    return 0.4 * (1.0 + motion_class)


def generate_synthetic_clip(
    rng: SeededRng,
    skeleton: SkeletonDef,
    T: int,
    motion_class: int,
    num_classes: int,
    fps: float = 25.0,
    clip_id: str | None = None,
) -> MotionClip:
    """Forward-kinematics sequence with class-banded sinusoidal joint angles.

    Bone lengths are exactly constant over time (rotations preserve norms);
    higher classes move faster, so per-clip mean joint speed separates them.
    """
    if T < 2:
        raise ConfigError(f"synthetic clip needs T >= 2, got {T}")
    if not 0 <= motion_class < num_classes:
        raise ConfigError(f"motion_class {motion_class} outside [0, {num_classes})")

    J = skeleton.num_joints
    offsets = rest_offsets(skeleton)
    base_f = class_base_frequency(motion_class)
    t = np.arange(T) / fps  # (T,)

    def sinbank(freq_scale: float, amp: float) -> np.ndarray:
        """One sinusoid per (joint, draw) with banded frequency/amplitude."""
        f = base_f * freq_scale * (1.0 + 0.05 * rng.uniform(-1.0, 1.0, (J,)))
        a = amp * (1.0 + 0.10 * rng.uniform(-1.0, 1.0, (J,)))
        phi = rng.uniform(0.0, 2.0 * np.pi, (J,))
        return a[None, :] * np.sin(2.0 * np.pi * f[None, :] * t[:, None] + phi[None, :])

    # (T, J) joint angles about two local axes: class band + harmonic + drift
    theta_x = sinbank(1.0, 0.22) + sinbank(2.0, 0.08)
    theta_z = sinbank(1.0, 0.22) + sinbank(2.0, 0.08)
    drift_f = rng.uniform(0.05, 0.15, (J,))
    drift_phi = rng.uniform(0.0, 2.0 * np.pi, (J,))
    theta_x = theta_x + 0.04 * np.sin(2.0 * np.pi * drift_f[None, :] * t[:, None] + drift_phi[None, :])

    rot = np.matmul(_rot_x(theta_x), _rot_z(theta_z))  # (T, J, 3, 3)

    # root translation, also in the class band
    trans = np.zeros((T, 3))
    for axis in range(3):
        f = 0.5 * base_f * (1.0 + 0.05 * rng.uniform(-1.0, 1.0))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        amp = 0.10 if axis != 1 else 0.03
        trans[:, axis] = amp * np.sin(2.0 * np.pi * f * t + phi)

    glob = np.zeros((T, J, 3, 3))
    pos = np.zeros((T, J, 3))
    for j in _topo_order(skeleton):
        if j == skeleton.root:
            glob[:, j] = rot[:, j]
            pos[:, j] = trans
        else:
            p = skeleton.parents[j]
            glob[:, j] = np.matmul(glob[:, p], rot[:, j])
            pos[:, j] = pos[:, p] + np.einsum("tab,b->ta", glob[:, p], offsets[j])

    if clip_id is None:
        clip_id = f"syn-c{motion_class}"
    clip = MotionClip(
        id=clip_id,
        fps=fps,
        skeleton=skeleton,
        pose3d=pos,
        label=motion_class,
        source="mocap3d",
    )
    clip.validate()
    return clip


def mean_joint_speed(clip: MotionClip) -> float:
    """Per-clip trajectory statistic used to check class separability."""
    d = np.diff(clip.pose3d, axis=0)
    return float(np.linalg.norm(d, axis=-1).mean() * clip.fps)
