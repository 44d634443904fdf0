"""Pretraining input degradation: frame/joint masks plus smooth noise.

Noise is drawn at a small number of keyframes from a Gaussian/uniform
mixture, linearly upsampled to the clip length, and topped with a tiny
per-frame Gaussian residual. Masks are applied last so masked cells are
exactly (0, 0, 0). Mask and noise draws come from independent derived rng
streams, so skipping noise (already-noisy 2D sources) does not shift masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clips import MotionClip
from .errors import ConfigError, DataError
from .rng import SeededRng


@dataclass
class CorruptionSpec:
    frame_mask_ratio: float = 0.10
    joint_mask_ratio: float = 0.05
    noise_keyframes: int = 27
    gauss_sigma: float = 0.01
    uniform_halfwidth: float = 0.05
    gauss_weight: float = 0.8
    residual_gauss_sigma: float = 0.002
    apply_noise: bool = True

    def validate(self) -> None:
        for name in ("frame_mask_ratio", "joint_mask_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if self.frame_mask_ratio + self.joint_mask_ratio >= 1.0:
            raise ConfigError("frame + joint mask ratios must sum below 1")
        if self.noise_keyframes < 2:
            raise ConfigError(f"noise_keyframes must be >= 2, got {self.noise_keyframes}")
        if not 0.0 <= self.gauss_weight <= 1.0:
            raise ConfigError(f"gauss_weight must be in [0, 1], got {self.gauss_weight}")

    @classmethod
    def none(cls) -> "CorruptionSpec":
        """Identity corruption (useful as a test fixture)."""
        return cls(
            frame_mask_ratio=0.0,
            joint_mask_ratio=0.0,
            gauss_sigma=0.0,
            uniform_halfwidth=0.0,
            residual_gauss_sigma=0.0,
            apply_noise=False,
        )


def sample_masks(spec: CorruptionSpec, T: int, J: int, rng: SeededRng, _validate: bool = True) -> np.ndarray:
    """(T, J) boolean mask; True = masked. Whole frames first, then joints."""
    if _validate:
        spec.validate()
    frame_rows = rng.random(T) < spec.frame_mask_ratio
    joint_cells = rng.random((T, J)) < spec.joint_mask_ratio
    return frame_rows[:, None] | joint_cells


def sample_noise(spec: CorruptionSpec, T: int, J: int, rng: SeededRng, _validate: bool = True) -> np.ndarray:
    """(T, J, 2) offsets: keyframe mixture draws, linearly upsampled over
    time, plus an independent per-frame Gaussian residual.
    """
    if _validate:
        spec.validate()
    if T < 2:
        raise DataError(f"sample_noise needs T >= 2, got {T}")
    tk = spec.noise_keyframes
    pick_gauss = rng.random((tk, J)) < spec.gauss_weight
    gauss = rng.normal((tk, J, 2), sigma=spec.gauss_sigma)
    unif = rng.uniform(-spec.uniform_halfwidth, spec.uniform_halfwidth, (tk, J, 2))
    key = np.where(pick_gauss[:, :, None], gauss, unif)

    # upsample keyframes to T with exact piecewise-linear interpolation
    pos = np.linspace(0.0, tk - 1.0, T)
    lo = np.clip(np.floor(pos).astype(int), 0, tk - 2)
    frac = (pos - lo)[:, None, None]
    up = key[lo] * (1.0 - frac) + key[lo + 1] * frac

    return up + rng.normal((T, J, 2), sigma=spec.residual_gauss_sigma)


def corrupt_sequence(
    clip: MotionClip, spec: CorruptionSpec, rng: SeededRng
) -> tuple[np.ndarray, np.ndarray]:
    """Degrade clip.pose2d: noise first (clean projected sources only), then
    masks. Returns (corrupted (T, J, 3), mask (T, J)); the clip is untouched.
    """
    spec.validate()
    if clip.pose2d is None:
        raise DataError(f"clip '{clip.id}': corruption needs pose2d")
    T, J = clip.pose2d.shape[:2]
    out = clip.pose2d.copy()

    if spec.apply_noise and clip.source == "mocap3d":
        out[:, :, :2] += sample_noise(spec, T, J, rng.derive("noise"), _validate=False)
        out[:, :, 2] = 1.0  # clean projection stays fully confident

    mask = sample_masks(spec, T, J, rng.derive("mask"), _validate=False)
    out[mask] = 0.0
    return out, mask
