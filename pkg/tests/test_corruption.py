import numpy as np
import pytest

from motionlift.corruption import CorruptionSpec, corrupt_sequence, sample_masks, sample_noise
from motionlift.errors import ConfigError
from motionlift.rng import SeededRng
from motionlift.skeleton import h36m17
from motionlift.synthetic import generate_synthetic_clip
from motionlift.clips import orthographic_project


@pytest.fixture
def clip():
    c = generate_synthetic_clip(SeededRng(55), h36m17(), T=24, motion_class=0, num_classes=2)
    return orthographic_project(c)


class TestMasks:
    def test_zero_ratios_empty(self):
        spec = CorruptionSpec(frame_mask_ratio=0.0, joint_mask_ratio=0.0)
        mask = sample_masks(spec, 20, 17, SeededRng(0))
        assert not mask.any()

    def test_frame_ratio_one_all_masked(self):
        # ratio 1 fails validation by design; bypass it for this fixture
        spec = CorruptionSpec(frame_mask_ratio=1.0, joint_mask_ratio=0.0)
        mask = sample_masks(spec, 50, 17, SeededRng(0), _validate=False)
        assert mask.all()

    def test_frame_rows_are_whole(self):
        spec = CorruptionSpec(frame_mask_ratio=0.5, joint_mask_ratio=0.0)
        mask = sample_masks(spec, 200, 17, SeededRng(1))
        rowsums = mask.sum(axis=1)
        assert set(np.unique(rowsums)) <= {0, 17}

    def test_default_masked_fraction(self):
        # expectation f + (1-f)*j = 0.10 + 0.90*0.05 = 0.145
        spec = CorruptionSpec()
        rng = SeededRng(2)
        total, cells = 0, 0
        for _ in range(40):
            mask = sample_masks(spec, 250, 17, rng)
            total += mask.sum()
            cells += mask.size
        assert cells >= 100_000
        assert abs(total / cells - 0.145) <= 0.01


class TestNoise:
    def test_all_zero_spec(self):
        spec = CorruptionSpec(gauss_sigma=0.0, uniform_halfwidth=0.0, residual_gauss_sigma=0.0)
        noise = sample_noise(spec, 30, 17, SeededRng(3))
        assert np.array_equal(noise, np.zeros((30, 17, 2)))

    def test_piecewise_linear_between_keyframes(self):
        spec = CorruptionSpec(noise_keyframes=5, residual_gauss_sigma=0.0)
        T = 41  # 10 frames per keyframe segment
        noise = sample_noise(spec, T, 17, SeededRng(4))
        pos = np.linspace(0.0, 4.0, T)
        seg = np.floor(pos).astype(int)
        d2 = noise[2:] - 2 * noise[1:-1] + noise[:-2]
        interior = (seg[:-2] == seg[1:-1]) & (seg[1:-1] == seg[2:])
        assert np.max(np.abs(d2[interior])) <= 1e-12

    def test_residual_variance(self):
        spec = CorruptionSpec(gauss_sigma=0.0, uniform_halfwidth=0.0, residual_gauss_sigma=0.002)
        rng = SeededRng(5)
        draws = []
        for _ in range(40):
            draws.append(sample_noise(spec, 250, 60, rng).ravel())
        flat = np.concatenate(draws)
        assert flat.size >= 1_000_000
        var = flat.var()
        assert abs(var - 0.002**2) <= 0.1 * 0.002**2


class TestCorruptSequence:
    def test_identity_spec(self, clip):
        out, mask = corrupt_sequence(clip, CorruptionSpec.none(), SeededRng(6))
        assert np.array_equal(out, clip.pose2d)
        assert not mask.any()

    def test_masked_cells_exact_zero(self, clip):
        out, mask = corrupt_sequence(clip, CorruptionSpec(), SeededRng(7))
        assert mask.any()
        assert np.array_equal(out[mask], np.zeros((mask.sum(), 3)))

    def test_video2d_skips_noise(self, clip):
        video = clip.copy(pose3d=None, source="video2d")
        video.pose2d[:, :, 2] = 0.7
        noisy_spec = CorruptionSpec()
        mask_only = CorruptionSpec(apply_noise=False)
        a, ma = corrupt_sequence(video, noisy_spec, SeededRng(8))
        b, mb = corrupt_sequence(video, mask_only, SeededRng(8))
        assert np.array_equal(ma, mb)
        assert np.array_equal(a, b)

    def test_video2d_keeps_confidence(self, clip):
        video = clip.copy(pose3d=None, source="video2d")
        video.pose2d[:, :, 2] = 0.7
        out, mask = corrupt_sequence(video, CorruptionSpec(), SeededRng(9))
        assert np.all(out[~mask][:, 2] == 0.7)

    def test_pose3d_and_label_untouched(self, clip):
        before3d = clip.pose3d.copy()
        corrupt_sequence(clip, CorruptionSpec(), SeededRng(10))
        assert np.array_equal(clip.pose3d, before3d)

    def test_deterministic(self, clip):
        a, ma = corrupt_sequence(clip, CorruptionSpec(), SeededRng(11))
        b, mb = corrupt_sequence(clip, CorruptionSpec(), SeededRng(11))
        assert np.array_equal(a, b) and np.array_equal(ma, mb)


def test_ratio_validation():
    with pytest.raises(ConfigError):
        CorruptionSpec(frame_mask_ratio=0.6, joint_mask_ratio=0.5).validate()
    with pytest.raises(ConfigError):
        CorruptionSpec(noise_keyframes=1).validate()
