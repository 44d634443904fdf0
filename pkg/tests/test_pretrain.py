import numpy as np
import pytest

from motionlift.corruption import CorruptionSpec
from motionlift.dstformer import DstformerConfig
from motionlift.errors import DataError, ShapeError
from motionlift.gradcheck import grad_check
from motionlift.pretrain import (
    Batch,
    PretrainConfig,
    Sample,
    curriculum_schedule,
    loss_2d_reprojection,
    loss_3d,
    loss_velocity,
    pretrain_loop,
    total_pretrain_loss,
)
from motionlift.rng import SeededRng
from motionlift.skeleton import h36m17
from motionlift.synthetic import generate_synthetic_clip
from motionlift.tensor import Tensor


def loss3d_oracle(pred, gt):
    total = 0.0
    for t in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            total += np.sqrt(((pred[t, j] - gt[t, j]) ** 2).sum())
    return total / (pred.shape[0] * pred.shape[1])


def velocity_oracle(pred, gt):
    vp, vg = np.diff(pred, axis=0), np.diff(gt, axis=0)
    total = 0.0
    for t in range(vp.shape[0]):
        for j in range(vp.shape[1]):
            total += np.sqrt(((vp[t, j] - vg[t, j]) ** 2).sum())
    return total / (vp.shape[0] * vp.shape[1])


def reproj_oracle(pred, gt2d, conf):
    total = 0.0
    for t in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            total += conf[t, j] * np.sqrt(((pred[t, j, :2] - gt2d[t, j]) ** 2).sum())
    return total / (pred.shape[0] * pred.shape[1])


class TestLoss3d:
    def test_perfect_prediction(self):
        x = SeededRng(1).normal((4, 5, 3))
        assert loss_3d(Tensor(x), x).item() == 0.0

    def test_three_four_five(self):
        gt = np.zeros((1, 1, 3))
        pred = np.array([[[3.0, 4.0, 0.0]]])
        assert loss_3d(Tensor(pred), gt).item() == pytest.approx(5.0, abs=1e-12)

    def test_matches_oracle(self):
        rng = SeededRng(2)
        pred, gt = rng.normal((6, 7, 3)), rng.normal((6, 7, 3))
        assert abs(loss_3d(Tensor(pred), gt).item() - loss3d_oracle(pred, gt)) <= 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            loss_3d(Tensor(np.zeros((2, 3, 3))), np.zeros((2, 4, 3)))


class TestLossVelocity:
    def test_constant_offset_cancels(self):
        rng = SeededRng(3)
        gt = rng.normal((5, 4, 3))
        pred = gt + np.array([0.3, -0.2, 0.9])
        assert loss_velocity(Tensor(pred), gt).item() <= 1e-15

    def test_both_constant(self):
        pred = np.tile(SeededRng(4).normal((1, 4, 3)), (6, 1, 1))
        gt = np.tile(SeededRng(5).normal((1, 4, 3)), (6, 1, 1))
        assert loss_velocity(Tensor(pred), gt).item() == 0.0

    def test_matches_oracle(self):
        rng = SeededRng(6)
        pred, gt = rng.normal((6, 7, 3)), rng.normal((6, 7, 3))
        assert abs(loss_velocity(Tensor(pred), gt).item() - velocity_oracle(pred, gt)) <= 1e-12

    def test_single_frame_warns_and_returns_zero(self):
        with pytest.warns(UserWarning):
            out = loss_velocity(Tensor(np.ones((1, 4, 3))), np.zeros((1, 4, 3)))
        assert out.item() == 0.0


class TestLoss2d:
    def test_zero_confidence(self):
        rng = SeededRng(7)
        pred = Tensor(rng.normal((4, 5, 3)))
        gt2d = rng.normal((4, 5, 2))
        assert loss_2d_reprojection(pred, gt2d, np.zeros((4, 5))).item() == 0.0

    def test_depth_unpenalized(self):
        rng = SeededRng(8)
        gt2d = rng.normal((4, 5, 2))
        pred = np.concatenate([gt2d, rng.normal((4, 5, 1))], axis=-1)
        out = loss_2d_reprojection(Tensor(pred), gt2d, np.ones((4, 5)))
        assert out.item() == 0.0

    def test_matches_oracle(self):
        rng = SeededRng(9)
        pred = rng.normal((5, 6, 3))
        gt2d = rng.normal((5, 6, 2))
        conf = rng.random((5, 6))
        got = loss_2d_reprojection(Tensor(pred), gt2d, conf).item()
        assert abs(got - reproj_oracle(pred, gt2d, conf)) <= 1e-12


class TestTotalLoss:
    def _mocap_batch(self, pred, gt):
        sample = Sample(x_in=np.zeros_like(gt), mask=np.zeros(gt.shape[:2], bool), gt3d=gt)
        from motionlift.dstformer import EncoderOutput

        out = EncoderOutput(embedding=Tensor(np.zeros(1)), lifted=Tensor(pred),
                            alpha_st=np.zeros(1), alpha_ts=np.zeros(1))
        return Batch("mocap3d", [sample]), [out]

    def test_perfect_mocap_is_zero(self):
        gt = SeededRng(10).normal((4, 5, 3))
        batch, outs = self._mocap_batch(gt, gt)
        total, parts = total_pretrain_loss(batch, outs, PretrainConfig())
        assert total.item() == 0.0
        assert parts["loss_3d"] == 0.0 and parts["loss_vel"] == 0.0

    def test_lambda_zero_reduces_to_3d(self):
        rng = SeededRng(11)
        gt, pred = rng.normal((4, 5, 3)), rng.normal((4, 5, 3))
        batch, outs = self._mocap_batch(pred, gt)
        total, _ = total_pretrain_loss(batch, outs, PretrainConfig(lambda_velocity=0.0))
        assert abs(total.item() - loss_3d(Tensor(pred), gt).item()) <= 1e-15

    def test_weighted_arithmetic(self):
        # constructed so normalized L3D = 1 and LO = 0.5: total = 1 + 20*0.5 = 11
        gt = np.zeros((2, 1, 3))
        pred = np.zeros((2, 1, 3))
        pred[0, 0, 0] = 0.75
        pred[1, 0, 0] = 1.25
        batch, outs = self._mocap_batch(pred, gt)
        total, parts = total_pretrain_loss(batch, outs, PretrainConfig(lambda_velocity=20.0))
        assert parts["loss_3d"] == pytest.approx(1.0, abs=1e-12)
        assert parts["loss_vel"] == pytest.approx(0.5, abs=1e-12)
        assert total.item() == pytest.approx(11.0, abs=1e-12)


class TestGradients:
    def test_losses_pass_grad_check(self):
        rng = SeededRng(12)
        gt = rng.normal((3, 4, 3))
        gt2d = rng.normal((3, 4, 2))
        conf = rng.random((3, 4))
        for f in (
            lambda t: loss_3d(t, gt),
            lambda t: loss_velocity(t, gt),
            lambda t: loss_2d_reprojection(t, gt2d, conf),
        ):
            x = Tensor(rng.normal((3, 4, 3)), requires_grad=True)
            assert grad_check(f, x) <= 1e-4


class TestCurriculum:
    def test_epoch_zero_is_3d_only(self):
        assert curriculum_schedule(0, PretrainConfig(epochs_3d_only=3)) == "mocap3d"

    def test_boundary_is_mixed(self):
        cfg = PretrainConfig(epochs_3d_only=3)
        assert curriculum_schedule(3, cfg) == "mixed"
        assert curriculum_schedule(2, cfg) == "mocap3d"


def make_dataset(seed=900, n_mocap=4, n_video=2, T=12):
    sk = h36m17()
    rng = SeededRng(seed)
    clips = []
    for i in range(n_mocap):
        clips.append(generate_synthetic_clip(rng.derive(f"m{i}"), sk, T, i % 2, 2,
                                             clip_id=f"m{i}"))
    for i in range(n_video):
        from motionlift.clips import orthographic_project

        c = orthographic_project(
            generate_synthetic_clip(rng.derive(f"v{i}"), sk, T, i % 2, 2, clip_id=f"v{i}")
        )
        c.pose2d[:, :, 2] = 0.9
        clips.append(c.copy(pose3d=None, source="video2d"))
    return clips


def tiny_model():
    return DstformerConfig(depth=1, heads=2, ch_feat=8, ch_embed=8, max_t=16, joints=17)


def tiny_pretrain(total_epochs=2, mixed=1):
    return PretrainConfig(
        epochs_3d_only=total_epochs - mixed,
        epochs_mixed=mixed,
        lr=0.005,
        batch_size=4,
        clip_len_mocap=8,
        clip_len_video=8,
    )


class TestLoop:
    def test_initial_loss_positive(self):
        clips = make_dataset()
        result = pretrain_loop(clips, tiny_model(), tiny_pretrain(), CorruptionSpec(),
                               SeededRng(50))
        assert result.epoch_means[0]["loss_total"] > 0.0

    def test_no_video_batches_before_boundary(self):
        clips = make_dataset()
        cfg = tiny_pretrain(total_epochs=4, mixed=2)
        result = pretrain_loop(clips, tiny_model(), cfg, CorruptionSpec(), SeededRng(51))
        for rec in result.records:
            if rec["step"] == -1:
                continue
            if rec["epoch"] < cfg.epochs_3d_only:
                assert rec["loss_2d"] == 0.0
        # mixed epochs do schedule 2D batches
        mixed_2d = [r for r in result.records
                    if r["step"] >= 0 and r["epoch"] >= cfg.epochs_3d_only and r["loss_2d"] > 0]
        assert mixed_2d

    def test_determinism_replay(self):
        clips = make_dataset()
        a = pretrain_loop(clips, tiny_model(), tiny_pretrain(), CorruptionSpec(), SeededRng(52))
        b = pretrain_loop(clips, tiny_model(), tiny_pretrain(), CorruptionSpec(), SeededRng(52))
        for ra, rb in zip(a.records, b.records):
            assert abs(ra["loss_total"] - rb["loss_total"]) <= 1e-9

    def test_needs_mocap(self):
        clips = [c for c in make_dataset() if c.source == "video2d"]
        with pytest.raises(DataError):
            pretrain_loop(clips, tiny_model(), tiny_pretrain(), CorruptionSpec(), SeededRng(53))

    def test_artifacts_written(self, tmp_path):
        clips = make_dataset()
        out = tmp_path / "run"
        pretrain_loop(clips, tiny_model(), tiny_pretrain(), CorruptionSpec(), SeededRng(54),
                      out_dir=str(out))
        assert (out / "metrics.jsonl").exists()
        assert (out / "checkpoints" / "best.json").exists()
        assert (out / "checkpoints" / "final.bin").exists()
