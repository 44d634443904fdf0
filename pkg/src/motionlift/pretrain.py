"""Unified 2D-to-3D lifting pretext task.

3D-annotated sources pay a position loss plus a weighted velocity loss;
2D-only sources pay a confidence-weighted reprojection loss. Losses are
normalized by their term counts so the velocity weight keeps one meaning
across clip lengths. Training follows a curriculum: 3D-only epochs first,
then both sources with batches interleaved proportionally to dataset size.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clips import MotionClip, horizontal_flip, orthographic_project, resample_length, sample_subclip
from .corruption import CorruptionSpec, corrupt_sequence
from .checkpoint import save_params
from .dstformer import DstformerConfig, EncoderOutput, dstformer_forward, init_dstformer_params
from .errors import ConfigError, DataError, NumericError, ShapeError
from .metrics import append_jsonl
from .optim import AdamState, adam_step
from .rng import SeededRng
from .tensor import Tensor, astensor, backward, norm_lastdim, tsum, zero_grads


@dataclass
class PretrainConfig:
    lambda_velocity: float = 20.0
    epochs_3d_only: int = 3
    epochs_mixed: int = 6
    lr: float = 0.0005
    batch_size: int = 8
    clip_len_mocap: int = 24
    clip_len_video: int = 16
    flip_augment: bool = True

    def validate(self) -> None:
        if self.lambda_velocity < 0:
            raise ConfigError(f"lambda_velocity must be >= 0, got {self.lambda_velocity}")
        if self.epochs_3d_only < 0 or self.epochs_mixed < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


# -- losses ---------------------------------------------------------------------

def loss_3d(pred: Tensor, gt) -> Tensor:
    """Mean over (t, j) of per-joint Euclidean errors."""
    gt = astensor(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"loss_3d shapes differ: {pred.shape} vs {gt.shape}")
    t, j = pred.shape[0], pred.shape[1]
    return tsum(norm_lastdim(pred - gt)) * (1.0 / (t * j))


def loss_velocity(pred: Tensor, gt) -> Tensor:
    """Mean per-joint error of first temporal differences."""
    gt = astensor(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"loss_velocity shapes differ: {pred.shape} vs {gt.shape}")
    t, j = pred.shape[0], pred.shape[1]
    if t < 2:
        warnings.warn("loss_velocity on a single frame is 0")
        return Tensor(0.0)
    vp = pred[1:] - pred[:-1]
    vg = gt[1:] - gt[:-1]
    return tsum(norm_lastdim(vp - vg)) * (1.0 / ((t - 1) * j))


def loss_2d_reprojection(pred3d: Tensor, gt2d, conf) -> Tensor:
    """Confidence-weighted mean 2D error of the orthographic projection."""
    gt2d = astensor(gt2d)
    conf = np.asarray(conf, dtype=np.float64)
    t, j = pred3d.shape[0], pred3d.shape[1]
    if gt2d.shape != (t, j, 2):
        raise ShapeError(f"loss_2d gt must be ({t}, {j}, 2), got {gt2d.shape}")
    if conf.shape != (t, j):
        raise ShapeError(f"loss_2d conf must be ({t}, {j}), got {conf.shape}")
    if conf.min() < 0.0 or conf.max() > 1.0:
        raise DataError("loss_2d confidence weights outside [0, 1]")
    err = norm_lastdim(pred3d[:, :, :2] - gt2d)
    return tsum(err * conf) * (1.0 / (t * j))


@dataclass
class Sample:
    x_in: np.ndarray  # corrupted (T, J, 3) input
    mask: np.ndarray  # (T, J) bool
    gt3d: np.ndarray | None = None  # (T, J, 3)
    gt2d: np.ndarray | None = None  # (T, J, 2)
    conf: np.ndarray | None = None  # (T, J)


@dataclass
class Batch:
    source: str  # homogeneous: "mocap3d" | "video2d"
    samples: list[Sample]


def total_pretrain_loss(
    batch: Batch, outputs: list[EncoderOutput], config: PretrainConfig
) -> tuple[Tensor, dict[str, float]]:
    """Batch loss: position + weighted velocity for 3D sources, reprojection
    for 2D sources; averaged over the batch.
    """
    if len(outputs) != len(batch.samples):
        raise ShapeError(f"{len(outputs)} outputs for {len(batch.samples)} samples")
    terms = []
    parts = {"loss_3d": 0.0, "loss_vel": 0.0, "loss_2d": 0.0}
    for sample, out in zip(batch.samples, outputs):
        if batch.source == "mocap3d":
            l3 = loss_3d(out.lifted, sample.gt3d)
            lv = loss_velocity(out.lifted, sample.gt3d)
            terms.append(l3 + config.lambda_velocity * lv)
            parts["loss_3d"] += l3.item()
            parts["loss_vel"] += lv.item()
        elif batch.source == "video2d":
            l2 = loss_2d_reprojection(out.lifted, sample.gt2d, sample.conf)
            terms.append(l2)
            parts["loss_2d"] += l2.item()
        else:
            raise DataError(f"unknown batch source '{batch.source}'")
    n = len(terms)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    total = total * (1.0 / n)
    for k in parts:
        parts[k] /= n
    parts["loss_total"] = total.item()
    return total, parts


def curriculum_schedule(epoch: int, config: PretrainConfig) -> str:
    """"mocap3d" during the 3D-only warmup, "mixed" afterwards."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return "mocap3d" if epoch < config.epochs_3d_only else "mixed"


# -- batch assembly ----------------------------------------------------------------

def _worker_count() -> int:
    raw = os.environ.get("MOTIONLIFT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MOTIONLIFT_THREADS must be an integer, got '{raw}'")
    return max(1, n)


def map_workers(fn, items):
    """Map fn over items, optionally in threads (MOTIONLIFT_THREADS); output
    order always equals serial order.
    """
    n = _worker_count()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def fit_length(clip: MotionClip, target: int, rng: SeededRng) -> MotionClip:
    """Window longer clips, resample shorter ones (never zero-pad)."""
    if clip.T == target:
        return clip
    if clip.T > target:
        return sample_subclip(clip, target, rng=rng)
    return resample_length(clip, target)


def make_sample(clip: MotionClip, target_len: int, spec: CorruptionSpec,
                rng: SeededRng, flip_augment: bool) -> Sample:
    """Length-fit, optionally flip, project if needed, then corrupt."""
    c = fit_length(clip, target_len, rng.derive("len"))
    if flip_augment and float(rng.derive("flip").random()) < 0.5:
        c = horizontal_flip(c)
    if c.source == "mocap3d":
        c = orthographic_project(c)
        x_in, mask = corrupt_sequence(c, spec, rng.derive("corrupt"))
        return Sample(x_in=x_in, mask=mask, gt3d=c.pose3d)
    x_in, mask = corrupt_sequence(c, spec, rng.derive("corrupt"))
    return Sample(x_in=x_in, mask=mask, gt2d=c.pose2d[:, :, :2].copy(),
                  conf=c.pose2d[:, :, 2].copy())


def _chunk(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def _interleave(a: list, b: list) -> list:
    """Proportional deterministic merge of two batch streams."""
    out, ia, ib = [], 0, 0
    na, nb = len(a), len(b)
    while ia < na or ib < nb:
        if ib >= nb or (ia < na and ia * nb <= ib * na):
            out.append(a[ia])
            ia += 1
        else:
            out.append(b[ib])
            ib += 1
    return out


@dataclass
class PretrainResult:
    params: dict[str, Tensor]
    epoch_means: list[dict[str, float]]
    best_epoch: int
    records: list[dict] = field(default_factory=list)


def pretrain_loop(
    clips: list[MotionClip],
    model_config: DstformerConfig,
    config: PretrainConfig,
    spec: CorruptionSpec,
    rng: SeededRng,
    out_dir: str | None = None,
    params: dict[str, Tensor] | None = None,
) -> PretrainResult:
    """Full pretraining run; deterministic given the rng seed.

    Writes per-step metrics lines plus one epoch-mean line (step = -1) to
    <out_dir>/metrics.jsonl, and per-epoch/best/final checkpoints, when
    out_dir is given.
    """
    config.validate()
    spec.validate()
    mocap = [c for c in clips if c.source == "mocap3d"]
    video = [c for c in clips if c.source == "video2d"]
    if not mocap:
        raise DataError("pretraining needs at least one mocap3d clip")
    if params is None:
        params = init_dstformer_params(model_config, rng.derive("init"))
    state = AdamState(lr=config.lr)
    trainable = [n for n, t in params.items() if t.requires_grad]

    result = PretrainResult(params=params, epoch_means=[], best_epoch=-1)
    metrics_path = None
    if out_dir is not None:
        metrics_path = os.path.join(out_dir, "metrics.jsonl")
        if os.path.exists(metrics_path):
            os.remove(metrics_path)

    def emit(record: dict):
        result.records.append(record)
        if metrics_path is not None:
            append_jsonl(metrics_path, record)

    best_loss = np.inf
    step_global = 0
    total_epochs = config.epochs_3d_only + config.epochs_mixed
    for epoch in range(total_epochs):
        erng = rng.derive(f"epoch{epoch}")
        mode = curriculum_schedule(epoch, config)
        order3 = erng.derive("shuffle3d").permutation(len(mocap))
        schedule = [
            ("mocap3d", [mocap[i] for i in group])
            for group in _chunk(list(order3), config.batch_size)
        ]
        if mode == "mixed" and video:
            order2 = erng.derive("shuffle2d").permutation(len(video))
            schedule = _interleave(
                schedule,
                [
                    ("video2d", [video[i] for i in group])
                    for group in _chunk(list(order2), config.batch_size)
                ],
            )

        sums: dict[str, float] = {}
        for step, (source, group) in enumerate(schedule):
            t0 = time.perf_counter()
            srng = erng.derive(f"step{step}")
            target = config.clip_len_mocap if source == "mocap3d" else config.clip_len_video
            sample_rngs = [srng.derive(f"clip{i}") for i in range(len(group))]
            samples = map_workers(
                lambda pair: make_sample(pair[0], target, spec, pair[1], config.flip_augment),
                list(zip(group, sample_rngs)),
            )
            batch = Batch(source, samples)
            outputs = [
                dstformer_forward(s.x_in, params, model_config, training=True,
                                  rng=srng.derive(f"fwd{i}"))
                for i, s in enumerate(batch.samples)
            ]
            loss, parts = total_pretrain_loss(batch, outputs, config)
            if not np.isfinite(parts["loss_total"]):
                raise NumericError(f"non-finite loss at epoch {epoch} step {step}")
            backward(loss)
            grads = {n: params[n].grad for n in trainable if params[n].grad is not None}
            adam_step(params, grads, state)
            zero_grads(params.values())

            record = {
                "epoch": epoch,
                "step": step_global,
                **{k: parts[k] for k in ("loss_total", "loss_3d", "loss_vel", "loss_2d")},
                "lr": config.lr,
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
            emit(record)
            for k in ("loss_total", "loss_3d", "loss_vel", "loss_2d"):
                sums[k] = sums.get(k, 0.0) + parts[k]
            step_global += 1

        means = {k: v / max(1, len(schedule)) for k, v in sums.items()}
        result.epoch_means.append(means)
        emit({"epoch": epoch, "step": -1, **means, "lr": config.lr, "wall_ms": 0.0})
        if out_dir is not None:
            save_params(os.path.join(out_dir, "checkpoints", f"epoch{epoch:04d}"), params)
        if means["loss_total"] < best_loss:
            best_loss = means["loss_total"]
            result.best_epoch = epoch
            if out_dir is not None:
                save_params(os.path.join(out_dir, "checkpoints", "best"), params)
    if out_dir is not None:
        save_params(os.path.join(out_dir, "checkpoints", "final"), params)
    return result
