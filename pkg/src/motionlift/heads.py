"""Task-specific heads over the motion embedding E (T, J, C_e).

Action recognition pools E over time and joints into an MLP classifier;
one-shot recognition uses a linear action representation trained with a
supervised contrastive loss and classified by 1-NN cosine similarity; mesh
recovery regresses per-frame 6D joint rotations and a single shape vector,
rendered through the toy body model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bodymodel import ToyBodyModel, body_model_forward
from .errors import ConfigError, DataError, ShapeError
from .rng import SeededRng
from .tensor import (
    Tensor,
    astensor,
    concat,
    dropout,
    matmul,
    norm_lastdim,
    relu,
    tabs,
    texp,
    tlog,
    tsqrt,
    tsum,
)


def _uniform_linear(rng: SeededRng, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(1.0 / fan_in)
    return rng.uniform(-lim, lim, (fan_in, fan_out))


def pool_embedding(e: Tensor) -> Tensor:
    """Global average over time and joints: (T, J, C) -> (C,)."""
    return e.mean(axis=(0, 1))


# -- action classification ------------------------------------------------------

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def init_action_head(rng: SeededRng, ch_embed: int, hidden: int, num_classes: int) -> dict[str, Tensor]:
    p = {
        "action.fc1.w": Tensor(_uniform_linear(rng, ch_embed, hidden), requires_grad=True),
        "action.fc1.b": Tensor(np.zeros(hidden), requires_grad=True),
        "action.bn.g": Tensor(np.ones(hidden), requires_grad=True),
        "action.bn.b": Tensor(np.zeros(hidden), requires_grad=True),
        # running batch statistics: buffers, not learnable
        "action.bn.rm": Tensor(np.zeros(hidden)),
        "action.bn.rv": Tensor(np.ones(hidden)),
        "action.fc2.w": Tensor(_uniform_linear(rng, hidden, num_classes), requires_grad=True),
        "action.fc2.b": Tensor(np.zeros(num_classes), requires_grad=True),
    }
    return p


def _batchnorm(x: Tensor, params: dict[str, Tensor], training: bool) -> Tensor:
    """Batch statistics in training (updating running buffers), running
    statistics at eval; per-feature over a (B, H) batch.
    """
    if training:
        mu = x.mean(axis=0, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=0, keepdims=True)
        params["action.bn.rm"].data *= 1.0 - BN_MOMENTUM
        params["action.bn.rm"].data += BN_MOMENTUM * mu.data[0]
        params["action.bn.rv"].data *= 1.0 - BN_MOMENTUM
        params["action.bn.rv"].data += BN_MOMENTUM * var.data[0]
        xhat = xc / tsqrt(var + BN_EPS)
    else:
        xhat = (x - params["action.bn.rm"].data) / np.sqrt(params["action.bn.rv"].data + BN_EPS)
    return xhat * params["action.bn.g"] + params["action.bn.b"]


def action_forward_batch(
    embeddings: list[Tensor],
    params: dict[str, Tensor],
    training: bool = False,
    rng: SeededRng | None = None,
    dropout_p: float = 0.5,
) -> Tensor:
    """Logits (B, num_classes) for a batch of embeddings (each (T, J, C))."""
    pooled = concat([pool_embedding(e).reshape(1, -1) for e in embeddings], axis=0)
    h = matmul(pooled, params["action.fc1.w"]) + params["action.fc1.b"]
    h = relu(_batchnorm(h, params, training))
    h = dropout(h, dropout_p, rng, training)
    return matmul(h, params["action.fc2.w"]) + params["action.fc2.b"]


def action_forward(
    e: Tensor,
    params: dict[str, Tensor],
    training: bool = False,
    rng: SeededRng | None = None,
    dropout_p: float = 0.5,
) -> Tensor:
    """Per-clip logits (num_classes,)."""
    return action_forward_batch([e], params, training, rng, dropout_p)[0]


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], max-subtracted."""
    logits = astensor(logits)
    n = logits.shape[-1]
    if not 0 <= label < n:
        raise DataError(f"label {label} outside [0, {n})")
    shift = float(logits.data.max())
    z = logits - shift
    return tlog(tsum(texp(z))) - z[label]


# -- one-shot action representation ----------------------------------------------

def init_oneshot_head(rng: SeededRng, ch_embed: int, repr_dim: int) -> dict[str, Tensor]:
    return {
        "oneshot.w": Tensor(_uniform_linear(rng, ch_embed, repr_dim), requires_grad=True),
        "oneshot.b": Tensor(np.zeros(repr_dim), requires_grad=True),
    }


def oneshot_embed(
    e: Tensor,
    params: dict[str, Tensor],
    training: bool = False,
    rng: SeededRng | None = None,
    dropout_p: float = 0.1,
) -> Tensor:
    """Clip-level action representation (repr_dim,)."""
    pooled = dropout(pool_embedding(e), dropout_p, rng, training)
    return matmul(pooled.reshape(1, -1), params["oneshot.w"]).reshape(-1) + params["oneshot.b"]


def supcon_loss(embeddings: Tensor | list[Tensor], labels, temperature: float = 0.1) -> Tensor:
    """Supervised contrastive loss over a batch of representations.

    Rows are L2-normalized; for each anchor with at least one same-label
    positive, the loss averages -log(exp(sim/t) / sum_others exp(sim/t))
    over its positives. Anchors without positives are skipped; a batch where
    no anchor has a positive is a construction bug.
    """
    if isinstance(embeddings, list):
        embeddings = concat([e.reshape(1, -1) for e in embeddings], axis=0)
    labels = np.asarray(labels)
    b = embeddings.shape[0]
    if b < 2 or labels.shape != (b,):
        raise DataError(f"supcon needs a batch >= 2 with matching labels, got {embeddings.shape}")
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")

    norms = norm_lastdim(embeddings, keepdims=True)
    if norms.data.min() < 1e-12:
        raise DataError("supcon embedding with zero norm")
    z = embeddings / norms
    sim = matmul(z, z.transpose((1, 0))) * (1.0 / temperature)  # (B, B)

    offdiag = 1.0 - np.eye(b)
    pos = (labels[:, None] == labels[None, :]).astype(np.float64) * offdiag
    counts = pos.sum(axis=1)
    anchors = counts > 0
    if not anchors.any():
        raise DataError("supcon batch has no positive pair for any anchor")

    shift = sim.data.max(axis=1, keepdims=True)  # constant: cancels exactly
    exps = texp(sim - shift) * offdiag
    log_denom = tlog(tsum(exps, axis=1, keepdims=True))
    log_prob = sim - shift - log_denom
    per_anchor = tsum(log_prob * pos, axis=1) * np.where(anchors, 1.0 / np.maximum(counts, 1.0), 0.0)
    return -tsum(per_anchor) * (1.0 / anchors.sum())


def nn_classify(query: np.ndarray, exemplars: list[tuple[np.ndarray, int]]) -> int:
    """Label of the exemplar with maximal cosine similarity; ties break to
    the lowest exemplar index.
    """
    if not exemplars:
        raise DataError("nn_classify needs at least one exemplar")
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn < 1e-12:
        raise DataError("nn_classify query has zero norm")
    best_sim, best_label = -np.inf, -1
    for emb, label in exemplars:
        en = np.linalg.norm(emb)
        if en < 1e-12:
            raise DataError("nn_classify exemplar has zero norm")
        sim = float(q @ emb / (qn * en))
        if sim > best_sim:
            best_sim, best_label = sim, label
    return best_label


# -- mesh parameter regression ----------------------------------------------------

def rot6d_to_matrix(r: Tensor | np.ndarray) -> Tensor:
    """Gram-Schmidt recovery of rotations from 6D vectors (..., 6) -> (..., 3, 3).

    Columns are (b1, b2, b1 x b2) with b1 the normalized first triple and b2
    the normalized rejection of the second triple.
    """
    r = astensor(r)
    if r.shape[-1] != 6:
        raise ShapeError(f"rot6d input must end in 6 channels, got {r.shape}")
    a1 = r[..., 0:3]
    a2 = r[..., 3:6]
    n1 = norm_lastdim(a1, keepdims=True)
    if n1.data.min() < 1e-8:
        raise DataError("rot6d: first triple has (near-)zero norm")
    b1 = a1 / n1
    proj = tsum(b1 * a2, axis=-1, keepdims=True)
    u = a2 - proj * b1
    n2 = norm_lastdim(u, keepdims=True)
    if n2.data.min() < 1e-8:
        raise DataError("rot6d: triples are (near-)parallel")
    b2 = u / n2

    def cross(x: Tensor, y: Tensor) -> Tensor:
        c0 = x[..., 1:2] * y[..., 2:3] - x[..., 2:3] * y[..., 1:2]
        c1 = x[..., 2:3] * y[..., 0:1] - x[..., 0:1] * y[..., 2:3]
        c2 = x[..., 0:1] * y[..., 1:2] - x[..., 1:2] * y[..., 0:1]
        return concat([c0, c1, c2], axis=-1)

    b3 = cross(b1, b2)
    cols = [b.reshape(b.shape + (1,)) for b in (b1, b2, b3)]
    return concat(cols, axis=-1)


@dataclass
class MeshLossWeights:
    position: float = 0.5
    theta: float = 1000.0
    beta: float = 1.0
    norm: float = 20.0
    velocity: float = 10.0


def init_mesh_head(rng: SeededRng, ch_embed: int, hidden: int, num_joints: int,
                   shape_dims: int = 10) -> dict[str, Tensor]:
    theta_dim = 6 * num_joints
    return {
        "mesh.pose.w1": Tensor(_uniform_linear(rng, ch_embed, hidden), requires_grad=True),
        "mesh.pose.b1": Tensor(np.zeros(hidden), requires_grad=True),
        "mesh.pose.w2": Tensor(_uniform_linear(rng, hidden, theta_dim), requires_grad=True),
        "mesh.pose.b2": Tensor(np.zeros(theta_dim), requires_grad=True),
        "mesh.shape.w1": Tensor(_uniform_linear(rng, ch_embed, hidden), requires_grad=True),
        "mesh.shape.b1": Tensor(np.zeros(hidden), requires_grad=True),
        "mesh.shape.w2": Tensor(_uniform_linear(rng, hidden, shape_dims), requires_grad=True),
        "mesh.shape.b2": Tensor(np.zeros(shape_dims), requires_grad=True),
    }


def mean_pose_rot6d(num_joints: int) -> np.ndarray:
    """Identity rotations in canonical 6D layout, (6 * num_joints,)."""
    return np.tile(np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), num_joints)


def mesh_forward(
    e: Tensor, params: dict[str, Tensor], num_joints: int, shape_dims: int = 10
) -> tuple[Tensor, Tensor]:
    """Regress per-frame 6D pose (T, 6K) and a single shape vector (shape_dims,).

    Outputs are offset by the mean pose (identity rotations) and mean shape
    (zeros), so zero-weight MLPs predict the rest configuration.
    """
    pooled = e.mean(axis=1)  # (T, C): joint-mean per frame
    h = relu(matmul(pooled, params["mesh.pose.w1"]) + params["mesh.pose.b1"])
    theta6 = matmul(h, params["mesh.pose.w2"]) + params["mesh.pose.b2"]
    theta6 = theta6 + mean_pose_rot6d(num_joints)

    clip_feat = pooled.mean(axis=0).reshape(1, -1)  # temporal pooling
    hs = relu(matmul(clip_feat, params["mesh.shape.w1"]) + params["mesh.shape.b1"])
    beta = (matmul(hs, params["mesh.shape.w2"]) + params["mesh.shape.b2"]).reshape(shape_dims)
    return theta6, beta


def mesh_rotations(theta6: Tensor, num_joints: int) -> Tensor:
    """(T, 6K) 6D pose to (T, K, 3, 3) rotation matrices."""
    t = theta6.shape[0]
    return rot6d_to_matrix(theta6.reshape(t, num_joints, 6))


def mesh_loss(
    theta6_pred: Tensor,
    beta_pred: Tensor,
    joints_pred: Tensor,
    theta6_gt: np.ndarray,
    beta_gt: np.ndarray,
    joints_gt: np.ndarray,
    weights: MeshLossWeights,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted mesh objective; rotations are compared in 6D space.

    Terms: L1 position error of regressed joints, L1 pose error, L1 shape
    error, a parameter-norm regularizer (per-frame pose 2-norm plus shape
    2-norm), and a velocity term on joint first-differences.
    """
    if theta6_pred.shape != theta6_gt.shape:
        raise ShapeError(f"mesh theta shapes differ: {theta6_pred.shape} vs {theta6_gt.shape}")
    if joints_pred.shape != joints_gt.shape:
        raise ShapeError(f"mesh joint shapes differ: {joints_pred.shape} vs {joints_gt.shape}")
    t, j = joints_pred.shape[0], joints_pred.shape[1]

    l_pos = tsum(tabs(joints_pred - joints_gt)) * (1.0 / joints_pred.size)
    l_theta = tsum(tabs(theta6_pred - theta6_gt)) * (1.0 / theta6_pred.size)
    l_beta = tsum(tabs(beta_pred - beta_gt)) * (1.0 / beta_pred.size)
    l_norm = tsum(norm_lastdim(theta6_pred)) * (1.0 / t) + norm_lastdim(beta_pred)
    if t >= 2:
        vp = joints_pred[1:] - joints_pred[:-1]
        vg = joints_gt[1:] - joints_gt[:-1]
        l_vel = tsum(norm_lastdim(vp - vg)) * (1.0 / ((t - 1) * j))
    else:
        l_vel = Tensor(0.0)

    total = (
        weights.position * l_pos
        + weights.theta * l_theta
        + weights.beta * l_beta
        + weights.norm * l_norm
        + weights.velocity * l_vel
    )
    parts = {
        "loss_mesh_3d": l_pos.item(),
        "loss_theta": l_theta.item(),
        "loss_beta": l_beta.item(),
        "loss_norm": l_norm.item(),
        "loss_mesh_vel": l_vel.item(),
        "loss_total": total.item(),
    }
    return total, parts


def mesh_predict(
    e: Tensor, params: dict[str, Tensor], model: ToyBodyModel
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Full mesh pipeline: (theta6, beta, vertices, eval joints)."""
    theta6, beta = mesh_forward(e, params, model.num_joints, model.shape_dims)
    rot = mesh_rotations(theta6, model.num_joints)
    vertices, joints = body_model_forward(model, rot, beta)
    return theta6, beta, vertices, joints


# -- rotation refiner --------------------------------------------------------------

def init_refiner(rng: SeededRng, ch_embed: int, theta_dim: int, hidden: int) -> dict[str, Tensor]:
    fan_in = ch_embed + theta_dim
    return {
        "refiner.w1": Tensor(_uniform_linear(rng, fan_in, hidden), requires_grad=True),
        "refiner.b1": Tensor(np.zeros(hidden), requires_grad=True),
        "refiner.w2": Tensor(_uniform_linear(rng, hidden, theta_dim), requires_grad=True),
        "refiner.b2": Tensor(np.zeros(theta_dim), requires_grad=True),
    }


def refiner_forward(e: Tensor, initial_theta6: Tensor | np.ndarray,
                    params: dict[str, Tensor]) -> Tensor:
    """Residual correction of an initial 6D pose from motion embeddings."""
    initial = astensor(initial_theta6)
    pooled = e.mean(axis=1)  # (T, C)
    if pooled.shape[0] != initial.shape[0]:
        raise ShapeError(f"refiner frame counts differ: {pooled.shape[0]} vs {initial.shape[0]}")
    x = concat([pooled, initial], axis=-1)
    h = relu(matmul(x, params["refiner.w1"]) + params["refiner.b1"])
    return initial + (matmul(h, params["refiner.w2"]) + params["refiner.b2"])
