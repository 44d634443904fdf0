"""Toy articulated body model behind a SMPL-like interface.

A 24-joint kinematic tree with shape-dependent bone scales, a vertex set
defined as fixed convex combinations of joint positions, and a joint
regressor that reads evaluation joints back off the vertices. Three anchor
vertices per joint carry weight 1 on that joint, so the regressor
reproduces joint positions exactly by construction. Model constants are
generated from a fixed seed and shipped as a JSON data file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .clips import MotionClip, orthographic_project
from .errors import ConfigError, DataError
from .rng import SeededRng
from .skeleton import SkeletonDef, h36m17
from .tensor import Tensor, astensor, concat, matmul

DEFAULT_MODEL_SEED = 271828
ANCHORS_PER_JOINT = 3

# SMPL-style 24-joint tree (root self-parented).
_PARENTS24 = (0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

_REST24 = np.array(
    [
        [0.00, 0.00, 0.00],  # 0 pelvis
        [0.10, -0.05, 0.00],  # 1 l_hip
        [-0.10, -0.05, 0.00],  # 2 r_hip
        [0.00, 0.12, 0.00],  # 3 spine1
        [0.00, -0.40, 0.00],  # 4 l_knee
        [0.00, -0.40, 0.00],  # 5 r_knee
        [0.00, 0.14, 0.00],  # 6 spine2
        [0.00, -0.42, 0.00],  # 7 l_ankle
        [0.00, -0.42, 0.00],  # 8 r_ankle
        [0.00, 0.06, 0.00],  # 9 spine3
        [0.05, -0.06, 0.12],  # 10 l_foot
        [-0.05, -0.06, 0.12],  # 11 r_foot
        [0.00, 0.10, 0.00],  # 12 neck
        [0.08, 0.04, 0.00],  # 13 l_collar
        [-0.08, 0.04, 0.00],  # 14 r_collar
        [0.00, 0.14, 0.00],  # 15 head
        [0.12, 0.00, 0.00],  # 16 l_shoulder
        [-0.12, 0.00, 0.00],  # 17 r_shoulder
        [0.26, 0.00, 0.00],  # 18 l_elbow
        [-0.26, 0.00, 0.00],  # 19 r_elbow
        [0.25, 0.00, 0.00],  # 20 l_wrist
        [-0.25, 0.00, 0.00],  # 21 r_wrist
        [0.08, 0.00, 0.00],  # 22 l_hand
        [-0.08, 0.00, 0.00],  # 23 r_hand
    ]
)

# evaluation joints (h36m17 order) -> model joints
_EVAL_MAP17 = (0, 2, 5, 8, 1, 4, 7, 6, 9, 12, 15, 16, 18, 20, 17, 19, 21)


@dataclass
class ToyBodyModel:
    parents: tuple[int, ...]  # (K,)
    rest_offsets: np.ndarray  # (K, 3) bone vector from parent
    shape_blend: np.ndarray  # (K, shape_dims) bone-scale deltas per beta unit
    skin_weights: np.ndarray  # (V, K) rows sum to 1, <= 4 nonzero
    joint_regressor: np.ndarray  # (J_eval, V) rows sum to 1

    @property
    def num_joints(self) -> int:
        return len(self.parents)

    @property
    def num_vertices(self) -> int:
        return self.skin_weights.shape[0]

    @property
    def num_eval_joints(self) -> int:
        return self.joint_regressor.shape[0]

    @property
    def shape_dims(self) -> int:
        return self.shape_blend.shape[1]

    def validate(self) -> None:
        k = self.num_joints
        if self.parents[0] != 0:
            raise DataError("body model root must be joint 0")
        if self.rest_offsets.shape != (k, 3):
            raise DataError("rest_offsets shape mismatch")
        if np.max(np.abs(self.skin_weights.sum(axis=1) - 1.0)) > 1e-9:
            raise DataError("skinning weight rows must sum to 1")
        if np.max((self.skin_weights > 0).sum(axis=1)) > 4:
            raise DataError("skinning rows must touch at most 4 joints")
        if np.min(self.skin_weights) < 0:
            raise DataError("skinning weights must be non-negative")
        if np.max(np.abs(self.joint_regressor.sum(axis=1) - 1.0)) > 1e-9:
            raise DataError("joint regressor rows must sum to 1")

    def to_dict(self) -> dict:
        return {
            "tree": list(self.parents),
            "rest_offsets": self.rest_offsets.tolist(),
            "shape_blend": self.shape_blend.tolist(),
            "skinning": self.skin_weights.tolist(),
            "joint_regressor": self.joint_regressor.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyBodyModel":
        model = cls(
            parents=tuple(int(p) for p in d["tree"]),
            rest_offsets=np.asarray(d["rest_offsets"], dtype=np.float64),
            shape_blend=np.asarray(d["shape_blend"], dtype=np.float64),
            skin_weights=np.asarray(d["skinning"], dtype=np.float64),
            joint_regressor=np.asarray(d["joint_regressor"], dtype=np.float64),
        )
        model.validate()
        return model


def build_toy_body_model(
    seed: int = DEFAULT_MODEL_SEED,
    num_vertices: int = 200,
    shape_dims: int = 10,
) -> ToyBodyModel:
    """Deterministic toy model: humanoid rest geometry with seeded jitter,
    anchor vertices pinned to joints, and filler vertices blended along bones.
    """
    rng = SeededRng(seed)
    k = len(_PARENTS24)
    offsets = _REST24 + rng.normal((k, 3), sigma=0.005)
    offsets[0] = 0.0
    blend = rng.normal((k, shape_dims), sigma=0.03)
    blend[0] = 0.0  # root bone has no length to scale

    n_anchor = k * ANCHORS_PER_JOINT
    if num_vertices < n_anchor + 1:
        raise ConfigError(f"num_vertices must exceed {n_anchor}")
    weights = np.zeros((num_vertices, k))
    for j in range(k):
        weights[j * ANCHORS_PER_JOINT : (j + 1) * ANCHORS_PER_JOINT, j] = 1.0
    for v in range(n_anchor, num_vertices):
        j = int(rng.integers(1, k))
        chain = [j, _PARENTS24[j]]
        extra = int(rng.integers(0, k))
        if extra not in chain:
            chain.append(extra)
        w = rng.uniform(0.05, 1.0, len(chain))
        w /= w.sum()
        weights[v, chain] = w

    jreg = np.zeros((len(_EVAL_MAP17), num_vertices))
    for r, j in enumerate(_EVAL_MAP17):
        jreg[r, j * ANCHORS_PER_JOINT : (j + 1) * ANCHORS_PER_JOINT] = 1.0 / ANCHORS_PER_JOINT

    model = ToyBodyModel(
        parents=_PARENTS24,
        rest_offsets=offsets,
        shape_blend=blend,
        skin_weights=weights,
        joint_regressor=jreg,
    )
    model.validate()
    return model


def save_body_model(path: str | Path, model: ToyBodyModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict()))


def load_body_model(path: str | Path) -> ToyBodyModel:
    try:
        return ToyBodyModel.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as e:
        raise DataError(f"malformed body model file {path}: {e}") from e


def default_body_model() -> ToyBodyModel:
    """The packaged model (data/toy_body.json)."""
    ref = resources.files("motionlift").joinpath("data/toy_body.json")
    return ToyBodyModel.from_dict(json.loads(ref.read_text()))


def rest_joints(model: ToyBodyModel, beta: np.ndarray | None = None) -> np.ndarray:
    """(K, 3) joint positions at identity pose."""
    scale = np.ones(model.num_joints)
    if beta is not None:
        scale = 1.0 + model.shape_blend @ np.asarray(beta, dtype=np.float64)
    pos = np.zeros((model.num_joints, 3))
    for j in range(1, model.num_joints):
        pos[j] = pos[model.parents[j]] + model.rest_offsets[j] * scale[j]
    return pos


def body_model_forward(
    model: ToyBodyModel, rotations: Tensor | np.ndarray, beta: Tensor | np.ndarray
) -> tuple[Tensor, Tensor]:
    """Pose the model: FK over the tree with shape-scaled bones, vertices by
    skinning, evaluation joints by the regressor.

    rotations: (K, 3, 3) or (T, K, 3, 3) local joint rotations; returns
    (vertices (T, V, 3), joints (T, J_eval, 3)).
    """
    rot = astensor(rotations)
    if rot.ndim == 3:
        rot = rot.reshape((1,) + rot.shape)
    k = model.num_joints
    if rot.ndim != 4 or rot.shape[1] != k or rot.shape[2:] != (3, 3):
        raise DataError(f"rotations must be (T, {k}, 3, 3), got {rot.shape}")
    rtr = np.matmul(np.swapaxes(rot.data, -1, -2), rot.data)
    if np.max(np.abs(rtr - np.eye(3))) > 1e-6:
        raise DataError("rotations are not orthonormal within 1e-6")

    beta = astensor(beta)
    if beta.shape != (model.shape_dims,):
        raise DataError(f"beta must be ({model.shape_dims},), got {beta.shape}")
    scale = 1.0 + matmul(Tensor(model.shape_blend), beta.reshape(model.shape_dims, 1))  # (K, 1)

    T = rot.shape[0]
    glob: list[Tensor | None] = [None] * k
    pos: list[Tensor | None] = [None] * k
    glob[0] = rot[:, 0]
    pos[0] = Tensor(np.zeros((T, 3)))
    for j in range(1, k):
        p = model.parents[j]
        glob[j] = matmul(glob[p], rot[:, j])
        bone = scale[j] * Tensor(model.rest_offsets[j])  # (3,)
        step = matmul(glob[p], bone.reshape(3, 1)).reshape(T, 3)
        pos[j] = pos[p] + step

    joints = concat([q.reshape(T, 1, 3) for q in pos], axis=1)  # (T, K, 3)
    vertices = matmul(Tensor(model.skin_weights), joints)  # (T, V, 3)
    eval_joints = matmul(Tensor(model.joint_regressor), vertices)  # (T, J_eval, 3)
    return vertices, eval_joints


# -- synthetic mesh task data ---------------------------------------------------

def _rodrigues(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Axis-angle to rotation matrices; axis (..., 3) unit, angle (...)."""
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    kmat = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    eye = np.broadcast_to(np.eye(3), kmat.shape)
    return eye + s * kmat + (1.0 - c) * np.matmul(kmat, kmat)


def matrix_to_rot6d(rot: np.ndarray) -> np.ndarray:
    """Canonical 6D representation: the first two columns, concatenated."""
    return np.concatenate([rot[..., :, 0], rot[..., :, 1]], axis=-1)


@dataclass
class MeshSequence:
    """Ground truth for one mesh-regression clip."""

    clip: MotionClip  # pose3d = eval joints, pose2d = their projection
    theta6: np.ndarray  # (T, 6K) canonical 6D rotations
    beta: np.ndarray  # (shape_dims,)
    joints: np.ndarray  # (T, J_eval, 3)
    vertices: np.ndarray  # (T, V, 3)


def generate_mesh_sequence(
    rng: SeededRng,
    model: ToyBodyModel,
    T: int,
    fps: float = 25.0,
    clip_id: str = "mesh",
    skeleton: SkeletonDef | None = None,
) -> MeshSequence:
    """Smooth random pose/shape trajectory rendered through the body model."""
    k = model.num_joints
    axis = rng.normal((k, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    amp = rng.uniform(0.05, 0.35, (k,))
    freq = rng.uniform(0.3, 0.9, (k,))
    phase = rng.uniform(0.0, 2.0 * np.pi, (k,))
    t = np.arange(T) / fps
    angle = amp[None, :] * np.sin(2.0 * np.pi * freq[None, :] * t[:, None] + phase[None, :])
    rot = _rodrigues(np.broadcast_to(axis, (T, k, 3)), angle)  # (T, K, 3, 3)
    beta = rng.normal((model.shape_dims,), sigma=0.5)

    vertices, joints = body_model_forward(model, rot, beta)
    sk = skeleton if skeleton is not None else h36m17()
    if sk.num_joints != model.num_eval_joints:
        raise ConfigError("skeleton joint count must match the model's eval joints")
    clip = MotionClip(id=clip_id, fps=fps, skeleton=sk, pose3d=joints.data.copy(),
                      source="mocap3d")
    clip = orthographic_project(clip)
    theta6 = matrix_to_rot6d(rot).reshape(T, 6 * k)
    return MeshSequence(clip=clip, theta6=theta6, beta=np.asarray(beta, dtype=np.float64),
                        joints=joints.data.copy(), vertices=vertices.data.copy())
