"""Dual-stream spatio-temporal transformer encoder.

Two parallel branches per depth: spatial-then-temporal attention and
temporal-then-spatial attention over a (T, J, C) feature map, fused per
(frame, joint) cell by softmax weights from a learned regressor on the
concatenated branch features. Blocks are post-norm (residual, then
LayerNorm) and never share weights across depths or branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import SeededRng
from .tensor import (
    Tensor,
    concat,
    dropout,
    gelu,
    layer_norm,
    matmul,
    softmax_lastdim,
    tanh,
    transpose,
)

BRANCHES = ("st", "ts")
BACKBONE_PREFIXES = ("input_proj", "pos_s", "pos_t", "depth", "fusion", "embed")


@dataclass
class DstformerConfig:
    depth: int = 5
    heads: int = 8
    ch_feat: int = 512
    ch_embed: int = 512
    ch_in: int = 3
    ch_out: int = 3
    max_t: int = 243
    joints: int = 17
    mlp_ratio: int = 2
    dropout: float = 0.0

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.ch_feat % self.heads != 0:
            raise ConfigError(f"ch_feat {self.ch_feat} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class EncoderOutput:
    embedding: Tensor  # (T, J, ch_embed), tanh-activated
    lifted: Tensor  # (T, J, ch_out)
    alpha_st: np.ndarray  # (depth, T, J), sums with alpha_ts to 1
    alpha_ts: np.ndarray


def _uniform_linear(rng: SeededRng, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(1.0 / fan_in)
    return rng.uniform(-lim, lim, (fan_in, fan_out))


def init_dstformer_params(config: DstformerConfig, rng: SeededRng) -> dict[str, Tensor]:
    """Fresh learnable weights, addressable by namespaced parameter name."""
    config.validate()
    c = config.ch_feat
    p: dict[str, np.ndarray] = {}
    p["input_proj.w"] = _uniform_linear(rng, config.ch_in, c)
    p["input_proj.b"] = np.zeros(c)
    p["pos_s"] = rng.normal((1, config.joints, c), sigma=0.02)
    p["pos_t"] = rng.normal((config.max_t, 1, c), sigma=0.02)
    hidden = config.mlp_ratio * c
    for i in range(config.depth):
        for branch in BRANCHES:
            for block in ("s", "t"):
                k = f"depth{i}.{branch}.{block}"
                p[f"{k}.qkv.w"] = _uniform_linear(rng, c, 3 * c)
                p[f"{k}.qkv.b"] = np.zeros(3 * c)
                p[f"{k}.proj.w"] = _uniform_linear(rng, c, c)
                p[f"{k}.proj.b"] = np.zeros(c)
                p[f"{k}.ln1.g"] = np.ones(c)
                p[f"{k}.ln1.b"] = np.zeros(c)
                p[f"{k}.mlp.w1"] = _uniform_linear(rng, c, hidden)
                p[f"{k}.mlp.b1"] = np.zeros(hidden)
                p[f"{k}.mlp.w2"] = _uniform_linear(rng, hidden, c)
                p[f"{k}.mlp.b2"] = np.zeros(c)
                p[f"{k}.ln2.g"] = np.ones(c)
                p[f"{k}.ln2.b"] = np.zeros(c)
        p[f"fusion{i}.w"] = _uniform_linear(rng, 2 * c, 2)
        p[f"fusion{i}.b"] = np.zeros(2)
    p["embed.w"] = _uniform_linear(rng, c, config.ch_embed)
    p["embed.b"] = np.zeros(config.ch_embed)
    p["head_lift.w"] = _uniform_linear(rng, config.ch_embed, config.ch_out)
    p["head_lift.b"] = np.zeros(config.ch_out)
    return {name: Tensor(arr, requires_grad=True) for name, arr in p.items()}


def _mhsa(x: Tensor, params: dict[str, Tensor], prefix: str, heads: int,
          attn_dropout: float = 0.0, training: bool = False,
          rng: SeededRng | None = None) -> Tensor:
    """Multi-head self-attention over the second-to-last axis of
    x: (..., L, C); any leading axes are independent batches.
    """
    c = x.shape[-1]
    if c % heads != 0:
        raise ShapeError(f"channels {c} not divisible by heads {heads}")
    d = c // heads
    lead = x.ndim - 2
    L = x.shape[-2]

    qkv = matmul(x, params[f"{prefix}.qkv.w"]) + params[f"{prefix}.qkv.b"]
    qkv = qkv.reshape(x.shape[:-1] + (3, heads, d))
    # (..., L, 3, h, d) -> (3, ..., h, L, d)
    perm = (lead + 1,) + tuple(range(lead)) + (lead + 2, lead, lead + 3)
    qkv = transpose(qkv, perm)
    q, k, v = qkv[0], qkv[1], qkv[2]

    attn = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    attn = softmax_lastdim(attn * (1.0 / math.sqrt(d)))
    if attn_dropout > 0.0:
        attn = dropout(attn, attn_dropout, rng, training)
    out = matmul(attn, v)  # (..., h, L, d)
    # back to (..., L, h, d) then merge heads
    perm2 = tuple(range(lead)) + (lead + 1, lead, lead + 2)
    out = transpose(out, perm2).reshape(x.shape[:-1] + (c,))
    return matmul(out, params[f"{prefix}.proj.w"]) + params[f"{prefix}.proj.b"]


def spatial_mhsa(f_s: Tensor, params: dict[str, Tensor], prefix: str, heads: int, **kw) -> Tensor:
    """Attention among joints within a time step; f_s is (J, C) or (T, J, C)
    with frames attended in parallel.
    """
    return _mhsa(f_s, params, prefix, heads, **kw)


def temporal_mhsa(f_t: Tensor, params: dict[str, Tensor], prefix: str, heads: int, **kw) -> Tensor:
    """Attention across time steps per joint; f_t is (T, C) or (J, T, C)
    with joints attended in parallel.
    """
    return _mhsa(f_t, params, prefix, heads, **kw)


def block_forward(
    f: Tensor,
    kind: str,
    params: dict[str, Tensor],
    prefix: str,
    config: DstformerConfig,
    training: bool = False,
    rng: SeededRng | None = None,
) -> Tensor:
    """One transformer block on a (T, J, C) map: post-norm MHSA + MLP.

    kind "spatial" attends over joints, "temporal" over time.
    """
    if kind == "spatial":
        a = spatial_mhsa(f, params, prefix, config.heads,
                         attn_dropout=config.dropout, training=training, rng=rng)
    elif kind == "temporal":
        ft = transpose(f, (1, 0, 2))
        a = temporal_mhsa(ft, params, prefix, config.heads,
                          attn_dropout=config.dropout, training=training, rng=rng)
        a = transpose(a, (1, 0, 2))
    else:
        raise ConfigError(f"unknown block kind '{kind}'")

    x1 = layer_norm(f + a, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    h = gelu(matmul(x1, params[f"{prefix}.mlp.w1"]) + params[f"{prefix}.mlp.b1"])
    if config.dropout > 0.0:
        h = dropout(h, config.dropout, rng, training)
    m = matmul(h, params[f"{prefix}.mlp.w2"]) + params[f"{prefix}.mlp.b2"]
    return layer_norm(x1 + m, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])


def fusion_weights(
    branch_st: Tensor, branch_ts: Tensor, w: Tensor, b: Tensor
) -> tuple[Tensor, Tensor]:
    """Per-(t, j) softmax weights from the concatenated branch features."""
    if branch_st.shape != branch_ts.shape:
        raise ShapeError(f"fusion branches differ: {branch_st.shape} vs {branch_ts.shape}")
    logits = matmul(concat([branch_st, branch_ts], axis=-1), w) + b  # (T, J, 2)
    alpha = softmax_lastdim(logits)
    return alpha[..., 0], alpha[..., 1]


def dstformer_forward(
    x2d: Tensor | np.ndarray,
    params: dict[str, Tensor],
    config: DstformerConfig,
    training: bool = False,
    rng: SeededRng | None = None,
) -> EncoderOutput:
    """Encode a (T, J, ch_in) sequence into embeddings and lifted 3D motion."""
    x = x2d if isinstance(x2d, Tensor) else Tensor(x2d)
    if x.ndim != 3 or x.shape[2] != config.ch_in:
        raise ShapeError(f"input must be (T, J, {config.ch_in}), got {x.shape}")
    T, J = x.shape[0], x.shape[1]
    if J != config.joints:
        raise ShapeError(f"input has {J} joints, model expects {config.joints}")
    if T > config.max_t:
        raise ConfigError(f"T={T} exceeds max_t={config.max_t}: no positional rows")

    f = matmul(x, params["input_proj.w"]) + params["input_proj.b"]
    f = f + params["pos_s"] + params["pos_t"][:T]

    alphas_st: list[np.ndarray] = []
    alphas_ts: list[np.ndarray] = []
    for i in range(config.depth):
        y_st = block_forward(f, "spatial", params, f"depth{i}.st.s", config, training, rng)
        y_st = block_forward(y_st, "temporal", params, f"depth{i}.st.t", config, training, rng)
        y_ts = block_forward(f, "temporal", params, f"depth{i}.ts.t", config, training, rng)
        y_ts = block_forward(y_ts, "spatial", params, f"depth{i}.ts.s", config, training, rng)
        a_st, a_ts = fusion_weights(y_st, y_ts, params[f"fusion{i}.w"], params[f"fusion{i}.b"])
        alphas_st.append(a_st.data.copy())
        alphas_ts.append(a_ts.data.copy())
        f = a_st.reshape(T, J, 1) * y_st + a_ts.reshape(T, J, 1) * y_ts

    e = tanh(matmul(f, params["embed.w"]) + params["embed.b"])
    lifted = matmul(e, params["head_lift.w"]) + params["head_lift.b"]
    return EncoderOutput(
        embedding=e,
        lifted=lifted,
        alpha_st=np.stack(alphas_st),
        alpha_ts=np.stack(alphas_ts),
    )


def partial_freeze(params: dict[str, Tensor], mode: str) -> set[str]:
    """Trainable-parameter name set for a finetuning mode.

    "full" trains everything; "backbone_frozen" keeps only regression-head
    and downstream parameters (everything outside the encoder trunk).
    """
    trainable = {n for n, t in params.items() if t.requires_grad}
    if mode == "full":
        return trainable
    if mode == "backbone_frozen":
        return {n for n in trainable if not n.startswith(BACKBONE_PREFIXES)}
    raise ConfigError(f"unknown freeze mode '{mode}' (expected 'full' or 'backbone_frozen')")


def backbone_names(params: dict[str, Tensor]) -> set[str]:
    return {n for n in params if n.startswith(BACKBONE_PREFIXES)}
