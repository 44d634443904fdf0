"""Bias-corrected Adam over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, NumericError
from .tensor import Tensor


@dataclass
class AdamState:
    """Optimizer state; m/v buffers are allocated lazily per parameter."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError(f"Adam lr must be > 0, got {self.lr}")


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """One Adam update over all entries of grads, in place.

    Validates every gradient before touching any parameter so a NaN aborts
    the whole step.
    """
    for name, g in grads.items():
        if name not in params:
            raise ConfigError(f"gradient for unknown parameter '{name}'")
        if params[name].data.shape != np.shape(g):
            raise ConfigError(
                f"gradient shape {np.shape(g)} does not match parameter "
                f"'{name}' shape {params[name].data.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'; step aborted")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(g)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        params[name].data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
