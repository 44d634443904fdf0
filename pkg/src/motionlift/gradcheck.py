"""Finite-difference oracle for analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .rng import SeededRng
from .tensor import Tensor, backward, zero_grads


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: SeededRng | None = None,
) -> float:
    """Max relative error between the analytic gradient of f at x and
    central differences.

    rel = |analytic - cd| / (|analytic| + |cd| + 1e-12), maximized over the
    checked coordinates. max_coords caps how many coordinates are probed
    (sampled via rng, defaulting to a fixed stream) so large parameter
    tensors stay affordable.
    """
    x.requires_grad = True
    zero_grads([x])
    out = f(x)
    backward(out)
    analytic = x.grad.reshape(-1).copy()

    n = x.size
    if max_coords is not None and max_coords < n:
        if rng is None:
            rng = SeededRng(0)
        coords = rng.permutation(n)[:max_coords]
    else:
        coords = np.arange(n)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x).data)
        flat[i] = orig - h
        lo = float(f(x).data)
        flat[i] = orig
        cd = (hi - lo) / (2.0 * h)
        a = analytic[i]
        worst = max(worst, abs(a - cd) / (abs(a) + abs(cd) + 1e-12))
    return worst
