"""Pareto-optimal task weighting.

``min_norm_weights`` finds the convex combination of per-task gradients with
minimum L2 norm (Frank-Wolfe with exact line search on the probability
simplex, uniform start). The learned head then maps those weights through a
softmax-ed affine layer to the final loss weights.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, ops
from .errors import InputError
from .model import PmlHead

MAX_ITER = 250
DUALITY_GAP_TOL = 1e-8


def two_task_closed_form(g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Exact min-norm weights for two gradients: the line-segment minimizer."""
    diff = g1 - g2
    denom = float(diff @ diff)
    if denom == 0.0:
        return np.array([0.5, 0.5])
    gamma = float((g2 - g1) @ g2) / denom
    gamma = min(1.0, max(0.0, gamma))
    return np.array([gamma, 1.0 - gamma])


def min_norm_weights(task_grads) -> np.ndarray:
    """argmin over the simplex of ||sum_i w_i g_i||^2.

    All-zero gradients (a degenerate but reachable state) yield uniform
    weights; ties are broken by the deterministic uniform-seeded iteration.
    """
    grads = np.asarray(task_grads, dtype=np.float64)
    if grads.ndim != 2:
        raise InputError(f"expected n stacked flat gradients, got shape {grads.shape}")
    n = grads.shape[0]
    if n < 2:
        return np.ones(n)
    gram = grads @ grads.T
    w = np.full(n, 1.0 / n)
    for _ in range(MAX_ITER):
        mw = gram @ w
        target = int(np.argmin(mw))
        gap = 2.0 * (float(w @ mw) - float(mw[target]))
        if gap < DUALITY_GAP_TOL:
            break
        # Exact step toward the chosen vertex: minimize the quadratic on
        # the segment (1-t) w + t e_target.
        wmw = float(w @ mw)
        wme = float(mw[target])
        eme = float(gram[target, target])
        denom = wmw - 2.0 * wme + eme
        if denom <= 0.0:
            break
        t = min(1.0, max(0.0, (wmw - wme) / denom))
        if t == 0.0:
            break
        w = (1.0 - t) * w + t * np.eye(n)[target]
    w = np.maximum(w, 0.0)
    return w / w.sum()


def pml_weights(omega: np.ndarray, head: PmlHead) -> Tensor:
    """softmax(W omega + b) as a differentiable tensor (head params learn)."""
    omega_t = ops.constant(np.asarray(omega, dtype=np.float64))
    return ops.softmax(ops.linear(omega_t, head.w, head.b), axis=-1)


def pml_weights_value(omega: np.ndarray, head: PmlHead) -> np.ndarray:
    return pml_weights(omega, head).data
