"""Training objectives: per-task weighted BCE, focal loss, their Pareto
combinations, and the weight regularizer.

The published formulas state only the positive term; the default here is
full binary cross-entropy (a pure-positive loss is degenerate: predicting
all ones minimizes it). ``positive_only`` switches to the literal form.
Each task loss is a mean over batch, frames, and the 88 keys, which keeps
the regularizer weight stable across clip lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .errors import ConfigError

TASK_ORDER = ("pitch", "onset", "offset")


def _per_task(value, n, name) -> tuple:
    vals = tuple(float(v) for v in (value if np.ndim(value) else [value] * n))
    if len(vals) != n:
        raise ConfigError(f"{name}: expected {n} values, got {len(vals)}")
    return vals


@dataclass
class LossConfig:
    alpha: tuple | float = 1.0  # positive-class weight, per task
    gamma: tuple | float = 2.0  # focal exponent, per task
    lam: float = 0.04  # weight-regularizer coefficient
    p: float = 2.0  # regularizer norm exponent
    n_tasks: int = 3
    positive_only: bool = False

    def __post_init__(self):
        self.alpha = _per_task(self.alpha, self.n_tasks, "alpha")
        self.gamma = _per_task(self.gamma, self.n_tasks, "gamma")
        if any(not 0.0 < a <= 1.0 for a in self.alpha):
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if any(g < 0.0 for g in self.gamma):
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.p < 1.0:
            raise ConfigError(f"p must be >= 1, got {self.p}")


def weighted_bce(pred: Tensor, labels: np.ndarray, alpha: float = 1.0,
                 positive_only: bool = False) -> Tensor:
    """Mean of -[alpha y log p + (1-y) log(1-p)] over all elements."""
    return ops.bce(pred, labels, alpha=alpha, positive_only=positive_only)


def task_bce_losses(preds: dict, labels: dict, cfg: LossConfig,
                    tasks=TASK_ORDER) -> list[Tensor]:
    return [
        weighted_bce(preds[t], labels[t], cfg.alpha[i], cfg.positive_only)
        for i, t in enumerate(tasks)
    ]


def task_focal_losses(preds: dict, labels: dict, cfg: LossConfig,
                      tasks=TASK_ORDER) -> list[Tensor]:
    return [
        ops.focal(preds[t], labels[t], cfg.alpha[i], cfg.gamma[i], cfg.positive_only)
        for i, t in enumerate(tasks)
    ]


def naive_loss(preds: dict, labels: dict, omega: np.ndarray, cfg: LossConfig,
               tasks=TASK_ORDER) -> Tensor:
    """Pareto weights times per-task focal losses, summed."""
    fls = task_focal_losses(preds, labels, cfg, tasks)
    total = ops.scale(fls[0], float(omega[0]))
    for i in range(1, len(fls)):
        total = ops.add(total, ops.scale(fls[i], float(omega[i])))
    return total


def pml_combine(task_scalars: list[Tensor], omega_pml: Tensor) -> Tensor:
    """sum_i omega_pml[i] * L_i with gradients flowing into omega_pml."""
    stacked = ops.stack_scalars(task_scalars)
    return ops.tsum(ops.mul(omega_pml, stacked))


def pml_loss(preds: dict, labels: dict, omega_pml: Tensor, cfg: LossConfig,
             tasks=TASK_ORDER) -> Tensor:
    return pml_combine(task_bce_losses(preds, labels, cfg, tasks), omega_pml)


def lwr(omega_pml: Tensor, n: int | None = None, p: float | None = None) -> Tensor:
    """sum_i |n w_i - 1|^p: zero exactly at uniform weights."""
    n = int(omega_pml.size) if n is None else n
    p = 2.0 if p is None else p
    return ops.tsum(ops.abs_pow(ops.add_const(ops.scale(omega_pml, float(n)), -1.0), p))


def total_loss(preds: dict, labels: dict, omega_pml: Tensor, cfg: LossConfig,
               tasks=TASK_ORDER) -> Tensor:
    return ops.add(
        pml_loss(preds, labels, omega_pml, cfg, tasks),
        ops.scale(lwr(omega_pml, len(tasks), cfg.p), cfg.lam),
    )
