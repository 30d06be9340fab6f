"""Adam with L2 regularization and an optional cosine learning-rate schedule."""
import math
from dataclasses import dataclass, field

import numpy as np

from autodiff.errors import ShapeMismatchError


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters.

    Attributes:
        first, second: Per-parameter moment estimates, shaped like the parameters
        step: Number of updates applied so far
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    step: int = 0
    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)


def adam_init(params: list[np.ndarray], lr: float = 1e-3, weight_decay: float = 1e-5) -> AdamState:
    return AdamState(
        lr=lr,
        weight_decay=weight_decay,
        first=[np.zeros_like(p) for p in params],
        second=[np.zeros_like(p) for p in params],
    )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float | None = None
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; L2 enters as grad += weight_decay * param.

    Args:
        params: Current parameter arrays
        grads: Gradients matching params
        state: Moments, updated in place
        lr: Learning rate for this step, overriding state.lr (used by schedules)

    Returns:
        (new parameter arrays, state)

    Raises:
        ShapeMismatchError: If grads or moments do not match params
    """
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ShapeMismatchError(f"{len(params)} params, {len(grads)} grads, {len(state.first)} moments")
    rate = state.lr if lr is None else lr
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.first[i].shape:
            raise ShapeMismatchError(f"Parameter {i}: shape {p.shape}, gradient {g.shape}")
        g = g + state.weight_decay * p
        state.first[i] = state.beta1 * state.first[i] + (1.0 - state.beta1) * g
        state.second[i] = state.beta2 * state.second[i] + (1.0 - state.beta2) * g * g
        m_hat = state.first[i] / correction1
        v_hat = state.second[i] / correction2
        updated.append(p - rate * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated, state


def cosine_lr(base: float, step: int, total: int) -> float:
    """Cosine decay from base to 0 over `total` steps."""
    if total <= 0:
        return base
    progress = min(max(step, 0), total) / total
    return 0.5 * base * (1.0 + math.cos(math.pi * progress))
