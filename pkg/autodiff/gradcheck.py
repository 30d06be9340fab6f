"""Finite-difference verification of tape gradients."""
from typing import Callable, Sequence

import numpy as np

from autodiff.tensor import Tape, Tensor

TapeFunction = Callable[[Sequence[Tensor]], Tensor]


def grad_check(
    f: TapeFunction,
    params: Sequence[np.ndarray],
    h: float = 1e-5,
    floor: float = 1e-8,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """Largest relative error between reverse-mode and central-difference gradients.

    Args:
        f: Maps a list of tensors (one per param) to a scalar tensor
        params: Point at which to differentiate
        h: Central-difference step
        floor: Smallest denominator of the relative error
        max_entries: Check at most this many randomly chosen entries per parameter
        seed: Seed of that choice

    Returns:
        max |a - b| / max(|a|, |b|, floor) over all parameter entries
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    tape = Tape()
    variables = [tape.variable(p) for p in params]
    grads = tape.backward(f(variables))
    analytic = [grads[v] for v in variables]

    def evaluate(values: list[np.ndarray]) -> float:
        return f([Tensor(v) for v in values]).item()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for which, param in enumerate(params):
        indices = list(np.ndindex(param.shape))
        if max_entries is not None and len(indices) > max_entries:
            indices = [indices[i] for i in np.sort(rng.choice(len(indices), max_entries, replace=False))]
        for idx in indices:
            shifted = [p.copy() for p in params]
            shifted[which][idx] = param[idx] + h
            upper = evaluate(shifted)
            shifted[which][idx] = param[idx] - h
            lower = evaluate(shifted)
            numeric = (upper - lower) / (2.0 * h)
            a = float(analytic[which][idx])
            error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, error)
    return worst


def relu_margin(f: TapeFunction, params: Sequence[np.ndarray]) -> tuple[float, float]:
    """Smallest |ReLU input| seen while evaluating f at params, and the largest |gradient| entry.

    A central difference with step h is only meaningful when the margin exceeds h
    by a comfortable factor; otherwise some entries straddle a kink.
    """
    tape = Tape()
    variables = [tape.variable(np.array(p, dtype=np.float64)) for p in params]
    grads = tape.backward(f(variables))
    largest = max((float(np.max(np.abs(grads[v]))) for v in variables if v.value.size), default=0.0)
    return tape.relu_margin, largest
