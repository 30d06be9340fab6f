"""Stability-driven time-step selection."""
import logging
import warnings

import numpy as np

from config.settings import get_settings
from pde.errors import InvalidParameterError, PowerIterationStall
from pde.laplacian import CotanOperator

logger = logging.getLogger(__name__)

_CONVERGENCE = 0.01


def largest_eigenvalue(op: CotanOperator, iterations: int | None = None) -> float:
    """Estimate the largest eigenvalue of -L by power iteration on its symmetrization.

    Warns PowerIterationStall when the last two Rayleigh quotients differ by more than 1%.
    """
    if iterations is None:
        iterations = get_settings().power_iterations
    matrix = -op.symmetric
    x = np.random.default_rng(0).standard_normal(op.n_vertices)
    x /= np.linalg.norm(x)
    estimate = previous = 0.0
    for _ in range(iterations):
        y = matrix @ x
        previous, estimate = estimate, float(np.dot(x, y))
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
    if estimate > 0 and abs(estimate - previous) > _CONVERGENCE * estimate:
        message = f"Power iteration did not converge: last estimates {previous:.6g} and {estimate:.6g}"
        logger.warning(message)
        warnings.warn(message, PowerIterationStall, stacklevel=2)
    logger.debug("Largest Laplacian eigenvalue estimate: %.6g", estimate)
    return estimate


def stable_dt(op: CotanOperator, pde: str, coefficient: float = 1.0, safety: float | None = None) -> float:
    """Time step from the explicit stability limit.

    Args:
        op: Assembled operator
        pde: "heat" (coefficient alpha) or "wave" (coefficient c)
        coefficient: Diffusivity alpha or wave speed c
        safety: Fraction of the limit; defaults to Settings.dt_safety

    Returns:
        heat: safety * 2 / (alpha * lambda_max); wave: safety * 2 / (c * sqrt(lambda_max))
    """
    if safety is None:
        safety = get_settings().dt_safety
    if coefficient <= 0:
        raise InvalidParameterError(f"Coefficient must be positive, got {coefficient}")
    lam = largest_eigenvalue(op)
    if lam <= 0:
        raise InvalidParameterError("Laplacian has no positive eigenvalue; cannot bound the time step")
    if pde == "heat":
        return safety * 2.0 / (coefficient * lam)
    if pde == "wave":
        return safety * 2.0 / (coefficient * np.sqrt(lam))
    raise InvalidParameterError(f"stable_dt supports 'heat' and 'wave', got {pde!r}")
