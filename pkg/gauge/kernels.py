"""Gauge-equivariant kernel bases solved numerically from the kernel constraint.

A kernel maps features of type rho_in at a neighbor (already transported into the
center's gauge) to rho_out at the center and depends on the neighbor angle theta
only. Kernel functions are stored as Fourier coefficients over the orthonormal
angular basis {1, sqrt(2) cos(k theta), sqrt(2) sin(k theta)} for k <= B, so
coefficient dot products equal the mean Frobenius inner product over the circle.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from config.settings import get_settings
from gauge.errors import BandLimitError, DimensionMismatchError
from gauge.reps import FeatureType, irrep_dim

logger = logging.getLogger(__name__)


class KernelKind(str, Enum):
    SELF = "self"
    NEIGH = "neigh"


def angular_basis(theta, band_limit: int) -> np.ndarray:
    """Evaluate the orthonormal trigonometric basis; returns (..., 2B+1)."""
    theta = np.asarray(theta, dtype=np.float64)
    columns = [np.ones_like(theta)]
    for k in range(1, band_limit + 1):
        columns.extend([np.sqrt(2.0) * np.cos(k * theta), np.sqrt(2.0) * np.sin(k * theta)])
    return np.stack(columns, axis=-1)


def _angular_limit(kind: KernelKind, band_limit: int) -> int:
    return 0 if kind is KernelKind.SELF else band_limit


@dataclass(frozen=True, eq=False)
class KernelBasis:
    """Orthonormal basis of equivariant kernels between two feature types.

    Attributes:
        rho_in, rho_out: Input and output feature types
        kind: SELF (theta-independent) or NEIGH
        band_limit: Highest angular frequency B of NEIGH kernels
        coefficients: (dim, J, rho_out.dim, rho_in.dim) with J = 1 for SELF, 2B+1 for NEIGH
    """

    rho_in: FeatureType
    rho_out: FeatureType
    kind: KernelKind
    band_limit: int
    coefficients: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def n_angular(self) -> int:
        return int(self.coefficients.shape[1])

    def evaluate(self, theta) -> np.ndarray:
        """Basis kernels at theta: (..., dim, rho_out.dim, rho_in.dim)."""
        trig = angular_basis(theta, _angular_limit(self.kind, self.band_limit))
        return np.einsum("...j,kjoi->...koi", trig, self.coefficients)


def solve_kernel_basis(
    rho_in: FeatureType,
    rho_out: FeatureType,
    kind: KernelKind | str,
    band_limit: int,
    threshold: float | None = None,
) -> KernelBasis:
    """Solve K(theta - g) = rho_out(-g) K(theta) rho_in(g) for kernels of degree <= B.

    The constraint is stacked over an equispaced (8B+9) x (8B+9) grid of (theta, g)
    pairs and its nullspace taken from the SVD. The nullspace is re-expressed in a
    canonical orthonormal basis (Gram-Schmidt over the columns of its projector) and
    each element's first nonzero coefficient is made positive, so the result does
    not depend on LAPACK's choice of singular vectors.

    Args:
        rho_in: Input feature type
        rho_out: Output feature type
        kind: SELF or NEIGH
        band_limit: Angular band limit B
        threshold: Relative singular-value cut; defaults to Settings.kernel_svd_threshold

    Returns:
        KernelBasis, possibly of dimension 0

    Raises:
        BandLimitError: If B is below a frequency of rho_in or rho_out
    """
    kind = KernelKind(kind)
    if band_limit < max(rho_in.max_frequency, rho_out.max_frequency):
        raise BandLimitError(
            f"Band limit {band_limit} is below the frequencies of {rho_in} -> {rho_out}"
        )
    if threshold is None:
        threshold = get_settings().kernel_svd_threshold

    limit = _angular_limit(kind, band_limit)
    n_grid = 8 * band_limit + 9
    grid = 2.0 * np.pi * np.arange(n_grid) / n_grid
    thetas = np.zeros(1) if kind is KernelKind.SELF else grid
    theta, g = (a.reshape(-1) for a in np.meshgrid(thetas, grid, indexing="ij"))

    d_out, d_in = rho_out.dim, rho_in.dim
    n = d_out * d_in
    shifted = angular_basis(theta - g, limit)
    original = angular_basis(theta, limit)
    # row-major vec(A C B) = (A kron B^T) vec(C)
    kron = np.stack([np.kron(rho_out.action(-gi), rho_in.action(gi).T) for gi in g])
    eye = np.eye(n)
    blocks = (
        shifted[:, None, :, None] * eye[None, :, None, :]
        - original[:, None, :, None] * kron[:, :, None, :]
    )
    system = blocks.reshape(len(g) * n, shifted.shape[1] * n)

    _, singular, vt = np.linalg.svd(system, full_matrices=False)
    if singular.size == 0 or singular[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(singular > threshold * singular[0]))
    null = vt[rank:]
    vectors = _canonical_basis(null)
    coefficients = vectors.reshape(len(vectors), shifted.shape[1], d_out, d_in)
    coefficients.setflags(write=False)
    logger.debug("Kernel basis %s -> %s (%s, B=%d): dim %d", rho_in, rho_out, kind.value, band_limit, len(vectors))
    return KernelBasis(rho_in=rho_in, rho_out=rho_out, kind=kind, band_limit=band_limit, coefficients=coefficients)


def _canonical_basis(null: np.ndarray) -> np.ndarray:
    if len(null) == 0:
        return np.zeros((0, null.shape[1]))
    projector = null.T @ null
    accepted: list[np.ndarray] = []
    for column in projector.T:
        v = column.copy()
        for u in accepted:
            v -= np.dot(u, v) * u
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            accepted.append(v / norm)
        if len(accepted) == len(null):
            break
    basis = np.stack(accepted)
    for row in basis:
        lead = np.flatnonzero(np.abs(row) > 1e-12)
        if len(lead) and row[lead[0]] < 0:
            row *= -1.0
    return basis


def assemble_kernel(basis: KernelBasis, weights: np.ndarray, theta: float) -> np.ndarray:
    """K(theta) = sum_k weights_k basis_k(theta), shape (rho_out.dim, rho_in.dim).

    Raises:
        DimensionMismatchError: If len(weights) != basis.dim
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (basis.dim,):
        raise DimensionMismatchError(f"Expected {basis.dim} weights, got shape {weights.shape}")
    if basis.dim == 0:
        return np.zeros((basis.rho_out.dim, basis.rho_in.dim))
    return np.einsum("k,koi->oi", weights, basis.evaluate(theta))


@lru_cache(maxsize=None)
def irrep_pair_basis(n_in: int, n_out: int, kind: KernelKind, band_limit: int) -> KernelBasis:
    return solve_kernel_basis(FeatureType((n_in,)), FeatureType((n_out,)), kind, band_limit)


@dataclass(frozen=True, eq=False)
class BlockKernel:
    """Kernel between composite types built from one irrep-pair basis per component pair.

    Attributes:
        rho_in, rho_out: Composite feature types
        kind: SELF or NEIGH
        band_limit: Angular band limit B
        pair_slices: (out component, in component) -> slice of the flat parameter vector
        expansion: Sparse (J * rho_in.dim * rho_out.dim, n_params) matrix; row
            (j * rho_in.dim + i) * rho_out.dim + o holds the coefficient of angular
            function j in entry (o, i)
    """

    rho_in: FeatureType
    rho_out: FeatureType
    kind: KernelKind
    band_limit: int
    pair_slices: dict[tuple[int, int], slice]
    expansion: sp.csr_matrix

    @property
    def n_params(self) -> int:
        return int(self.expansion.shape[1])

    @property
    def n_angular(self) -> int:
        return 2 * _angular_limit(self.kind, self.band_limit) + 1

    def stacked(self, weights: np.ndarray) -> np.ndarray:
        """(J * rho_in.dim, rho_out.dim) matrix mapping angular-expanded inputs to outputs."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.n_params,):
            raise DimensionMismatchError(f"Expected {self.n_params} weights, got shape {weights.shape}")
        return (self.expansion @ weights).reshape(self.n_angular * self.rho_in.dim, self.rho_out.dim)

    def dense(self, weights: np.ndarray) -> np.ndarray:
        """Fourier coefficients (J, rho_out.dim, rho_in.dim) of the assembled kernel."""
        stacked = self.stacked(weights).reshape(self.n_angular, self.rho_in.dim, self.rho_out.dim)
        return stacked.transpose(0, 2, 1)

    def evaluate(self, weights: np.ndarray, theta) -> np.ndarray:
        """Assembled kernel at theta: (..., rho_out.dim, rho_in.dim)."""
        trig = angular_basis(theta, _angular_limit(self.kind, self.band_limit))
        return np.einsum("...j,joi->...oi", trig, self.dense(weights))

    def project(self, dense: np.ndarray) -> np.ndarray:
        """Weights of the closest kernel to Fourier coefficients `dense` (J, rho_out.dim, rho_in.dim).

        Exact inverse of `dense` for kernels in the span of this basis.
        """
        dense = np.asarray(dense, dtype=np.float64)
        expected = (self.n_angular, self.rho_out.dim, self.rho_in.dim)
        if dense.shape != expected:
            raise DimensionMismatchError(f"Expected coefficients of shape {expected}, got {dense.shape}")
        stacked = dense.transpose(0, 2, 1).reshape(-1)
        return np.asarray(self.expansion.T @ stacked).reshape(-1)


@lru_cache(maxsize=64)
def block_kernel(rho_in: FeatureType, rho_out: FeatureType, kind: KernelKind | str, band_limit: int) -> BlockKernel:
    """Assemble per-component-pair bases into one parameterized kernel.

    Pairs with an empty basis contribute no parameters and leave their block zero.
    """
    kind = KernelKind(kind)
    n_angular = 2 * _angular_limit(kind, band_limit) + 1
    d_in, d_out = rho_in.dim, rho_out.dim
    rows, cols, vals = [], [], []
    pair_slices: dict[tuple[int, int], slice] = {}
    offset = 0
    for a, (n_out, out_start) in enumerate(zip(rho_out.components, rho_out.offsets)):
        for b, (n_in, in_start) in enumerate(zip(rho_in.components, rho_in.offsets)):
            basis = irrep_pair_basis(n_in, n_out, kind, band_limit)
            pair_slices[(a, b)] = slice(offset, offset + basis.dim)
            if basis.dim:
                k, j, o, i = np.nonzero(np.abs(basis.coefficients) > 0.0)
                rows.append((j * d_in + in_start + i) * d_out + out_start + o)
                cols.append(offset + k)
                vals.append(basis.coefficients[k, j, o, i])
            offset += basis.dim
    shape = (n_angular * d_in * d_out, offset)
    if rows:
        expansion = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        ).tocsr()
    else:
        expansion = sp.csr_matrix(shape)
    logger.debug("Block kernel %s -> %s (%s): %d parameters", rho_in, rho_out, kind.value, offset)
    return BlockKernel(
        rho_in=rho_in,
        rho_out=rho_out,
        kind=kind,
        band_limit=band_limit,
        pair_slices=pair_slices,
        expansion=expansion,
    )
