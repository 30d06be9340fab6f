import numpy as np
import pytest

from gauge.errors import BandLimitError, DimensionMismatchError
from gauge.kernels import (
    KernelKind,
    assemble_kernel,
    block_kernel,
    irrep_pair_basis,
    solve_kernel_basis,
)
from gauge.reps import FeatureType

RHO = [FeatureType((n,)) for n in range(5)]


def _residual(basis, rng, trials: int = 50) -> float:
    worst = 0.0
    for _ in range(trials):
        theta, g = rng.uniform(0.0, 2.0 * np.pi, size=2)
        w = rng.standard_normal(basis.dim)
        lhs = assemble_kernel(basis, w, theta - g)
        rhs = basis.rho_out.action(-g) @ assemble_kernel(basis, w, theta) @ basis.rho_in.action(g)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


@pytest.mark.parametrize(
    "n_in, n_out, kind, dim",
    [
        (0, 0, "self", 1),
        (1, 1, "self", 2),
        (0, 1, "self", 0),
        (2, 1, "self", 0),
        (0, 0, "neigh", 1),
        (0, 1, "neigh", 2),
        (0, 2, "neigh", 2),
        (1, 1, "neigh", 4),
    ],
)
def test_basis_dimensions(n_in, n_out, kind, dim) -> None:
    assert solve_kernel_basis(RHO[n_in], RHO[n_out], kind, 4).dim == dim


@pytest.mark.parametrize("band_limit", [0, 1, 3])
def test_scalar_neighbor_kernel_is_constant(band_limit) -> None:
    basis = solve_kernel_basis(RHO[0], RHO[0], KernelKind.NEIGH, band_limit)
    assert basis.dim == 1
    values = [assemble_kernel(basis, [1.0], t)[0, 0] for t in np.linspace(0.0, 6.0, 7)]
    assert np.allclose(values, values[0], atol=1e-12)


def test_every_pair_satisfies_the_constraint(rng) -> None:
    for n_in in range(5):
        for n_out in range(5):
            for kind in KernelKind:
                basis = irrep_pair_basis(n_in, n_out, kind, 4)
                if basis.dim:
                    assert _residual(basis, rng) <= 1e-10, (n_in, n_out, kind)


def test_composite_constraint(rng) -> None:
    basis = solve_kernel_basis(FeatureType((0, 1)), FeatureType((1, 2, 0)), "neigh", 3)
    assert _residual(basis, rng, trials=20) <= 1e-10


def test_basis_is_orthonormal_and_deterministic() -> None:
    a = solve_kernel_basis(RHO[1], RHO[2], KernelKind.NEIGH, 4)
    b = solve_kernel_basis(RHO[1], RHO[2], KernelKind.NEIGH, 4)
    flat = a.coefficients.reshape(a.dim, -1)
    assert np.allclose(flat @ flat.T, np.eye(a.dim), atol=1e-10)
    assert np.array_equal(a.coefficients, b.coefficients)
    for row in flat:
        assert row[np.flatnonzero(np.abs(row) > 1e-12)[0]] > 0


def test_self_kernels_lie_in_the_neighbor_span() -> None:
    for n_in in range(3):
        for n_out in range(3):
            own = irrep_pair_basis(n_in, n_out, KernelKind.SELF, 2)
            neigh = irrep_pair_basis(n_in, n_out, KernelKind.NEIGH, 2)
            span = neigh.coefficients.reshape(neigh.dim, -1)
            for element in own.coefficients:
                embedded = np.zeros(neigh.coefficients.shape[1:])
                embedded[0] = element[0]
                v = embedded.reshape(-1)
                assert np.linalg.norm(v - span.T @ (span @ v)) <= 1e-9


def test_self_kernel_ignores_theta(rng) -> None:
    basis = solve_kernel_basis(RHO[1], RHO[1], KernelKind.SELF, 4)
    w = rng.standard_normal(basis.dim)
    assert np.allclose(assemble_kernel(basis, w, 0.3), assemble_kernel(basis, w, 2.9), atol=1e-14)


def test_assemble_kernel_checks_weights() -> None:
    basis = solve_kernel_basis(RHO[1], RHO[1], KernelKind.NEIGH, 2)
    assert np.array_equal(assemble_kernel(basis, np.zeros(basis.dim), 1.0), np.zeros((2, 2)))
    with pytest.raises(DimensionMismatchError):
        assemble_kernel(basis, np.zeros(basis.dim + 1), 1.0)


def test_band_limit_below_frequencies() -> None:
    with pytest.raises(BandLimitError):
        solve_kernel_basis(RHO[3], RHO[0], "neigh", 2)


def test_block_kernel_parameter_counts() -> None:
    assert block_kernel(RHO[0], RHO[0], KernelKind.SELF, 4).n_params == 1
    history = FeatureType.scalars(5)
    hidden = FeatureType.regular(12, 2)
    kernel = block_kernel(history, hidden, KernelKind.NEIGH, 4)
    per_field = sum(irrep_pair_basis(0, m, KernelKind.NEIGH, 4).dim for m in range(3))
    assert kernel.n_params == 5 * 12 * per_field == 300


def test_empty_pairs_leave_zero_blocks(rng) -> None:
    rho_in, rho_out = FeatureType((0, 1)), FeatureType((1, 0))
    kernel = block_kernel(rho_in, rho_out, KernelKind.SELF, 2)
    assert kernel.pair_slices[(0, 0)].stop == kernel.pair_slices[(0, 0)].start
    dense = kernel.dense(rng.standard_normal(kernel.n_params))
    # out rho_1 (rows 0-1) from in rho_0 (column 0), and out rho_0 (row 2) from in rho_1 (columns 1-2)
    assert np.array_equal(dense[0, 0:2, 0], np.zeros(2))
    assert np.array_equal(dense[0, 2, 1:3], np.zeros(2))


def test_block_kernel_project_inverts_dense(rng) -> None:
    kernel = block_kernel(FeatureType.regular(2, 1), FeatureType((0, 2, 1)), KernelKind.NEIGH, 2)
    w = rng.standard_normal(kernel.n_params)
    assert np.allclose(kernel.project(kernel.dense(w)), w, atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        kernel.project(np.zeros((1, 1, 1)))


def test_block_kernel_is_equivariant(rng) -> None:
    rho_in, rho_out = FeatureType.regular(2, 1), FeatureType((0, 2, 1))
    kernel = block_kernel(rho_in, rho_out, KernelKind.NEIGH, 2)
    w = rng.standard_normal(kernel.n_params)
    for theta, g in rng.uniform(0.0, 2.0 * np.pi, size=(10, 2)):
        lhs = kernel.evaluate(w, theta - g)
        rhs = rho_out.action(-g) @ kernel.evaluate(w, theta) @ rho_in.action(g)
        assert np.linalg.norm(lhs - rhs) <= 1e-10
