"""SO(2) irreps, composite feature types and the regular-field sampler.

Feature vectors are laid out component by component. A component is one copy of an
irrep rho_n: a single coordinate for n = 0, a (cos, sin) pair for n >= 1. Regular
types (F + 1 frequencies repeated over several fields) are laid out field-major:
[rho_0, rho_1, ..., rho_F, rho_0, rho_1, ...].
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from gauge.errors import DimensionMismatchError, NotRegularDecomposableError, UndersampledError


def irrep_dim(n: int) -> int:
    return 1 if n == 0 else 2


def irrep_matrix(n: int, g: float) -> np.ndarray:
    """rho_n(g): [[1]] for n = 0, otherwise the 2x2 rotation by n*g."""
    if n < 0:
        raise ValueError(f"Irrep frequency must be >= 0, got {n}")
    if n == 0:
        return np.ones((1, 1))
    c, s = np.cos(n * g), np.sin(n * g)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class FeatureType:
    """Ordered direct sum of SO(2) irreps.

    Attributes:
        components: Frequency of each irrep copy, in layout order
    """

    components: tuple[int, ...]

    def __post_init__(self):
        if any(n < 0 for n in self.components):
            raise ValueError(f"Frequencies must be >= 0, got {self.components}")

    @classmethod
    def scalars(cls, count: int) -> "FeatureType":
        return cls(tuple([0] * count))

    @classmethod
    def regular(cls, fields: int, max_frequency: int) -> "FeatureType":
        """`fields` copies of rho_0 + rho_1 + ... + rho_max_frequency, field-major."""
        return cls(tuple(range(max_frequency + 1)) * fields)

    @classmethod
    def from_multiplicities(cls, multiplicities: Mapping[int, int]) -> "FeatureType":
        """Canonical layout for {frequency: count}.

        Equal counts over 0..F give the field-major regular layout; anything else is
        laid out in ascending frequency blocks.
        """
        items = sorted((int(n), int(m)) for n, m in multiplicities.items() if m > 0)
        if not items:
            return cls(())
        freqs = [n for n, _ in items]
        counts = {m for _, m in items}
        if freqs == list(range(len(freqs))) and len(counts) == 1:
            return cls.regular(counts.pop(), freqs[-1])
        return cls(tuple(n for n, m in items for _ in range(m)))

    def __add__(self, other: "FeatureType") -> "FeatureType":
        return FeatureType(self.components + other.components)

    def __str__(self) -> str:
        if not self.components:
            return "0"
        return "+".join(f"{m}rho{n}" for n, m in sorted(self.multiplicities.items()))

    @cached_property
    def multiplicities(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for n in self.components:
            counts[n] = counts.get(n, 0) + 1
        return dict(sorted(counts.items()))

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        """Start coordinate of each component."""
        starts, pos = [], 0
        for n in self.components:
            starts.append(pos)
            pos += irrep_dim(n)
        return tuple(starts)

    @property
    def dim(self) -> int:
        return sum(irrep_dim(n) for n in self.components)

    @property
    def max_frequency(self) -> int:
        return max(self.components, default=0)

    @cached_property
    def coordinate_frequencies(self) -> np.ndarray:
        """Frequency of the irrep each coordinate belongs to."""
        return np.repeat(np.asarray(self.components, dtype=np.float64), [irrep_dim(n) for n in self.components])

    @cached_property
    def quarter_turn(self) -> np.ndarray:
        """(dim, dim) matrix P with x @ P mapping every (c, s) pair to (-s, c); zero on rho_0."""
        swap = np.zeros((self.dim, self.dim))
        for n, start in zip(self.components, self.offsets):
            if n > 0:
                swap[start, start + 1] = 1.0
                swap[start + 1, start] = -1.0
        swap.setflags(write=False)
        return swap

    @property
    def n_fields(self) -> int:
        """Number of regular fields; raises if the type is not regular."""
        if not self.components or self.components[0] != 0:
            raise NotRegularDecomposableError(f"{self} does not start with a rho_0 field")
        width = self.components.index(0, 1) if 0 in self.components[1:] else len(self.components)
        field = tuple(range(width))
        if self.components[:width] != field or self.components != field * (len(self.components) // width):
            raise NotRegularDecomposableError(f"{self} is not a repetition of rho_0 + ... + rho_F fields")
        return len(self.components) // width

    @property
    def is_regular(self) -> bool:
        try:
            self.n_fields
        except NotRegularDecomposableError:
            return False
        return True

    def action(self, g: float) -> np.ndarray:
        """Block-diagonal (dim, dim) matrix of the group element g."""
        out = np.zeros((self.dim, self.dim))
        for n, start in zip(self.components, self.offsets):
            size = irrep_dim(n)
            out[start:start + size, start:start + size] = irrep_matrix(n, g)
        return out


def rep_apply(ft: FeatureType, g, x: np.ndarray) -> np.ndarray:
    """Apply rho(g) to the last axis of x.

    Args:
        ft: Feature type of x
        g: Angle, or an array broadcastable against x[..., 0] for per-row angles
        x: (..., ft.dim) features

    Raises:
        DimensionMismatchError: If the last axis does not match ft.dim
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ft.dim:
        raise DimensionMismatchError(f"Features of width {x.shape[-1]} do not match {ft} (dim {ft.dim})")
    angle = np.asarray(g, dtype=np.float64)[..., None] * ft.coordinate_frequencies
    return x * np.cos(angle) + (x @ ft.quarter_turn) * np.sin(angle)


def rotate_features(ft: FeatureType, phi: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Express per-vertex features in gauges rotated by phi: x'_p = rho(-phi_p) x_p."""
    return rep_apply(ft, -np.asarray(phi, dtype=np.float64), x)


@dataclass(frozen=True, eq=False)
class RegularSampler:
    """Fourier synthesis/analysis matrices for one regular field.

    Attributes:
        feature_type: Regular feature type the sampler acts on
        n_samples: N equispaced angles 2*pi*k/N
        synthesis: (N, 2F+1) matrix S mapping field coefficients to samples
        analysis: (2F+1, N) matrix P mapping samples back to coefficients
    """

    feature_type: FeatureType
    n_samples: int
    synthesis: np.ndarray
    analysis: np.ndarray

    @property
    def n_fields(self) -> int:
        return self.feature_type.n_fields

    @property
    def field_dim(self) -> int:
        return self.synthesis.shape[1]

    def to_samples(self, x: np.ndarray) -> np.ndarray:
        """(V, dim) coefficients to (V, fields, N) samples."""
        x = np.asarray(x, dtype=np.float64)
        return x.reshape(x.shape[0], self.n_fields, self.field_dim) @ self.synthesis.T

    def from_samples(self, samples: np.ndarray) -> np.ndarray:
        return (samples @ self.analysis.T).reshape(samples.shape[0], -1)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Sample, ReLU and project back."""
        return self.from_samples(np.maximum(self.to_samples(x), 0.0))


def build_regular_sampler(ft: FeatureType, n_samples: int) -> RegularSampler:
    """Build the sampler for a regular feature type.

    Raises:
        NotRegularDecomposableError: If ft is not a repetition of rho_0 + ... + rho_F
        UndersampledError: If n_samples <= 2F
    """
    ft.n_fields  # raises when not regular
    max_freq = ft.max_frequency
    if n_samples <= 2 * max_freq:
        raise UndersampledError(f"{n_samples} samples cannot resolve frequency {max_freq}; need more than {2 * max_freq}")
    t = 2.0 * np.pi * np.arange(n_samples) / n_samples
    columns = [np.ones(n_samples)]
    for n in range(1, max_freq + 1):
        columns.extend([np.cos(n * t), np.sin(n * t)])
    synthesis = np.stack(columns, axis=1)
    weights = np.full(synthesis.shape[1], 2.0 / n_samples)
    weights[0] = 1.0 / n_samples
    analysis = weights[:, None] * synthesis.T
    synthesis.setflags(write=False)
    analysis.setflags(write=False)
    return RegularSampler(feature_type=ft, n_samples=n_samples, synthesis=synthesis, analysis=analysis)
