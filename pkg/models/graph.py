"""Per-mesh constants shared by every layer: edge lists, angles, transport tables."""
from dataclasses import dataclass, field

import numpy as np

from gauge.kernels import angular_basis
from gauge.reps import FeatureType
from geometry.frames import TangentGeometry, build_geometry
from geometry.mesh import Mesh
from pde.laplacian import cotan_laplacian

# distance (rho_0) followed by the in-plane direction of the neighbor (rho_1)
EDGE_FEATURE_TYPE = FeatureType((0, 1))
NO_EDGE_FEATURES = FeatureType(())


@dataclass(frozen=True, eq=False)
class MeshGraph:
    """Read-only view of a TangentGeometry in the shape layers consume.

    Attributes:
        geometry: Source geometry (with transporters)
        centers: (2E,) receiving vertex p of each directed edge
        neighbors: (2E,) sending vertex q of each directed edge
        theta: (2E,) angle of q in the gauge at p
        transporter: (2E,) g_{q->p}
    """

    geometry: TangentGeometry
    centers: np.ndarray
    neighbors: np.ndarray
    theta: np.ndarray
    transporter: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_geometry(cls, geom: TangentGeometry) -> "MeshGraph":
        if geom.transporter is None:
            raise ValueError("Geometry has no transporters; build it with build_geometry or with_transporters")
        centers, neighbors = geom.edge_index
        return cls(
            geometry=geom,
            centers=centers,
            neighbors=neighbors,
            theta=geom.theta,
            transporter=geom.transporter,
        )

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "MeshGraph":
        return cls.from_geometry(build_geometry(mesh))

    @property
    def n_vertices(self) -> int:
        return self.geometry.n_vertices

    @property
    def n_edges(self) -> int:
        return int(self.centers.shape[0])

    @property
    def mean_degree(self) -> float:
        return self.n_edges / max(self.n_vertices, 1)

    def transport_tables(self, ft: FeatureType) -> tuple[np.ndarray, np.ndarray]:
        """cos(n g_{q->p}) and sin(n g_{q->p}) per edge and coordinate of ft."""
        key = ("transport", ft)
        if key not in self._cache:
            angle = self.transporter[:, None] * ft.coordinate_frequencies[None, :]
            self._cache[key] = (np.cos(angle), np.sin(angle))
        return self._cache[key]

    def angular(self, band_limit: int) -> np.ndarray:
        """(2E, 2B+1) orthonormal trigonometric basis at every neighbor angle."""
        key = ("angular", band_limit)
        if key not in self._cache:
            self._cache[key] = angular_basis(self.theta, band_limit)
        return self._cache[key]

    def edge_features(self) -> np.ndarray:
        """(2E, 3) features of EDGE_FEATURE_TYPE in the gauge at p: |log_p(x_q)|, cos theta, sin theta."""
        key = ("edge_features",)
        if key not in self._cache:
            self._cache[key] = np.stack(
                [self.geometry.log_norms, np.cos(self.theta), np.sin(self.theta)], axis=1
            )
        return self._cache[key]

    def vertex_areas(self) -> np.ndarray:
        """(V,) barycentric areas of the cotangent operator on this mesh."""
        key = ("areas",)
        if key not in self._cache:
            self._cache[key] = cotan_laplacian(self.geometry.mesh).areas
        return self._cache[key]
