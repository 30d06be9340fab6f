"""Exceptions raised while loading meshes and building tangent geometry."""


class MeshError(ValueError):
    pass


class ParseError(MeshError):
    pass


class NonTriangularError(MeshError):
    pass


class NonManifoldError(MeshError):
    pass


class NonOrientableError(MeshError):
    pass


class IsolatedVertexError(MeshError):
    pass


class DegenerateFaceError(MeshError):
    pass


class ZeroNormalError(MeshError):
    pass


class ZeroLogError(MeshError):
    pass


class AntipodalNormalsError(MeshError):
    pass


class NotANeighborError(MeshError):
    pass
