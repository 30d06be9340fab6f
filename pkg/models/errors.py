"""Exceptions raised while building and running gauge-equivariant models."""


class LayerError(ValueError):
    pass


class UnknownFlavorError(LayerError):
    pass


class BadArchitectureError(LayerError):
    pass


class ResidualTypeMismatchError(LayerError):
    pass


class CheckpointError(LayerError):
    pass
