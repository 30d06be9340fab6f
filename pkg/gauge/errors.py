"""Exceptions for feature types, samplers and kernel bases."""


class RepresentationError(ValueError):
    pass


class DimensionMismatchError(RepresentationError):
    pass


class NotRegularDecomposableError(RepresentationError):
    pass


class UndersampledError(RepresentationError):
    pass


class BandLimitError(RepresentationError):
    pass
