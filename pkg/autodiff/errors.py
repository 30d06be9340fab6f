"""Exceptions raised by the tensor engine."""


class AutodiffError(ValueError):
    pass


class ShapeMismatchError(AutodiffError):
    pass


class IndexOutOfRangeError(AutodiffError):
    pass


class TapeMismatchError(AutodiffError):
    pass
