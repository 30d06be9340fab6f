"""Exceptions raised by the data, training and evaluation pipeline."""


class HarnessError(ValueError):
    pass


class ConfigError(HarnessError):
    pass


class DatasetError(HarnessError):
    pass


class WindowTooShortError(HarnessError):
    pass


class NonFiniteLossError(HarnessError):
    def __init__(self, message: str, epoch: int, step: int):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class ShapeMismatchError(HarnessError):
    pass
