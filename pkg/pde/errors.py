"""Exceptions and warnings raised by the surface PDE generators."""


class SimulationError(ValueError):
    pass


class DivergedError(SimulationError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class CGNoConvergenceError(SimulationError):
    pass


class InvalidTimeStepError(SimulationError):
    pass


class InvalidParameterError(SimulationError):
    pass


class PowerIterationStall(UserWarning):
    pass
