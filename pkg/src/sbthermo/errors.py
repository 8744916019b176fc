"""Exception types raised across the package."""


class SBThermoError(Exception):
    """Base class; ``stage`` names the pipeline stage that failed."""

    stage = "unknown"


class ConfigError(SBThermoError, ValueError):
    stage = "config"


class QuadratureError(SBThermoError, ArithmeticError):
    stage = "bath"

    def __init__(self, message, estimated_error=None):
        super().__init__(message if estimated_error is None
                         else f"{message} (estimated error {estimated_error:.3g})")
        self.estimated_error = estimated_error


class DecompositionError(SBThermoError, ArithmeticError):
    stage = "bath"


class HierarchyTooLarge(SBThermoError, MemoryError):
    stage = "hierarchy"


class PropagationDiverged(SBThermoError, ArithmeticError):
    stage = "hierarchy"


class NotConverged(SBThermoError, RuntimeError):
    stage = "hierarchy"


class SingularMapError(SBThermoError, ArithmeticError):
    """Dynamical map too ill-conditioned to invert; ``time`` is the first failure."""

    stage = "tomography"

    def __init__(self, message, time=None, index=None):
        super().__init__(message)
        self.time = time
        self.index = index


class ConsistencyError(SBThermoError, ArithmeticError):
    stage = "tomography"


class GridMismatch(SBThermoError, ValueError):
    stage = "thermo"


class PositivityError(SBThermoError, ValueError):
    stage = "thermo"


class RealityError(SBThermoError, ValueError):
    """A quantity that must be real came out with a sizeable imaginary part."""

    stage = "thermo"
