"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConvergenceError(ArithmeticError):
    """An iterative procedure failed to reach its tolerance."""


class QuadratureError(ConvergenceError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved tolerance {achieved:.3e})")
        self.achieved = achieved


class MismatchError(ValueError):
    """Operands with incompatible orders, centers or lengths."""


class SingularityError(ZeroDivisionError):
    pass


class GridError(ValueError):
    """A time or space grid does not satisfy the operation's requirements."""


class NumericalError(ArithmeticError):
    """Non-finite values or a singular linear system inside a solver."""


class ConfigError(ValueError):
    pass


class PrecisionWarning(UserWarning):
    """A truncated series has a tail that is not negligible."""
