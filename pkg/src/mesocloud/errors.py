"""Exception hierarchy shared by all mesocloud modules."""


class MesocloudError(Exception):
    """Base class for every error raised by the library."""


class NonPositiveRadicand(MesocloudError, ValueError):
    """The cube-root argument of the grid-cloud volume balance is not positive."""

    def __init__(self, radicand: float):
        self.radicand = radicand
        super().__init__(f"cube-root argument must be positive, got {radicand!r}")


class CoincidentPoints(MesocloudError, ValueError):
    pass


class CenterImage(MesocloudError, ValueError):
    """The ball Green's function image point is undefined for y at the centre."""


class OutsideDomain(MesocloudError, ValueError):
    pass


class InsideVoid(MesocloudError, ValueError):
    pass


class SourceOverlapsCloud(MesocloudError, ValueError):
    pass


class InvalidGeometry(MesocloudError, ValueError):
    pass


class SingularSystem(MesocloudError, ArithmeticError):
    def __init__(self, condition_estimate: float):
        self.condition_estimate = condition_estimate
        super().__init__(
            f"dipole system is numerically singular (condition ~ {condition_estimate:.3e}); "
            "the cloud is probably outside the mesoscale regime"
        )


class NotConverged(MesocloudError, ArithmeticError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"fixed-point iteration did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


class OracleNotConverged(MesocloudError, ArithmeticError):
    def __init__(self, residual: float, limit: float):
        self.residual = residual
        self.limit = limit
        super().__init__(
            f"reference solver boundary residual {residual:.3e} exceeds {limit:.3e}; "
            "try more sources per void"
        )


class OracleTooLarge(MesocloudError, ValueError):
    pass


class IllConditionedWarning(UserWarning):
    pass


class MesoscaleWarning(UserWarning):
    pass
