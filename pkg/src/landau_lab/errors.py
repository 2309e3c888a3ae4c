"""Exception types. Each maps to a CLI exit code."""


class LandauLabError(Exception):
    exit_code = 1
    kind = "error"

    def to_json(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class ConfigError(LandauLabError, ValueError):
    exit_code = 2
    kind = "config"


class NumericalToleranceError(LandauLabError, RuntimeError):
    """Quadrature or solver failed to reach its tolerance."""

    exit_code = 3
    kind = "numerical-tolerance"

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual

    def to_json(self) -> dict:
        out = super().to_json()
        out["residual"] = self.residual
        return out


class InvariantError(NumericalToleranceError):
    kind = "invariant-violation"


class CapacityError(LandauLabError, ValueError):
    """Not enough degree headroom, or a point outside a tabulated range."""

    exit_code = 4
    kind = "capacity"


class OutOfTableError(CapacityError):
    kind = "out-of-table"


class SingularityError(LandauLabError, ArithmeticError):
    exit_code = 3
    kind = "singular-value"


class InsufficientDataError(NumericalToleranceError):
    """Too few resolved points to fit a rate."""

    kind = "insufficient-data"
