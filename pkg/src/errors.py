from typing import Any, Dict, Optional, Tuple


class PlaneWaveError(Exception):
    """Base class for every failure the library reports on purpose"""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {'error': type(self).__name__, 'message': self.message}
        for key, value in self.details.items():
            payload[key] = value if isinstance(value, (int, float, str, bool, type(None), list, dict)) else str(value)
        return payload


class ExpressionError(PlaneWaveError):
    pass


class MissingVariableError(ExpressionError):
    def __init__(self, variable: str):
        super().__init__(f"No value bound for variable '{variable}'", variable=variable)
        self.variable = variable


class ParseError(PlaneWaveError):
    def __init__(self, message: str, line: int, column: int, source: Optional[str] = None):
        super().__init__(f"{message} (line {line}, column {column})", line=line, column=column, source=source)
        self.line = line
        self.column = column


class ConfigError(PlaneWaveError):
    pass


class TensorShapeError(PlaneWaveError):
    pass


class VarianceError(TensorShapeError):
    pass


class PreconditionError(PlaneWaveError):
    """A named quantity failed the requirement an operation depends on"""

    def __init__(self, message: str, quantity: str, value: Any = None):
        super().__init__(message, quantity=quantity, value=value)
        self.quantity = quantity
        self.value = value


class QuadratureError(PlaneWaveError):
    def __init__(self, achieved: float, tolerance: float):
        super().__init__(
            f"Quadrature did not converge: error estimate {achieved:.3e} exceeds {tolerance:.1e}",
            achieved=achieved, tolerance=tolerance,
        )
        self.achieved = achieved
        self.tolerance = tolerance


class OracleLimitError(PlaneWaveError):
    def __init__(self, k: int, k_max: int):
        super().__init__(
            f"Covariant-derivative oracle refuses k={k}: limit is k_max={k_max}",
            k=k, k_max=k_max,
        )


class SchemeLimitError(PlaneWaveError):
    def __init__(self, max_slots: int, cap: int):
        super().__init__(
            f"Refusing to enumerate contraction schemes with {max_slots} slots (cap is {cap})",
            max_slots=max_slots, cap=cap,
        )


class InadmissibleTripleError(PreconditionError):
    def __init__(self, value: Any):
        super().__init__(
            "Inadmissible (X, Z0, Theta): Theta{(nabla_Z0)^(p+1) R(X, Z0) X} must be non-zero",
            quantity='Theta{(nabla_Z0)^(p+1) R(X,Z0)X}', value=value,
        )


class CertificationError(PlaneWaveError):
    """A closed-form component disagrees with the generic Levi-Civita computation"""

    def __init__(self, message: str, index: Tuple[int, ...], difference: Any = None):
        super().__init__(message, index=list(index), difference=difference)
        self.index = tuple(index)
        self.difference = difference
