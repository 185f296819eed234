"""
Exception hierarchy for the interval service
"""
from typing import Any, List, Optional, Sequence, Tuple


class IntervalError(Exception):
    """Base class for all errors raised by the service"""


class ExprError(IntervalError, ValueError):
    """Problems with an expression (parsing, evaluation, differentiation)"""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"Unknown identifier '{name}' at position {position}")


class UnknownFunctionError(ExprError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"Unknown function '{name}' at position {position}")


class NonDifferentiableError(ExprError):
    """Raised when differentiating through abs on a path containing the parameter"""


class EvaluationIndexError(ExprError, IndexError):
    """A variable or parameter index is out of bounds for the given vectors"""


class JacobianError(IntervalError):
    def __init__(self, positions: Sequence[Tuple[int, int]]):
        self.positions = list(positions)
        shown = ", ".join(f"({r}, {c})" for r, c in self.positions[:10])
        more = "" if len(self.positions) <= 10 else f" and {len(self.positions) - 10} more"
        super().__init__(f"Non-finite Jacobian entries at (row, col): {shown}{more}")


class ReparameterizationError(IntervalError):
    def __init__(self, message: str = "no extractable parameter"):
        super().__init__(message)


class FitError(IntervalError):
    """Fitting could not start or produced an unusable result"""


class QuantileError(IntervalError, ValueError):
    """Invalid probability or degrees of freedom"""


class SplineError(IntervalError):
    """Spline construction failed"""


class InsufficientKnotsError(SplineError):
    def __init__(self, n_distinct: int):
        self.n_distinct = n_distinct
        super().__init__(f"Need at least 3 distinct knots, got {n_distinct}")


class ProfileError(IntervalError):
    """Profile computation failed"""


class NonMonotoneProfileError(ProfileError):
    def __init__(self, message: str, trace: Any = None):
        self.trace = trace
        super().__init__(message)


class RestartLimitExceeded(ProfileError):
    def __init__(self, restarts: int, traces: Optional[List[Any]] = None):
        self.restarts = restarts
        self.traces = traces or []
        super().__init__(f"Better optimum kept appearing; gave up after {restarts} restarts")


class ProfileRestart(Exception):
    """Control-flow signal: a conditional refit beat the incumbent optimum"""

    def __init__(self, theta: Any, ssr: float):
        self.theta = theta
        self.ssr = ssr
        super().__init__(f"Better optimum found during profiling (SSR={ssr:.10g})")


class ContourUnavailable(IntervalError):
    def __init__(self, reason: str, message: str):
        self.reason = reason
        super().__init__(f"{reason}: {message}")


class ConfigError(IntervalError):
    """Invalid analysis configuration"""


class DatasetError(IntervalError):
    def __init__(self, message: str, path: Any = None, line: Optional[int] = None,
                 column: Optional[str] = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")
