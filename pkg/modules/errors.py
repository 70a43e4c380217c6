"""
Exception hierarchy shared by the engine, the CLI and the dashboard.

Validation problems (bad input) and numerical diagnostics (the input is fine but
the requested quantity cannot be computed reliably) are kept apart so the CLI can
map them to different exit codes.
"""


class QfiError(Exception):
    """Base class for every error raised by the engine."""

    exit_code = 1


class ValidationError(QfiError, ValueError):
    exit_code = 2


class NumericalError(QfiError, ArithmeticError):
    exit_code = 3


class PopulationFloorError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class NotIdentifiableError(NumericalError):
    pass


class ResonanceError(NumericalError):
    pass


class StepSizeError(NumericalError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class TruncationError(NumericalError):
    def __init__(self, message: str, suggested_levels: int):
        super().__init__(message)
        self.suggested_levels = suggested_levels


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, QfiError):
        return exc.exit_code
    return 1
