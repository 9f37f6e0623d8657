"""
Error hierarchy shared by every toolkit module.

Library code raises these; the pipeline layer catches them per stage and turns
them into result dictionaries and process exit codes.
"""

from typing import Any, Optional


class ToolkitError(Exception):
    """Base class for all toolkit errors"""

    exit_code: int = 1


class InvalidLength(ToolkitError):
    """A sequence is empty or does not have the length its grid requires"""


class InvalidValue(ToolkitError):
    """A numeric input is non-finite or outside its admissible range"""


class GridMismatch(ToolkitError):
    """Two time series, or a series and a target grid, are not compatible"""


class InvalidModel(ToolkitError):
    """A linear program or model input is malformed"""


class InvalidState(ToolkitError):
    """A controller state violates its invariants"""


class GatingViolation(ToolkitError):
    """Regulation power was allocated at a step whose premium is Blocked"""


class InsufficientHistory(ToolkitError):
    """Not enough historical days match the forecast target"""


class NonConvexTariffs(ToolkitError):
    """Import tariff falls below the export tariff somewhere on the horizon"""


class ConfigError(ToolkitError):
    """The run configuration cannot be read, parsed or validated"""

    exit_code = 2


class InfeasibleProblem(ToolkitError):
    """An optimisation problem has no feasible point

    Args:
        message (str): Human readable summary
        diagnostic (Optional[str]): Which envelope or constraint family is likely violated
    """

    exit_code = 3

    def __init__(self, message: str, diagnostic: Optional[str] = None):
        super().__init__(message if diagnostic is None else f"{message} ({diagnostic})")
        self.diagnostic = diagnostic


class ResourceExhausted(ToolkitError):
    """Branch-and-bound hit its node limit

    The best integer-feasible solution found so far, if any, is kept on
    ``incumbent`` so callers can decide whether it is good enough.
    """

    def __init__(self, message: str, incumbent: Any = None):
        super().__init__(message)
        self.incumbent = incumbent
