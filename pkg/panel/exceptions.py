"""
Exceptions shared across panelq apps.

Every error carries a stable ``code`` so command-line failures can be parsed
by scripts (``error[E_PANEL_DUPLICATE] ...``).
"""

from typing import Optional


class PanelqError(Exception):
    """Base class for all panelq errors."""
    code = 'E_PANELQ'
    exit_status = 1

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code:
            self.code = code

    def diagnostic(self) -> str:
        return f"error[{self.code}] {self}"


class DimensionMismatchError(PanelqError, ValueError):
    code = 'E_DIMENSION'
    exit_status = 2


class InvalidProblemError(PanelqError, ValueError):
    """Non-positive weight or a quantile level outside (0, 1)."""
    code = 'E_PROBLEM'
    exit_status = 2


class PanelFormatError(PanelqError, ValueError):
    """Malformed panel CSV. ``line`` is the 1-based file line, header = 1."""
    code = 'E_PANEL_FORMAT'
    exit_status = 2

    def __init__(self, message: str, code: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message, code)
        self.line = line

    def diagnostic(self) -> str:
        where = f" line {self.line}" if self.line is not None else ''
        return f"error[{self.code}]{where}: {self}"


class GridError(PanelqError, ValueError):
    code = 'E_GRID'
    exit_status = 2


class ConfigError(PanelqError, ValueError):
    code = 'E_CONFIG'
    exit_status = 2


class SolverFailure(PanelqError):
    code = 'E_SOLVER'
    exit_status = 3


class NoConvergedEntriesError(PanelqError):
    code = 'E_NO_CONVERGED'
    exit_status = 3


class GroupCountMismatchError(PanelqError, ValueError):
    code = 'E_K_MISMATCH'
    exit_status = 4


class SingularCovarianceError(PanelqError):
    code = 'E_SINGULAR'
    exit_status = 4


class ReportSchemaError(PanelqError, ValueError):
    code = 'E_SCHEMA'
    exit_status = 5
