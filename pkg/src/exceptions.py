"""
Exception hierarchy for the Euler-Coriolis toolkit.

Command exit codes are derived from these classes in the harness.
"""


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class ConfigurationError(ToolkitError, ValueError):
    """Invalid configuration, run file or array shape"""


class AdmissibilityError(ToolkitError, ValueError):
    """Input data violates the admissibility constraints of an operation"""


class DomainError(ToolkitError, ValueError):
    """Degenerate frequency vector (zero vector or vanishing horizontal part)"""


class ResolutionError(ToolkitError):
    """Requested resolution is not available on the grid or node set"""


class QuadratureBudgetError(ToolkitError):
    """Oscillatory quadrature would need more panels than the budget allows"""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"oscillatory quadrature needs {required} panels per variable, budget is {budget}"
        )


class NumericalAbort(ToolkitError):
    """NaN, overflow or blow-up detected during a computation"""

    def __init__(self, message: str, dump_path=None):
        self.dump_path = dump_path
        super().__init__(message if dump_path is None else f"{message} (state dumped to {dump_path})")


class CFLViolation(NumericalAbort):
    """Advective CFL condition violated; the step is rejected"""


class FieldIOError(ToolkitError, OSError):
    """Missing or corrupt field dump"""
