"""Exception hierarchy for the NLKG lab.

Every error maps to a CLI exit code: 1 for failed checks, 2 for bad
configuration or parameters, 3 for numerical trouble.
"""

from typing import Any, Dict, List, Optional


class LabError(Exception):
    """Base class for lab errors."""

    exit_code = 3


class ParameterDomainError(LabError, ValueError):
    """A model parameter or virial index lies outside its admissible range."""

    exit_code = 2


class ConfigurationError(LabError, ValueError):
    """An experiment configuration failed schema validation."""

    exit_code = 2


class NumericalError(LabError):
    """Integrator or solver failure."""

    def __init__(self, message: str, last_good_r: Optional[float] = None):
        super().__init__(message)
        self.last_good_r = last_good_r


class DiscretizationError(NumericalError):
    """Non-finite samples or a sign-violating discrete form."""


class ResolutionError(NumericalError):
    """The grid or sampling is too coarse for the requested operation."""


class NoGroundStateFound(NumericalError):
    """The overshoot/undershoot dichotomy could not be bracketed."""

    def __init__(self, message: str, scan_log: List[Dict[str, Any]]):
        super().__init__(message)
        self.scan_log = scan_log


class ProjectionError(NumericalError):
    """No positive λ with K(λf) = 0."""


class ConvergenceError(NumericalError):
    """Iterative solver hit its cap without meeting the stopping rule."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MonitorAbort(NumericalError):
    """A registered monitor raised; carries the partial trajectory."""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class CharacterizationError(LabError):
    """The Lagrange-multiplier pairing has the wrong sign."""

    exit_code = 1


class InconsistencyError(LabError):
    """A blow-up margin came out non-positive."""

    exit_code = 1


class CheckFailure(LabError):
    """One or more experiment checks failed."""

    exit_code = 1

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
