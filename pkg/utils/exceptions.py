"""
Exception hierarchy shared by every package of the solver.
"""
from typing import Optional


class SolverError(Exception):
    """Base class for all solver errors."""


class SimulationError(SolverError, ValueError):
    """Invalid state or gate for the statevector simulator."""


class CircuitError(SimulationError):
    """Invalid circuit construction or binding."""


class EncodingDomainError(SolverError, ValueError):
    """An arccos argument left the domain of the encoding functions."""


class ProblemError(SolverError, ValueError):
    """Invalid problem definition or oracle query."""


class LossError(SolverError, ValueError):
    """Invalid loss assembly input."""


class TrainingError(SolverError):
    """Optimizer or schedule failure."""


class DivergenceError(TrainingError):
    """Training diverged; carries the trace recorded so far."""

    def __init__(self, message: str, trace=None, loss: Optional[float] = None):
        super().__init__(message)
        self.trace = trace
        self.loss = loss


class ConfigError(SolverError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str, suggestion: Optional[str] = None):
        self.field = field
        self.suggestion = suggestion
        text = f"{field}: {message}"
        if suggestion:
            text += f" (did you mean '{suggestion}'?)"
        super().__init__(text)


class ReportError(SolverError):
    """Report files could not be written."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class RegistryError(SolverError, ValueError):
    """Invalid run-registry entry."""
