"""
Exception hierarchy shared by the simulator modules and the CLI.

The CLI maps the three families onto its exit codes: configuration (2),
solver (3) and analysis (4).
"""


class CapfluxError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(CapfluxError):
    """Invalid scenario, grid or curve parameters."""


class SaturationRangeError(CapfluxError, ValueError):
    """A saturation outside [0, 1] reached a saturation function."""


class PressureRangeError(CapfluxError, ValueError):
    """A capillary pressure outside the range of the curve being inverted."""


class SolverError(CapfluxError):
    """Base class for failures inside a time step."""


class InterfaceSolveError(SolverError):
    """The local matrix-fracture interface solve did not converge."""


class LinearSolveError(SolverError):
    """Singular pivot or non-finite values in the banded linear solve."""


class NewtonConvergenceError(SolverError):
    """The global Newton loop did not reach the tolerance."""


class SimulationAborted(SolverError):
    """Too many consecutive time-step cuts; the run was stopped."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        # partial SimulationRecord up to the last accepted step
        self.record = record


class AnalysisError(CapfluxError):
    """Post-processing was asked for something the data cannot support."""
