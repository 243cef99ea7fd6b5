"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI returns for it:
2 for validation problems, 3 for infeasibility, 4 for numerical
non-convergence.
"""
from typing import Iterable, Optional, Tuple

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGENCE = 4


class TraceError(Exception):
    """Base class for all boundary_trace errors."""

    exit_code: int = EXIT_VALIDATION


# --- validation (exit 2) ---


class DomainValidationError(TraceError, ValueError):
    """Raised when a domain fails validation.

    Args:
        message: Human readable description
        feature: Offending feature kind ("outer", "hole", "slit", "domain")
        index: Index of the ring/segment named in the message
    """

    def __init__(self, message: str, feature: str = "domain", index: Optional[int] = None):
        super().__init__(message)
        self.feature = feature
        self.index = index


class DomainFileError(TraceError, ValueError):
    """Malformed domain, jet, graph or data file."""


class ConfigError(TraceError, ValueError):
    """Invalid run configuration."""


class OutsideDomainError(TraceError, ValueError):
    """A query point does not lie in the open domain."""


class NotBoundaryPointError(TraceError, ValueError):
    """A point expected on the boundary does not lie on any feature."""


class CubeNotInsideError(TraceError, ValueError):
    """A cube is not contained in the domain."""


class DomainTooThinError(TraceError, ValueError):
    """The uncovered skirt of a truncated decomposition is too large."""


class MissingCubeDataError(TraceError, KeyError):
    """A jet or boundary-data map lacks an entry for a cube."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class IsolatedCubeError(TraceError, ValueError):
    """A cube has no neighbor other than itself."""


class UnsupportedFieldKindError(TraceError, ValueError):
    """A synthesized test field cannot be built for the given domain."""


class LayerDataMissingError(TraceError, ValueError):
    """A render layer was requested without the artifact it draws."""


class EmptyConstraintError(TraceError, ValueError):
    """Projection onto an empty affine constraint."""


class ReportIOError(TraceError, OSError):
    """A report or store file could not be written."""


# --- infeasibility (exit 3) ---


class InconsistentBoundaryDataError(TraceError, ValueError):
    """Two cubes share an anchor but carry different boundary values."""

    exit_code = EXIT_INFEASIBLE

    def __init__(self, message: str, nodes: Iterable[int] = ()):
        super().__init__(message)
        self.nodes: Tuple[int, ...] = tuple(nodes)


class InfeasibleError(TraceError, ValueError):
    """The selection LP has no feasible point."""

    exit_code = EXIT_INFEASIBLE


class SubsetInfeasibleError(InfeasibleError):
    """A finiteness subset has no feasible selection."""


# --- non-convergence (exit 4) ---


class NonConvergenceError(TraceError, ArithmeticError):
    """A limit computation did not settle."""

    exit_code = EXIT_NONCONVERGENCE


class UncoveredPointError(NonConvergenceError):
    """A point lies in the skirt of the truncated family or outside the domain."""


class RayExitsCoveredRegionError(NonConvergenceError):
    """A trace probe left the covered region before producing a sample."""


class NormalizationVanishesError(NonConvergenceError):
    """The bump sum vanished at a covered point."""
