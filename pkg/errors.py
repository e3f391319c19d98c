"""
Exception hierarchy
===================
Every failure raised by the lab derives from HelmholtzLabError so the CLI can
map it to an exit code in one place.
"""


class HelmholtzLabError(Exception):
    """Base class for all lab errors"""


class GeometryError(HelmholtzLabError):
    """Invalid or self-intersecting obstacle boundary"""

    def __init__(self, message: str, segments=None):
        super().__init__(message)
        self.segments = list(segments or [])


class MeshError(HelmholtzLabError):
    """Meshing failed or produced an unacceptable mesh"""


class PreconditionError(HelmholtzLabError, ValueError):
    """An operation was called outside its stated preconditions"""


class SpecialFunctionDomainError(HelmholtzLabError, ValueError):
    pass


class SpecialFunctionRangeError(HelmholtzLabError, ArithmeticError):
    pass


class AssemblyError(HelmholtzLabError):
    """Degenerate element met during assembly"""


class SolverError(HelmholtzLabError):
    """Sparse or dense factorisation failed"""


class NearResonanceError(SolverError):
    """System too ill-conditioned to trust (close to an eigenvalue)"""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


class RegionMismatchError(HelmholtzLabError, ValueError):
    pass


class DimensionMismatchError(HelmholtzLabError, ValueError):
    pass


class ImpedanceClassError(HelmholtzLabError):
    """No feasible point in an impedance search class"""


class ConfigError(HelmholtzLabError):
    """Run configuration missing, malformed or rejected by the schema"""
