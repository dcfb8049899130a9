"""Exception hierarchy for the toolkit.

Everything raised on purpose derives from SuboptMpcError so callers can
catch toolkit failures without swallowing programming errors.
"""


class SuboptMpcError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SuboptMpcError):
    """Invalid or inconsistent user configuration."""


class DimensionMismatch(SuboptMpcError):
    """Matrix/vector dimensions do not line up."""


class NotStabilizable(SuboptMpcError):
    """(A, B) fails the PBH stabilizability test."""


class NonConvergent(SuboptMpcError):
    """Fixed-point iteration exceeded its iteration cap."""


class DegenerateRow(SuboptMpcError):
    """A constraint row with zero normal where one is not allowed."""


class InfeasibleParameter(SuboptMpcError):
    """Parameter vector outside its admissible set (e.g. x_t not in X)."""


class Infeasible(SuboptMpcError):
    """Constraint set is (numerically) empty."""


class InfeasibleOcp(Infeasible):
    """The receding-horizon problem became infeasible mid-trajectory."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MaxIterations(SuboptMpcError):
    """Iterative solver hit its iteration cap without converging."""


class IllConditioned(SuboptMpcError):
    """Problem data too ill-conditioned for a reliable factorization."""


class IllPosed(SuboptMpcError):
    """Instance is valid but no certificate of the requested kind exists."""


class SingularSystem(SuboptMpcError):
    """A linear system that should be regular turned out singular."""


class CapExceeded(SuboptMpcError):
    """Fixed-point run exceeded its iteration cap; carries last residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
