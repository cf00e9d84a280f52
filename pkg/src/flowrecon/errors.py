"""Exception hierarchy shared by all modules."""


class FlowReconError(Exception):
    """Base class for every error raised by :mod:`flowrecon`."""


class ConfigError(FlowReconError, ValueError):
    pass


class DomainError(FlowReconError, ValueError):
    """Argument outside the domain of definition of a function."""


class TagMismatch(FlowReconError, ValueError):
    pass


class NumericalError(FlowReconError, ArithmeticError):
    """Base class for failures of a numerical procedure (CLI exit code 3)."""


class StabilityError(NumericalError):
    pass


class LinSolveError(NumericalError):
    pass


class SolverError(NumericalError):
    """A forward solve failed; ``params`` carries the offending parameter vector."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class BasisNotOrthonormal(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class ZeroBeta(NumericalError):
    pass


class SolverFail(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularM(NumericalError):
    """The probe matrix of the kappa eigenproblem is numerically singular.

    ``kappa_regularized`` holds the value obtained with a diagonal shift of
    ``1e-12 * trace(M)``.
    """

    def __init__(self, message, kappa_regularized=None):
        super().__init__(message)
        self.kappa_regularized = kappa_regularized


class SingularF(NumericalError):
    pass


class NullspaceError(NumericalError):
    pass


class EmptyCell(FlowReconError):
    def __init__(self, cells, K=None, K_prime=None):
        self.cells = list(cells)
        self.K = K
        self.K_prime = K_prime
        super().__init__(f"partition ({K}, {K_prime}) has under-populated cells: {self.cells}")


class OutOfRange(FlowReconError, ValueError):
    pass
