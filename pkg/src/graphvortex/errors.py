"""Exception hierarchy shared by every solver module."""


class VortexError(Exception):
    """Base class for all library errors."""


class GraphError(VortexError, ValueError):
    """Malformed graph: bad weights, measure, duplicates or disconnection."""


class FieldMismatch(VortexError, ValueError):
    """A field does not live on the graph it is used with."""


class CartanError(VortexError, ValueError):
    """A matrix fails one of the structure conditions."""

    condition = "structure condition"


class InconsistentPattern(CartanError):
    condition = "K^T = P S has no positive diagonal solution P"


class ReduciblePattern(CartanError):
    condition = "off-diagonal pattern of K is reducible; P must be supplied"


class NotSymmetric(CartanError):
    condition = "S = P^-1 K^T must be symmetric"


class BadSignPattern(CartanError):
    condition = "S must have positive diagonal and nonpositive off-diagonal entries"


class NotPositiveDefinite(CartanError):
    condition = "S must be positive definite"


class InverseNotPositive(CartanError):
    condition = "every entry of S^-1 must be positive"


class NonpositiveR(CartanError):
    condition = "row sums R of (K^T)^-1 must be positive"


class VortexDataError(VortexError, ValueError):
    """Vortex multiplicities and point lists disagree, or a point is unknown."""


class NonzeroMean(VortexError, ValueError):
    """Right-hand side of a graph Poisson problem does not integrate to zero."""


class NumericRange(VortexError, ArithmeticError):
    """Exponent of a field left the range where exp() is safe."""


class NoConvergence(VortexError):
    """An iteration stopped without meeting its tolerance.

    ``certified`` is set when the iterate itself proves that no solution
    exists (e.g. the monotone sequence fell below a necessary lower bound).
    """

    def __init__(self, message, iterations=0, certified=False):
        super().__init__(message)
        self.iterations = iterations
        self.certified = certified


class NotAdmissible(VortexError):
    """Moments violate the discriminant condition, so no constant shift exists."""

    def __init__(self, message, margins=None):
        super().__init__(message)
        self.margins = margins


class Diverged(NoConvergence):
    pass


class MaxIter(NoConvergence):
    def __init__(self, message, iterations=0, report=None):
        super().__init__(message, iterations)
        self.report = report


class LineSearchFail(NoConvergence):
    def __init__(self, message, iterations=0, report=None):
        super().__init__(message, iterations)
        self.report = report


class LambdaBelowThreshold(VortexError):
    """Coupling does not exceed the necessary existence threshold."""

    def __init__(self, lam, lambda0):
        super().__init__(
            f"lambda = {lam!r} does not exceed the necessary threshold "
            f"lambda0 = {lambda0!r}; no solution can exist"
        )
        self.lam = lam
        self.lambda0 = lambda0


class SeedNotAdmissible(NotAdmissible):
    def __init__(self, message, margins=None, required_lambda=None):
        super().__init__(message, margins)
        self.required_lambda = required_lambda
