"""Exception types shared across the package.

Input problems derive from ``ValueError`` and numerical or identification
failures from ``RuntimeError``; the CLI maps the two families to distinct exit
codes.
"""


class ValidationError(ValueError):
    """Malformed input: bad spec field, wrong dimensions, invalid probabilities."""


class NotInteriorError(ValueError):
    """A CCP vector lies on the boundary of the simplex where payoffs are not point-identified."""


class DataError(ValueError):
    """Malformed panel or CSV input. ``lines`` lists offending 1-based line numbers."""

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = tuple(lines)


class TransportError(RuntimeError):
    """The transportation simplex failed (pivot budget exhausted or infeasible data)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IdentificationError(RuntimeError):
    """Estimation cannot proceed at some state (e.g. benchmark CCP equal to 0 or 1)."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
