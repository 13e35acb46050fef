"""Exception types shared across the package."""


class SmpeError(Exception):
    """Base class for all package errors."""


class InvalidInput(SmpeError, ValueError):
    """Malformed or dimensionally inconsistent input."""


class AtomicMass(SmpeError):
    """An operation that requires divisible mass hit an indivisible cell."""


class NoSelection(SmpeError):
    """No pointwise selection from the candidate sets matches the target."""


class PreconditionFailed(SmpeError):
    """A solver precondition (e.g. divisibility of the kernel support) fails."""


class NoConvergence(SmpeError):
    """Iteration budget exhausted before reaching the requested tolerance.

    Carries the best certified result found so far, when one exists.
    """

    def __init__(self, message, result=None, epsilon=None):
        super().__init__(message)
        self.result = result
        self.epsilon = epsilon


class ParseError(SmpeError):
    """A game or result file violates the expected document structure."""


class ValidationError(SmpeError):
    """A structurally well-formed game fails semantic validation.

    The offending validation report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
