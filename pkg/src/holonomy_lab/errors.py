"""Exception hierarchy.

Errors fall in two classes that the CLI maps to distinct exit codes:
``InputError`` (malformed or inconsistent input, exit 2) and
``NumericalError`` (a computation failed to meet its tolerance, exit 3).
"""

from __future__ import annotations


class HolonomyError(Exception):
    """Base class for every error raised by this package."""


class InputError(HolonomyError):
    pass


class NumericalError(HolonomyError):
    pass


# -- expressions ---------------------------------------------------------


class ParseError(InputError, ValueError):
    """Malformed expression or system definition.

    ``offset`` is the UTF-8 byte offset into the expression source (when the
    error comes from the expression grammar); ``location`` names the place in
    a definition file the source came from.
    """

    def __init__(self, message: str, offset: int | None = None, location: str | None = None):
        self.message = message
        self.offset = offset
        self.location = location
        super().__init__(self._render())

    def _render(self) -> str:
        text = self.message
        if self.offset is not None:
            text = f"{text} (at byte offset {self.offset})"
        if self.location:
            text = f"{self.location}: {text}"
        return text

    def at(self, location: str) -> "ParseError":
        """Return a copy tagged with a definition-file location."""
        err = type(self).__new__(type(self))
        ParseError.__init__(err, self.message, self.offset, location)
        return err


class UnknownFunction(ParseError):
    pass


class UnboundVariable(InputError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"unbound variable {self.name!r}"


class DomainError(NumericalError, ArithmeticError):
    pass


# -- geometry ------------------------------------------------------------


class QuadratureNoConvergence(NumericalError):
    pass


class NoPotential(InputError):
    pass


class NotExact(NumericalError):
    """The connection form failed the closedness test.

    Carries the grid point, the fiber component and the pair of base
    directions with the largest violation of the mixed-partials condition.
    """

    def __init__(self, violation: float, point, component: int, pair: tuple[int, int]):
        self.violation = float(violation)
        self.point = tuple(float(v) for v in point)
        self.component = component
        self.pair = pair
        super().__init__(
            f"connection form is not closed: |dA| = {self.violation:.6g} "
            f"at {self.point} (component {component}, directions {pair})"
        )


# -- hybrid structure ----------------------------------------------------


class ValidationFailed(InputError):
    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ContinuityViolation(InputError):
    def __init__(self, t: float, message: str):
        self.t = t
        super().__init__(f"t = {t:.17g}: {message}")


class AmbiguousCrossing(NumericalError):
    pass


class CrossCheckFailed(NumericalError):
    def __init__(self, difference: float, limit: float):
        self.difference = difference
        self.limit = limit
        super().__init__(
            f"quadrature and potential holonomy differ by {difference:.3e} "
            f"(allowed {limit:.3e})"
        )


class InsufficientData(InputError):
    pass
