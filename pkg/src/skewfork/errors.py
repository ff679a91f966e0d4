"""Exception hierarchy shared by every module."""

from __future__ import annotations


class SkewforkError(Exception):
    """Base class for all package errors."""


class SymbolicDriver(SkewforkError):
    """A symbolic driver has no pointwise evaluation."""


class UnknownCoefficient(SkewforkError, KeyError):
    """The driver has no coefficient with the requested id."""


class BlowUp(SkewforkError):
    """The solution left the guard radius."""

    def __init__(self, t_escape: float, message: str | None = None):
        self.t_escape = float(t_escape)
        super().__init__(message or f"solution left the guard radius at t={t_escape:.6g}")


class StepUnderflow(SkewforkError):
    """The adaptive step became smaller than the relative floor."""

    def __init__(self, t_stop: float):
        self.t_stop = float(t_stop)
        super().__init__(f"step size underflow at t={t_stop:.6g}")


class NotCoercive(SkewforkError):
    """No absorbing interval could be validated."""


class NoConvergence(SkewforkError):
    """An iterative limit did not settle before the horizon cap.

    ``partial`` carries the last available estimate when one exists.
    """

    def __init__(self, message: str, horizon_cap: float | None = None, partial=None):
        self.horizon_cap = horizon_cap
        self.partial = partial
        super().__init__(message)


class AmbiguousBasin(SkewforkError):
    """A trajectory approached neither attractive copy."""


class OrderingViolated(SkewforkError):
    """Equilibrium samples do not satisfy the required ordering."""


class Inconclusive(SkewforkError):
    """The numerics cannot decide near a nonhyperbolic transition."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class PatternUnresolved(SkewforkError):
    """A scan could not be matched with a classified diagram.

    ``report`` carries the partial scan report.
    """

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class NotCPDriver(SkewforkError):
    """The linear coefficient is not presented as the derivative of a primitive."""


class EstimatedSpectrumOnly(SkewforkError):
    """The driver kind only yields an estimated spectrum."""


class InconsistentBounds(SkewforkError):
    """Coefficient bounds contradict each other or the spectrum."""


class PreconditionFailed(SkewforkError):
    """An operation precondition does not hold."""


class HypothesisHFails(SkewforkError):
    """The radius hypothesis for the general cubic form fails."""

    def __init__(self, which: str, lhs: float, rhs: float):
        self.which = which
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"{which}: {lhs:.12g} >= {rhs:.12g}")


class RouteInequalityFails(SkewforkError):
    """A claimed admissibility route is malformed."""


class NoSignChange(SkewforkError):
    """The coefficient does not take both signs."""


class BisectionFailed(SkewforkError):
    """A bisection did not bracket a root."""


class EpsilonTooLarge(SkewforkError):
    """The bump overlap exceeds the admissible threshold."""


class SingularMatrix(SkewforkError):
    """The integral matrix failed the invertibility check."""


class TargetUnreachable(SkewforkError):
    """The requested spectrum cannot be realized."""


class BracketFailed(SkewforkError):
    """The search bracket does not contain a threshold."""


class LawViolated(SkewforkError):
    """A two-parameter law failed numerically."""

    def __init__(self, which: str, witness):
        self.which = which
        self.witness = witness
        super().__init__(f"{which} violated at {witness!r}")


class ConfigInvalid(SkewforkError):
    """A configuration field is missing or malformed."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
