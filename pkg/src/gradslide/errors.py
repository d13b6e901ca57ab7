"""Exception hierarchy shared by all gradslide modules."""


class GradSlideError(Exception):
    """Base class for every error raised by this package."""


class NonFeasiblePoint(GradSlideError, ValueError):
    """A point lies outside its feasible set by more than the tolerance."""


class EntropyDomainViolation(GradSlideError, ValueError):
    """The entropy divergence was handed a non-positive or non-finite center."""


class IncompatibleGeometry(GradSlideError, ValueError):
    """A prox geometry was paired with a feasible set it cannot handle."""


class BisectionFailed(GradSlideError, RuntimeError):
    """No bracket for the halfspace multiplier within the iteration cap."""


class NumericalOverflow(GradSlideError, FloatingPointError):
    """A prox step met or produced non-finite numbers."""


class InvalidConstants(GradSlideError, ValueError):
    """Lipschitz / modulus constants violate a precondition."""


class ScheduleInvalid(GradSlideError, ValueError):
    """A parameter schedule fails the convergence conditions."""

    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:3])
        more = len(self.violations) - 3
        if more > 0:
            head += f"; ... ({more} more)"
        super().__init__(f"schedule violates {len(self.violations)} condition(s): {head}")


class InvalidRadius(GradSlideError, ValueError):
    """The caller-supplied bound on V(x0, x*) is not positive."""


class RegimeViolated(GradSlideError, ValueError):
    """Problem constants fall outside the regime a scheme was designed for."""


class GeometryNotQuadraticGrowth(GradSlideError, ValueError):
    """Restarted schemes need V(x, u) <= ||x - u||^2 / 2."""


class DimensionError(GradSlideError, ValueError):
    """Generator or operator dimensions are inconsistent."""


class NoConvergence(GradSlideError, RuntimeError):
    """An iterative estimator hit its iteration cap.

    The best estimate so far is kept in :attr:`estimate`.
    """

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class BudgetTooSmall(GradSlideError, ValueError):
    """A race budget cannot pay for a single iteration of some solver."""


class ConfigError(GradSlideError, ValueError):
    """Malformed or inconsistent run configuration."""


class SolverError(GradSlideError, RuntimeError):
    """A solver run failed; wraps the underlying cause for the CLI."""


class IoError(GradSlideError, OSError):
    """Reading an input or writing an artifact failed."""
