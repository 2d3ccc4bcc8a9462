"""Exception hierarchy shared by all modules."""


class BirkhoffLabError(Exception):
    """Base class for all library errors."""


class PreconditionError(BirkhoffLabError, ValueError):
    """An operation was called outside its documented domain."""


class PointOutsideChart(BirkhoffLabError):
    """A point cannot be reduced into the chart domain (e.g. a polar cap)."""


class WrongGenus(PreconditionError):
    """Operation requires a different surface topology."""


class PoleTransit(BirkhoffLabError):
    """An orbit entered the excluded polar cap of a sphere-of-revolution chart."""


class StepFailure(BirkhoffLabError):
    """The integrator could not reach the requested tolerance."""


class NotClosed(BirkhoffLabError):
    """A curve expected to be a closed orbit has an endpoint gap."""


class NotHyperbolic(PreconditionError):
    """A hyperbolic closed geodesic was required."""


class DegenerateCurve(BirkhoffLabError):
    """Duplicate points or zero-length edges in a discrete curve."""


class EmbeddednessLost(BirkhoffLabError):
    """A discrete curve developed a self-intersection that step halving could not fix."""


class ConvexityViolation(BirkhoffLabError):
    """A region-confined flow left its region."""


class FlowCollapsed(BirkhoffLabError):
    """Curve shortening shrank the seed to a point."""


class BudgetExhausted(BirkhoffLabError):
    """Curve shortening did not converge within the step budget."""


class SweepoutDegenerated(BirkhoffLabError):
    """A minmax sweepout has no interior maximum at the working resolution."""


class IntersectionPatternFailed(BirkhoffLabError):
    """Class minimizers do not intersect in the expected pattern."""


class InvalidPattern(PreconditionError):
    """A curve configuration is not a valid intersection pattern."""


class ConfigError(BirkhoffLabError):
    """Malformed scenario or configuration file."""
