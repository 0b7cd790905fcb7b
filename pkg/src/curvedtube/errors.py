"""Exception hierarchy for curvedtube."""


class CurvedTubeError(Exception):
    """Base class for all errors raised by the package."""


class DegenerateCurveError(CurvedTubeError):
    """The parametrization has a non-regular point (vanishing speed)."""


class ToleranceNotMetError(CurvedTubeError):
    """A numerical procedure could not reach the requested tolerance."""


class FrameDegeneracyError(CurvedTubeError):
    """Derivatives of the curve fail to span the space needed for a Frenet frame.

    Attributes
    ----------
    order : int
        The derivative order at which linear independence was lost.
    s : float
        Arc length of the offending point.
    """

    def __init__(self, order, s, msg=None):
        self.order = order
        self.s = s
        super().__init__(msg or f"Frenet frame degenerates at s={s:g}: derivative of "
                         f"order {order} is dependent on lower orders")


class FrameContinuityError(CurvedTubeError):
    """A frame vector flips sign between adjacent samples; refine the grid."""


class ArityError(CurvedTubeError, ValueError):
    """Mismatched dimensions or wrong number of components."""


class EvaluationError(CurvedTubeError):
    """A user supplied evaluator returned a non-finite value."""


class PreconditionError(CurvedTubeError, ValueError):
    """An input violates an operation's precondition."""


class IntegratorError(CurvedTubeError):
    """The rotation ODE integrator drifted off the rotation group."""


class RangeError(CurvedTubeError, ValueError):
    """Argument outside the tabulated range."""


class TopologyError(CurvedTubeError, ValueError):
    """A cross-section mask is empty or not connected."""


class NumericError(CurvedTubeError):
    """Root finding or eigensolver failed to converge."""


class AssumptionViolation(CurvedTubeError):
    """The tube violates a*sup|kappa_1| < 1, so tube coordinates degenerate."""

    def __init__(self, a, kappa_sup):
        self.a = a
        self.kappa_sup = kappa_sup
        self.product = a * kappa_sup
        super().__init__(f"a*|kappa_1|_inf = {a:g}*{kappa_sup:g} = {self.product:g} >= 1")


class NotEmbeddableError(CurvedTubeError):
    """The geometry is an abstract profile with no embedded reference curve."""


class SmoothnessError(CurvedTubeError):
    """Curvature derivatives required by the effective potential are missing."""


class SolverError(CurvedTubeError):
    """Sparse factorization or eigensolver breakdown."""


class StraightTubeError(PreconditionError):
    """kappa_1 vanishes identically; there is nothing to certify."""


class ScanResolutionError(CurvedTubeError):
    """No sign-constant interval of kappa_1 was found at the scan resolution."""
