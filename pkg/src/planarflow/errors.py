"""Exception hierarchy shared by all planarflow modules."""


class PlanarflowError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(PlanarflowError):
    """Malformed expression text. Carries the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(PlanarflowError):
    """Identifier outside {x1, x2, t, pi} and the declared parameter set."""

    def __init__(self, name: str, offset: int = -1):
        super().__init__(f"unknown identifier {name!r}" + (f" (at offset {offset})" if offset >= 0 else ""))
        self.name = name
        self.offset = offset


class DomainError(PlanarflowError):
    """Evaluation left the domain of a partial function (ln, sqrt, division, pow)."""


class NoAntiderivative(PlanarflowError):
    """The symbolic integrator does not cover this integrand class."""


class SingularJacobian(PlanarflowError):
    """Jacobian determinant vanishes (or changes sign) on the working domain."""


class NotOrthogonal(PlanarflowError):
    """A matrix field expected to be orthogonal failed the sampled check."""


class SolverDiverged(PlanarflowError):
    """Linear solver residual exceeded its tolerance."""


class SingularDiffusion(PlanarflowError):
    """det B vanishes on the probe; criterion II is not applicable there."""


class PathCrossesSingularity(PlanarflowError):
    """An integration path touches a singular locus of the integrand."""


class NotClosedForm(PlanarflowError):
    """No closed-form expression is available; use the numeric fallback."""


class DegenerateODE(PlanarflowError):
    """The coefficient multiplying dN/ds vanishes identically."""


class NoClosureWithinTmax(PlanarflowError):
    """Trajectory did not return to the recurrence section within tmax."""


class ConfigError(PlanarflowError):
    """Invalid run configuration (CLI exit code 2)."""
