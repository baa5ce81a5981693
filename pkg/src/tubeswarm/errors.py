"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class DegenerateDirectionError(ValueError):
    """A direction-dependent operation received a (near-)zero vector."""


class EmptySwarmError(ValueError):
    """An operation that needs robots received an empty collection."""


class PlanInfeasibleError(RuntimeError):
    """Boundary conditions or constraints admit no feasible profile.

    Carries a ``report`` attribute listing the violated constraints.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report if report is not None else {}
