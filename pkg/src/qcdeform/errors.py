"""Exception hierarchy shared by every module."""


class QCDeformError(Exception):
    """Base class for all library errors."""


class DomainError(QCDeformError, ValueError):
    """Argument outside the domain of an operation (|z| > 1, p <= 1, ...)."""


class PreconditionError(QCDeformError, ValueError):
    """A documented precondition of an operation does not hold."""


class DegenerateInputError(PreconditionError):
    """Input series is identically zero or has c_0 = 0 where a branch is needed."""


class BranchError(PreconditionError):
    """The series vanishes inside the sampled disk, so no single-valued branch exists."""


class ContourError(PreconditionError):
    """A zero lies too close to the sampling contour for the argument principle."""

    def __init__(self, message, angle=None):
        super().__init__(message)
        self.angle = angle


class NormExcessError(PreconditionError):
    """Hardy norm exceeds the admissible bound."""


class AnnulusError(PreconditionError):
    """Annulus does not satisfy R >= sup|f| + |c_0| + 1, or mismatched annuli."""


class BudgetError(PreconditionError):
    """Target shifts or the Beltrami coefficient exceed the configured budget."""


class RoucheMarginError(PreconditionError):
    """Perturbation is too large for the Rouche argument to apply."""


class ProblemStructureError(QCDeformError):
    """The deformation problem is degenerate (e.g. a vanishing Laurent coefficient)."""


class NonConvergenceError(QCDeformError):
    """An iteration failed to converge; carries the residual trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class PoleError(QCDeformError):
    """The Schwarzian ODE solution has a pole inside the sampled disk."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ContractViolation(QCDeformError):
    """A post-condition of a deformation failed; ``contract`` names which one."""

    def __init__(self, contract, message, failing=None):
        super().__init__(f"contract {contract} violated: {message}")
        self.contract = contract
        self.failing = list(failing) if failing is not None else [contract]


class SolverInconsistencyError(QCDeformError):
    """A built map fails its own Beltrami or conformality residual check."""


class FamilyMembershipError(PreconditionError):
    """A family member fails the truncated univalence filter."""
