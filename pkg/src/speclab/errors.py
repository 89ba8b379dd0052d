"""Exception types, split so the CLI can map them onto exit codes."""


class ConfigError(ValueError):
    """Invalid configuration: bad schema, unknown keys, out-of-range sizes."""


class PreconditionError(ValueError):
    """A numerical precondition of a check or solver is violated."""


class RefineGridError(PreconditionError):
    """Eigenvector continuation lost track of a branch even after local refinement."""

    def __init__(self, omega_lo: float, omega_hi: float, message: str = ""):
        self.omega_lo = omega_lo
        self.omega_hi = omega_hi
        text = message or (
            "branch matching fell below the overlap floor on "
            f"[{omega_lo!r}, {omega_hi!r}]; refine the coupling grid there"
        )
        super().__init__(text)


class BranchMonotonicityError(AssertionError):
    """A tracked eigenvalue branch decreased under a nonnegative perturbation."""


class UnstableEvaluationError(PreconditionError):
    """Requested evaluation point sits on a jump of the quantity being computed."""
