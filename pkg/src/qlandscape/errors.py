"""Exception types shared across the package."""


class CapacityError(MemoryError):
    """A requested lattice, tensor or Hilbert space exceeds the configured budget."""


class ConditioningError(ArithmeticError):
    """A linear system could not be solved stably."""


class SpectrumError(ValueError):
    """The control Hamiltonian spectrum is not equally spaced."""


class SymmetryError(ValueError):
    """An operator offered as a symmetry does not commute with the generators."""

    def __init__(self, message, commutator_norm):
        super().__init__(message)
        self.commutator_norm = commutator_norm


class BoundViolation(AssertionError):
    """A hard analytic bound was violated by an empirical estimate."""
