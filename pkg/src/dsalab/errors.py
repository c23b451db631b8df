"""Exception types shared across the package."""


class DsaError(Exception):
    """Base class for all errors raised by this package."""


class ModulusMismatch(DsaError):
    """Two field values with different moduli were combined."""


class ShapeMismatch(DsaError):
    """Vector lengths or moduli do not line up."""


class InvalidModulus(DsaError):
    """The requested modulus is not a prime number."""


class Infeasible(DsaError):
    """The configuration lies outside the feasible region.

    Secure aggregation requires at least 3 users and a collusion
    threshold of at most (users - 3).  Constructions outside that
    region are refused unless the demonstration override is set.
    """


class MissingMessage(DsaError):
    """A decoder was invoked before all expected messages arrived."""


class InvalidCollusion(DsaError):
    """A collusion set includes the observer or exceeds the threshold."""


class DecodeFailure(DsaError):
    """A node tried to decode with an incomplete inbox.

    This signals an implementation bug; it must never occur on a
    well-formed run.
    """


class BudgetExceeded(DsaError):
    """The seed space is larger than the enumeration budget.

    Raised before any allocation happens, so callers can shrink the
    configuration (fewer users, shorter inputs, smaller modulus).
    """

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"seed space needs {required} outcomes, budget is {budget}; "
            "reduce users, input length, or modulus"
        )
