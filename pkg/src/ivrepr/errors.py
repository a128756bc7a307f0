"""Exception hierarchy.

Input problems raise subclasses of ``ValueError``; numerical failures raise
subclasses of :class:`NumericalError` so the CLI can map them to exit codes.
"""


class NumericalError(RuntimeError):
    """A numerical stage could not produce a trustworthy result."""


class GridTooNarrowError(NumericalError):
    """Probability mass reached the edge of the spatial grid."""

    def __init__(self, leaked_mass: float, tolerance: float):
        self.leaked_mass = leaked_mass
        self.tolerance = tolerance
        super().__init__(
            f"grid too narrow: {leaked_mass:.3e} probability mass reached the "
            f"boundary (tolerance {tolerance:.1e}); increase the width W"
        )


class BracketError(NumericalError):
    """A monotone root-finding problem has no sign change on its bracket."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""


class DegenerateWeightError(NumericalError):
    """A weight slice carries no usable shape (e.g. all values equal)."""


class ImpliedVolDomainError(ValueError):
    """Option price lies outside the open no-arbitrage interval."""

    def __init__(self, price: float, bound: str, value: float):
        self.price = price
        self.bound = bound
        self.value = value
        relation = "<=" if bound == "lower" else ">="
        super().__init__(
            f"price {price!r} {relation} {bound} no-arbitrage bound {value!r}"
        )


class ConfigError(ValueError):
    """Scenario configuration failed validation."""
