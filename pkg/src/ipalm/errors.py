"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not conform to an operation's signature."""


class ContractError(ValueError):
    """A documented precondition was violated (bad config, length, empty input...)."""


class NumericError(ArithmeticError):
    """NaN or infinite values where finite values were required."""
