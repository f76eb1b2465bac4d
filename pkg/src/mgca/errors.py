"""Exception hierarchy shared by every module."""


class MgcaError(Exception):
    """Base class for all package errors."""


class ContractError(MgcaError, ValueError):
    """A documented precondition was violated."""


class DimensionError(ContractError):
    pass


class DegenerateLengthError(ContractError):
    pass


class ConfigError(ContractError):
    pass


class VocabularyError(ContractError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class NumericalInstabilityError(MgcaError, ArithmeticError):
    pass


class DivergenceError(MgcaError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""
