"""Exception hierarchy. Each class carries the process exit code used by the CLI."""


class STVecchiaError(Exception):
    exit_code = 1


class ConfigError(STVecchiaError):
    exit_code = 2


class InputError(STVecchiaError, ValueError):
    exit_code = 3


class SchemaError(InputError):
    pass


class ParseError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class DomainError(InputError):
    pass


class NumericalError(STVecchiaError, ArithmeticError):
    exit_code = 4


class RankError(NumericalError):
    pass


class InitializationError(NumericalError):
    pass


class CapacityError(STVecchiaError):
    exit_code = 5


class ConvergenceError(STVecchiaError):
    exit_code = 6
