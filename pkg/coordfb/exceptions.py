"""
Error hierarchy shared by the library and the command line.

Each error carries the process exit code the CLI reports for it:
0 success, 1 malformed input, 2 infeasible or violated precondition,
3 internal or optimizer failure.
"""

from typing import Any, Optional


class CoordinationError(Exception):
    """Base class for every error raised by coordfb"""

    exit_code = 3


# Malformed input (exit 1)

class MalformedInputError(CoordinationError, ValueError):
    exit_code = 1


class VariableMismatchError(MalformedInputError):
    """A variable is unknown, duplicated, or conditioned on before it exists"""


class ShapeMismatchError(MalformedInputError):
    """Two tensors do not share variables, alphabets, or shapes"""


class LengthMismatchError(MalformedInputError):
    """Sequences handed to an empirical measure differ in length"""


class SymbolError(MalformedInputError):
    """A symbol does not belong to its alphabet"""


class DomainError(MalformedInputError):
    """A numeric argument lies outside its mathematical domain"""


class ProblemError(MalformedInputError):
    """Factors of a coordination problem do not fit its setting"""


class RangeError(MalformedInputError):
    """A parameter is outside its admissible range"""

    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class ProblemFileError(MalformedInputError):
    """A problem file cannot be parsed; `field` is a dotted path into the document"""

    def __init__(self, field: str, message: str, line: Optional[int] = None):
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}{location}: {message}")
        self.field = field
        self.line = line


# Violated preconditions (exit 2)

class PreconditionError(CoordinationError, ValueError):
    exit_code = 2


class DecompositionError(PreconditionError):
    """A joint distribution does not decompose as the setting requires"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class AdmissibilityError(PreconditionError):
    """An extended distribution is outside the setting's admissible set"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class AuxiliaryFreeSettingError(PreconditionError):
    """The setting has no auxiliary variable to optimize over"""


class OracleSizeError(PreconditionError):
    """The brute-force oracle would enumerate too many grid points"""


class RateWindowEmptyError(PreconditionError):
    """The covering and packing rate conditions cannot hold together"""


class ZeroTrialsError(PreconditionError):
    """An error-probability estimate was requested with no trials"""


# Internal / optimizer failures (exit 3)

class InfeasibleParameterizationError(CoordinationError):
    """No optimizer candidate reached the feasibility tolerance"""


class RepairError(CoordinationError):
    """Alternating renormalization did not converge within its sweep budget"""
