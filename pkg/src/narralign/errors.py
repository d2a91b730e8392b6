"""Exception types shared across the package.

Input-shaped problems (bad files, wrong formats, missing inputs) derive from
InputError; violated internal guarantees derive from InvariantViolation. The
CLI maps the former to exit code 2 and the latter to exit code 3.
"""


class NarralignError(Exception):
    """Base class for all package errors."""


class InputError(NarralignError):
    """A problem with user-supplied input."""


class EmptyInput(InputError):
    """Input text or file contains no usable content."""


class NoScenesFound(InputError):
    """Script text contains no slug lines; likely not screenplay format."""


class MalformedRecord(InputError):
    """A JSONL record could not be parsed or is missing required keys."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MissingInput(InputError):
    """A required input file or option was not provided."""


class UndefinedRatio(InputError):
    """A ratio's denominator is zero for the given data."""


class MissingGenderData(InputError):
    """No character carries a gender tag; Bechdel analysis impossible."""


class InvariantViolation(NarralignError):
    """Data breaks a documented structural guarantee."""


class DegenerateDistribution(InvariantViolation):
    """Calibration sample has (near-)zero spread."""


class CapacityExceeded(InvariantViolation):
    """The DP matrix would exceed the configured cell budget."""
