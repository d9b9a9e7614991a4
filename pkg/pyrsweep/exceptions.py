"""Custom exceptions for pyrsweep"""

from typing import Optional


class PyrSweepError(Exception):
    """Base exception for all pyrsweep errors"""


class ConfigurationError(PyrSweepError):
    """Raised when there's an error in configuration"""


class ValidationError(PyrSweepError):
    """Raised when input validation fails"""


class PipelineError(PyrSweepError):
    """Raised when there's an error in depth pipeline execution"""


class DegenerateDepth(PyrSweepError):
    """Raised when a depth or plane distance is not strictly positive"""


class DegenerateGeometry(PyrSweepError):
    """Raised when a view pair cannot constrain depth (zero baseline, epipole)"""


class TooSmall(PyrSweepError):
    """Raised when a pyramid level would drop below the minimum size"""


class InvalidTemperature(PyrSweepError):
    """Raised when a softmax temperature is not strictly positive"""


class EmptyMask(PyrSweepError):
    """Raised when an evaluation mask selects no pixels"""


class EmptyCloud(PyrSweepError):
    """Raised when a point cloud metric receives an empty cloud"""


class NoIntersection(PyrSweepError):
    """Raised when no camera ray hits the synthetic scene"""


class UnsupportedFormat(PyrSweepError):
    """Raised when a file uses a valid but unsupported format variant"""


class ParseError(PyrSweepError):
    """Raised when a text or binary file cannot be parsed

    Attributes:
        path: File being parsed, if known
        line: 1-based line number, if known
        column: 1-based column number, if known
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ):
        self.path = path
        self.line = line
        self.column = column
        location = ""
        if path is not None:
            location = str(path)
        if line is not None:
            location += f":{line}"
            if column is not None:
                location += f":{column}"
        super().__init__(f"{location}: {message}" if location else message)


class NonFiniteValue(ParseError):
    """Raised when a parsed number is NaN or infinite"""


class NonOrthonormalRotation(ParseError):
    """Raised when a parsed rotation is too far from orthonormal to repair"""
