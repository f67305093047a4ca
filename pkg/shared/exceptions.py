"""Exception classes for the KIDOT toolkit"""

from typing import Any, Dict, Optional


class KidotError(Exception):
    """Base exception for all toolkit errors"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ValidationError(KidotError):
    """Raised when inputs, shapes or configurations are invalid"""

    def __init__(self, message: str, field_errors: Optional[list] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.field_errors = field_errors or []


class NumericalError(KidotError):
    """Base class for numerical failures"""

    exit_code = 2


class NonFiniteError(NumericalError):
    """Raised when a computation produces NaN or infinity"""

    def __init__(self, message: str, node: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.node = node


class DivergenceError(NumericalError):
    """Raised when a transport path or gradient flow blows up"""

    def __init__(self, message: str, step: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.step = step


class ConvergenceError(NumericalError):
    """Raised when an iterative solver fails to reach its tolerance"""


class CheckpointError(ValidationError):
    """Raised for corrupt, truncated or incompatible checkpoint files"""


class DatasetFormatError(ValidationError):
    """Raised for malformed dataset directories or raw array files"""
