#!/usr/bin/env python3
"""
Error types for the ETES deblurring toolkit.

Library code raises these; only the command-line layer turns them into
process exit codes (0 success, 1 usage, 2 input, 3 state/shape).
"""

from typing import Any, Dict, Optional


class DeblurError(Exception):
    """Base class for every error raised by the toolkit"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


class ConfigError(DeblurError, ValueError):
    """Invalid configuration value or unknown configuration key"""

    exit_code = 1


class InputError(DeblurError, ValueError):
    """Malformed or unreadable input data"""

    exit_code = 2

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        merged = dict(details or {})
        if path is not None:
            merged["path"] = str(path)
            message = f"{message} [{path}]"
        super().__init__(message, merged)
        self.path = path


class DimensionError(DeblurError, ValueError):
    """Tensor or plane shapes do not line up"""

    exit_code = 3


class InvariantViolation(DeblurError):
    """A domain invariant (positivity, non-empty window, ...) does not hold"""

    exit_code = 3


class NonFiniteError(DeblurError, ArithmeticError):
    """NaN or Inf produced by a primitive or a training step"""

    exit_code = 3

    def __init__(self, where: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(f"non-finite values in {where}", details)
        self.where = where


class CheckpointError(DeblurError):
    """Checkpoint tensor missing or shaped differently from the model"""

    exit_code = 3

    def __init__(self, message: str, tensor_name: Optional[str] = None):
        details = {"tensor": tensor_name} if tensor_name else {}
        if tensor_name:
            message = f"{message}: {tensor_name}"
        super().__init__(message, details)
        self.tensor_name = tensor_name
