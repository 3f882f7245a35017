"""
Custom exceptions for the workbench
"""
from typing import Optional


class WorkbenchException(Exception):
    """Base exception for the MACAM workbench"""
    exit_code: int = 1

    def __init__(self, detail: str = "Workbench error", exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class ValidationError(WorkbenchException):
    """Invalid argument or violated precondition"""
    exit_code = 2

    def __init__(self, detail: str = "Validation failed"):
        super().__init__(detail=detail)


class ShapeMismatchError(ValidationError):
    """Operand shapes do not conform"""
    def __init__(self, op: str, left: tuple, right: tuple, detail: Optional[str] = None):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(
            detail=detail or f"{op}: shape mismatch between {self.left} and {self.right}"
        )


class GraphError(WorkbenchException):
    """Autodiff graph misuse (e.g. backward twice over a consumed graph)"""
    exit_code = 3

    def __init__(self, detail: str = "Invalid autodiff graph state"):
        super().__init__(detail=detail)


class ConfigError(WorkbenchException):
    """Run configuration could not be loaded or validated"""
    exit_code = 4

    def __init__(self, detail: str = "Invalid configuration", key_path: Optional[str] = None):
        self.key_path = key_path
        if key_path:
            detail = f"[{key_path}] {detail}"
        super().__init__(detail=detail)


class DatasetFormatError(WorkbenchException):
    """Dataset file is malformed"""
    exit_code = 5

    def __init__(self, detail: str = "Malformed dataset file"):
        super().__init__(detail=detail)


class ArtifactNotFoundError(WorkbenchException):
    """A phase prerequisite artifact is missing"""
    exit_code = 6

    def __init__(self, detail: str = "Required artifact not found"):
        super().__init__(detail=detail)


class InfeasibleConstraintError(ValidationError):
    """Energy constraint band cannot be met by any assignment"""
    def __init__(self, detail: str = "Energy constraint is infeasible"):
        super().__init__(detail=detail)
