"""Covplan exceptions."""

from typing import Any, Optional


class CovplanError(Exception):
    """Base class for all covplan errors."""


class DimensionMismatchError(CovplanError):
    """Raised when an array does not have the shape an operation requires."""

    def __init__(self, what: str, expected: Any, actual: Any):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class NotPositiveDefiniteError(CovplanError):
    """Raised when a matrix that must be SPD fails its Cholesky factorization."""

    def __init__(self, what: str, index: Optional[int] = None):
        self.what = what
        self.index = index
        where = f" (pivot {index})" if index is not None else ""
        super().__init__(f"{what} is not positive definite{where}")


class UnderconstrainedError(CovplanError):
    """Raised when the normal equations are singular because variables lack constraints."""

    def __init__(self, keys: list):
        self.keys = list(keys)
        names = ", ".join(str(k) for k in self.keys) or "unknown"
        super().__init__(f"Under-constrained variables: {names}")


class SingularFactorError(CovplanError):
    """Raised when a triangular factor or square Jacobian block is singular."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"{what} is singular")


class RankDeficientError(CovplanError):
    """Raised when the new-variable Jacobian of a rectangular change lacks full column rank."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"{what} is rank deficient (new variables unconstrained)")


class InconsistentDowndateError(CovplanError):
    """Raised when removing old factor information leaves a non-PD system."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"Inconsistent downdate: {what}")


class ConfigError(CovplanError):
    """Raised for unreadable or invalid scenario files and settings."""

    def __init__(self, path: Any, problem: str):
        self.path = path
        self.problem = problem
        super().__init__(f"{path}: {problem}")


class MethodDisagreementError(CovplanError):
    """Raised when covariance recovery methods disagree beyond tolerance."""

    def __init__(self, step: int, errors: dict[str, float], tolerance: float):
        self.step = step
        self.errors = dict(errors)
        self.tolerance = tolerance
        detail = ", ".join(f"{name}={err:.3e}" for name, err in self.errors.items())
        super().__init__(f"Step {step}: methods disagree beyond {tolerance:g} ({detail})")


class DecisionMismatchError(CovplanError):
    """Raised when flat and tree evaluation select different candidates."""

    def __init__(self, step: int, flat: dict[int, float], tree: dict[int, float]):
        self.step = step
        self.flat = dict(flat)
        self.tree = dict(tree)
        super().__init__(f"Step {step}: flat and tree evaluation chose different candidates")
