"""Exception hierarchy for hamelopt."""

from __future__ import annotations

import numpy as np


class HameloptError(Exception):
    """Base class for all library errors."""


class NonFiniteEvaluation(HameloptError):
    """A user callback returned NaN or Inf.

    Carries the offending input in ``x``.
    """

    def __init__(self, message: str, x=None):
        super().__init__(message)
        self.x = None if x is None else np.asarray(x)


class SingularFrame(HameloptError):
    """The frame matrix X(q) is numerically singular (condition number > 1e12)."""

    def __init__(self, message: str, q=None, condition: float | None = None):
        super().__init__(message)
        self.q = None if q is None else np.asarray(q)
        self.condition = condition


class SingularMassMatrix(HameloptError):
    """The quasivelocity mass matrix d2l/dy dy is numerically singular."""


class SingularHessianBlock(HameloptError):
    """The unactuated block of d2l/dy dy is singular: the constraint solve
    for the unactuated accelerations has no unique solution here."""


class RegularityFailure(HameloptError):
    """det(R) is below tolerance: the restricted two-form is degenerate and
    the dynamics is not uniquely solvable at this state."""

    def __init__(self, message: str, det: float | None = None, t: float | None = None):
        super().__init__(message)
        self.det = det
        self.t = t


class NoConvergence(HameloptError):
    """The shooting iteration exhausted its budget without meeting tolerance."""

    def __init__(self, message: str, iterations: int, best_residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.best_residual = best_residual


class StepSizeUnderflow(HameloptError):
    """The adaptive integrator reduced the step below the allowed minimum."""


class ConfigError(HameloptError):
    """A run configuration failed to parse or validate."""
