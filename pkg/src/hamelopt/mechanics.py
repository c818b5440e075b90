"""Mechanical systems in quasivelocity form.

A system is described by a moving frame X(q) on configuration space, a
Lagrangian (either L(q, v) on velocities or its reduced form l(q, y) on
quasivelocities), optional external forces, and a control cost.  The frame
columns are ordered with the m actuated directions first; the controls are
measured in the coframe dual to the frame columns.

Frames are chart-local: trajectories are assumed to stay inside the chart on
which X is defined and invertible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _core
from .errors import NonFiniteEvaluation


def _vectorize_callback(f):
    """Wrap a single-point callback so it broadcasts over leading axes."""

    def wrapped(*args):
        args = [np.asarray(a) for a in args]
        lead = np.broadcast_shapes(*(a.shape[:-1] for a in args))
        args = [np.broadcast_to(a, lead + a.shape[-1:]) for a in args]
        if not lead:
            return np.asarray(f(*args))
        out = None
        for idx in np.ndindex(lead):
            val = np.asarray(f(*(a[idx] for a in args)))
            if out is None:
                out = np.empty(lead + val.shape, dtype=val.dtype)
            out[idx] = val
        return out

    return wrapped


@dataclass(frozen=True)
class MechanicalSystem:
    """An underactuated mechanical system on an n-dimensional configuration
    space with m < n controls.

    ``frame`` maps q to the n x n matrix whose column B holds the components
    of the frame field X_B; columns 1..m span the actuated directions.
    Exactly one of ``lagrangian`` L(q, v) and ``reduced_lagrangian`` l(q, y)
    must be supplied; the other is induced through the frame.  ``force`` maps
    (q, v) to an external force covector, ``cost`` is the control cost
    density C(q, y, u).

    ``vectorized`` declares that all callbacks broadcast over leading axes;
    ``analytic`` declares that they accept complex input (this enables exact
    complex-step derivative paths inside the library).  ``periodic`` flags
    angle coordinates for wrapping in file output only.
    """

    n: int
    m: int
    frame: Callable
    cost: Callable
    lagrangian: Callable | None = None
    reduced_lagrangian: Callable | None = None
    force: Callable | None = None
    periodic: tuple[bool, ...] | None = None
    vectorized: bool = False
    analytic: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.m < 1 or self.m >= self.n:
            raise ValueError(
                f"need 1 <= m < n (got n={self.n}, m={self.m}): the construction "
                "requires both an actuated and an unactuated block"
            )
        if (self.lagrangian is None) == (self.reduced_lagrangian is None):
            raise ValueError(
                "supply exactly one of lagrangian L(q, v) and reduced_lagrangian l(q, y)"
            )
        if self.periodic is not None and len(self.periodic) != self.n:
            raise ValueError("periodic flags must have length n")
        if self.analytic and not self.vectorized:
            raise ValueError("analytic callbacks must also be vectorized")

        if self.vectorized:
            frame, cost, force = self.frame, self.cost, self.force
            lag = self.lagrangian
            red = self.reduced_lagrangian
        else:
            frame = _vectorize_callback(self.frame)
            cost = _vectorize_callback(self.cost)
            force = None if self.force is None else _vectorize_callback(self.force)
            lag = None if self.lagrangian is None else _vectorize_callback(self.lagrangian)
            red = (
                None
                if self.reduced_lagrangian is None
                else _vectorize_callback(self.reduced_lagrangian)
            )
        object.__setattr__(self, "_frame", frame)
        object.__setattr__(self, "_cost", cost)
        object.__setattr__(self, "_force", force)
        if red is not None:
            object.__setattr__(self, "_l", red)
        else:
            # Written with broadcasting arithmetic rather than einsum so the
            # induced form also evaluates on dual-number quasivelocities.
            object.__setattr__(
                self,
                "_l",
                lambda q, y: lag(q, (frame(q) * y[..., None, :]).sum(axis=-1)),
            )


@dataclass(frozen=True)
class FramePoint:
    """Frame data at a configuration point: X, its inverse, and the
    structure coefficients C[D, A, B] of [X_A, X_B] = C^D_AB X_D."""

    q: np.ndarray
    X: np.ndarray
    Xinv: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class SecondOrderPoint:
    """A point (q, y, ydot) of second-order kinematics in quasivelocities."""

    q: np.ndarray
    y: np.ndarray
    ydot: np.ndarray

    def __post_init__(self):
        for label in ("q", "y", "ydot"):
            arr = np.asarray(getattr(self, label), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteEvaluation(f"{label} must be finite", x=arr)
            object.__setattr__(self, label, arr)


def frame_point(sys: MechanicalSystem, q) -> FramePoint:
    """Evaluate the frame and its structure coefficients at q."""
    q = np.asarray(q, dtype=float)
    X, Xinv, _, C = _core.frame_data(sys, q, exact_dx=True)
    return FramePoint(q=q, X=X, Xinv=Xinv, C=C)


def quasi_to_velocity(sys: MechanicalSystem, q, y) -> np.ndarray:
    """Velocity components qdot^A = y^B X_B^A(q)."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.einsum("...ab,...b->...a", sys._frame(q), y)


def velocity_to_quasi(sys: MechanicalSystem, q, v) -> np.ndarray:
    """Quasivelocity components y = X(q)^-1 v."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    X, _, _, _ = _core.frame_data(sys, q)
    return np.linalg.solve(X, v[..., None])[..., 0]


def structure_coefficients(sys: MechanicalSystem, q) -> np.ndarray:
    """C[D, A, B] with [X_A, X_B] = C^D_AB X_D, antisymmetrized in (A, B)."""
    return frame_point(sys, q).C


def reduced_lagrangian(sys: MechanicalSystem, q, y) -> float:
    """l(q, y), induced from L(q, v) through the frame when necessary."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(sys._l(q, y))


def hamel_residual(sys: MechanicalSystem, pt: SecondOrderPoint) -> np.ndarray:
    """Quasivelocity Euler-Lagrange residual E at a second-order point.

    E_A = d/dt(dl/dy^A) - (dl/dq^B) X_A^B + C^D_AB y^B dl/dy^D - F_B X_A^B,
    with the time derivative expanded by the chain rule so E is a pointwise
    function of (q, y, ydot).  The controlled equations read E_a = u_a on the
    actuated rows and E_alpha = 0 on the rest.
    """
    core = _core.compute_core(sys, pt.q, pt.y)
    return _core.hamel_residual_from_core(core, pt.ydot)


def free_dynamics(sys: MechanicalSystem, q, y):
    """Unforced dynamics: qdot = X y and the ydot solving E(q, y, ydot) = 0."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    core = _core.compute_core(sys, q, y)
    ydot = _core.mass_solve(core, -core.b)
    return core.v, ydot


def forced_dynamics(sys: MechanicalSystem, q, y, u):
    """Controlled dynamics: E_a = u_a on actuated rows, E_alpha = 0."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    core = _core.compute_core(sys, q, y)
    rhs = np.concatenate(
        [u, np.zeros(u.shape[:-1] + (sys.n - sys.m,))], axis=-1
    )
    ydot = _core.mass_solve(core, rhs - core.b)
    return core.v, ydot
