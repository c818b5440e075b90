"""Presymplectic dynamics on the product bundle.

States carry coordinates (q, y, ydot_a, p, ptilde): the constraint
submanifold data together with momenta conjugate to q and y.  The canonical
two-form is degenerate exactly along the ydot_a directions; requiring the
Hamiltonian to be critical there yields the primary constraints, and on the
submanifold they cut out, the dynamics is an explicit ODE whenever the m x m
regularity matrix R is invertible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core, numdiff
from .errors import NonFiniteEvaluation
from .reduction import ReducedProblem, solve_constraints


def _finite_vec(label, value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEvaluation(f"{label} must be finite", x=arr)
    return arr


@dataclass(frozen=True)
class W0State:
    """Full product-bundle state (q, y, ydot_a, p, ptilde), dim 4n + m."""

    q: np.ndarray
    y: np.ndarray
    ydot_a: np.ndarray
    p: np.ndarray
    ptilde: np.ndarray

    def __post_init__(self):
        for label in ("q", "y", "ydot_a", "p", "ptilde"):
            object.__setattr__(self, label, _finite_vec(label, getattr(self, label)))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.y, self.ydot_a, self.p, self.ptilde])

    @staticmethod
    def from_vector(vec, n: int, m: int) -> "W0State":
        vec = np.asarray(vec, dtype=float)
        return W0State(
            q=vec[:n],
            y=vec[n : 2 * n],
            ydot_a=vec[2 * n : 2 * n + m],
            p=vec[2 * n + m : 3 * n + m],
            ptilde=vec[3 * n + m :],
        )


@dataclass(frozen=True)
class W1State:
    """State on the first constraint submanifold, dim 4n: the actuated
    momenta are not carried, they are recovered from the primary
    constraints."""

    q: np.ndarray
    y: np.ndarray
    ydot_a: np.ndarray
    p: np.ndarray
    ptilde_alpha: np.ndarray

    def __post_init__(self):
        for label in ("q", "y", "ydot_a", "p", "ptilde_alpha"):
            object.__setattr__(self, label, _finite_vec(label, getattr(self, label)))

    def as_vector(self) -> np.ndarray:
        return _core.pack_w1(self.q, self.y, self.ydot_a, self.p, self.ptilde_alpha)

    @staticmethod
    def from_vector(vec, n: int, m: int) -> "W1State":
        q, y, ydot_a, p, ptilde_alpha = _core.unpack_w1(np.asarray(vec, float), n, m)
        return W1State(q=q, y=y, ydot_a=ydot_a, p=p, ptilde_alpha=ptilde_alpha)


@dataclass(frozen=True)
class RegularityReport:
    """Regularity matrix R, its determinant and condition number, and the
    verdict: the restricted two-form is symplectic iff det R is nonzero."""

    R: np.ndarray
    det: float
    condition: float
    symplectic: bool


@dataclass(frozen=True)
class PresymplecticForm:
    """Constant coordinate matrix of the two-form in the order
    (q, y, ydot_a, p, ptilde); its kernel is the ydot_a directions."""

    n: int
    m: int
    matrix: np.ndarray

    def __call__(self, V, W) -> float:
        return float(np.asarray(V) @ self.matrix @ np.asarray(W))


def presymplectic_form(n: int, m: int) -> PresymplecticForm:
    """Matrix of dq^A ^ dp_A + dy^A ^ dptilde_A on (q, y, ydot_a, p, ptilde)."""
    dim = 4 * n + m
    omega = np.zeros((dim, dim))
    iq, iy = 0, n
    ip, ipt = 2 * n + m, 3 * n + m
    for a in range(n):
        omega[iq + a, ip + a] = 1.0
        omega[ip + a, iq + a] = -1.0
        omega[iy + a, ipt + a] = 1.0
        omega[ipt + a, iy + a] = -1.0
    return PresymplecticForm(n=n, m=m, matrix=omega)


def _point_data(rp: ReducedProblem, q, y, ydot_a):
    core = _core.compute_core(rp.system, q, y)
    blocks = _core.reduction_blocks(core, rp.system.m, rp.hessian_block_tolerance)
    G = _core.constraints_g(blocks, ydot_a)
    u = _core.controls_u(blocks, ydot_a)
    return core, blocks, G, u


def hamiltonian(rp: ReducedProblem, w: W0State) -> float:
    """H = p . (X y) + ptilde_a ydot^a + ptilde_alpha G^alpha - tilde_L."""
    m = rp.system.m
    core, _, G, u = _point_data(rp, w.q, w.y, w.ydot_a)
    value = rp.system._cost(w.q, w.y, u)
    return float(
        w.p @ core.v + w.ptilde[:m] @ w.ydot_a + w.ptilde[m:] @ G - value
    )


def primary_constraints(rp: ReducedProblem, w: W0State) -> np.ndarray:
    """phi_a = ptilde_a + ptilde_alpha dG^alpha/dydot^a - dtilde_L/dydot^a.

    Equals the ydot_a-gradient of the Hamiltonian; the dynamics is confined
    to its zero set.
    """
    m = rp.system.m
    _, blocks, _, u = _point_data(rp, w.q, w.y, w.ydot_a)
    _, Cu = numdiff.batch_cost_value_grad(rp.system._cost, w.q, w.y, u, analytic=rp.system.analytic)
    return w.ptilde[:m] - _core.lift_ptilde_a(blocks, Cu, w.ptilde[m:])


def lift_to_w1(rp: ReducedProblem, q, y, ydot_a, p, ptilde_alpha) -> W0State:
    """The unique full state over (q, y, ydot_a, p, ptilde_alpha) with
    vanishing primary constraints: the actuated momenta are recovered."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    ydot_a = np.asarray(ydot_a, dtype=float)
    p = np.asarray(p, dtype=float)
    ptilde_alpha = np.asarray(ptilde_alpha, dtype=float)
    _, blocks, _, u = _point_data(rp, q, y, ydot_a)
    _, Cu = numdiff.batch_cost_value_grad(rp.system._cost, q, y, u, analytic=rp.system.analytic)
    ptilde_a = _core.lift_ptilde_a(blocks, Cu, ptilde_alpha)
    return W0State(
        q=q, y=y, ydot_a=ydot_a, p=p, ptilde=np.concatenate([ptilde_a, ptilde_alpha])
    )


def regularity(rp: ReducedProblem, w1: W1State) -> RegularityReport:
    """Regularity matrix R_ab = d2(tilde_L)/da db - ptilde_alpha d2G^alpha/da db.

    Invertibility of R is equivalent to the restricted two-form being
    symplectic and to unique solvability of the dynamics.  The verdict uses
    |det R| > regularity_tolerance * (max|R|)^m.
    """
    sys = rp.system
    m = sys.m
    _, blocks, _, u = _point_data(rp, w1.q, w1.y, w1.ydot_a)
    _, _, Cuu = numdiff.batch_cost_blocks(sys._cost, w1.q, w1.y, u, analytic=sys.analytic)
    R = blocks.S.T @ Cuu @ blocks.S
    # The G-Hessian term vanishes identically for the affine constraint
    # solve; it is evaluated numerically so nonstandard solves stay honest.
    for alpha in range(sys.n - m):
        if w1.ptilde_alpha[alpha] == 0.0:
            continue
        hess = numdiff.hessian(
            lambda a, i=alpha: solve_constraints(rp, w1.q, w1.y, a)[i], w1.ydot_a
        )
        R = R - w1.ptilde_alpha[alpha] * hess
    R = 0.5 * (R + R.T)
    det, ok = _core._relative_det_gate(R, rp.regularity_tolerance)
    return RegularityReport(
        R=R,
        det=float(det),
        condition=float(np.linalg.cond(R)),
        symplectic=bool(ok),
    )


def w1_vector_field(rp: ReducedProblem, w1: W1State) -> W1State:
    """The unique vector field solving the presymplectic equation on W1.

    Returned as a W1State holding the time derivative of each coordinate:
    dq = X y, dy = (ydot_a, G), d(ydot_a) from the R-solve, dp and
    dptilde_alpha from the momentum equations.  The derivative preserves the
    primary constraints to first order by construction.
    """
    n, m = rp.system.n, rp.system.m
    fe = _core.w1_field(rp, w1.as_vector())
    dq, dy, dydot_a, dp, dpt_alpha = (
        fe.dz[:n],
        fe.dz[n : 2 * n],
        fe.dz[2 * n : 2 * n + m],
        fe.dz[2 * n + m : 3 * n + m],
        fe.dz[3 * n + m :],
    )
    return W1State(q=dq, y=dy, ydot_a=dydot_a, p=dp, ptilde_alpha=dpt_alpha)


def lifted_velocity(rp: ReducedProblem, w1: W1State) -> np.ndarray:
    """Velocity of the lifted curve in full product-bundle coordinates
    (q, y, ydot_a, p, ptilde), including the induced actuated momenta rate."""
    n, m = rp.system.n, rp.system.m
    fe = _core.w1_field(rp, w1.as_vector())
    return np.concatenate(
        [
            fe.dz[: 2 * n + m],
            fe.dz[2 * n + m : 3 * n + m],
            fe.dptilde_a,
            fe.dz[3 * n + m :],
        ]
    )
