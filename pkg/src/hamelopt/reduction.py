"""Reduction of the optimal control problem to a constrained second-order
variational problem.

The unactuated rows of the Hamel residual are the constraints; solving them
for the unactuated accelerations gives G(q, y, ydot_a), the actuated rows
recover the controls, and the restricted cost density tilde_L lives on the
constraint submanifold in coordinates (q, y, ydot_a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .mechanics import MechanicalSystem, SecondOrderPoint


@dataclass(frozen=True)
class ReducedProblem:
    """A mechanical system together with the singularity tolerances of the
    reduction: ``hessian_block_tolerance`` gates det of the unactuated
    Hessian block (relative to its max-norm), ``regularity_tolerance`` gates
    det of the regularity matrix."""

    system: MechanicalSystem
    hessian_block_tolerance: float = 1e-10
    regularity_tolerance: float = 1e-10

    def __post_init__(self):
        if not (self.hessian_block_tolerance > 0 and self.regularity_tolerance > 0):
            raise ValueError("tolerances must be positive")


def _blocks_at(rp: ReducedProblem, q, y):
    core = _core.compute_core(rp.system, q, y)
    blocks = _core.reduction_blocks(core, rp.system.m, rp.hessian_block_tolerance)
    return core, blocks


def constraint_values(rp: ReducedProblem, pt: SecondOrderPoint) -> np.ndarray:
    """Unactuated Hamel residual rows; zero exactly on the submanifold."""
    core = _core.compute_core(rp.system, pt.q, pt.y)
    return _core.hamel_residual_from_core(core, pt.ydot)[..., rp.system.m :]


def solve_constraints(rp: ReducedProblem, q, y, ydot_a) -> np.ndarray:
    """Unactuated accelerations G with constraint_values(q, y, (ydot_a, G)) = 0.

    The residual is affine in the accelerations (the only ydot dependence
    enters through the chain-rule mass term), so G is an exact linear solve
    against the unactuated Hessian block.  A Newton polish runs afterwards
    as a guard for nonstandard Lagrangians whose numerical affinity is poor.
    """
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    ydot_a = np.asarray(ydot_a, dtype=float)
    m = rp.system.m
    core, blocks = _blocks_at(rp, q, y)
    G = _core.constraints_g(blocks, ydot_a)
    Wbb = core.W[..., m:, m:]
    for _ in range(5):
        ydot = np.concatenate([ydot_a, G], axis=-1)
        resid = _core.hamel_residual_from_core(core, ydot)[..., m:]
        if np.max(np.abs(resid)) <= 1e-10 * (1.0 + np.max(np.abs(G))):
            break
        G = G - np.linalg.solve(Wbb, resid[..., None])[..., 0]
    return G


def recover_controls(rp: ReducedProblem, pt: SecondOrderPoint) -> np.ndarray:
    """Controls u_a = E_a realizing the point's accelerations.

    Feeding these into the forced dynamics at (q, y) returns ydot.
    """
    core = _core.compute_core(rp.system, pt.q, pt.y)
    return _core.hamel_residual_from_core(core, pt.ydot)[..., : rp.system.m]


def tilde_L(rp: ReducedProblem, q, y, ydot_a) -> float:
    """Restricted cost density: C(q, y, u) at the submanifold point over
    (q, y, ydot_a)."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    ydot_a = np.asarray(ydot_a, dtype=float)
    _, blocks = _blocks_at(rp, q, y)
    u = _core.controls_u(blocks, ydot_a)
    return float(rp.system._cost(q, y, u))
