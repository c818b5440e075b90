"""Shared evaluation engine.

Everything the library derives from a mechanical system at a point (q, y) is
assembled here: frame data and structure coefficients, Lagrangian derivative
blocks, the affine constraint solve, control recovery, and the restricted
vector field on the first constraint submanifold.  All functions accept
arbitrary leading batch axes, and are complex-safe so that an imaginary
perturbation of the base point yields exact derivatives of the computed
pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numdiff
from .errors import (
    NonFiniteEvaluation,
    RegularityFailure,
    SingularFrame,
    SingularHessianBlock,
    SingularMassMatrix,
)

COND_LIMIT = 1e12

# Richardson-stencil step for frame derivatives on the integration path.
# Larger than the generic central default: the rounding jitter eps/h it
# removes would put a noise floor under every conservation measurement,
# while the O(h^4) truncation it admits is both tiny and smooth (the flow
# stays the exact flow of a nearby computed Hamiltonian, which the monitors
# see consistently).
FRAME_JAC_STEP = 1e-3


@dataclass
class Core:
    """Frame and Lagrangian data at a batch of (q, y) points."""

    q: np.ndarray
    y: np.ndarray
    X: np.ndarray        # (..., n, n), column B holds the field X_B
    Xinv: np.ndarray
    dX: np.ndarray       # (..., C, B, D) = dX_B^C/dq^D
    C: np.ndarray        # (..., D, A, B) structure coefficients, antisymmetric in (A, B)
    v: np.ndarray        # (..., n) velocity X y
    gy: np.ndarray       # dl/dy
    gq: np.ndarray       # dl/dq
    W: np.ndarray        # d2l/dy dy
    mix: np.ndarray      # (..., A, B) = d2l/dq^B dy^A
    b: np.ndarray        # residual offset: hamel residual E = W ydot + b


@dataclass
class Blocks:
    """Constraint-solve data: G and the on-shell controls are affine in the
    actuated accelerations, G = dG a + e and u = S a + c."""

    dG: np.ndarray       # (..., n-m, m)
    e: np.ndarray        # (..., n-m)
    S: np.ndarray        # (..., m, m)
    c: np.ndarray        # (..., m)


def frame_data(sys, q, *, checks: bool = True, exact_dx: bool = False):
    """Frame matrix, inverse, coordinate Jacobian, and structure coefficients.

    ``exact_dx`` requests complex-step frame derivatives (best absolute
    accuracy).  The integration pipeline keeps it off so that base and
    perturbed evaluations go through the identical formulas; the flow is
    then the exact flow of the computed Hamiltonian to rounding.
    """
    q = np.asarray(q)
    X = sys._frame(q)
    if checks and not np.iscomplexobj(X):
        if not np.all(np.isfinite(X)):
            raise NonFiniteEvaluation("frame evaluation is non-finite", x=q)
    try:
        Xinv = np.linalg.inv(X)
    except np.linalg.LinAlgError as exc:
        raise SingularFrame("frame matrix is exactly singular", q=q) from exc
    if checks and not np.iscomplexobj(X):
        # 1-norm condition estimate; cheap enough for the integration path.
        cond = np.abs(X).sum(axis=-2).max(axis=-1) * np.abs(Xinv).sum(axis=-2).max(axis=-1)
        if np.any(cond > COND_LIMIT) or not np.all(np.isfinite(cond)):
            worst = float(np.max(cond))
            raise SingularFrame(
                f"frame matrix is numerically singular (cond={worst:.3e})",
                q=q,
                condition=worst,
            )
    exact = exact_dx and sys.analytic and not np.iscomplexobj(q)
    dX = numdiff.batch_frame_jacobian(sys._frame, q, step=FRAME_JAC_STEP, exact=exact)
    # Bracket components [X_A, X_B]^C = X_A^D dX_B^C/dq^D - X_B^D dX_A^C/dq^D.
    half = np.einsum("...da,...cbd->...cab", X, dX)
    bracket = half - half.swapaxes(-1, -2)
    n = X.shape[-1]
    shape = bracket.shape
    coeffs = np.linalg.solve(X, bracket.reshape(shape[:-2] + (n * n,)))
    C = coeffs.reshape(shape)
    C = 0.5 * (C - C.swapaxes(-1, -2))
    return X, Xinv, dX, C


def compute_core(sys, q, y, *, checks: bool = True, frame=None) -> Core:
    """Assemble all (q, y)-level quantities for a batch of points.

    ``frame`` may carry precomputed (X, Xinv, dX, C) when q is unchanged
    (the frame data does not depend on y).
    """
    q = np.asarray(q)
    y = np.asarray(y)
    if frame is None:
        X, Xinv, dX, C = frame_data(sys, q, checks=checks)
    else:
        X, Xinv, dX, C = frame
    gy, gq, W, mix = numdiff.batch_lagrangian_blocks(sys._l, q, y, analytic=sys.analytic)
    v = np.einsum("...ab,...b->...a", X, y)
    b = (
        np.einsum("...ad,...d->...a", mix, v)
        - np.einsum("...ba,...b->...a", X, gq)
        + np.einsum("...dab,...b,...d->...a", C, y, gy)
    )
    if sys._force is not None:
        b = b - np.einsum("...ba,...b->...a", X, sys._force(q, v))
    return Core(q=q, y=y, X=X, Xinv=Xinv, dX=dX, C=C, v=v, gy=gy, gq=gq, W=W, mix=mix, b=b)


def hamel_residual_from_core(core: Core, ydot) -> np.ndarray:
    """E = W ydot + b: the quasivelocity Euler-Lagrange residual."""
    return np.einsum("...ab,...b->...a", core.W, ydot) + core.b


def _relative_det_gate(M, tol):
    """|det M| > tol * (max|M|)^k, per batch element."""
    k = M.shape[-1]
    det = np.linalg.det(M)
    scale = np.max(np.abs(M), axis=(-2, -1)) ** k
    return det, np.abs(det) > tol * scale


def reduction_blocks(core: Core, m: int, tol: float, *, checks: bool = True) -> Blocks:
    """Solve the unactuated block: G and on-shell controls as affine maps."""
    W, b = core.W, core.b
    Waa, Wab = W[..., :m, :m], W[..., :m, m:]
    Wba, Wbb = W[..., m:, :m], W[..., m:, m:]
    if checks and not np.iscomplexobj(W):
        det, ok = _relative_det_gate(Wbb, tol)
        if not np.all(ok):
            raise SingularHessianBlock(
                "unactuated Hessian block d2l/dy^a dy^b is singular "
                f"(|det|={float(np.min(np.abs(det))):.3e}); the constraint "
                "solve for the unactuated accelerations is not well posed here"
            )
    dG = -np.linalg.solve(Wbb, Wba)
    e = -np.linalg.solve(Wbb, b[..., m:, None])[..., 0]
    S = Waa + Wab @ dG
    c = b[..., :m] + np.einsum("...ab,...b->...a", Wab, e)
    return Blocks(dG=dG, e=e, S=S, c=c)


def constraints_g(blocks: Blocks, ydot_a) -> np.ndarray:
    """G(q, y, ydot_a): unactuated accelerations solving the constraints."""
    return np.einsum("...ba,...a->...b", blocks.dG, ydot_a) + blocks.e


def controls_u(blocks: Blocks, ydot_a) -> np.ndarray:
    """On-shell controls u = S ydot_a + c (actuated residual rows on M)."""
    return np.einsum("...ab,...b->...a", blocks.S, ydot_a) + blocks.c


# ---------------------------------------------------------------------------
# W1 state packing
# ---------------------------------------------------------------------------

def pack_w1(q, y, ydot_a, p, ptilde_alpha) -> np.ndarray:
    return np.concatenate(
        [np.atleast_1d(np.asarray(part, dtype=float)) for part in (q, y, ydot_a, p, ptilde_alpha)],
        axis=-1,
    )


def unpack_w1(z, n: int, m: int):
    q = z[..., :n]
    y = z[..., n : 2 * n]
    ydot_a = z[..., 2 * n : 2 * n + m]
    p = z[..., 2 * n + m : 3 * n + m]
    ptilde_alpha = z[..., 3 * n + m :]
    return q, y, ydot_a, p, ptilde_alpha


@dataclass
class FieldEval:
    """Vector-field evaluation on W1, plus the pieces monitors reuse."""

    dz: np.ndarray
    hamiltonian: np.ndarray
    controls: np.ndarray
    ptilde_a: np.ndarray       # lifted actuated momenta
    dptilde_a: np.ndarray      # their induced time derivative
    det_R: np.ndarray


def lift_ptilde_a(blocks: Blocks, Cu, ptilde_alpha) -> np.ndarray:
    """Actuated momenta making the primary constraints vanish identically."""
    return np.einsum("...ca,...c->...a", blocks.S, Cu) - np.einsum(
        "...ba,...b->...a", blocks.dG, ptilde_alpha
    )


def _hamiltonian_piece(sys, core: Core, blocks: Blocks, ydot_a, p, ptilde_alpha):
    """All state-dependent terms of H except ptilde_a . ydot_a (constant in
    q and y), together with the lift covector g."""
    G = constraints_g(blocks, ydot_a)
    u = controls_u(blocks, ydot_a)
    value, Cu = numdiff.batch_cost_value_grad(sys._cost, core.q, core.y, u, analytic=sys.analytic)
    H = (
        np.einsum("...a,...a->...", p, core.v)
        + np.einsum("...a,...a->...", ptilde_alpha, G)
        - value
    )
    g = lift_ptilde_a(blocks, Cu, ptilde_alpha)
    return H, g


def _partials(rp, base: Core, ydot_a, p, ptilde_alpha):
    """dH/d(q,y) and dg/d(q,y) at frozen (ydot_a, p, ptilde_alpha).

    For analytic systems this is a complex step against the computed
    pipeline (whose inner gradients run on dual numbers, so no difference
    step gets re-amplified); otherwise central differences.  All perturbed
    points evaluate through a single batched core.
    """
    sys = rp.system
    q, y = base.q, base.y
    n, m = sys.n, sys.m
    tol = rp.hessian_block_tolerance
    da, pp, pa = ydot_a[..., None, :], p[..., None, :], ptilde_alpha[..., None, :]

    def pieces(qb, yb):
        core = compute_core(sys, qb, yb, checks=False)
        blocks = reduction_blocks(core, m, tol, checks=False)
        return _hamiltonian_piece(sys, core, blocks, da, pp, pa)

    eye = np.eye(n)
    rest_q = np.broadcast_to(q[..., None, :], q.shape[:-1] + (n, n))
    rest_y = np.broadcast_to(y[..., None, :], y.shape[:-1] + (n, n))
    if sys.analytic:
        h = numdiff.CSTEP
        qs = np.concatenate([q[..., None, :] + 1j * h * eye, rest_q + 0j], axis=-2)
        ys = np.concatenate([rest_y + 0j, y[..., None, :] + 1j * h * eye], axis=-2)
        H, g = pieces(qs, ys)
        dH = np.imag(H) / h
        dg = np.imag(g) / h
        return dH[..., :n], dg[..., :n, :], dH[..., n:], dg[..., n:, :]
    step = np.sqrt(numdiff.DEFAULT_STEP)
    hq = numdiff._coordinate_steps(q, step)
    hy = numdiff._coordinate_steps(y, step)
    Dq = eye * hq[..., None, :]
    Dy = eye * hy[..., None, :]
    bq, by = q[..., None, :], y[..., None, :]
    qs = np.concatenate([bq + Dq, bq - Dq, rest_q, rest_q], axis=-2)
    ys = np.concatenate([rest_y, rest_y, by + Dy, by - Dy], axis=-2)
    H, g = pieces(qs, ys)
    dH_dq = (H[..., :n] - H[..., n : 2 * n]) / (2 * hq)
    dg_dq = (g[..., :n, :] - g[..., n : 2 * n, :]) / (2 * hq[..., None])
    dH_dy = (H[..., 2 * n : 3 * n] - H[..., 3 * n :]) / (2 * hy)
    dg_dy = (g[..., 2 * n : 3 * n, :] - g[..., 3 * n :, :]) / (2 * hy[..., None])
    return dH_dq, dg_dq, dH_dy, dg_dy


def w1_field(rp, z, *, checks: bool = True) -> FieldEval:
    """Right-hand side of the restricted dynamics on W1 for a batch of states.

    Coordinates are (q, y, ydot_a, p, ptilde_alpha); the actuated momenta are
    always recovered from the primary constraints, which turns the
    differential-algebraic system into an explicit ODE with the constraints
    satisfied identically.
    """
    sys = rp.system
    n, m = sys.n, sys.m
    z = np.asarray(z, dtype=float)
    if checks and not np.all(np.isfinite(z)):
        raise NonFiniteEvaluation("state is non-finite", x=z)
    q, y, ydot_a, p, ptilde_alpha = unpack_w1(z, n, m)

    core = compute_core(sys, q, y, checks=checks)
    blocks = reduction_blocks(core, m, rp.hessian_block_tolerance, checks=checks)
    G = constraints_g(blocks, ydot_a)
    u = controls_u(blocks, ydot_a)
    value, Cu, Cuu = numdiff.batch_cost_blocks(sys._cost, q, y, u, analytic=sys.analytic)
    R = np.einsum("...ca,...cd,...db->...ab", blocks.S, Cuu, blocks.S)
    R = 0.5 * (R + R.swapaxes(-1, -2))
    det_R, regular = _relative_det_gate(R, rp.regularity_tolerance)
    if checks and not np.all(regular):
        raise RegularityFailure(
            "det(R) below tolerance: restricted dynamics not uniquely solvable",
            det=float(np.min(np.abs(det_R))),
        )

    dq = core.v
    dy = np.concatenate([ydot_a, G], axis=-1)
    dH_dq, dg_dq, dH_dy, dg_dy = _partials(rp, core, ydot_a, p, ptilde_alpha)
    dp = -dH_dq
    dpt_alpha = -dH_dy[..., m:]
    eq5_a = -dH_dy[..., :m]
    rhs = (
        eq5_a
        - np.einsum("...Aa,...A->...a", dg_dq, dq)
        - np.einsum("...Aa,...A->...a", dg_dy, dy)
        + np.einsum("...ba,...b->...a", blocks.dG, dpt_alpha)
    )
    yddot = np.linalg.solve(R, rhs[..., None])[..., 0]

    ptilde_a = lift_ptilde_a(blocks, Cu, ptilde_alpha)
    dptilde_a = (
        np.einsum("...Aa,...A->...a", dg_dq, dq)
        + np.einsum("...Aa,...A->...a", dg_dy, dy)
        + np.einsum("...ab,...b->...a", R, yddot)
        - np.einsum("...ba,...b->...a", blocks.dG, dpt_alpha)
    )
    H = (
        np.einsum("...a,...a->...", p, core.v)
        + np.einsum("...a,...a->...", ptilde_a, ydot_a)
        + np.einsum("...a,...a->...", ptilde_alpha, G)
        - value
    )
    dz = np.concatenate([dq, dy, yddot, dp, dpt_alpha], axis=-1)
    return FieldEval(
        dz=dz,
        hamiltonian=H,
        controls=u,
        ptilde_a=ptilde_a,
        dptilde_a=dptilde_a,
        det_R=det_R,
    )


def mass_solve(core: Core, rhs, *, tol: float = 1e-12) -> np.ndarray:
    """Solve W ydot = rhs with a singularity gate on the full mass matrix."""
    det, ok = _relative_det_gate(core.W, tol)
    if not np.all(ok):
        raise SingularMassMatrix(
            f"quasivelocity mass matrix is singular (|det|={float(np.min(np.abs(det))):.3e})"
        )
    return np.linalg.solve(core.W, rhs[..., None])[..., 0]
