"""Numerical differentiation kernel.

Gradients, Jacobians and Hessians of user-supplied smooth callbacks, via
central differences (default) or forward-mode dual numbers.  The batched
helpers at the bottom are the fast path used by the dynamics engine; the
complex-step helpers give exact first derivatives for callbacks that accept
complex input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteEvaluation

#: Default central-difference step: cube root of machine epsilon (~6.06e-6).
DEFAULT_STEP = float(np.finfo(float).eps ** (1.0 / 3.0))

#: Imaginary perturbation for complex-step derivatives.  A power of two, so
#: dividing the imaginary part by it is exact.
CSTEP = 2.0**-333

_CENTRAL_NAMES = ("central", "central-difference")
_DUAL_NAMES = ("dual", "dual-number")


@dataclass(frozen=True)
class DiffConfig:
    """Differentiation settings.

    ``scheme`` is ``"central-difference"`` or ``"dual-number"``.  ``step`` is
    the dimensionless central-difference step, applied per coordinate with
    scaling ``max(1, |x_i|)``; second derivatives difference first gradients
    with outer step ``sqrt(step)``.
    """

    scheme: str = "central-difference"
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.scheme not in _CENTRAL_NAMES + _DUAL_NAMES:
            raise ValueError(f"unknown differentiation scheme {self.scheme!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")

    @property
    def is_dual(self) -> bool:
        return self.scheme in _DUAL_NAMES


DEFAULT_CONFIG = DiffConfig()


def _coordinate_steps(x: np.ndarray, step: float) -> np.ndarray:
    """Per-coordinate steps ``step * max(1, |x_i|)`` (real part only)."""
    return step * np.maximum(1.0, np.abs(np.real(x)))


def _require_finite(value, x):
    if not np.all(np.isfinite(value)):
        raise NonFiniteEvaluation(
            f"callback returned a non-finite value at x={np.asarray(x)!r}", x=x
        )


def gradient(f, x, cfg: DiffConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Gradient of a scalar function.  Central error is O(step^2)."""
    x = np.asarray(x, dtype=float)
    if cfg.is_dual:
        return _dual_gradient(f, x)
    h = _coordinate_steps(x, cfg.step)
    g = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h[i]
        fp = f(xp)
        _require_finite(fp, xp)
        xm = x.copy()
        xm[i] -= h[i]
        fm = f(xm)
        _require_finite(fm, xm)
        g[i] = (fp - fm) / (2.0 * h[i])
    return g


def jacobian(f, x, cfg: DiffConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Jacobian of a vector function; row i is the gradient of f_i."""
    x = np.asarray(x, dtype=float)
    if cfg.is_dual:
        return _dual_jacobian(f, x)
    h = _coordinate_steps(x, cfg.step)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h[i]
        fp = np.asarray(f(xp), dtype=float)
        _require_finite(fp, xp)
        xm = x.copy()
        xm[i] -= h[i]
        fm = np.asarray(f(xm), dtype=float)
        _require_finite(fm, xm)
        cols.append((fp - fm) / (2.0 * h[i]))
    return np.stack(cols, axis=-1)


def hessian(f, x, cfg: DiffConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Symmetrized Hessian of a scalar function.

    First gradients (central or dual, per ``cfg``) are differenced with an
    outer step ``sqrt(cfg.step)``; exact up to rounding on quadratics.
    """
    x = np.asarray(x, dtype=float)
    h2 = _coordinate_steps(x, np.sqrt(cfg.step))
    cols = []
    for j in range(x.size):
        xp = x.copy()
        xp[j] += h2[j]
        xm = x.copy()
        xm[j] -= h2[j]
        cols.append((gradient(f, xp, cfg) - gradient(f, xm, cfg)) / (2.0 * h2[j]))
    H = np.stack(cols, axis=-1)
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# Forward-mode dual numbers
# ---------------------------------------------------------------------------

class Dual:
    """A numpy-compatible dual number carrying a trailing axis of seeds.

    ``val`` has some shape S; ``der`` has shape S + (k,) for k seed
    directions.  Arithmetic and the elementary functions used by smooth
    mechanical systems are supported through ``__array_ufunc__``, so
    callbacks written with numpy operations work unchanged.
    """

    __slots__ = ("val", "der")

    def __init__(self, val, der):
        # dtype is preserved: the engine runs dual numbers over complex
        # values when an outer complex-step perturbation is active.
        self.val = np.asarray(val)
        self.der = np.asarray(der)

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def seed(x: np.ndarray) -> "Dual":
        """Seed a 1-D point with one direction per coordinate."""
        x = np.asarray(x, dtype=float)
        return Dual(x, np.eye(x.size))

    # -- numpy protocol -------------------------------------------------------

    @property
    def shape(self):
        return self.val.shape

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        # value indices never touch the trailing seed axis
        return Dual(self.val[idx], self.der[idx + (slice(None),)])

    def __repr__(self):
        return f"Dual(val={self.val!r})"

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if kwargs.get("out") is not None:
            return NotImplemented
        if method == "reduce" and ufunc is np.add:
            return self._sum(kwargs.get("axis", None))
        if method != "__call__":
            return NotImplemented
        return _apply_ufunc(ufunc, *inputs)

    def _sum(self, axis):
        if axis is None:
            axes = tuple(range(self.val.ndim))
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(a % self.val.ndim for a in axes)
        return Dual(self.val.sum(axis=axes), self.der.sum(axis=axes))

    def sum(self, axis=None, dtype=None, out=None, **kwargs):
        if dtype is not None or out is not None:
            return NotImplemented
        return self._sum(axis)

    # -- operators -------------------------------------------------------------

    def __add__(self, other):
        return np.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return np.subtract(self, other)

    def __rsub__(self, other):
        return np.subtract(other, self)

    def __mul__(self, other):
        return np.multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return np.true_divide(self, other)

    def __rtruediv__(self, other):
        return np.true_divide(other, self)

    def __pow__(self, p):
        return np.power(self, p)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __matmul__(self, other):
        return np.matmul(self, other)

    def __rmatmul__(self, other):
        return np.matmul(other, self)


def _parts(obj):
    """Split an operand into (value, derivative-or-None)."""
    if isinstance(obj, Dual):
        return obj.val, obj.der
    return np.asarray(obj), None


def _apply_ufunc(ufunc, *inputs):
    if ufunc is np.add or ufunc is np.subtract:
        (av, ad), (bv, bd) = _parts(inputs[0]), _parts(inputs[1])
        sign = 1.0 if ufunc is np.add else -1.0
        val = ufunc(av, bv)
        if ad is None:
            der = sign * bd
        elif bd is None:
            der = ad
        else:
            der = ad + sign * bd
        return Dual(val, np.broadcast_to(der, val.shape + der.shape[-1:]))
    if ufunc is np.multiply:
        (av, ad), (bv, bd) = _parts(inputs[0]), _parts(inputs[1])
        val = av * bv
        der = 0.0
        if ad is not None:
            der = der + ad * bv[..., None]
        if bd is not None:
            der = der + bd * av[..., None]
        return Dual(val, np.broadcast_to(der, val.shape + der.shape[-1:]))
    if ufunc is np.true_divide:
        (av, ad), (bv, bd) = _parts(inputs[0]), _parts(inputs[1])
        val = av / bv
        der = 0.0
        if ad is not None:
            der = der + ad / bv[..., None]
        if bd is not None:
            der = der - bd * (av / bv**2)[..., None]
        return Dual(val, np.broadcast_to(der, val.shape + der.shape[-1:]))
    if ufunc is np.power:
        a, p = inputs
        if isinstance(p, Dual):
            return NotImplemented
        av, ad = _parts(a)
        return Dual(av**p, (p * av ** (p - 1))[..., None] * ad)
    if ufunc is np.negative:
        return -inputs[0]
    if ufunc is np.positive:
        return inputs[0]
    if ufunc is np.matmul:
        # 1-D / 2-D operands only (enough for vector fields and quadratics)
        (av, ad), (bv, bd) = _parts(inputs[0]), _parts(inputs[1])
        if av.ndim > 2 or bv.ndim > 2:
            return NotImplemented
        val = np.matmul(av, bv)
        der = None
        if ad is not None:
            sub = {
                (1, 1): "jk,j->k",
                (2, 1): "ijk,j->ik",
                (1, 2): "jk,jl->lk",
                (2, 2): "ijk,jl->ilk",
            }[(av.ndim, bv.ndim)]
            der = np.einsum(sub, ad, bv)
        if bd is not None:
            sub = {
                (1, 1): "j,jk->k",
                (2, 1): "ij,jk->ik",
                (1, 2): "j,jlk->lk",
                (2, 2): "ij,jlk->ilk",
            }[(av.ndim, bv.ndim)]
            d = np.einsum(sub, av, bd)
            der = d if der is None else der + d
        return Dual(val, der)
    unary = _UNARY_RULES.get(ufunc)
    if unary is not None:
        av, ad = _parts(inputs[0])
        val_fn, slope_fn = unary
        return Dual(val_fn(av), slope_fn(av)[..., None] * ad)
    return NotImplemented


_UNARY_RULES = {
    np.sin: (np.sin, np.cos),
    np.cos: (np.cos, lambda v: -np.sin(v)),
    np.tan: (np.tan, lambda v: 1.0 / np.cos(v) ** 2),
    np.exp: (np.exp, np.exp),
    np.log: (np.log, lambda v: 1.0 / v),
    np.sqrt: (np.sqrt, lambda v: 0.5 / np.sqrt(v)),
}


def _dual_gradient(f, x):
    out = f(Dual.seed(x))
    if isinstance(out, Dual):
        _require_finite(out.val, x)
        return np.asarray(out.der, dtype=float).reshape(x.size)
    _require_finite(out, x)
    return np.zeros(x.size)


def _dual_jacobian(f, x):
    out = f(Dual.seed(x))
    if isinstance(out, Dual):
        _require_finite(out.val, x)
        return np.asarray(out.der, dtype=float)
    out = np.asarray(out)
    if out.dtype == object:
        rows = [_parts(v) for v in out.ravel()]
        der = np.stack(
            [np.zeros(x.size) if d is None else d for _, d in rows]
        )
        return der.reshape(out.shape + (x.size,))
    _require_finite(out, x)
    return np.zeros(out.shape + (x.size,))


# ---------------------------------------------------------------------------
# Complex-step first derivatives (exact for holomorphic callbacks)
# ---------------------------------------------------------------------------

def complex_step_gradient(f, x, h: float = CSTEP) -> np.ndarray:
    """Exact-to-rounding gradient of a scalar callback accepting complex x."""
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for k in range(x.size):
        xp = x.astype(complex)
        xp[k] += 1j * h
        g[k] = np.imag(f(xp)) / h
    return g


def complex_step_jacobian(f, x, h: float = CSTEP) -> np.ndarray:
    """Exact-to-rounding Jacobian of a vector callback accepting complex x."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        xp = x.astype(complex)
        xp[k] += 1j * h
        cols.append(np.imag(np.asarray(f(xp))) / h)
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# Batched central-difference blocks (engine fast path)
# ---------------------------------------------------------------------------
#
# All of these accept arrays with arbitrary leading batch axes and callbacks
# that broadcast over them.  They are complex-safe: step scaling looks only
# at the real part, and the difference formulas are linear in the callback
# values, so a complex-step perturbation of the base point survives intact.

def _diag_steps(x, step):
    h = _coordinate_steps(x, step)
    return np.eye(x.shape[-1]) * h[..., None, :], h


def batch_gradient(f, x, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central gradient of ``f(x)`` over a batch: x (..., n) -> (..., n)."""
    D, h = _diag_steps(x, step)
    base = x[..., None, :]
    return (f(base + D) - f(base - D)) / (2.0 * h)


def _seed_last_axis(x) -> Dual:
    """Dual-seed each coordinate of the trailing axis of a batch of points."""
    n = x.shape[-1]
    return Dual(x, np.broadcast_to(np.eye(n), x.shape + (n,)))


def _dual_der(out, lead, k):
    """Derivative block of a callback output, broadcast to ``lead + (k,)``.

    A callback that ignores the seeded argument returns a plain array with
    zero derivative.
    """
    der = out.der if isinstance(out, Dual) else np.zeros(np.shape(out) + (k,))
    target = lead + (k,)
    return der if der.shape == target else np.broadcast_to(der, target)


def batch_lagrangian_blocks(l, q, y, step: float = DEFAULT_STEP, analytic: bool = False):
    """First and second derivative blocks of l(q, y) over a batch.

    Returns ``(gy, gq, W, mix)`` with

    - ``gy[..., A] = dl/dy^A`` and ``gq[..., B] = dl/dq^B``,
    - ``W[..., A, B] = d2l/dy^A dy^B`` (symmetrized),
    - ``mix[..., A, B] = d2l/dq^B dy^A`` (y-gradients differenced in q).

    With ``analytic`` the inner gradients run on dual numbers (exact, and
    free of the subtractive cancellation a difference step would re-amplify
    under an outer complex-step perturbation); only the outer ``sqrt(step)``
    difference remains in the second derivatives.  Otherwise everything is
    central: O(step^2) first derivatives, O(step) for the mixed block, exact
    up to rounding on quadratics.
    """
    n = q.shape[-1]

    def leval(qpts, ypts):
        # A callback may ignore one argument; broadcast the output to the
        # full leading shape so no perturbation axis is silently dropped.
        out = l(qpts, ypts)
        lead = np.broadcast_shapes(qpts.shape[:-1], ypts.shape[:-1])
        return out if out.shape == lead else np.broadcast_to(out, lead)

    if analytic:
        def grad_y(qb, yb):
            out = l(qb, _seed_last_axis(yb))
            return _dual_der(out, np.broadcast_shapes(qb.shape[:-1], yb.shape[:-1]), n)

        def grad_q(qb, yb):
            out = l(_seed_last_axis(qb), yb)
            return _dual_der(out, np.broadcast_shapes(qb.shape[:-1], yb.shape[:-1]), n)
    else:
        def grad_y(qb, yb):
            Db, hb = _diag_steps(yb, step)
            base = yb[..., None, :]
            qq = qb[..., None, :]
            return (leval(qq, base + Db) - leval(qq, base - Db)) / (2.0 * hb)

        def grad_q(qb, yb):
            Db, hb = _diag_steps(qb, step)
            base = qb[..., None, :]
            yy = yb[..., None, :]
            return (leval(base + Db, yy) - leval(base - Db, yy)) / (2.0 * hb)

    gy = grad_y(q, y)
    gq = grad_q(q, y)

    Hy_D, Hy = _diag_steps(y, np.sqrt(step))
    ybases = np.stack([y[..., None, :] + Hy_D, y[..., None, :] - Hy_D], axis=-3)
    gys = grad_y(q[..., None, None, :], ybases)  # (..., 2, B, A)
    W = (gys[..., 0, :, :] - gys[..., 1, :, :]) / (2.0 * Hy[..., :, None])
    W = W.swapaxes(-1, -2)  # -> [A, B]
    W = 0.5 * (W + W.swapaxes(-1, -2))

    Hq_D, Hq = _diag_steps(q, np.sqrt(step))
    qbases = np.stack([q[..., None, :] + Hq_D, q[..., None, :] - Hq_D], axis=-3)
    gys_q = grad_y(qbases, y[..., None, None, :])  # (..., 2, D, A)
    mix = (gys_q[..., 0, :, :] - gys_q[..., 1, :, :]) / (2.0 * Hq[..., :, None])
    mix = mix.swapaxes(-1, -2)  # -> [A, D]

    if not np.iscomplexobj(gy):
        for block, point in ((gy, y), (gq, q), (W, y), (mix, q)):
            if not np.all(np.isfinite(block)):
                raise NonFiniteEvaluation(
                    "Lagrangian produced a non-finite derivative", x=point
                )
    return gy, gq, W, mix


def batch_frame_jacobian(frame, q, step: float = DEFAULT_STEP, exact: bool = False):
    """``dX[..., C, B, D] = d X_B^C / d q^D`` over a batch of points.

    With ``exact=True`` (real input, complex-capable callback) the columns
    come from a complex step and are accurate to rounding.  Otherwise a
    four-point Richardson stencil keeps both truncation (O(step^4)) and
    rounding jitter (O(eps/step)) small.
    """
    if exact and not np.iscomplexobj(q):
        n = q.shape[-1]
        qp = q[..., None, :] + 1j * CSTEP * np.eye(n)
        cols = np.imag(frame(qp)) / CSTEP  # (..., D, C, B)
        return np.moveaxis(cols, -3, -1)
    D, h = _diag_steps(q, step)
    base = q[..., None, :]
    wide = (frame(base + 2.0 * D) - frame(base - 2.0 * D))
    narrow = (frame(base + D) - frame(base - D))
    cols = (8.0 * narrow - wide) / (12.0 * h[..., :, None, None])
    return np.moveaxis(cols, -3, -1)


def _cost_eval(cost, qpts, ypts, upts):
    # A callback may ignore arguments; broadcast the output to the full
    # leading shape so no perturbation axis is silently dropped.
    out = cost(qpts, ypts, upts)
    lead = np.broadcast_shapes(qpts.shape[:-1], ypts.shape[:-1], upts.shape[:-1])
    return out if out.shape == lead else np.broadcast_to(out, lead)


def _cost_grad_u(cost, qb, yb, ub, step, analytic):
    m = ub.shape[-1]
    lead = np.broadcast_shapes(qb.shape[:-1], yb.shape[:-1], ub.shape[:-1])
    if analytic:
        out = cost(qb, yb, _seed_last_axis(ub))
        return _dual_der(out, lead, m)
    Db, hb = _diag_steps(ub, step)
    base = ub[..., None, :]
    qq, yy = qb[..., None, :], yb[..., None, :]
    return (
        _cost_eval(cost, qq, yy, base + Db) - _cost_eval(cost, qq, yy, base - Db)
    ) / (2.0 * hb)


def batch_cost_value_grad(cost, q, y, u, step: float = DEFAULT_STEP, analytic: bool = False):
    """Value and u-gradient of cost(q, y, u) over a batch."""
    value = _cost_eval(cost, q, y, u)
    return value, _cost_grad_u(cost, q, y, u, step, analytic)


def batch_cost_blocks(cost, q, y, u, step: float = DEFAULT_STEP, analytic: bool = False):
    """Value, u-gradient and u-Hessian of cost(q, y, u) over a batch."""
    value = _cost_eval(cost, q, y, u)

    def grad_u(qb, yb, ub):
        return _cost_grad_u(cost, qb, yb, ub, step, analytic)

    Cu = grad_u(q, y, u)
    H_D, H = _diag_steps(u, np.sqrt(step))
    ubases = np.stack([u[..., None, :] + H_D, u[..., None, :] - H_D], axis=-3)
    gs = grad_u(
        q[..., None, None, :], y[..., None, None, :], ubases
    )  # (..., 2, b, a)
    Cuu = (gs[..., 0, :, :] - gs[..., 1, :, :]) / (2.0 * H[..., :, None])
    Cuu = 0.5 * (Cuu + Cuu.swapaxes(-1, -2))
    if not np.iscomplexobj(value) and not (
        np.all(np.isfinite(value)) and np.all(np.isfinite(Cu)) and np.all(np.isfinite(Cuu))
    ):
        raise NonFiniteEvaluation("cost produced a non-finite value", x=u)
    return value, Cu, Cuu
