"""Time integration of the restricted dynamics, invariant monitors, and a
single-shooting solver for the two-point boundary-value problem.

Fixed-step RK4 is the workhorse; an embedded Dormand-Prince 4(5) pair with
PI step control is available as ``rk45-adaptive``.  Symplecticity of the
flow map is monitored by finite differences of nearby trajectories, never
enforced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from . import _core
from .errors import (
    NoConvergence,
    NonFiniteEvaluation,
    RegularityFailure,
    StepSizeUnderflow,
)
from .reduction import ReducedProblem
from .skinner_rusk import W1State, lift_to_w1, presymplectic_form

_METHODS = ("rk4", "rk45-adaptive")


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings over ``t_span``.

    ``dt`` is the fixed RK4 step (the span is divided into an integer number
    of uniform steps); ``rtol``/``atol`` drive the adaptive pair.  States
    are recorded every ``save_every`` accepted steps.
    """

    method: str = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10
    t_span: tuple[float, float] = (0.0, 1.0)
    save_every: int = 1

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        t0, tf = self.t_span
        if tf < t0:
            raise ValueError("t_span must satisfy t0 <= tf")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")

    @property
    def span(self) -> float:
        return self.t_span[1] - self.t_span[0]


@dataclass
class TrajectoryLog:
    """Saved trajectory with monitored invariants.

    ``states`` holds packed (q, y, ydot_a, p, ptilde_alpha) rows.  The
    constraint residual is the primary-constraint value of the lifted state;
    with the actuated momenta always recovered from the constraints it
    vanishes identically, which is the point of the representation.
    """

    n: int
    m: int
    times: np.ndarray
    states: np.ndarray
    hamiltonian: np.ndarray
    constraint_residual: np.ndarray
    controls: np.ndarray
    completed: bool = True
    failure: str | None = None
    failure_kind: str | None = None

    def state(self, i: int) -> W1State:
        return W1State.from_vector(self.states[i], self.n, self.m)

    @property
    def initial_state(self) -> W1State:
        return self.state(0)

    @property
    def final_state(self) -> W1State:
        return self.state(len(self.times) - 1)


def _rk4_step(f, z, dt):
    k1 = f(z)
    k2 = f(z + 0.5 * dt * k1)
    k3 = f(z + 0.5 * dt * k2)
    k4 = f(z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_step_t(f, t, z, dt):
    k1 = f(t, z)
    k2 = f(t + 0.5 * dt, z + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, z + 0.5 * dt * k2)
    k4 = f(t + dt, z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Dormand-Prince 4(5) tableau.
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _dp_step(f, z, dt):
    """One embedded step: returns (z5, error_estimate)."""
    ks = [f(z)]
    for row in _DP_A[1:]:
        zs = z + dt * sum(a * k for a, k in zip(row, ks))
        ks.append(f(zs))
    ks = np.stack(ks)
    z5 = z + dt * np.tensordot(_DP_B5, ks, axes=1)
    err = dt * np.tensordot(_DP_B5 - _DP_B4, ks, axes=1)
    return z5, err


class _Observer:
    """Collects saved rows during integration."""

    def __init__(self, n, m):
        self.n, self.m = n, m
        self.times = []
        self.states = []
        self.hamiltonian = []
        self.residual = []
        self.controls = []

    def record(self, t, z, fe: _core.FieldEval):
        self.times.append(t)
        self.states.append(np.array(z))
        self.hamiltonian.append(float(fe.hamiltonian))
        # phi_a of the lifted state: the carried actuated momenta ARE the
        # recovered ones, so the residual is zero by representation.
        self.residual.append(0.0)
        self.controls.append(np.array(fe.controls))

    def log(self, completed=True, failure=None, failure_kind=None) -> TrajectoryLog:
        return TrajectoryLog(
            n=self.n,
            m=self.m,
            times=np.asarray(self.times),
            states=np.asarray(self.states),
            hamiltonian=np.asarray(self.hamiltonian),
            constraint_residual=np.asarray(self.residual),
            controls=np.asarray(self.controls),
            completed=completed,
            failure=failure,
            failure_kind=failure_kind,
        )


def _failure_kind(exc: Exception) -> str:
    if isinstance(exc, RegularityFailure):
        return "regularity"
    if isinstance(exc, NonFiniteEvaluation):
        return "nonfinite"
    return "error"


def integrate(rp: ReducedProblem, w1_0: W1State, cfg: IntegratorConfig) -> TrajectoryLog:
    """Integrate the restricted dynamics from ``w1_0`` over ``cfg.t_span``.

    The Hamiltonian, constraint residual, and recovered controls are logged
    at every saved step.  A regularity or finiteness failure after the first
    step returns the partial log flagged; a failure at the initial state
    raises.
    """
    sys = rp.system
    obs = _Observer(sys.n, sys.m)
    z = w1_0.as_vector()
    t0, tf = cfg.t_span

    def fieldf(zz):
        return _core.w1_field(rp, zz).dz

    fe0 = _core.w1_field(rp, z)  # initial-state failures propagate
    obs.record(t0, z, fe0)
    if cfg.span == 0.0:
        return obs.log()

    try:
        if cfg.method == "rk4":
            n_steps = max(1, int(round(cfg.span / cfg.dt)))
            dt = cfg.span / n_steps
            for k in range(n_steps):
                z = _rk4_step(fieldf, z, dt)
                if (k + 1) % cfg.save_every == 0 or k == n_steps - 1:
                    fe = _core.w1_field(rp, z)
                    obs.record(t0 + (k + 1) * dt, z, fe)
        else:
            t = t0
            dt = min(cfg.dt, cfg.span)
            err_prev = 1.0
            accepted = 0
            min_dt = 1e-12 * max(1.0, cfg.span)
            while t < tf - 1e-14 * max(1.0, abs(tf)):
                dt = min(dt, tf - t)
                z_new, err = _dp_step(fieldf, z, dt)
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(z), np.abs(z_new))
                with np.errstate(over="ignore"):
                    err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
                if err_norm <= 1.0:
                    t += dt
                    z = z_new
                    accepted += 1
                    if accepted % cfg.save_every == 0 or t >= tf - 1e-14:
                        fe = _core.w1_field(rp, z)
                        obs.record(t, z, fe)
                    safe = max(err_norm, 1e-10)
                    factor = 0.9 * safe ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
                    err_prev = safe
                    dt *= min(5.0, max(0.2, factor))
                else:
                    dt *= max(0.2, 0.9 * err_norm ** (-1.0 / 5.0))
                if dt < min_dt:
                    raise StepSizeUnderflow(
                        f"adaptive step fell below {min_dt:.3e} at t={t:.6g}"
                    )
    except (RegularityFailure, NonFiniteEvaluation) as exc:
        return obs.log(completed=False, failure=str(exc), failure_kind=_failure_kind(exc))
    return obs.log()


def _integrate_batch(rp, Z0, span, dt):
    """Endpoint states of a batch of trajectories (fixed-step RK4, no log)."""
    if span == 0.0:
        return np.array(Z0)
    n_steps = max(1, int(round(span / dt)))
    h = span / n_steps

    def fieldf(zz):
        return _core.w1_field(rp, zz).dz

    Z = np.array(Z0)
    for _ in range(n_steps):
        Z = _rk4_step(fieldf, Z, h)
    return Z


def monitor_symplecticity(
    rp: ReducedProblem,
    w1_0: W1State,
    cfg: IntegratorConfig,
    probe_directions,
    fd_eps: float = 1e-5,
) -> float:
    """Deviation of the flow map from preserving the restricted two-form.

    The flow differential is estimated by central differences of nearby
    trajectories (step ``fd_eps`` per direction); the two-form on the
    constraint submanifold is the canonical form pulled back through the
    lift, whose differential is also estimated by finite differences.
    ``probe_directions`` holds 2k tangent vectors, read as k pairs.  Returns
    the largest |Omega(DF V, DF W) - Omega(V, W)| over the pairs.
    """
    dirs = np.atleast_2d(np.asarray(probe_directions, dtype=float))
    if len(dirs) % 2 != 0:
        raise ValueError("probe_directions must hold an even number of vectors")
    sys = rp.system
    n, m = sys.n, sys.m
    omega = presymplectic_form(n, m).matrix
    z0 = w1_0.as_vector()

    batch = [z0]
    for d in dirs:
        batch.append(z0 + fd_eps * d)
        batch.append(z0 - fd_eps * d)
    ZT = _integrate_batch(rp, np.stack(batch), cfg.span, cfg.dt)
    flowed = [
        (ZT[1 + 2 * i] - ZT[2 + 2 * i]) / (2.0 * fd_eps) for i in range(len(dirs))
    ]

    def lift_vec(z):
        q, y, da, p, pa = _core.unpack_w1(z, n, m)
        return lift_to_w1(rp, q, y, da, p, pa).as_vector()

    def lift_jacobian(z):
        h = 1e-6 * np.maximum(1.0, np.abs(z))
        cols = []
        for j in range(z.size):
            zp, zm = z.copy(), z.copy()
            zp[j] += h[j]
            zm[j] -= h[j]
            cols.append((lift_vec(zp) - lift_vec(zm)) / (2.0 * h[j]))
        return np.stack(cols, axis=-1)

    L0 = lift_jacobian(z0)
    LT = lift_jacobian(ZT[0])

    drift = 0.0
    for i in range(0, len(dirs), 2):
        V, W = dirs[i], dirs[i + 1]
        before = (L0 @ V) @ omega @ (L0 @ W)
        after = (LT @ flowed[i]) @ omega @ (LT @ flowed[i + 1])
        drift = max(drift, abs(after - before))
    return drift


@dataclass(frozen=True)
class BvpSpec:
    """Two-point boundary data for the optimal control problem.

    (q, y) are fixed at both ends; the initial actuated accelerations and
    all initial momenta are the 2n shooting unknowns, matched against the 2n
    terminal conditions.
    """

    q0: np.ndarray
    y0: np.ndarray
    qf: np.ndarray
    yf: np.ndarray
    ydot_a0: np.ndarray | None = None
    p0: np.ndarray | None = None
    ptilde_alpha0: np.ndarray | None = None
    max_iter: int = 30
    residual_tol: float = 1e-9
    fd_step: float = 1e-6

    def initial_unknowns(self, n: int, m: int) -> np.ndarray:
        da = np.zeros(m) if self.ydot_a0 is None else np.asarray(self.ydot_a0, float)
        p = np.zeros(n) if self.p0 is None else np.asarray(self.p0, float)
        pa = (
            np.zeros(n - m)
            if self.ptilde_alpha0 is None
            else np.asarray(self.ptilde_alpha0, float)
        )
        return np.concatenate([da, p, pa])


@dataclass
class ShootResult:
    log: TrajectoryLog
    converged: bool
    residual: float
    iterations: int

    def __iter__(self):
        return iter((self.log, self.converged, self.residual))


def shoot(
    rp: ReducedProblem,
    spec: BvpSpec,
    cfg: IntegratorConfig,
    raise_on_failure: bool = False,
) -> ShootResult:
    """Newton single shooting on the 2n unknown initial (ydot_a, p, ptilde_alpha).

    The shooting Jacobian is built column-by-column from central finite
    differences (all perturbed trajectories integrate as one batch), with a
    backtracking line search on the terminal-residual norm (factor 0.5, at
    most 20 backtracks).  Returns the trajectory of the last iterate with
    recovered controls; with ``raise_on_failure`` a non-converged run raises
    ``NoConvergence`` instead.
    """
    sys = rp.system
    n, m = sys.n, sys.m
    q0 = np.asarray(spec.q0, dtype=float)
    y0 = np.asarray(spec.y0, dtype=float)
    target = np.concatenate([np.asarray(spec.qf, float), np.asarray(spec.yf, float)])

    def states_from(U):
        U = np.atleast_2d(U)
        head = np.broadcast_to(np.concatenate([q0, y0]), (len(U), 2 * n))
        return np.concatenate([head, U], axis=-1)

    def residuals(U):
        try:
            ZT = _integrate_batch(rp, states_from(U), cfg.span, cfg.dt)
        except RegularityFailure as exc:
            raise RegularityFailure(
                f"regularity lost along a trial shot (unknowns {np.atleast_2d(U)[0]}): {exc}",
                det=exc.det,
            ) from exc
        return ZT[..., : 2 * n] - target

    U = spec.initial_unknowns(n, m)
    r = residuals(U)[0]
    res_norm = float(np.max(np.abs(r)))
    iterations = 0
    converged = res_norm <= spec.residual_tol

    while not converged and iterations < spec.max_iter:
        h = spec.fd_step * np.maximum(1.0, np.abs(U))
        pert = np.concatenate([U + np.diag(h), U - np.diag(h)], axis=0)
        R = residuals(pert)
        J = ((R[: 2 * n] - R[2 * n :]) / (2.0 * h[:, None])).T
        # Least squares: decoupled coordinates (zero row with zero residual)
        # leave the shooting system consistent but rank-deficient.
        delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        if not np.all(np.isfinite(delta)):
            break
        step_ok = False
        lam = 1.0
        for _ in range(20):
            r_try = residuals(U + lam * delta)[0]
            if np.max(np.abs(r_try)) < res_norm:
                U = U + lam * delta
                r = r_try
                res_norm = float(np.max(np.abs(r)))
                step_ok = True
                break
            lam *= 0.5
        iterations += 1
        if not step_ok:
            break
        converged = res_norm <= spec.residual_tol

    if not converged and raise_on_failure:
        raise NoConvergence(
            f"shooting stalled at residual {res_norm:.3e} after {iterations} iterations",
            iterations=iterations,
            best_residual=res_norm,
        )
    w1 = W1State.from_vector(states_from(U)[0], n, m)
    log = integrate(rp, w1, cfg)
    return ShootResult(log=log, converged=converged, residual=res_norm, iterations=iterations)


def trajectory_cost(rp: ReducedProblem, log: TrajectoryLog) -> float:
    """Quadrature of the cost density along a saved trajectory."""
    values = []
    for i in range(len(log.times)):
        s = log.state(i)
        values.append(float(rp.system._cost(s.q, s.y, log.controls[i])))
    return float(simpson(np.asarray(values), x=log.times))


# ---------------------------------------------------------------------------
# Plain quasivelocity integration (no momenta): oracles and replays
# ---------------------------------------------------------------------------

def integrate_free(sys, q0, y0, cfg: IntegratorConfig):
    """RK4 trajectory of the unforced quasivelocity dynamics."""

    def f(z):
        q, y = z[..., : sys.n], z[..., sys.n :]
        core = _core.compute_core(sys, q, y)
        ydot = _core.mass_solve(core, -core.b)
        return np.concatenate([core.v, ydot], axis=-1)

    return _fixed_rk4(f, np.concatenate([np.asarray(q0, float), np.asarray(y0, float)]), cfg)


def integrate_forced(sys, q0, y0, u_of_t, cfg: IntegratorConfig):
    """RK4 trajectory of the controlled quasivelocity dynamics under u(t)."""

    def f(t, z):
        q, y = z[..., : sys.n], z[..., sys.n :]
        core = _core.compute_core(sys, q, y)
        u = np.asarray(u_of_t(t), dtype=float)
        rhs = np.concatenate([u, np.zeros(sys.n - sys.m)], axis=-1)
        ydot = _core.mass_solve(core, rhs - core.b)
        return np.concatenate([core.v, ydot], axis=-1)

    z = np.concatenate([np.asarray(q0, float), np.asarray(y0, float)])
    t0, tf = cfg.t_span
    times = [t0]
    states = [z]
    if cfg.span > 0:
        n_steps = max(1, int(round(cfg.span / cfg.dt)))
        dt = cfg.span / n_steps
        for k in range(n_steps):
            z = _rk4_step_t(f, t0 + k * dt, z, dt)
            times.append(t0 + (k + 1) * dt)
            states.append(z)
    return np.asarray(times), np.asarray(states)


def _fixed_rk4(f, z0, cfg: IntegratorConfig):
    t0, tf = cfg.t_span
    times = [t0]
    states = [z0]
    z = z0
    if cfg.span > 0:
        n_steps = max(1, int(round(cfg.span / cfg.dt)))
        dt = cfg.span / n_steps
        for k in range(n_steps):
            z = _rk4_step(f, z, dt)
            times.append(t0 + (k + 1) * dt)
            states.append(z)
    return np.asarray(times), np.asarray(states)


def replay_controls(sys, times, controls, q0, y0, cfg: IntegratorConfig):
    """Re-simulate logged open-loop controls through the forced quasivelocity
    dynamics (an independent code path from the momentum formulation)."""
    spline = CubicSpline(np.asarray(times, float), np.asarray(controls, float), axis=0)
    t0, tf = float(times[0]), float(times[-1])

    def u_of_t(t):
        return spline(min(max(t, t0), tf))

    return integrate_forced(sys, q0, y0, u_of_t, cfg)
