"""Named invariant checks runnable against any configured system.

Each check measures one structural property (frame round trips, the bracket
oracle for structure coefficients, constraint closure, the presymplectic
equation residual, conservation along the flow, oracle comparisons) and
reports the measured value against its tolerance.  The check command and the
service expose these as a pass/fail report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numdiff
from .errors import HameloptError
from .flow import IntegratorConfig, BvpSpec, integrate, integrate_free, shoot
from .mechanics import (
    SecondOrderPoint,
    forced_dynamics,
    frame_point,
    free_dynamics,
    hamel_residual,
    quasi_to_velocity,
    velocity_to_quasi,
)
from .reduction import ReducedProblem, recover_controls, solve_constraints
from .skinner_rusk import (
    W0State,
    W1State,
    hamiltonian,
    lift_to_w1,
    lifted_velocity,
    presymplectic_form,
    primary_constraints,
    regularity,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


def _random_state(rng, n, m, scale=0.7):
    return W1State(
        q=scale * rng.standard_normal(n),
        y=scale * rng.standard_normal(n),
        ydot_a=scale * rng.standard_normal(m),
        p=scale * rng.standard_normal(n),
        ptilde_alpha=scale * rng.standard_normal(n - m),
    )


def _identity_frame(sys, rng) -> bool:
    for _ in range(3):
        q = rng.standard_normal(sys.n)
        if np.abs(sys._frame(q) - np.eye(sys.n)).max() > 1e-12:
            return False
    return True


def check_frame_round_trip(rp: ReducedProblem, rng, trials=100) -> CheckResult:
    """velocity_to_quasi inverts quasi_to_velocity."""
    sys = rp.system
    worst = 0.0
    for _ in range(trials):
        q = rng.standard_normal(sys.n)
        y = rng.standard_normal(sys.n)
        back = velocity_to_quasi(sys, q, quasi_to_velocity(sys, q, y))
        worst = max(worst, float(np.abs(back - y).max()))
    return CheckResult("frame-round-trip", worst <= 1e-10, worst, 1e-10)


def check_bracket_oracle(rp: ReducedProblem, rng, trials=50) -> CheckResult:
    """X(q) C(q) reproduces the finite-difference Lie brackets."""
    sys = rp.system
    n = sys.n
    worst = 0.0
    for _ in range(trials):
        q = rng.standard_normal(n)
        fp = frame_point(sys, q)

        def column(idx):
            return lambda qq: sys._frame(qq)[..., :, idx]

        for a in range(n):
            for b in range(a + 1, n):
                Ja = numdiff.jacobian(column(a), q)
                Jb = numdiff.jacobian(column(b), q)
                bracket = Jb @ fp.X[:, a] - Ja @ fp.X[:, b]
                err = np.abs(fp.X @ fp.C[:, a, b] - bracket).max()
                worst = max(worst, float(err))
    return CheckResult("bracket-oracle", worst <= 1e-6, worst, 1e-6)


def check_jacobi_identity(rp: ReducedProblem, rng, trials=5) -> CheckResult:
    """Cyclic coefficient sum vanishes when the coefficients are constant."""
    sys = rp.system
    qs = [rng.standard_normal(sys.n) for _ in range(trials)]
    Cs = [frame_point(sys, q).C for q in qs]
    spread = max(float(np.abs(C - Cs[0]).max()) for C in Cs)
    if spread > 1e-8:
        return CheckResult(
            "jacobi-constant-coefficients", True, 0.0, 1e-6, "skipped: coefficients vary with q"
        )
    C = Cs[0]
    cyc = (
        np.einsum("eab,fec->fabc", C, C)
        + np.einsum("ebc,fea->fabc", C, C)
        + np.einsum("eca,feb->fabc", C, C)
    )
    worst = float(np.abs(cyc).max())
    return CheckResult("jacobi-constant-coefficients", worst <= 1e-6, worst, 1e-6)


def check_constraint_closure(rp: ReducedProblem, rng, trials=100) -> CheckResult:
    """Constraints vanish at the solved accelerations."""
    sys = rp.system
    worst = 0.0
    for _ in range(trials):
        q = rng.standard_normal(sys.n)
        y = rng.standard_normal(sys.n)
        da = rng.standard_normal(sys.m)
        G = solve_constraints(rp, q, y, da)
        pt = SecondOrderPoint(q=q, y=y, ydot=np.concatenate([da, G]))
        resid = np.linalg.norm(hamel_residual(sys, pt)[sys.m :])
        worst = max(worst, float(resid))
    return CheckResult("constraint-closure", worst <= 1e-9, worst, 1e-9)


def check_constraint_affinity(rp: ReducedProblem, rng, trials=25) -> CheckResult:
    """Second difference of the constraints in the accelerations vanishes."""
    sys = rp.system
    worst = 0.0
    for _ in range(trials):
        q = rng.standard_normal(sys.n)
        y = rng.standard_normal(sys.n)
        ydot = rng.standard_normal(sys.n)
        d = rng.standard_normal(sys.n)

        def phi(t):
            pt = SecondOrderPoint(q=q, y=y, ydot=ydot + t * d)
            return hamel_residual(sys, pt)[sys.m :]

        second = phi(0.5) + phi(-0.5) - 2.0 * phi(0.0)
        worst = max(worst, float(np.abs(second).max()))
    return CheckResult("constraint-affinity", worst <= 1e-6, worst, 1e-6)


def check_control_recovery(rp: ReducedProblem, rng, trials=100) -> CheckResult:
    """Recovered controls reproduce the accelerations through the forced
    dynamics."""
    sys = rp.system
    worst = 0.0
    for _ in range(trials):
        q = rng.standard_normal(sys.n)
        y = rng.standard_normal(sys.n)
        da = rng.standard_normal(sys.m)
        G = solve_constraints(rp, q, y, da)
        ydot = np.concatenate([da, G])
        u = recover_controls(rp, SecondOrderPoint(q=q, y=y, ydot=ydot))
        _, ydot_back = forced_dynamics(sys, q, y, u)
        worst = max(worst, float(np.abs(ydot_back - ydot).max()))
    return CheckResult("control-recovery", worst <= 1e-8, worst, 1e-8)


def check_lift_round_trip(rp: ReducedProblem, rng, trials=100) -> CheckResult:
    """Primary constraints vanish on lifted states."""
    sys = rp.system
    worst = 0.0
    for _ in range(trials):
        s = _random_state(rng, sys.n, sys.m)
        w0 = lift_to_w1(rp, s.q, s.y, s.ydot_a, s.p, s.ptilde_alpha)
        worst = max(worst, float(np.abs(primary_constraints(rp, w0)).max()))
    return CheckResult("lift-round-trip", worst <= 1e-10, worst, 1e-10)


def check_hamiltonian_gradient(rp: ReducedProblem, rng, trials=20) -> CheckResult:
    """Primary constraints equal the acceleration-gradient of H."""
    sys = rp.system
    n, m = sys.n, sys.m
    worst = 0.0
    for _ in range(trials):
        s = _random_state(rng, n, m)
        w0 = lift_to_w1(rp, s.q, s.y, s.ydot_a, s.p, s.ptilde_alpha)
        w0 = W0State(
            q=w0.q,
            y=w0.y,
            ydot_a=w0.ydot_a,
            p=w0.p,
            ptilde=w0.ptilde + rng.standard_normal(n),
        )
        phi = primary_constraints(rp, w0)

        def H_of_da(da):
            return hamiltonian(
                rp, W0State(q=w0.q, y=w0.y, ydot_a=da, p=w0.p, ptilde=w0.ptilde)
            )

        grad = numdiff.gradient(H_of_da, w0.ydot_a)
        worst = max(worst, float(np.abs(phi - grad).max()))
    return CheckResult("hamiltonian-gradient", worst <= 1e-6, worst, 1e-6)


def check_regularity_jacobian(rp: ReducedProblem, rng, trials=20) -> CheckResult:
    """R matches the acceleration-Jacobian of the primary constraints.

    phi_a = ptilde_a + ptilde_alpha dG/da - d(tilde_L)/da, so dphi/da = -R.
    """
    sys = rp.system
    worst = 0.0
    for _ in range(trials):
        s = _random_state(rng, sys.n, sys.m)
        rep = regularity(rp, s)

        def phi_of_da(da):
            w0 = lift_to_w1(rp, s.q, s.y, s.ydot_a, s.p, s.ptilde_alpha)
            return primary_constraints(
                rp,
                W0State(q=s.q, y=s.y, ydot_a=da, p=s.p, ptilde=w0.ptilde),
            )

        J = numdiff.jacobian(phi_of_da, s.ydot_a)
        worst = max(worst, float(np.abs(J + rep.R).max()))
    return CheckResult("regularity-jacobian", worst <= 1e-5, worst, 1e-5)


def check_presymplectic_residual(rp: ReducedProblem, rng, trials=20) -> CheckResult:
    """Componentwise residual of the presymplectic equation on tangent
    directions of the constraint submanifold."""
    sys = rp.system
    n, m = sys.n, sys.m
    omega = presymplectic_form(n, m).matrix
    worst = 0.0
    for _ in range(trials):
        s = _random_state(rng, n, m)
        if not regularity(rp, s).symplectic:
            continue
        vel = lifted_velocity(rp, s)
        w0 = lift_to_w1(rp, s.q, s.y, s.ydot_a, s.p, s.ptilde_alpha)
        vec0 = w0.as_vector()

        def H_of(vec):
            return hamiltonian(rp, W0State.from_vector(vec, n, m))

        def phi_of(vec):
            return primary_constraints(rp, W0State.from_vector(vec, n, m))

        dH = numdiff.gradient(H_of, vec0)
        dphi = numdiff.jacobian(phi_of, vec0)
        _, _, vh = np.linalg.svd(dphi)
        tangent = vh[m:].T  # basis of ker dphi
        resid = (vel @ omega - dH) @ tangent
        worst = max(worst, float(np.abs(resid).max()))
    return CheckResult("presymplectic-residual", worst <= 1e-6, worst, 1e-6)


def check_constraint_preservation(rp: ReducedProblem, rng, trials=20) -> CheckResult:
    """First-order invariance of the primary constraints under the field."""
    sys = rp.system
    n, m = sys.n, sys.m
    worst = 0.0
    delta = 1e-5
    for _ in range(trials):
        s = _random_state(rng, n, m)
        if not regularity(rp, s).symplectic:
            continue
        vel = lifted_velocity(rp, s)
        w0 = lift_to_w1(rp, s.q, s.y, s.ydot_a, s.p, s.ptilde_alpha).as_vector()
        phi_plus = primary_constraints(rp, W0State.from_vector(w0 + delta * vel, n, m))
        phi_minus = primary_constraints(rp, W0State.from_vector(w0 - delta * vel, n, m))
        rate = np.abs(phi_plus - phi_minus).max() / (2 * delta)
        worst = max(worst, float(rate))
    return CheckResult("constraint-preservation", worst <= 1e-6, worst, 1e-6)


def check_conservation(rp: ReducedProblem, rng) -> CheckResult:
    """Hamiltonian drift and constraint residual along a short trajectory."""
    sys = rp.system
    s = _random_state(rng, sys.n, sys.m, scale=0.5)
    cfg = IntegratorConfig(dt=1e-3, t_span=(0.0, 0.5), save_every=25)
    log = integrate(rp, s, cfg)
    if not log.completed:
        return CheckResult("flow-conservation", False, np.inf, 1e-8, log.failure or "")
    drift = float(np.abs(log.hamiltonian - log.hamiltonian[0]).max())
    scale = max(1.0, abs(log.hamiltonian[0]))
    return CheckResult("flow-conservation", drift <= 1e-8 * scale, drift, 1e-8 * scale)


def check_energy_free_flow(rp: ReducedProblem, rng) -> CheckResult:
    """The energy y . dl/dy - l is conserved along the unforced flow."""
    sys = rp.system
    q0 = 0.3 * rng.standard_normal(sys.n)
    y0 = 0.5 * rng.standard_normal(sys.n)

    def energy(q, y):
        gy = numdiff.gradient(lambda yy: float(sys._l(q, yy)), y)
        return float(gy @ y - sys._l(q, y))

    times, states = integrate_free(sys, q0, y0, IntegratorConfig(dt=1e-3, t_span=(0.0, 1.0)))
    e0 = energy(states[0, : sys.n], states[0, sys.n :])
    drift = max(
        abs(energy(states[i, : sys.n], states[i, sys.n :]) - e0)
        for i in range(0, len(times), 100)
    )
    return CheckResult("free-flow-energy", drift <= 1e-8, drift, 1e-8)


def _euler_lagrange_rhs(L, q, qdot):
    """Accelerations from the coordinate Euler-Lagrange equations of L."""
    n = q.size

    def of_qdot(v):
        return float(L(q, v))

    M = numdiff.hessian(of_qdot, qdot)
    gq = numdiff.gradient(lambda qq: float(L(qq, qdot)), q)
    mixed = numdiff.jacobian(
        lambda qq: numdiff.gradient(lambda v: float(L(qq, v)), qdot), q
    )
    return np.linalg.solve(M, gq - mixed @ qdot)


def check_euler_lagrange_equivalence(rp: ReducedProblem, rng) -> CheckResult:
    """Identity-frame dynamics matches direct Euler-Lagrange integration."""
    sys = rp.system
    if sys.lagrangian is None or not _identity_frame(sys, rng):
        return CheckResult(
            "euler-lagrange-equivalence", True, 0.0, 1e-6, "skipped: needs an identity-frame L(q, v) system"
        )
    q0 = 0.4 * rng.standard_normal(sys.n)
    v0 = 0.4 * rng.standard_normal(sys.n)
    cfg = IntegratorConfig(dt=1e-3, t_span=(0.0, 1.0))
    times, states = integrate_free(sys, q0, v0, cfg)

    z = np.concatenate([q0, v0])
    dt = times[1] - times[0]
    L = sys.lagrangian

    def f(zz):
        q, v = zz[: sys.n], zz[sys.n :]
        return np.concatenate([v, _euler_lagrange_rhs(L, q, v)])

    from .flow import _rk4_step

    worst = 0.0
    for k in range(len(times) - 1):
        z = _rk4_step(f, z, dt)
        if (k + 1) % 100 == 0:
            worst = max(worst, float(np.abs(z - states[k + 1]).max()))
    return CheckResult("euler-lagrange-equivalence", worst <= 1e-6, worst, 1e-6)


def check_lq_closed_form(rp: ReducedProblem, rng) -> CheckResult:
    """Shooting on the point-mass problem returns the textbook cubic."""
    sys = rp.system
    if sys.name != "point-mass-lq":
        return CheckResult("lq-closed-form", True, 0.0, 1e-6, "skipped: point-mass-lq only")
    spec = BvpSpec(q0=[0.0, 0.0], y0=[0.0, 0.0], qf=[1.0, 0.0], yf=[0.0, 0.0])
    cfg = IntegratorConfig(dt=0.01, t_span=(0.0, 1.0), save_every=1)
    res = shoot(rp, spec, cfg)
    if not res.converged:
        return CheckResult("lq-closed-form", False, np.inf, 1e-6, "shooting did not converge")
    t = res.log.times
    err = float(np.abs(res.log.controls[:, 0] - (6.0 - 12.0 * t)).max())
    return CheckResult("lq-closed-form", err <= 1e-6, err, 1e-6)


ALL_CHECKS = (
    check_frame_round_trip,
    check_bracket_oracle,
    check_jacobi_identity,
    check_constraint_closure,
    check_constraint_affinity,
    check_control_recovery,
    check_lift_round_trip,
    check_hamiltonian_gradient,
    check_regularity_jacobian,
    check_presymplectic_residual,
    check_constraint_preservation,
    check_conservation,
    check_energy_free_flow,
    check_euler_lagrange_equivalence,
    check_lq_closed_form,
)


def run_checks(rp: ReducedProblem, seed: int = 0) -> list[CheckResult]:
    """Run the full invariant suite; library errors become failed results."""
    results = []
    for fn in ALL_CHECKS:
        rng = np.random.default_rng(seed)
        try:
            results.append(fn(rp, rng))
        except HameloptError as exc:
            name = fn.__name__.removeprefix("check_").replace("_", "-")
            results.append(
                CheckResult(name, False, float("inf"), 0.0, f"{type(exc).__name__}: {exc}")
            )
    return results
