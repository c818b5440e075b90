import numpy as np
import pytest

from hamelopt import (
    BvpSpec,
    IntegratorConfig,
    ReducedProblem,
    W1State,
    integrate,
    monitor_symplecticity,
    planar_rigid_body,
    replay_controls,
    shoot,
    trajectory_cost,
)
from hamelopt.errors import NoConvergence, RegularityFailure
from hamelopt.flow import _rk4_step


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(t_span=(1.0, 0.0))
    IntegratorConfig(t_span=(0.5, 0.5))  # zero-length span is allowed


def test_rk4_step_matches_taylor_degree_4():
    lam = -0.7
    dt = 0.3
    z = _rk4_step(lambda y: lam * y, np.array([1.0]), dt)
    x = lam * dt
    taylor = 1.0 + x + x**2 / 2 + x**3 / 6 + x**4 / 24
    assert abs(z[0] - taylor) < 1e-15


def test_integrate_zero_span_single_row(rigid_problem):
    w1 = W1State(q=np.zeros(3), y=np.ones(3), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    log = integrate(rigid_problem, w1, IntegratorConfig(t_span=(0.0, 0.0)))
    assert len(log.times) == 1
    assert np.array_equal(log.states[0], w1.as_vector())


def test_integrate_fixed_point(rigid_problem):
    w1 = W1State(q=np.zeros(3), y=np.zeros(3), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    log = integrate(rigid_problem, w1, IntegratorConfig(dt=1e-2, t_span=(0.0, 0.5)))
    assert np.abs(log.states - log.states[0]).max() < 1e-14
    assert np.abs(log.controls).max() < 1e-12


def test_integrate_conserves_hamiltonian(rigid_problem):
    w1 = W1State(q=np.zeros(3), y=np.array([1.0, 0.0, 0.0]), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    cfg = IntegratorConfig(dt=1e-3, t_span=(0.0, 1.0), save_every=10)
    log = integrate(rigid_problem, w1, cfg)
    assert len(log.times) == 101
    assert np.abs(log.hamiltonian - log.hamiltonian[0]).max() <= 1e-8
    assert np.abs(log.constraint_residual).max() <= 1e-12


def test_integrate_point_mass_exact_cubic(point_mass_problem):
    # initial data of the hand-solved extremal: dy(0) = 6, p = (12, 0)
    w1 = W1State(q=np.zeros(2), y=np.zeros(2), ydot_a=np.array([6.0]), p=np.array([12.0, 0.0]), ptilde_alpha=np.zeros(1))
    log = integrate(point_mass_problem, w1, IntegratorConfig(dt=1e-2, t_span=(0.0, 1.0)))
    t = log.times
    assert np.abs(log.states[:, 0] - (3 * t**2 - 2 * t**3)).max() < 1e-6
    assert np.abs(log.controls[:, 0] - (6.0 - 12.0 * t)).max() < 1e-6


def test_integrate_flags_regularity_loss_mid_run():
    """A cost block decaying along the trajectory sinks det R below the
    relative gate part way through the run."""

    def fading_cost(q, y, u):
        return 0.5 * u[..., 0] ** 2 + 0.5 * np.exp(-20.0 * q[..., 0]) * u[..., 1] ** 2

    sys_ = planar_rigid_body()
    sys_deg = type(sys_)(
        n=3, m=2, frame=sys_.frame, cost=fading_cost,
        reduced_lagrangian=sys_.reduced_lagrangian,
        vectorized=True, analytic=True, name="degenerating",
    )
    rp = ReducedProblem(sys_deg)
    # pure translation q1 = t with zero controls; R_22 ~ 4 exp(-20 t)
    w1 = W1State(q=np.zeros(3), y=np.array([1.0, 0.0, 0.0]), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    log = integrate(rp, w1, IntegratorConfig(dt=1e-2, t_span=(0.0, 2.0), save_every=10))
    assert not log.completed
    assert log.failure_kind == "regularity"
    assert 1 <= len(log.times)
    assert log.times[-1] < 2.0


def test_integrate_raises_at_degenerate_start():
    rp = ReducedProblem(planar_rigid_body(cost="constant"))
    w1 = W1State(q=np.zeros(3), y=np.zeros(3), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    with pytest.raises(RegularityFailure):
        integrate(rp, w1, IntegratorConfig(dt=1e-3, t_span=(0.0, 1.0)))


def test_adaptive_step_underflow_raises(rigid_problem):
    from hamelopt.errors import StepSizeUnderflow

    w1 = W1State(
        q=np.zeros(3), y=np.array([1.0, 0.5, -0.4]), ydot_a=np.array([0.3, 0.1]),
        p=np.array([0.2, 0.1, -0.3]), ptilde_alpha=np.array([0.2]),
    )
    # unattainable error target: every step is rejected until dt underflows
    cfg = IntegratorConfig(method="rk45-adaptive", dt=1e-3, rtol=1e-300, atol=1e-300, t_span=(0.0, 1.0))
    with pytest.raises(StepSizeUnderflow):
        integrate(rigid_problem, w1, cfg)


def test_adaptive_matches_fixed_step(rigid_problem):
    w1 = W1State(
        q=np.array([0.1, -0.2, 0.5]), y=np.array([0.8, 0.5, -0.6]),
        ydot_a=np.array([0.3, -0.4]), p=np.array([0.4, -0.3, 0.2]), ptilde_alpha=np.array([0.25]),
    )
    fixed = integrate(rigid_problem, w1, IntegratorConfig(dt=1e-3, t_span=(0.0, 0.5), save_every=500))
    adaptive = integrate(
        rigid_problem, w1,
        IntegratorConfig(method="rk45-adaptive", dt=1e-2, t_span=(0.0, 0.5), save_every=1000),
    )
    assert adaptive.completed
    assert np.abs(adaptive.times[-1] - 0.5) < 1e-12
    assert np.abs(adaptive.states[-1] - fixed.states[-1]).max() < 1e-6


def test_hamiltonian_drift_order_four(rigid_problem):
    w1 = W1State(
        q=np.array([0.1, -0.2, 0.5]), y=3.0 * np.array([0.8, 0.5, -0.6]),
        ydot_a=3.0 * np.array([0.3, -0.4]), p=3.0 * np.array([0.4, -0.3, 0.2]),
        ptilde_alpha=np.array([0.75]),
    )
    drifts = []
    dts = (1.6e-2, 8e-3, 4e-3)
    for dt in dts:
        log = integrate(rigid_problem, w1, IntegratorConfig(dt=dt, t_span=(0.0, 1.0)))
        drifts.append(np.abs(log.hamiltonian - log.hamiltonian[0]).max())
    ratio = drifts[0] / drifts[1]
    assert 16.0 * 0.7 <= ratio <= 16.0 * 1.3
    slope = np.polyfit(np.log(dts), np.log(drifts), 1)[0]
    assert abs(slope - 4.0) < 0.3


# -- symplecticity monitor ----------------------------------------------------

def test_monitor_zero_time_is_exact(rigid_problem):
    # identity flow: nothing left but round-off of the probe differencing
    rng = np.random.default_rng(0)
    w1 = W1State(q=np.zeros(3), y=np.array([1.0, 0.0, 0.0]), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    dirs = rng.standard_normal((4, 12))
    drift = monitor_symplecticity(rigid_problem, w1, IntegratorConfig(dt=1e-2, t_span=(0.0, 0.0)), dirs)
    assert drift < 1e-10


def test_monitor_point_mass_linear_flow(point_mass_problem):
    rng = np.random.default_rng(1)
    w1 = W1State(q=np.array([0.2, 0.1]), y=np.array([0.3, -0.2]), ydot_a=np.array([0.5]), p=np.array([1.0, 0.2]), ptilde_alpha=np.array([0.4]))
    dirs = rng.standard_normal((12, 8))
    drift = monitor_symplecticity(point_mass_problem, w1, IntegratorConfig(dt=1e-3, t_span=(0.0, 1.0)), dirs)
    assert drift <= 1e-6


def test_monitor_rigid_body(rigid_problem):
    rng = np.random.default_rng(2)
    w1 = W1State(
        q=np.array([0.1, -0.2, 0.5]), y=np.array([0.8, 0.5, -0.6]),
        ydot_a=np.array([0.3, -0.4]), p=np.array([0.4, -0.3, 0.2]), ptilde_alpha=np.array([0.25]),
    )
    dirs = rng.standard_normal((12, 12))
    drift = monitor_symplecticity(rigid_problem, w1, IntegratorConfig(dt=1e-2, t_span=(0.0, 1.0)), dirs)
    assert drift <= 1e-4


# -- shooting -----------------------------------------------------------------

def test_shoot_lq_textbook(point_mass_problem):
    spec = BvpSpec(q0=[0.0, 0.0], y0=[0.0, 0.0], qf=[1.0, 0.0], yf=[0.0, 0.0])
    cfg = IntegratorConfig(dt=0.01, t_span=(0.0, 1.0), save_every=1)
    res = shoot(point_mass_problem, spec, cfg)
    assert res.converged
    t = res.log.times
    assert np.abs(res.log.controls[:, 0] - (6.0 - 12.0 * t)).max() < 1e-6
    assert abs(trajectory_cost(point_mass_problem, res.log) - 6.0) < 1e-4


def test_shoot_zero_maneuver_trivial(rigid_problem):
    spec = BvpSpec(q0=np.zeros(3), y0=np.zeros(3), qf=np.zeros(3), yf=np.zeros(3))
    cfg = IntegratorConfig(dt=5e-3, t_span=(0.0, 0.5), save_every=10)
    res = shoot(rigid_problem, spec, cfg)
    assert res.converged
    assert res.iterations <= 2
    assert np.abs(res.log.controls).max() < 1e-10
    assert trajectory_cost(rigid_problem, res.log) < 1e-12


def test_shoot_rigid_body_small_maneuver(rigid_problem):
    spec = BvpSpec(q0=np.zeros(3), y0=np.zeros(3), qf=[0.1, 0.0, 0.0], yf=np.zeros(3))
    cfg = IntegratorConfig(dt=2e-3, t_span=(0.0, 1.0), save_every=5)
    res = shoot(rigid_problem, spec, cfg)
    assert res.converged
    assert res.residual <= 1e-6
    # replay the recovered open-loop controls through the forced dynamics
    _, states = replay_controls(
        rigid_problem.system, res.log.times, res.log.controls, spec.q0, spec.y0, cfg
    )
    terminal = np.concatenate([states[-1, :3] - spec.qf, states[-1, 3:] - spec.yf])
    assert np.abs(terminal).max() <= 1e-5


def test_shoot_raise_on_failure(point_mass_problem):
    # unreachable with one iteration allowed and a hopeless tolerance
    spec = BvpSpec(
        q0=[0.0, 0.0], y0=[0.0, 0.0], qf=[1.0, 0.0], yf=[0.0, 0.0],
        max_iter=0, residual_tol=1e-16,
    )
    cfg = IntegratorConfig(dt=0.05, t_span=(0.0, 1.0))
    res = shoot(point_mass_problem, spec, cfg)
    assert not res.converged
    with pytest.raises(NoConvergence):
        shoot(point_mass_problem, spec, cfg, raise_on_failure=True)


def test_trajectory_log_accessors(rigid_problem):
    w1 = W1State(q=np.zeros(3), y=np.array([1.0, 0.0, 0.0]), ydot_a=np.zeros(2), p=np.zeros(3), ptilde_alpha=np.zeros(1))
    log = integrate(rigid_problem, w1, IntegratorConfig(dt=1e-2, t_span=(0.0, 0.1)))
    first = log.initial_state
    assert np.array_equal(first.as_vector(), w1.as_vector())
    assert log.final_state.as_vector().shape == (12,)
