import numpy as np
import pytest

from hamelopt import DiffConfig, gradient, hessian, jacobian
from hamelopt.errors import NonFiniteEvaluation
from hamelopt.numdiff import complex_step_gradient

CENTRAL = DiffConfig()
DUAL = DiffConfig(scheme="dual-number")


def test_gradient_quadratic():
    g = gradient(lambda x: x[0] ** 2 + x[1] ** 2, np.array([1.0, 2.0]))
    assert np.abs(g - [2.0, 4.0]).max() < 1e-8


def test_gradient_constant_is_zero():
    for cfg in (CENTRAL, DUAL):
        g = gradient(lambda x: 3.0, np.array([0.3, -0.7, 2.0]), cfg)
        assert np.abs(g).max() == 0.0


def test_gradient_rigid_body_lagrangian():
    # l = [(y1)^2 + 2 (y2)^2 + 2 (y3)^2] / 2 at unit parameters
    def l(y):
        return 0.5 * (y[0] ** 2 + 2 * y[1] ** 2 + 2 * y[2] ** 2)

    g = gradient(l, np.ones(3))
    assert np.abs(g - [1.0, 2.0, 2.0]).max() < 1e-8


def test_jacobian_linear_map():
    A = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    J = jacobian(lambda x: A @ x, np.array([0.3, -0.2, 1.4]))
    assert np.abs(J - A).max() < 1e-8


def test_jacobian_identity():
    J = jacobian(lambda x: x, np.array([1.0, -2.0]))
    assert np.abs(J - np.eye(2)).max() < 1e-8


def test_jacobian_rigid_frame_theta_row(rigid_body):
    # only the theta column of the flattened-frame Jacobian is nonzero
    def flat(q):
        return rigid_body.frame(q).reshape(9)

    J = jacobian(flat, np.array([0.4, -1.2, np.pi / 2]))
    assert np.abs(J[:, :2]).max() < 1e-8
    expected = np.array([-1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0])
    assert np.abs(J[:, 2] - expected).max() < 1e-8


def test_hessian_diagonal_quadratic():
    D = np.diag([1.0, 2.0, 2.0])
    H = hessian(lambda x: 0.5 * x @ D @ x, np.array([0.3, -0.6, 1.1]))
    assert np.abs(H - D).max() < 1e-6


def test_hessian_constant_zero():
    H = hessian(lambda x: -2.5, np.array([1.0, 2.0]))
    assert np.abs(H).max() < 1e-12


def test_hessian_exactly_symmetric():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))

    def f(x):
        return float(np.sin(x[0]) * x[1] + x @ A @ x)

    H = hessian(f, rng.standard_normal(3))
    assert np.abs(H - H.T).max() == 0.0


@pytest.mark.parametrize("cfg,tol", [(CENTRAL, 1e-6), (DUAL, 1e-12)])
def test_polynomials_match_closed_forms(cfg, tol):
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        A = rng.standard_normal((n, n))
        A = 0.5 * (A + A.T)
        b = rng.standard_normal(n)
        c = float(rng.standard_normal())
        x = rng.uniform(-2.0, 2.0, size=n)

        def f(z):
            return 0.5 * z @ A @ z + b @ z + c

        assert np.abs(gradient(f, x, cfg) - (A @ x + b)).max() < tol
        assert np.abs(hessian(f, x, cfg) - A).max() < tol


def test_dual_jacobian_polynomial():
    A = np.array([[2.0, -1.0], [0.0, 3.0]])
    J = jacobian(lambda x: A @ x, np.array([0.2, 0.4]), DUAL)
    assert np.abs(J - A).max() < 1e-14


def test_central_gradient_second_order_convergence():
    """Error of the central gradient decays like step^2 for smooth
    compositions of sin, cos, products and sums."""
    rng = np.random.default_rng(7)

    def make_func(seed):
        r = np.random.default_rng(seed)
        a, b, c = r.uniform(0.5, 2.0, size=3)
        w = r.standard_normal(3)

        def f(x):
            return np.sin(a * x[0]) * np.cos(b * x[1]) + c * x[2] * np.sin(x[0] + x[1]) + w @ x

        return f

    steps = np.array([3e-2, 1e-2, 3e-3, 1e-3])
    slopes = []
    for trial in range(20):
        f = make_func(trial)
        x = rng.uniform(-1.5, 1.5, size=3)
        exact = complex_step_gradient(f, x)
        errs = []
        for h in steps:
            g = gradient(f, x, DiffConfig(step=h))
            errs.append(max(np.abs(g - exact).max(), 1e-16))
        slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
        slopes.append(slope)
    slopes = np.asarray(slopes)
    assert np.all(np.abs(slopes - 2.0) < 0.2)


def test_non_finite_evaluation_carries_input():
    def f(x):
        with np.errstate(divide="ignore"):
            return 1.0 / x[0]

    with pytest.raises(NonFiniteEvaluation) as excinfo:
        gradient(f, np.array([0.0, 1.0]))
    assert excinfo.value.x is not None


def test_diff_config_validation():
    with pytest.raises(ValueError):
        DiffConfig(step=0.0)
    with pytest.raises(ValueError):
        DiffConfig(scheme="forward")
