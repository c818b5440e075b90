import numpy as np
import pytest

from hamelopt import (
    PlanarRigidBodyParams,
    ReducedProblem,
    coordinate_wrap,
    planar_rigid_body,
    point_mass_lq,
)


@pytest.fixture
def rigid_body():
    """Unit-parameter planar rigid body (m = J = h = 1)."""
    return planar_rigid_body()


@pytest.fixture
def rigid_problem(rigid_body):
    return ReducedProblem(rigid_body)


@pytest.fixture
def point_mass():
    return point_mass_lq()


@pytest.fixture
def point_mass_problem(point_mass):
    return ReducedProblem(point_mass)


def harmonic_oscillator(n=2, m=1, k=1.0):
    """Identity-frame oscillator: L = |v|^2/2 - k |q|^2/2."""

    def lagrangian(q, v):
        return 0.5 * np.sum(v * v, axis=-1) - 0.5 * k * np.sum(q * q, axis=-1)

    return coordinate_wrap(
        lagrangian, n, m, vectorized=True, analytic=True, name="harmonic-oscillator"
    )


def random_rigid_params(rng):
    mass, inertia, offset = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=3))
    return PlanarRigidBodyParams(mass=mass, inertia=inertia, offset=offset)
