"""Built-in example systems.

The planar rigid body is the main benchmark: two body-frame thrusters, one
applied at an offset h from the center of mass, so three degrees of freedom
are driven by two controls.  The point-mass system is a fully hand-solvable
linear-quadratic oracle, and ``coordinate_wrap`` embeds an ordinary
Lagrangian with the identity frame so quasivelocity dynamics can be checked
against direct Euler-Lagrange integration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mechanics import MechanicalSystem

COST_KINDS = ("quadratic", "constant")


def _quadratic_cost(q, y, u):
    del q, y
    return 0.5 * np.sum(u * u, axis=-1)


def _constant_cost(q, y, u):
    # Broadcast-shaped constant; derivative-free in u, so the regularity
    # matrix degenerates to zero.
    return (q[..., 0] + y[..., 0] + u[..., 0]) * 0.0 + 1.0


def _pick_cost(cost: str):
    if cost not in COST_KINDS:
        raise ValueError(f"unknown cost kind {cost!r}; expected one of {COST_KINDS}")
    return _quadratic_cost if cost == "quadratic" else _constant_cost


@dataclass(frozen=True)
class PlanarRigidBodyParams:
    """Mass (kg), moment of inertia (kg m^2), and thruster offset (m)."""

    mass: float = 1.0
    inertia: float = 1.0
    offset: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and self.inertia > 0 and self.offset > 0):
            raise ValueError("mass, inertia and offset must all be positive")


def planar_rigid_body(
    params: PlanarRigidBodyParams | None = None, *, cost: str = "quadratic"
) -> MechanicalSystem:
    """Planar rigid body with body-frame thrust controls.

    Configuration is (x, y, theta) in R^2 x S^1 with kinetic Lagrangian
    built from diag(m, m, J).  Columns 1 and 2 of the frame span the
    actuated directions; column 3 completes the basis.
    """
    if params is None:
        params = PlanarRigidBodyParams()
    mb, J, h = params.mass, params.inertia, params.offset

    def frame(q):
        th = q[..., 2]
        c, s = np.cos(th), np.sin(th)
        one = np.ones_like(c)
        zero = np.zeros_like(c)
        row_x = np.stack([c / mb, -s / mb, h * s], axis=-1)
        row_y = np.stack([s / mb, c / mb, -h * c], axis=-1)
        row_th = np.stack([zero, -(h / J) * one, -one], axis=-1)
        return np.stack([row_x, row_y, row_th], axis=-2)

    # Reduced kinetic energy is diagonal and independent of q.
    m1 = 1.0 / mb
    m2 = (mb * h * h + J) / (mb * J)
    m3 = mb * h * h + J

    def reduced(q, y):
        del q
        return 0.5 * (
            m1 * y[..., 0] ** 2 + m2 * y[..., 1] ** 2 + m3 * y[..., 2] ** 2
        )

    return MechanicalSystem(
        n=3,
        m=2,
        frame=frame,
        reduced_lagrangian=reduced,
        cost=_pick_cost(cost),
        periodic=(False, False, True),
        vectorized=True,
        analytic=True,
        name="planar-rigid-body",
    )


def point_mass_lq(*, cost: str = "quadratic") -> MechanicalSystem:
    """Point mass on a line plus a coasting auxiliary coordinate.

    Identity frame, L = |v|^2 / 2, control on the first coordinate only.
    The extremals of the quadratic-cost problem are hand-computable cubics,
    which makes this the boundary-value oracle.
    """

    def frame(q):
        return np.broadcast_to(np.eye(2), q.shape[:-1] + (2, 2))

    def lagrangian(q, v):
        del q
        return 0.5 * np.sum(v * v, axis=-1)

    return MechanicalSystem(
        n=2,
        m=1,
        frame=frame,
        lagrangian=lagrangian,
        cost=_pick_cost(cost),
        vectorized=True,
        analytic=True,
        name="point-mass-lq",
    )


def coordinate_wrap(
    lagrangian,
    n: int,
    m: int,
    *,
    cost=None,
    force=None,
    vectorized: bool = False,
    analytic: bool = False,
    name: str = "coordinate-wrap",
) -> MechanicalSystem:
    """Wrap an ordinary Lagrangian L(q, qdot) with the identity frame.

    Quasivelocities then coincide with velocities and the quasivelocity
    dynamics must reproduce direct Euler-Lagrange integration of L.
    """

    def frame(q):
        return np.broadcast_to(np.eye(n), q.shape[:-1] + (n, n))

    return MechanicalSystem(
        n=n,
        m=m,
        frame=frame,
        lagrangian=lagrangian,
        cost=_quadratic_cost if cost is None else cost,
        force=force,
        vectorized=vectorized,
        analytic=analytic,
        name=name,
    )


def make_system(name: str, params: dict | None = None) -> MechanicalSystem:
    """Instantiate a built-in system by CLI name with parameter overrides."""
    params = dict(params or {})
    cost = params.pop("cost", "quadratic")
    if name == "planar-rigid-body":
        body = PlanarRigidBodyParams(
            mass=float(params.pop("mass", 1.0)),
            inertia=float(params.pop("inertia", 1.0)),
            offset=float(params.pop("offset", 1.0)),
        )
        if params:
            raise ValueError(f"unknown parameters for {name}: {sorted(params)}")
        return planar_rigid_body(body, cost=cost)
    if name == "point-mass-lq":
        if params:
            raise ValueError(f"unknown parameters for {name}: {sorted(params)}")
        return point_mass_lq(cost=cost)
    raise ValueError(
        f"unknown system {name!r}; built-ins are 'planar-rigid-body' and 'point-mass-lq'"
    )
