"""Optimal control of underactuated mechanical systems via quasivelocities.

The library reduces an underactuated optimal control problem to a
constrained second-order variational problem, assembles the associated
presymplectic (Skinner-Rusk style) dynamics, verifies the regularity
condition that makes the first constraint submanifold symplectic, and
integrates or shoots the resulting boundary-value dynamics while monitoring
the geometric invariants.
"""

from .errors import (
    ConfigError,
    HameloptError,
    NoConvergence,
    NonFiniteEvaluation,
    RegularityFailure,
    SingularFrame,
    SingularHessianBlock,
    SingularMassMatrix,
    StepSizeUnderflow,
)
from .flow import (
    BvpSpec,
    IntegratorConfig,
    ShootResult,
    TrajectoryLog,
    integrate,
    integrate_forced,
    integrate_free,
    monitor_symplecticity,
    replay_controls,
    shoot,
    trajectory_cost,
)
from .mechanics import (
    FramePoint,
    MechanicalSystem,
    SecondOrderPoint,
    forced_dynamics,
    frame_point,
    free_dynamics,
    hamel_residual,
    quasi_to_velocity,
    reduced_lagrangian,
    structure_coefficients,
    velocity_to_quasi,
)
from .numdiff import DiffConfig, Dual, gradient, hessian, jacobian
from .reduction import (
    ReducedProblem,
    constraint_values,
    recover_controls,
    solve_constraints,
    tilde_L,
)
from .skinner_rusk import (
    PresymplecticForm,
    RegularityReport,
    W0State,
    W1State,
    hamiltonian,
    lift_to_w1,
    lifted_velocity,
    presymplectic_form,
    primary_constraints,
    regularity,
    w1_vector_field,
)
from .systems import (
    PlanarRigidBodyParams,
    coordinate_wrap,
    make_system,
    planar_rigid_body,
    point_mass_lq,
)

__version__ = "0.1.0"
