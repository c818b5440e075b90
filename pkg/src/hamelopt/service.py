"""HTTP service wrapping the library.

Four workflow endpoints (derive, simulate, solve, check) plus system
discovery and a health probe.  The CLI is a thin client of this service; it
mounts the app in-process by default, so the same request and response
models serve both deployments.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .checks import run_checks
from .config import (
    BoundarySection,
    CheckSection,
    IntegratorSection,
    NewtonSection,
    StateSection,
    SystemSection,
)
from .errors import HameloptError, NonFiniteEvaluation, RegularityFailure
from .flow import BvpSpec, IntegratorConfig, integrate, shoot, trajectory_cost
from .mechanics import SecondOrderPoint, hamel_residual, structure_coefficients
from .output import trajectory_columns, trajectory_rows
from .reduction import ReducedProblem, solve_constraints
from .skinner_rusk import W1State, regularity
from .systems import make_system


# ---------------------------------------------------------------------------
# Request / response models
# ---------------------------------------------------------------------------

class DeriveRequest(BaseModel):
    system: SystemSection
    state: StateSection = StateSection()


class StructureEntry(BaseModel):
    """One nonzero structure coefficient C^d_{ab} (1-based indices)."""

    d: int
    a: int
    b: int
    value: float


class DeriveResponse(BaseModel):
    n: int
    m: int
    structure_nonzero: list[StructureEntry]
    constraint_residual: float
    constraint_solution: list[float]
    regularity_matrix: list[list[float]]
    det: float
    condition: float
    symplectic: bool


class TrajectoryPayload(BaseModel):
    columns: list[str]
    rows: list[list[float]]


class SimulateRequest(BaseModel):
    system: SystemSection
    state: StateSection = StateSection()
    integrator: IntegratorSection = IntegratorSection()


class SimulateResponse(BaseModel):
    status: Literal["ok", "regularity-failure", "nonfinite"]
    trajectory: TrajectoryPayload
    failure: Optional[str] = None


class SolveRequest(BaseModel):
    system: SystemSection
    boundary: BoundarySection
    integrator: IntegratorSection = IntegratorSection()
    newton: NewtonSection = NewtonSection()


class SolveSummary(BaseModel):
    converged: bool
    iterations: int
    residual: float
    cost: float


class SolveResponse(BaseModel):
    status: Literal["ok", "no-convergence", "regularity-failure"]
    trajectory: TrajectoryPayload
    summary: Optional[SolveSummary] = None
    failure: Optional[str] = None


class CheckRequest(BaseModel):
    system: SystemSection
    check: CheckSection = CheckSection()


class CheckItem(BaseModel):
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


class CheckResponse(BaseModel):
    passed: bool
    checks: list[CheckItem]


class SystemInfo(BaseModel):
    name: str
    n: int
    m: int
    parameters: list[str]


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _build_problem(section: SystemSection) -> ReducedProblem:
    try:
        return ReducedProblem(make_system(section.name, section.params()))
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _vector(values: list[float], size: int, label: str) -> np.ndarray:
    if not values:
        return np.zeros(size)
    if len(values) != size:
        raise HTTPException(
            status_code=422, detail=f"{label} must have length {size}, got {len(values)}"
        )
    return np.asarray(values, dtype=float)


def _w1_state(state: StateSection, n: int, m: int) -> W1State:
    return W1State(
        q=_vector(state.q, n, "state.q"),
        y=_vector(state.y, n, "state.y"),
        ydot_a=_vector(state.ydot, m, "state.ydot"),
        p=_vector(state.p, n, "state.p"),
        ptilde_alpha=_vector(state.ptilde, n - m, "state.ptilde"),
    )


def _integrator_config(section: IntegratorSection) -> IntegratorConfig:
    return IntegratorConfig(
        method=section.method,
        dt=section.dt,
        rtol=section.rtol,
        atol=section.atol,
        t_span=(section.t0, section.tf),
        save_every=section.save_every,
    )


def _payload(log, periodic) -> TrajectoryPayload:
    return TrajectoryPayload(
        columns=trajectory_columns(log.n, log.m),
        rows=trajectory_rows(log, periodic),
    )


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

app = FastAPI(
    title="hamelopt",
    version=__version__,
    description="Optimal control of underactuated mechanical systems in quasivelocities.",
)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/systems", response_model=list[SystemInfo])
def systems() -> list[SystemInfo]:
    return [
        SystemInfo(
            name="planar-rigid-body", n=3, m=2, parameters=["mass", "inertia", "offset", "cost"]
        ),
        SystemInfo(name="point-mass-lq", n=2, m=1, parameters=["cost"]),
    ]


@app.post("/derive", response_model=DeriveResponse)
def derive(req: DeriveRequest) -> DeriveResponse:
    rp = _build_problem(req.system)
    sys_ = rp.system
    n, m = sys_.n, sys_.m
    w1 = _w1_state(req.state, n, m)
    C = structure_coefficients(sys_, w1.q)
    entries = [
        StructureEntry(d=d + 1, a=a + 1, b=b + 1, value=float(C[d, a, b]))
        for d in range(n)
        for a in range(n)
        for b in range(n)
        if abs(C[d, a, b]) > 1e-12
    ]
    G = solve_constraints(rp, w1.q, w1.y, w1.ydot_a)
    pt = SecondOrderPoint(q=w1.q, y=w1.y, ydot=np.concatenate([w1.ydot_a, G]))
    residual = float(np.abs(hamel_residual(sys_, pt)[m:]).max())
    report = regularity(rp, w1)
    condition = report.condition if np.isfinite(report.condition) else 1e308
    return DeriveResponse(
        n=n,
        m=m,
        structure_nonzero=entries,
        constraint_residual=residual,
        constraint_solution=[float(g) for g in G],
        regularity_matrix=[[float(v) for v in row] for row in report.R],
        det=report.det,
        condition=condition,
        symplectic=report.symplectic,
    )


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    rp = _build_problem(req.system)
    sys_ = rp.system
    w1 = _w1_state(req.state, sys_.n, sys_.m)
    cfg = _integrator_config(req.integrator)
    try:
        log = integrate(rp, w1, cfg)
    except RegularityFailure as exc:
        return SimulateResponse(
            status="regularity-failure",
            trajectory=TrajectoryPayload(
                columns=trajectory_columns(sys_.n, sys_.m), rows=[]
            ),
            failure=str(exc),
        )
    except NonFiniteEvaluation as exc:
        return SimulateResponse(
            status="nonfinite",
            trajectory=TrajectoryPayload(
                columns=trajectory_columns(sys_.n, sys_.m), rows=[]
            ),
            failure=str(exc),
        )
    status = "ok"
    if not log.completed:
        status = "regularity-failure" if log.failure_kind == "regularity" else "nonfinite"
    return SimulateResponse(
        status=status, trajectory=_payload(log, sys_.periodic), failure=log.failure
    )


@app.post("/solve", response_model=SolveResponse)
def solve(req: SolveRequest) -> SolveResponse:
    rp = _build_problem(req.system)
    sys_ = rp.system
    n, m = sys_.n, sys_.m
    b = req.boundary
    spec = BvpSpec(
        q0=_vector(b.q0, n, "boundary.q0"),
        y0=_vector(b.y0, n, "boundary.y0"),
        qf=_vector(b.qf, n, "boundary.qf"),
        yf=_vector(b.yf, n, "boundary.yf"),
        ydot_a0=None if b.guess_ydot is None else _vector(b.guess_ydot, m, "guess_ydot"),
        p0=None if b.guess_p is None else _vector(b.guess_p, n, "guess_p"),
        ptilde_alpha0=None
        if b.guess_ptilde is None
        else _vector(b.guess_ptilde, n - m, "guess_ptilde"),
        max_iter=req.newton.max_iter,
        residual_tol=req.newton.tol,
        fd_step=req.newton.fd_step,
    )
    cfg = _integrator_config(req.integrator)
    try:
        result = shoot(rp, spec, cfg)
    except RegularityFailure as exc:
        return SolveResponse(
            status="regularity-failure",
            trajectory=TrajectoryPayload(columns=trajectory_columns(n, m), rows=[]),
            failure=str(exc),
        )
    summary = SolveSummary(
        converged=result.converged,
        iterations=result.iterations,
        residual=result.residual,
        cost=trajectory_cost(rp, result.log),
    )
    return SolveResponse(
        status="ok" if result.converged else "no-convergence",
        trajectory=_payload(result.log, sys_.periodic),
        summary=summary,
    )


@app.post("/check", response_model=CheckResponse)
def check(req: CheckRequest) -> CheckResponse:
    rp = _build_problem(req.system)
    try:
        results = run_checks(rp, seed=req.check.seed)
    except HameloptError as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc
    items = [
        CheckItem(
            name=r.name,
            passed=r.passed,
            measured=float(r.measured) if np.isfinite(r.measured) else 1e308,
            tolerance=r.tolerance,
            detail=r.detail,
        )
        for r in results
    ]
    return CheckResponse(passed=all(r.passed for r in results), checks=items)
