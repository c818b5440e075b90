"""Run configuration: TOML parsing, validation, and serialization.

The configuration is a flat sectioned key-value file.  Inline system
definitions reference built-ins with parameter overrides only; arbitrary
Lagrangians enter through the library interface, not the configuration.
"""

from __future__ import annotations

from typing import Literal, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import ConfigError


class SystemSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    mass: Optional[float] = None
    inertia: Optional[float] = None
    offset: Optional[float] = None
    cost: Literal["quadratic", "constant"] = "quadratic"

    def params(self) -> dict:
        out = {"cost": self.cost}
        for key in ("mass", "inertia", "offset"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


class StateSection(BaseModel):
    """Initial point on the constraint submanifold; empty lists mean zeros."""

    model_config = ConfigDict(extra="forbid")

    q: list[float] = []
    y: list[float] = []
    ydot: list[float] = []
    p: list[float] = []
    ptilde: list[float] = []


class IntegratorSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Literal["rk4", "rk45-adaptive"] = "rk4"
    dt: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10
    t0: float = 0.0
    tf: float = 1.0
    save_every: int = 1

    @model_validator(mode="after")
    def _ranges(self):
        if self.tf < self.t0:
            raise ValueError("tf must be >= t0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")
        return self


class BoundarySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q0: list[float]
    y0: list[float]
    qf: list[float]
    yf: list[float]
    guess_ydot: Optional[list[float]] = None
    guess_p: Optional[list[float]] = None
    guess_ptilde: Optional[list[float]] = None


class NewtonSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iter: int = 30
    tol: float = 1e-9
    fd_step: float = 1e-6


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    format: Literal["csv", "jsonl"] = "csv"


class CheckSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    system: SystemSection
    command: Optional[Literal["derive", "simulate", "solve", "check"]] = None
    seed: int = 0
    state: StateSection = StateSection()
    integrator: IntegratorSection = IntegratorSection()
    boundary: Optional[BoundarySection] = None
    newton: NewtonSection = NewtonSection()
    output: OutputSection = OutputSection()
    check: CheckSection = CheckSection()

    def validate_for(self, command: str) -> None:
        """The boundary block must be present exactly for the solve command."""
        if command == "solve" and self.boundary is None:
            raise ConfigError("solve requires a [boundary] section")
        if command != "solve" and self.boundary is not None:
            raise ConfigError(f"[boundary] section is only valid for solve (command is {command!r})")
        if self.command is not None and self.command != command:
            raise ConfigError(
                f"config sets command = {self.command!r} but {command!r} was invoked"
            )


def loads_config(text: str) -> RunConfig:
    """Parse TOML text into a validated RunConfig."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # tomllib reports line and column in the message
        raise ConfigError(f"config parse error: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        lines = [
            f"  {'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in exc.errors()
        ]
        raise ConfigError("invalid configuration:\n" + "\n".join(lines)) from exc


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_config(fh.read())


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def dumps_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig to normalized TOML (round-trips with loads)."""
    data = cfg.model_dump(exclude_none=True)
    lines = []
    for key in ("command", "seed"):
        if key in data:
            lines.append(f"{key} = {_toml_value(data.pop(key))}")
    for section in ("system", "state", "integrator", "boundary", "newton", "output", "check"):
        if section not in data:
            continue
        body = data.pop(section)
        lines.append("")
        lines.append(f"[{section}]")
        for key, value in body.items():
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines).strip() + "\n"
