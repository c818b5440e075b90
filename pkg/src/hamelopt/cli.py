"""Command-line client for the hamelopt service.

The CLI parses a TOML run configuration, sends the request to the service
(mounted in-process by default, or a remote instance via ``--server``),
writes trajectory files locally, and maps domain outcomes to stable exit
codes:

    0  success
    1  at least one invariant check failed
    2  configuration error
    3  regularity verdict false (derive)
    4  regularity lost during integration
    5  non-finite state encountered
    6  boundary-value iteration did not converge
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

from .config import RunConfig, load_config
from .errors import ConfigError
from .output import format_float, write_csv, write_jsonl

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NOT_SYMPLECTIC = 3
EXIT_REGULARITY = 4
EXIT_NONFINITE = 5
EXIT_NO_CONVERGENCE = 6


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _post(path: str, payload: dict, server: str | None) -> dict:
    """POST to the service: in-process ASGI by default, remote otherwise."""

    async def go() -> httpx.Response:
        if server is None:
            from .service import app

            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://hamelopt.local"
            ) as client:
                return await client.post(path, json=payload, timeout=None)
        async with httpx.AsyncClient(base_url=server) as client:
            return await client.post(path, json=payload, timeout=None)

    response = asyncio.run(go())
    if response.status_code == 422:
        raise ConfigError(f"service rejected the request: {response.text}")
    response.raise_for_status()
    return response.json()


def _write_trajectory(trajectory: dict, cfg: RunConfig) -> None:
    path = cfg.output.path
    if path is None:
        _log("no output path configured; trajectory not written")
        return
    if cfg.output.format == "csv":
        write_csv(path, trajectory["columns"], trajectory["rows"])
    else:
        write_jsonl(path, trajectory["columns"], trajectory["rows"])
    _log(f"wrote {len(trajectory['rows'])} rows to {path}")


def cmd_derive(cfg: RunConfig, server: str | None) -> int:
    report = _post(
        "/derive",
        {"system": cfg.system.model_dump(), "state": cfg.state.model_dump()},
        server,
    )
    print(f"system: {cfg.system.name} (n={report['n']}, m={report['m']})")
    print("nonzero structure coefficients C^d_ab:")
    for entry in report["structure_nonzero"]:
        print(
            f"  C^{entry['d']}_{entry['a']}{entry['b']} = {format_float(entry['value'])}"
        )
    print(f"constraint residual at solved accelerations: {format_float(report['constraint_residual'])}")
    print("constraint solution (unactuated accelerations):")
    print("  " + " ".join(format_float(v) for v in report["constraint_solution"]))
    print("regularity matrix R:")
    for row in report["regularity_matrix"]:
        print("  " + " ".join(format_float(v) for v in row))
    print(f"det R = {format_float(report['det'])}  (condition {format_float(report['condition'])})")
    print(f"symplectic: {'true' if report['symplectic'] else 'false'}")
    return EXIT_OK if report["symplectic"] else EXIT_NOT_SYMPLECTIC


def cmd_simulate(cfg: RunConfig, server: str | None) -> int:
    result = _post(
        "/simulate",
        {
            "system": cfg.system.model_dump(),
            "state": cfg.state.model_dump(),
            "integrator": cfg.integrator.model_dump(),
        },
        server,
    )
    _write_trajectory(result["trajectory"], cfg)
    if result["status"] == "regularity-failure":
        _log(f"regularity failure: {result['failure']}")
        return EXIT_REGULARITY
    if result["status"] == "nonfinite":
        _log(f"non-finite state: {result['failure']}")
        return EXIT_NONFINITE
    return EXIT_OK


def cmd_solve(cfg: RunConfig, server: str | None) -> int:
    result = _post(
        "/solve",
        {
            "system": cfg.system.model_dump(),
            "boundary": cfg.boundary.model_dump(),
            "integrator": cfg.integrator.model_dump(),
            "newton": cfg.newton.model_dump(),
        },
        server,
    )
    if result["status"] == "regularity-failure":
        _log(f"regularity failure: {result['failure']}")
        return EXIT_REGULARITY
    _write_trajectory(result["trajectory"], cfg)
    # single JSON summary object on stdout; logs go to stderr
    print(json.dumps(result["summary"]))
    return EXIT_OK if result["status"] == "ok" else EXIT_NO_CONVERGENCE


def cmd_check(cfg: RunConfig, server: str | None, seed: int | None) -> int:
    payload = {
        "system": cfg.system.model_dump(),
        "check": {"seed": cfg.check.seed if seed is None else seed},
    }
    result = _post("/check", payload, server)
    for item in result["checks"]:
        status = "pass" if item["passed"] else "FAIL"
        line = (
            f"{status}  {item['name']}: measured {format_float(item['measured'])}"
            f" vs tolerance {format_float(item['tolerance'])}"
        )
        if item["detail"]:
            line += f"  [{item['detail']}]"
        print(line)
    print("all checks passed" if result["passed"] else "some checks FAILED")
    return EXIT_OK if result["passed"] else EXIT_CHECK_FAILED


def cmd_serve(host: str, port: int) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamelopt",
        description="Optimal control of underactuated mechanical systems in quasivelocities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("derive", "structure coefficients, constraint solve, and regularity verdict"),
        ("simulate", "integrate the restricted dynamics and write the trajectory"),
        ("solve", "shoot the two-point boundary-value problem"),
        ("check", "run the invariant suite against the configured system"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the TOML run configuration")
        p.add_argument("--output", help="trajectory output path (overrides config)")
        p.add_argument("--format", choices=("csv", "jsonl"), help="output format (overrides config)")
        p.add_argument("--seed", type=int, help="seed for randomized checks")
        p.add_argument("--server", help="base URL of a remote service (default: in-process)")
    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args.host, args.port)
    try:
        cfg = load_config(args.config)
        cfg.validate_for(args.command)
    except ConfigError as exc:
        _log(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _log(f"cannot read config: {exc}")
        return EXIT_CONFIG
    if args.output is not None:
        cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"path": args.output})})
    if args.format is not None:
        cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"format": args.format})})
    try:
        if args.command == "derive":
            return cmd_derive(cfg, args.server)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.server)
        if args.command == "solve":
            return cmd_solve(cfg, args.server)
        return cmd_check(cfg, args.server, args.seed)
    except ConfigError as exc:
        _log(str(exc))
        return EXIT_CONFIG
    except httpx.HTTPError as exc:
        _log(f"service error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
