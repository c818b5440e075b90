"""Trajectory file output: CSV and JSON-lines.

Floats are written with 17 significant digits so 64-bit values round-trip
bit-faithfully; the column order is fixed and locale-independent.
"""

from __future__ import annotations

import json

import numpy as np

from .flow import TrajectoryLog


def format_float(x: float) -> str:
    return "%.17g" % float(x)


def trajectory_columns(n: int, m: int) -> list[str]:
    cols = ["t"]
    cols += [f"q{i + 1}" for i in range(n)]
    cols += [f"y{i + 1}" for i in range(n)]
    cols += [f"ydot{i + 1}" for i in range(m)]
    cols += [f"p{i + 1}" for i in range(n)]
    cols += [f"ptilde{i + 1}" for i in range(m, n)]
    cols += ["Htilde", "phi_max"]
    cols += [f"u{i + 1}" for i in range(m)]
    return cols


def _wrap_angles(q: np.ndarray, periodic) -> np.ndarray:
    q = np.array(q)
    for i, flag in enumerate(periodic):
        if flag:
            q[i] = np.pi - np.mod(np.pi - q[i], 2.0 * np.pi)
    return q


def trajectory_rows(log: TrajectoryLog, periodic=None) -> list[list[float]]:
    """One row per saved step: t, q, y, ydot_a, p, ptilde_alpha, H, max|phi|, u.

    Periodic configuration coordinates are wrapped to (-pi, pi] in the output
    only; internal states stay unwrapped.
    """
    n, m = log.n, log.m
    rows = []
    for i in range(len(log.times)):
        z = log.states[i]
        q = z[:n] if periodic is None else _wrap_angles(z[:n], periodic)
        row = [float(log.times[i])]
        row += [float(v) for v in q]
        row += [float(v) for v in z[n:]]
        row += [float(log.hamiltonian[i]), float(log.constraint_residual[i])]
        row += [float(v) for v in log.controls[i]]
        rows.append(row)
    return rows


def write_csv(path: str, columns: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def write_jsonl(path: str, columns: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(dict(zip(columns, (float(v) for v in row)))) + "\n")
