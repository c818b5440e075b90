import json

import numpy as np

from hamelopt.cli import main


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


BODY = """
[system]
name = "planar-rigid-body"
"""


def test_derive_exit_zero_and_report(tmp_path, capsys):
    code = main(["derive", "--config", write(tmp_path, "c.toml", BODY)])
    out = capsys.readouterr().out
    assert code == 0
    assert "symplectic: true" in out
    assert "C^2_12 = 0.5" in out


def test_derive_degenerate_exit_three(tmp_path, capsys):
    cfg = """
[system]
name = "planar-rigid-body"
cost = "constant"
"""
    code = main(["derive", "--config", write(tmp_path, "c.toml", cfg)])
    assert code == 3
    assert "symplectic: false" in capsys.readouterr().out


def test_config_error_exit_two(tmp_path, capsys):
    code = main(["derive", "--config", write(tmp_path, "c.toml", "[system]\nname = oops\n")])
    assert code == 2


def test_missing_config_exit_two(tmp_path):
    assert main(["derive", "--config", str(tmp_path / "missing.toml")]) == 2


def test_unknown_system_exit_two(tmp_path):
    cfg = """
[system]
name = "not-a-system"
"""
    assert main(["derive", "--config", write(tmp_path, "c.toml", cfg)]) == 2


def test_simulate_writes_csv(tmp_path, capsys):
    out_path = tmp_path / "traj.csv"
    cfg = f"""
[system]
name = "planar-rigid-body"

[state]
y = [1.0, 0.0, 0.0]

[integrator]
dt = 1e-3
tf = 1.0
save_every = 10

[output]
path = "{out_path}"
"""
    code = main(["simulate", "--config", write(tmp_path, "c.toml", cfg)])
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 102  # header + 101 rows
    header = lines[0].split(",")
    assert header[0] == "t" and "Htilde" in header
    H = np.array([float(line.split(",")[header.index("Htilde")]) for line in lines[1:]])
    assert np.abs(H - H[0]).max() <= 1e-8
    # 17-significant-digit floats round-trip
    row1 = lines[2].split(",")
    assert float(row1[1]) == 0.010000000000000002


def test_simulate_zero_span_single_row(tmp_path):
    out_path = tmp_path / "traj.csv"
    cfg = f"""
[system]
name = "point-mass-lq"

[state]
q = [0.25, 0.0]

[integrator]
tf = 0.0

[output]
path = "{out_path}"
"""
    assert main(["simulate", "--config", write(tmp_path, "c.toml", cfg)]) == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 2
    assert float(lines[1].split(",")[1]) == 0.25


def test_simulate_jsonl_format(tmp_path):
    out_path = tmp_path / "traj.jsonl"
    cfg = f"""
[system]
name = "point-mass-lq"

[state]
y = [0.5, 0.0]

[integrator]
dt = 0.01
tf = 0.2
save_every = 10

[output]
path = "{out_path}"
format = "jsonl"
"""
    assert main(["simulate", "--config", write(tmp_path, "c.toml", cfg)]) == 0
    records = [json.loads(line) for line in out_path.read_text().strip().splitlines()]
    assert len(records) == 3
    assert abs(records[-1]["q1"] - 0.1) < 1e-10
    assert set(records[0]) == {
        "t", "q1", "q2", "y1", "y2", "ydot1", "p1", "p2", "ptilde2",
        "Htilde", "phi_max", "u1",
    }


def test_simulate_angle_wrapping(tmp_path):
    out_path = tmp_path / "traj.csv"
    cfg = f"""
[system]
name = "planar-rigid-body"

[state]
q = [0.0, 0.0, 0.0]
y = [0.0, 1.0, 0.0]

[integrator]
dt = 2e-3
tf = 4.0
save_every = 100

[output]
path = "{out_path}"
"""
    assert main(["simulate", "--config", write(tmp_path, "c.toml", cfg)]) == 0
    lines = out_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    theta = np.array([float(line.split(",")[header.index("q3")]) for line in lines[1:]])
    assert np.all(theta <= np.pi) and np.all(theta > -np.pi)
    assert theta.min() < -1.0  # rotation really wrapped around


def test_solve_point_mass_summary(tmp_path, capsys):
    out_path = tmp_path / "sol.csv"
    cfg = f"""
[system]
name = "point-mass-lq"

[integrator]
dt = 0.01
tf = 1.0

[boundary]
q0 = [0.0, 0.0]
y0 = [0.0, 0.0]
qf = [1.0, 0.0]
yf = [0.0, 0.0]

[output]
path = "{out_path}"
"""
    code = main(["solve", "--config", write(tmp_path, "c.toml", cfg)])
    out = capsys.readouterr().out
    assert code == 0
    summary = json.loads(out.strip().splitlines()[-1])
    assert summary["converged"] is True
    assert abs(summary["cost"] - 6.0) < 1e-4
    assert out_path.exists()


def test_solve_requires_boundary(tmp_path):
    assert main(["solve", "--config", write(tmp_path, "c.toml", BODY)]) == 2


def test_boundary_outside_solve_rejected(tmp_path):
    cfg = BODY + """
[boundary]
q0 = [0.0, 0.0, 0.0]
y0 = [0.0, 0.0, 0.0]
qf = [0.0, 0.0, 0.0]
yf = [0.0, 0.0, 0.0]
"""
    assert main(["simulate", "--config", write(tmp_path, "c.toml", cfg)]) == 2


def test_solve_no_convergence_exit_six(tmp_path, capsys):
    cfg = """
[system]
name = "point-mass-lq"

[integrator]
dt = 0.05
tf = 1.0

[newton]
max_iter = 0
tol = 1e-16

[boundary]
q0 = [0.0, 0.0]
y0 = [0.0, 0.0]
qf = [1.0, 0.0]
yf = [0.0, 0.0]
"""
    assert main(["solve", "--config", write(tmp_path, "c.toml", cfg)]) == 6


def test_check_point_mass_exit_zero(tmp_path, capsys):
    cfg = """
[system]
name = "point-mass-lq"

[check]
seed = 5
"""
    code = main(["check", "--config", write(tmp_path, "c.toml", cfg)])
    out = capsys.readouterr().out
    assert code == 0
    assert "all checks passed" in out
    assert "lq-closed-form" in out


def test_check_degenerate_exit_one(tmp_path, capsys):
    cfg = """
[system]
name = "planar-rigid-body"
cost = "constant"
"""
    code = main(["check", "--config", write(tmp_path, "c.toml", cfg)])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_simulate_regularity_failure_exit_four(tmp_path):
    cfg = """
[system]
name = "planar-rigid-body"
cost = "constant"

[state]
y = [1.0, 0.0, 0.0]
"""
    assert main(["simulate", "--config", write(tmp_path, "c.toml", cfg)]) == 4


def test_simulate_nonfinite_exit_five(tmp_path):
    # quadratic coefficient growth overflows immediately at this magnitude
    cfg = """
[system]
name = "planar-rigid-body"

[state]
y = [1e160, 1e160, 0.0]

[integrator]
dt = 1e-3
tf = 0.1
"""
    with np.errstate(all="ignore"):
        code = main(["simulate", "--config", write(tmp_path, "c.toml", cfg)])
    assert code == 5
