from __future__ import annotations

import json
import math

import pytest

from kolmoqi import cli

KERNEL = """
kind = "kernel"
seed = 1
[grid]
t = [1.0]
points = [[0.0, 0.0], [1.0, 0.5]]
[output]
name = "kernel"
"""

RN_SWEEP = """
kind = "verify-rn"
seed = 2
[grid]
q = [1.5, 2.0, 3.0, 4.0]
t = [1.0]
shifts = [{h = [0.0], k = [1.0]}]
styles = ["cmm_exact", "ex315", "thm33"]
[output]
name = "rn"
"""

WANG_JENSEN = """
kind = "verify-wang"
seed = 3
[grid]
functions = ["gauss"]
alpha = [1.5]
t = [1.0]
pairs = [[[0.0, 0.0], [0.0, 0.0]]]
[method]
name = "mc"
n = 200
[output]
name = "jensen"
"""

SIMULATE = """
kind = "simulate"
seed = 4
[simulate]
sampler = "exact"
t = 1.0
n = 70000
start = [0.3, -0.2]
[output]
name = "sim"
"""

CONVERGENCE = """
kind = "convergence"
seed = 5
[grid]
ranks = [2, 4, 8, 16]
[convergence]
T = 1.0
steps = 50
replicates = 20
[output]
name = "conv"
"""


def _run(tmp_path, text, command=None, *extra, env=None, name="cfg.toml"):
    cfg = tmp_path / name
    cfg.write_text(text, encoding="utf-8")
    out = tmp_path / "out"
    argv = [command or "run", "--config", str(cfg), "--out", str(out), *extra]
    return cli.main(argv, env=env or {}), out


def _rows(path):
    return cli.read_csv(path)[1]


def test_kernel_row_matches_origin_density(tmp_path):
    status, out = _run(tmp_path, KERNEL, "kernel")
    assert status == 0
    lines = (out / "kernel.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# schema=1"
    rows = _rows(out / "kernel.csv")
    assert float(rows[0]["density"]) == pytest.approx(math.sqrt(3) / math.pi, abs=1e-12)
    assert round(float(rows[0]["density"]), 6) == 0.551329
    assert float(rows[0]["density_log"]) == pytest.approx(math.log(math.sqrt(3) / math.pi), abs=1e-12)


def test_manifest_contents(tmp_path):
    _, out = _run(tmp_path, KERNEL, "kernel")
    man = json.loads((out / "kernel.json").read_text(encoding="utf-8"))
    assert man["seed"] == 1 and man["kind"] == "kernel"
    assert man["version"] == cli.__version__
    assert man["outputs"] == ["kernel.csv"]
    assert man["config"]["grid"]["t"] == [1.0]
    assert man["wall_time_s"] >= 0


@pytest.mark.parametrize(
    "text,command,expected",
    [
        (KERNEL, "kernel", 0),
        (RN_SWEEP, "verify-rn", 2),
        (WANG_JENSEN, "verify-wang", 3),
        (KERNEL.replace("t = [1.0]", "t = []"), "kernel", 1),
    ],
)
def test_exit_status_contract(tmp_path, text, command, expected):
    status, _ = _run(tmp_path, text, command)
    assert status == expected


def test_rn_sweep_rows_and_violation(tmp_path):
    status, out = _run(tmp_path, RN_SWEEP, "verify-rn")
    rows = _rows(out / "rn.csv")
    assert len(rows) == 12
    by_style = {}
    for r in rows:
        by_style.setdefault(r["style"], []).append(r)
    assert {s: len(v) for s, v in by_style.items()} == {"cmm_exact": 4, "ex315": 4, "thm33": 4}
    bad = [(r["style"], float(r["q"])) for r in rows if r["verdict"] == "VIOLATED"]
    assert bad == [("ex315", 4.0)]
    assert status == 2
    for r in rows:
        assert cli.verdict_from_row(r) == r["verdict"]


def test_input_errors(tmp_path, capsys):
    status, _ = _run(tmp_path, "kind = 'kernel'\nseed = = 3\n[grid]\n", "kernel")
    assert status == 1
    assert "line" in capsys.readouterr().err
    status, _ = _run(tmp_path, KERNEL.replace("points = [[0.0, 0.0], [1.0, 0.5]]", "points = [[0.0]]"), "kernel")
    assert status == 1
    assert "grid.points[0]" in capsys.readouterr().err
    status, _ = _run(tmp_path, KERNEL.replace("seed = 1\n", ""), "kernel")
    assert status == 1
    status, _ = _run(tmp_path, KERNEL, "verify-rn")
    assert status == 1
    assert cli.main(["kernel", "--config", str(tmp_path / "missing.toml")], env={}) == 1
    assert cli.main(["nonsense"], env={}) == 1


def test_overflow_marked_not_crashed(tmp_path):
    text = RN_SWEEP.replace("t = [1.0]", "t = [0.01]").replace("k = [1.0]", "k = [10.0]")
    status, out = _run(tmp_path, text, "verify-rn")
    assert status in (0, 2, 3)
    rows = _rows(out / "rn.csv")
    over = [r for r in rows if r["style"] == "cmm_exact"]
    assert all(r["lhs"] == "OVERFLOW" for r in over)
    assert all(float(r["lhs_log"]) > 700 for r in over)


def test_seed_precedence(tmp_path):
    text = SIMULATE.replace("n = 70000", "n = 100")
    _, out = _run(tmp_path, text, "simulate", env={"KOLMOQI_SEED": "77"})
    assert json.loads((out / "sim.json").read_text())["seed"] == 77
    _, out = _run(tmp_path, text, "simulate", "--seed", "9", env={"KOLMOQI_SEED": "77"})
    assert json.loads((out / "sim.json").read_text())["seed"] == 9
    _, out = _run(tmp_path, text, "simulate")
    assert json.loads((out / "sim.json").read_text())["seed"] == 4
    status, _ = _run(tmp_path, text, "simulate", env={"KOLMOQI_SEED": "abc"})
    assert status == 1


def test_manifest_round_trip_is_bitwise(tmp_path):
    for text, name in ((SIMULATE, "sim"), (WANG_JENSEN, "jensen"), (CONVERGENCE, "conv")):
        _, out = _run(tmp_path, text)
        first = (out / f"{name}.csv").read_bytes()
        again = tmp_path / "again"
        status = cli.main(["run", "--config", str(out / f"{name}.json"), "--out", str(again)], env={})
        assert status in (0, 3)
        assert (again / f"{name}.csv").read_bytes() == first


@pytest.mark.parametrize("workers", [4, 16])
def test_worker_count_is_bitwise_invisible(tmp_path, workers):
    _, out = _run(tmp_path, SIMULATE, "simulate", "--workers", "1")
    ref = (out / "sim.csv").read_bytes()
    _, out = _run(tmp_path, SIMULATE, "simulate", "--workers", str(workers))
    assert (out / "sim.csv").read_bytes() == ref


def test_double_format_and_schema(tmp_path):
    _, out = _run(tmp_path, SIMULATE, "simulate")
    rows = _rows(out / "sim.csv")
    v = rows[0]["value"]
    assert float(v) == float(format(float(v), ".17g"))
    assert "," not in v


def test_sweep_combines_statuses(tmp_path):
    text = """
kind = "sweep"
seed = 6
[output]
name = "sw"
[[experiments]]
kind = "kernel"
grid = {t = [1.0], points = [[0.0, 0.0]]}
[[experiments]]
kind = "verify-rn"
grid = {q = [4.0], t = [1.0], shifts = [{h = [0.0], k = [1.0]}], styles = ["ex315"]}
"""
    status, out = _run(tmp_path, text)
    assert status == 2
    man = json.loads((out / "sw.json").read_text())
    assert man["verdicts"]["children"] == [0, 2]
    assert len(man["outputs"]) == 2


def test_plotdata(tmp_path, capsys):
    _, out = _run(tmp_path, CONVERGENCE, "convergence")
    _, out = _run(tmp_path, RN_SWEEP, "verify-rn")
    assert cli.main(["plotdata", str(out / "conv.csv"), str(out / "rn.csv")], env={}) == 0
    conv = (out / "conv_convergence.dat").read_text().splitlines()
    assert conv[0] == "# n mean_error se"
    assert [line.split()[0] for line in conv[1:]] == ["2", "4", "8", "16"]
    for style in ("cmm_exact", "ex315", "thm33"):
        lines = (out / f"rn_{style}.dat").read_text().splitlines()
        assert lines[0] == "# q lhs_log rhs_log margin"
        assert len(lines) == 5 and all(len(line.split()) == 4 for line in lines[1:])
    before = (out / "rn_ex315.dat").read_bytes()
    assert cli.main(["plotdata", str(out / "rn.csv")], env={}) == 0
    assert (out / "rn_ex315.dat").read_bytes() == before
    assert cli.main(["plotdata", str(out / "nope.csv")], env={}) == 1
    assert cli.main(["plotdata", str(out / "kernel.csv")], env={}) == 1
    _, kout = _run(tmp_path, KERNEL, "kernel")
    assert cli.main(["plotdata", str(kout / "kernel.csv")], env={}) == 1
    assert cli.main(["plotdata", "--kind", "convergence", str(out / "rn.csv")], env={}) == 1
