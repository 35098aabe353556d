import csv
import json
from pathlib import Path

import numpy as np
import pytest

from spdelab.cli import main
from spdelab.config import ConfigError, ExperimentConfig, parse_text
from spdelab.experiments import kernel_table, parse_direction, parse_functional
from spdelab.results import OutputError, read_trajectory_binary, write_trajectory_binary
from spdelab.runner import execute
from spdelab.solver import Equation, SolverConfig, solve_mild
from spdelab.noise import NoisePath, NoisePathSpec
from spdelab.spectral import GridSpec, build_operator
from spdelab import verify as V

SMALL = ["--set", "grid.n_points=32", "--set", "grid.n_modes=16", "--set", "solver.dt=1e-3",
         "--set", "solver.T=0.02", "--set", "solver.record_stride=5"]


# -- config ---------------------------------------------------------------


def test_defaults_and_overrides():
    cfg = ExperimentConfig.load(overrides=["grid.n_points=256", "uniqueness.m_values=2,4"])
    assert cfg["grid.n_points"] == 256 and cfg["grid.n_modes"] == 64
    assert cfg["uniqueness.m_values"] == (2, 4)
    assert cfg["solver.dt"] == 1e-4 and cfg["noise.seed"] == 42


def test_config_file_comments_and_duplicates(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# demo\nexperiment = kernels   # trailing\n\ngrid.n_points = 64\n"
                 "grid.n_modes = 32\n")
    cfg = ExperimentConfig.load(p, ["grid.n_modes=16"])
    assert cfg["experiment"] == "kernels" and cfg["grid.n_modes"] == 16
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("a = 1\na = 2")
    with pytest.raises(ConfigError, match="key = value"):
        parse_text("just words")


@pytest.mark.parametrize("item", ["grid.bogus=1", "grid.n_points=many", "grid.boundary=robin",
                                  "noise.n_modes=100", "run.workers=0", "solver.dt=0.3",
                                  "reaction.alpha=-1", "kernels.times=0,1",
                                  "grid.n_modes=127"])
def test_invalid_config_values(item):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(overrides=[item])


def test_digest_ignores_workers_and_output():
    a = ExperimentConfig.load(overrides=["run.workers=1", "output.dir=a"])
    b = ExperimentConfig.load(overrides=["run.workers=8", "output.dir=b"])
    c = ExperimentConfig.load(overrides=["noise.seed=1"])
    assert a.digest() == b.digest() != c.digest()


def test_config_text_roundtrip():
    cfg = ExperimentConfig.load(overrides=["solver.dt=2.5e-4", "kernels.times=0.1,0.3"])
    again = ExperimentConfig.from_raw(parse_text(cfg.to_text()))
    assert again.values == cfg.values


def test_functional_and_direction_parsing():
    op = build_operator(GridSpec(32, "dirichlet", 16))
    assert parse_functional("tanh:2:0.1").label == "tanh(mode(2)/0.1)"
    assert parse_functional("sup").kind == "sup"
    assert np.array_equal(parse_direction(op, "mode:3"), op.mode(3))
    for bad in ("mode", "tanh:x", "cosh:1", "point:1:2"):
        with pytest.raises(ConfigError):
            parse_functional(bad)
    with pytest.raises(ConfigError):
        parse_direction(op, "ramp:1")


# -- results --------------------------------------------------------------


def test_binary_trajectory_roundtrip(tmp_path):
    op = build_operator(GridSpec(32, "dirichlet", 16))
    path = NoisePath(NoisePathSpec(2**63 + 5, 1e-3, 20, 16))
    traj = solve_mild(Equation(op), np.sin(np.pi * op.nodes), path,
                      SolverConfig(1e-3, 0.02, record_stride=4))
    f = write_trajectory_binary(tmp_path / "t.bin", traj, 16, 0.02)
    back = read_trajectory_binary(f)
    assert back["states"].tobytes() == np.ascontiguousarray(traj.states).tobytes()
    assert back["times"].tolist() == traj.times.tolist()
    assert (back["N"], back["M"], back["dt"], back["T"], back["seed"], back["stride"]) == \
        (32, 16, 1e-3, 0.02, 2**63 + 5, 4)
    blob = f.read_bytes()
    (tmp_path / "cut.bin").write_bytes(blob[:-8])
    with pytest.raises(OutputError, match="size"):
        read_trajectory_binary(tmp_path / "cut.bin")
    (tmp_path / "bad.bin").write_bytes(b"NOTMAGIC" + blob[8:])
    with pytest.raises(OutputError, match="magic"):
        read_trajectory_binary(tmp_path / "bad.bin")


def test_kernel_table_rows():
    op = build_operator(GridSpec(64, "dirichlet", 32))
    rows = kernel_table(op, (0.05, 0.1)).rows()
    assert rows and {"curve", "abscissa", "value"} <= set(rows[0])


# -- CLI ------------------------------------------------------------------


def test_cli_simulate_outputs(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--quiet"] + SMALL) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"config.txt", "trajectory.csv", "trajectory.bin", "simulate.csv",
            "simulate.json"} <= names
    summary = json.loads((tmp_path / "simulate.json").read_text())["summary"]
    assert summary["n_times"] == 5 and summary["noise"]["seed"] == 42
    rows = list(csv.reader(open(tmp_path / "trajectory.csv")))
    assert rows[0][:2] == ["time", "x0"] and len(rows) == 6
    # the written config reproduces the run
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(tmp_path / "config.txt"), "--out", str(again),
                 "--quiet"]) == 0
    assert (again / "trajectory.bin").read_bytes() == (tmp_path / "trajectory.bin").read_bytes()


def test_cli_estimate_appends_ledger(tmp_path):
    args = ["estimate", "--out", str(tmp_path), "--quiet", "--set", "estimate.n=200",
            "--set", "estimate.t=0.01", "--set", "estimate.phi=tanh:1"] + SMALL
    assert main(args) == 0
    assert main(args + ["--seed", "7"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "results.csv")))
    assert len(rows) == 2 and [r["seed"] for r in rows] == ["42", "7"]
    assert set(rows[0]) == {"experiment_id", "op", "params_digest", "mean", "stderr", "n",
                            "seed"}
    timings = list(csv.DictReader(open(tmp_path / "timings.csv")))
    assert len(timings) == 2 and float(timings[0]["wall_time"]) > 0


def test_cli_exit_code_for_config_errors(tmp_path, capsys):
    assert main(["simulate", "--set", "grid.nope=1", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["simulate", "--set", "novalue"]) == 2
    assert main(["estimate", "--set", "estimate.phi=bogus", "--out", str(tmp_path)] + SMALL) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_exit_code_for_blow_up(tmp_path, capsys):
    code = main(["simulate", "--out", str(tmp_path), "--set", "solver.blow_up_threshold=0.5"]
                + SMALL)
    assert code == 3
    assert "blow-up" in capsys.readouterr().err


def test_cli_uniqueness_and_kernels(tmp_path):
    assert main(["uniqueness", "--out", str(tmp_path), "--quiet", "--set",
                 "drift.variant=running_max", "--set", "uniqueness.levels=2",
                 "--set", "solver.dt=4e-3", "--set", "solver.T=0.2",
                 "--set", "grid.n_points=32", "--set", "grid.n_modes=16"]) == 0
    assert (tmp_path / "uniqueness_refinement.csv").exists()
    assert main(["kernels", "--out", str(tmp_path), "--quiet", "--set", "grid.n_points=64",
                 "--set", "grid.n_modes=32"]) == 0
    assert (tmp_path / "kernels.json").exists()


def test_uniqueness_without_drift_is_config_error(tmp_path):
    assert main(["uniqueness", "--out", str(tmp_path), "--quiet"] + SMALL) == 2


# -- verify registry --------------------------------------------------------


def test_registry_invariant_counts():
    counts = {}
    for c in V.REGISTRY:
        if c.invariant:
            counts[c.module] = counts.get(c.module, 0) + 1
    assert counts == V.INVARIANTS_PER_MODULE
    assert sum(counts.values()) == 20
    names = [c.name for c in V.REGISTRY]
    assert len(names) == len(set(names))
    assert all(c.kind in (V.HARD, V.STATISTICAL) and c.anchor for c in V.REGISTRY)


def test_run_checks_rejects_unknown_names():
    with pytest.raises(KeyError):
        V.run_checks(["no_such_check"], "quick")


def test_replay_check_passes():
    r = V.run_checks(["replay", "ledger_completeness"], "quick").results
    assert all(x.passed for x in r), r


@pytest.mark.slow
def test_quick_verify_suite_via_cli(tmp_path, capsys):
    code = main(["verify", "--out", str(tmp_path), "--set", "verify.profile=quick"])
    out = capsys.readouterr().out
    assert code == 0, out
    rows = list(csv.DictReader(open(tmp_path / "verify.csv")))
    assert len(rows) == len(V.REGISTRY)
    assert out.count("[PASS]") + out.count("[FAIL]") == len(V.REGISTRY)
    assert all(r["pass"] == "true" for r in rows if r["kind"] == "hard")
