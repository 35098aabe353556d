"""Run one validated config and write its outputs to a directory."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .experiments import run_estimate, run_kernels, run_simulation, run_uniqueness, timed
from .results import (append_ledger, csv_text, emit_results, json_text, write_trajectory_binary,
                      write_trajectory_csv, _write)
from .verify import LEDGER_COLUMNS, run_verify_suite

EXIT_OK, EXIT_HARD_FAILURE, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


class _TrajectorySummary:
    def __init__(self, traj, cfg: ExperimentConfig):
        self.traj = traj
        self.cfg = cfg

    def rows(self) -> list[dict]:
        sup = np.max(np.abs(self.traj.states), axis=-1)
        return [{"curve": "sup_norm", "abscissa": t, "value": v}
                for t, v in zip(self.traj.times, sup)]

    def summary(self) -> dict:
        t = self.traj
        return {"n_times": len(t.times), "dt": t.dt, "stride": t.stride,
                "final_sup_norm": float(np.max(np.abs(t.final))),
                "noise": None if t.noise is None else t.noise.as_dict(),
                "model_digest": t.model, "config_digest": self.cfg.digest()}


def execute(cfg: ExperimentConfig, out_dir: str | Path | None = None,
            workers: int | None = None, progress=None) -> tuple[int, dict]:
    """Run ``cfg``; returns (exit code, summary). ``workers`` never changes outputs."""
    out = Path(out_dir if out_dir is not None else cfg["output.dir"])
    workers = workers or cfg["run.workers"]
    formats = cfg["output.formats"]
    kind = cfg["experiment"]
    _write(out / "config.txt", cfg.to_text())

    if kind == "simulate":
        traj = run_simulation(cfg)
        write_trajectory_csv(out / "trajectory.csv", traj)
        write_trajectory_binary(out / "trajectory.bin", traj, cfg["grid.n_modes"],
                                cfg["solver.T"])
        report = _TrajectorySummary(traj, cfg)
        emit_results(report, out, "simulate", formats)
        return EXIT_OK, report.summary()

    if kind == "kernels":
        report = run_kernels(cfg)
        emit_results(report, out, "kernels", formats)
        return EXIT_OK, report.summary()

    if kind == "uniqueness":
        report = run_uniqueness(cfg, workers)
        emit_results(report, out, f"uniqueness_{report.route}", formats)
        return EXIT_OK, report.summary()

    if kind == "estimate":
        record, wall = timed(run_estimate, cfg, workers)
        emit_results(record, out, "estimate", formats)
        r = record.result
        entry = {"experiment_id": record.experiment_id, "op": record.op,
                 "params_digest": record.params_digest, "mean": r.mean, "stderr": r.stderr,
                 "n": r.n_samples, "seed": r.seed, "wall_time": wall}
        append_ledger(out, [entry])
        return EXIT_OK, record.summary()

    report = run_verify_suite(cfg, workers, progress)
    rows = report.ledger_rows()
    if "csv" in formats:
        _write(out / "verify.csv", csv_text(rows, LEDGER_COLUMNS))
    if "json" in formats:
        _write(out / "verify.json", json_text(report.summary()))
    _write(out / "timings.csv", csv_text(
        [{"check": r.name, "wall_time": r.wall_time} for r in report.results],
        ("check", "wall_time")))
    return (EXIT_OK if report.passed else EXIT_HARD_FAILURE), report.summary()
