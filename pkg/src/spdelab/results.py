"""Result emission: long-format CSV/JSON, the estimate ledger and trajectory files.

All writers are deterministic: fixed column order, ``repr`` floats (shortest
round-trip form) and sorted JSON keys. Wall-clock timings go to a separate
``timings.csv`` so that every other output replays byte for byte.

Binary trajectory layout (little endian)::

    magic    8 bytes  b"SPDETRJ1"
    version  uint32   (currently 1)
    N        uint32   grid points
    M        uint32   spectral modes
    dt       float64  solver step
    T        float64  horizon
    seed     uint64   noise seed (0 when noise-free)
    n_times  uint32   recorded time points
    stride   uint32   record stride in solver steps
    times    float64[n_times]
    states   float64[n_times * N], row-major (time, node)
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .solver import Trajectory

LONG_COLUMNS = ("curve", "abscissa", "value")
LEDGER_COLUMNS = ("experiment_id", "op", "params_digest", "mean", "stderr", "n", "seed")
TIMING_COLUMNS = ("experiment_id", "op", "wall_time")

MAGIC = b"SPDETRJ1"
VERSION = 1
_HEADER = struct.Struct("<8sIIIddQII")


class OutputError(OSError):
    """Writing or reading a result file failed; the message names the path."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return repr(f) if math.isfinite(f) else str(f)
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps(_jsonable(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str, mode: str = "w"):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, mode, encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_results(report, out_dir: str | Path, name: str,
                 formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    """Write ``report.rows()`` as ``<name>.csv`` and ``report.summary()`` (+ rows) as JSON."""
    out = Path(out_dir)
    written = []
    rows = report.rows()
    for fmt in formats:
        if fmt == "csv":
            p = out / f"{name}.csv"
            _write(p, csv_text(rows, LONG_COLUMNS))
        elif fmt == "json":
            p = out / f"{name}.json"
            _write(p, json_text({"summary": report.summary(), "rows": rows}))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(p)
    return written


def append_ledger(out_dir: str | Path, entries: Iterable[dict]) -> Path:
    """Append estimate rows to ``results.csv`` and their timings to ``timings.csv``."""
    out = Path(out_dir)
    entries = list(entries)
    for fname, cols in (("results.csv", LEDGER_COLUMNS), ("timings.csv", TIMING_COLUMNS)):
        p = out / fname
        text = csv_text(entries, cols)
        if p.exists():
            text = text.split("\n", 1)[1]
        _write(p, text, "a")
    return out / "results.csv"


# ---------------------------------------------------------------------------
# trajectories


def write_trajectory_csv(path: str | Path, traj: Trajectory) -> Path:
    path = Path(path)
    states = np.asarray(traj.states)
    if states.ndim != 2:
        raise ValueError("CSV export takes a single trajectory (times, N)")
    cols = ["time"] + [f"x{j}" for j in range(states.shape[1])]
    rows = ({"time": t, **{f"x{j}": v for j, v in enumerate(row)}}
            for t, row in zip(traj.times, states))
    _write(path, csv_text(rows, cols))
    return path


def write_trajectory_binary(path: str | Path, traj: Trajectory, n_modes: int,
                            T: float | None = None) -> Path:
    path = Path(path)
    states = np.ascontiguousarray(traj.states, dtype="<f8")
    if states.ndim != 2:
        raise ValueError("binary export takes a single trajectory (times, N)")
    seed = traj.noise.seed if traj.noise is not None else 0
    horizon = float(traj.times[-1]) if T is None else float(T)
    header = _HEADER.pack(MAGIC, VERSION, states.shape[1], n_modes, traj.dt, horizon, seed,
                          states.shape[0], traj.stride)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(traj.times, dtype="<f8").tobytes())
            fh.write(states.tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_trajectory_binary(path: str | Path) -> dict:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise OutputError(f"{path}: truncated header")
    magic, version, N, M, dt, T, seed, n_times, stride = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise OutputError(f"{path}: not a trajectory file (magic {magic!r})")
    if version != VERSION:
        raise OutputError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * n_times * (N + 1)
    if len(blob) != expected:
        raise OutputError(f"{path}: size {len(blob)} bytes, header implies {expected}")
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return {"N": N, "M": M, "dt": dt, "T": T, "seed": seed, "stride": stride,
            "times": body[:n_times].copy(), "states": body[n_times:].reshape(n_times, N).copy()}
