"""Deterministic CSV/JSON writers and the matching readers."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .broad_solver import Trajectory
from .errors import InvalidSpecError
from .kernel import KernelField


def _fmt(v: float) -> str:
    return repr(float(v))


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InvalidSpecError(f"file not found: {path}")
    return json.loads(path.read_text())


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    """Rows: t, then component 1 at every x node, then component 2, ..."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, P = traj.values.shape[1], traj.values.shape[2]
    header = ["t"] + [f"w{i + 1}(x={_fmt(x)})" for i in range(n) for x in traj.x]
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for t, row in zip(traj.t, traj.values):
            out.writerow([_fmt(t)] + [_fmt(v) for v in row.reshape(n * P)])
    return path


def read_trajectory_csv(path, n: int):
    """Inverse of write_trajectory_csv: (t, values with shape (nt+1, n, P))."""
    rows = list(csv.reader(Path(path).open()))
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    t = data[:, 0]
    return t, data[:, 1:].reshape(len(t), n, -1)


def trajectory_json(traj: Trajectory) -> dict:
    return {"t": traj.t.tolist(), "x": traj.x.tolist(), "values": traj.values.tolist()}


def write_kernel_csv(path, Kf: KernelField) -> Path:
    """Rows over the triangle 0 <= y <= x <= 1: x, y, then K_ij row-major."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = Kf.n
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "y"] + [f"K{i + 1}{j + 1}" for i in range(n) for j in range(n)])
        for a in range(Kf.N + 1):
            for b in range(a + 1):
                out.writerow([_fmt(Kf.x[a]), _fmt(Kf.x[b])] + [_fmt(v) for v in Kf.K[:, :, a, b].ravel()])
    return path


def write_control_csv(path, t, values, label: str = "w") -> Path:
    """Rows: t, then one column per control (components k+1 .. k+m)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t"] + [f"{label}_control{q + 1}" for q in range(values.shape[1])])
        for tt, row in zip(t, values):
            out.writerow([_fmt(tt)] + [_fmt(v) for v in row])
    return path


def control_from_dict(payload: dict):
    """(t, values) of a stored open-loop control."""
    if payload.get("kind") != "open_loop":
        raise InvalidSpecError("stored control is not an open-loop signal")
    return np.array(payload["t"], dtype=float), np.array(payload["values"], dtype=float)
