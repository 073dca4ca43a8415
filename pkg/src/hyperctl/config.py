"""TOML run configuration.

Sections: [system] (k, m, gamma, name), [speeds], [coupling], [boundary],
[run].  Matrices are row-major nested lists.  A minimal file::

    [system]
    k = 1
    m = 2
    [speeds]
    values = [1, 1, 2]
    [boundary]
    B = [[2, 1]]

Speeds are either ``values`` (constants) or ``xs`` plus ``profiles`` (one
sample list per component).  The coupling is one of
``kind = "zero" | "constant" | "samples" | "bump" | "counterexample"``.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import InvalidSpecError
from .model import Coupling, SpeedProfile, SystemSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

INITIAL_KINDS = ("zero", "bump", "window", "samples", "unit")


@dataclass
class RunConfig:
    spec: SystemSpec
    N: int = 128
    T: Optional[float] = None
    delta: Optional[float] = None
    tol: Optional[float] = None
    method: str = "auto"
    initial: dict = field(default_factory=lambda: {"kind": "bump"})
    target: Optional[dict] = None
    gammas: list = field(default_factory=list)
    control: Optional[str] = None
    counterexample: Optional[dict] = None
    source: Optional[Path] = None

    def initial_state(self, x: np.ndarray) -> np.ndarray:
        return make_field(self.initial, self.spec.n, x, "run.initial")

    def target_state(self, x: np.ndarray) -> Optional[np.ndarray]:
        return None if self.target is None else make_field(self.target, self.spec.n, x, "run.target")


def _get(table: dict, key: str, where: str, default: Any = ...):
    if key not in table:
        if default is ...:
            raise InvalidSpecError(f"{where}.{key}: missing")
        return default
    return table[key]


def _matrix(value, where: str, shape=None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InvalidSpecError(f"{where}: expected a numeric matrix") from None
    arr = np.atleast_2d(arr)
    if shape is not None and arr.shape != shape:
        raise InvalidSpecError(f"{where}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSpecError(f"{where}: non-finite entry")
    return arr


def _speeds(table: dict, n: int):
    if "values" in table:
        vals = np.atleast_1d(np.array(table["values"], dtype=float)) if _numeric(table["values"]) else None
        if vals is None or vals.ndim != 1 or len(vals) != n:
            raise InvalidSpecError(f"speeds.values: expected {n} numbers")
        return [SpeedProfile.constant(v) for v in vals]
    if "profiles" in table:
        xs = _get(table, "xs", "speeds")
        profiles = table["profiles"]
        if len(profiles) != n:
            raise InvalidSpecError(f"speeds.profiles: expected {n} sample lists")
        return [SpeedProfile(xs, p) for p in profiles]
    raise InvalidSpecError("speeds: give either values or xs + profiles")


def _numeric(value) -> bool:
    try:
        np.array(value, dtype=float)
    except (TypeError, ValueError):
        return False
    return True


def bump_coupling(matrix: np.ndarray) -> Coupling:
    """sin(pi x)^2 * matrix: smooth, vanishing at both ends."""
    M = np.asarray(matrix, dtype=float)
    return Coupling(fun=lambda x: np.sin(np.pi * np.asarray(x))[..., None, None] ** 2 * M)


def _coupling(table: dict, n: int) -> Coupling:
    kind = table.get("kind", "constant" if "matrix" in table else "zero")
    if kind == "zero":
        return Coupling(matrix=np.zeros((n, n)))
    if kind == "constant":
        return Coupling(matrix=_matrix(_get(table, "matrix", "coupling"), "coupling.matrix", (n, n)))
    if kind == "bump":
        return bump_coupling(_matrix(_get(table, "matrix", "coupling"), "coupling.matrix", (n, n)))
    if kind == "samples":
        xs = np.array(_get(table, "xs", "coupling"), dtype=float)
        mats = np.array(_get(table, "matrices", "coupling"), dtype=float)
        if mats.shape != (len(xs), n, n):
            raise InvalidSpecError(f"coupling.matrices: expected shape ({len(xs)}, {n}, {n})")
        return Coupling(xs=xs, matrices=mats)
    raise InvalidSpecError(f"coupling.kind: unknown kind {kind!r}")


def make_field(desc: dict, n: int, x: np.ndarray, where: str) -> np.ndarray:
    """Initial or target state sampled on x, shape (n, len(x))."""
    kind = desc.get("kind", "bump")
    amp = np.array(desc.get("amplitudes", np.ones(n)), dtype=float)
    if amp.shape != (n,):
        raise InvalidSpecError(f"{where}.amplitudes: expected {n} numbers")
    if kind == "zero":
        return np.zeros((n, len(x)))
    if kind == "bump":
        return amp[:, None] * np.sin(np.pi * x)[None] ** 2 * (1 + 0.3 * np.arange(n)[:, None] * x[None])
    if kind == "unit":
        comp = int(_get(desc, "component", where)) - 1
        if not 0 <= comp < n:
            raise InvalidSpecError(f"{where}.component: out of range")
        out = np.zeros((n, len(x)))
        out[comp] = 1.0
        return out
    if kind == "window":
        # smooth rise to 1 on [0, start], then constant 1; zero in every other component
        comp = int(_get(desc, "component", where)) - 1
        start = float(desc.get("start", 0.5))
        out = np.zeros((n, len(x)))
        out[comp] = np.where(x >= start, 1.0, np.sin(0.5 * np.pi * x / start) ** 2)
        return out
    if kind == "samples":
        xs = np.array(_get(desc, "xs", where), dtype=float)
        vals = _matrix(_get(desc, "values", where), f"{where}.values", (n, len(xs)))
        return np.array([np.interp(x, xs, v) for v in vals])
    raise InvalidSpecError(f"{where}.kind: unknown kind {kind!r}; choose from {INITIAL_KINDS}")


def spec_from_tables(data: dict) -> SystemSpec:
    system = _get(data, "system", "config")
    k = int(_get(system, "k", "system"))
    m = int(_get(system, "m", "system"))
    n = k + m
    gamma = float(system.get("gamma", 1.0))
    name = str(system.get("name", ""))
    coupling_table = data.get("coupling", {})
    if coupling_table.get("kind") == "counterexample":
        from .synthesis.counterexample import counterexample_build
        speeds = data.get("speeds", {}).get("values")
        first = data.get("boundary", {}).get("first_row", [1.0, 0.0])
        ce = counterexample_build(float(_get(coupling_table, "a", "coupling")),
                                  float(_get(coupling_table, "b", "coupling")),
                                  speeds=speeds if speeds is not None else (2.0, 1.0, 1.0, 2.0),
                                  k=k, first_row=first)
        return ce.spec
    speeds = _speeds(_get(data, "speeds", "config"), n)
    C = _coupling(coupling_table, n)
    B = _matrix(_get(_get(data, "boundary", "config"), "B", "boundary"), "boundary.B", (k, m))
    return SystemSpec(k, m, speeds, C, B, gamma, name)


def config_from_tables(data: dict, source: Optional[Path] = None) -> RunConfig:
    spec = spec_from_tables(data)
    run = data.get("run", {})
    N = int(run.get("N", 128))
    if N < 16:
        raise InvalidSpecError("run.N: grid must have at least 16 cells")
    tol = run.get("tol")
    if tol is not None and not float(tol) > 0:
        raise InvalidSpecError("run.tol: must be positive")
    control = run.get("control")
    if control is not None and source is not None:
        control = str((source.parent / control).resolve())
    cfg = RunConfig(spec=spec, N=N,
                    T=None if run.get("T") is None else float(run["T"]),
                    delta=None if run.get("delta") is None else float(run["delta"]),
                    tol=None if tol is None else float(tol),
                    method=str(run.get("method", "auto")),
                    initial=dict(run.get("initial", {"kind": "bump"})),
                    target=None if run.get("target") is None else dict(run["target"]),
                    gammas=[float(g) for g in run.get("gammas", [])],
                    control=control,
                    counterexample=dict(data["coupling"]) if data.get("coupling", {}).get("kind") == "counterexample" else None,
                    source=source)
    make_field(cfg.initial, spec.n, np.linspace(0, 1, 3), "run.initial")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidSpecError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise InvalidSpecError(f"{path}: {exc}") from None
    return config_from_tables(data, path)
