"""Boundary control signals and the closed-loop runs that produce or check them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..broad_solver import GeneralSystem, Trajectory, simulate
from ..kernel import KernelField
from ..model import SystemSpec


def l2_norm(values: np.ndarray, N: int) -> float:
    """Discrete L2 norm over [0, 1] (trapezoid), summed over components."""
    q = np.full(N + 1, 1.0 / N)
    q[0] = q[-1] = 0.5 / N
    return float(np.sqrt(np.sum(q * np.asarray(values) ** 2)))


@dataclass
class ControlSignal:
    """Samples of the boundary inputs w_+(t, 1) on the time grid.

    ``u_values`` holds the same inputs in the transformed coordinates when the
    control was designed there.
    """

    t: np.ndarray
    values: np.ndarray
    terminal_sup: float
    terminal_l2: float
    feasible: bool
    u_values: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)
    trajectory: Optional[Trajectory] = None

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def as_dict(self) -> dict:
        out = {"kind": "open_loop", "T": self.T, "t": [float(v) for v in self.t],
               "values": np.asarray(self.values).tolist(),
               "terminal_sup": self.terminal_sup, "terminal_l2": self.terminal_l2,
               "feasible": bool(self.feasible)}
        if self.u_values is not None:
            out["u_values"] = np.asarray(self.u_values).tolist()
        out["info"] = {k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool))}
        return out


def integral_boundary(Kf: KernelField, k: int) -> np.ndarray:
    """M(y) = K_+(1, y) sampled as (N+1, m, n) for the x = 1 integral term."""
    return np.moveaxis(Kf.K[k:, :, -1, :], -1, 0).copy()


def closed_loop(spec: SystemSpec, Kf: KernelField, H, w0, T: float, N: int, target=None,
                tol: Optional[float] = None):
    """Run the plant with w_+(t, 1) = H(t) + int K_+(1, y) w(t, y) dy.

    Returns the trajectory, the realised open-loop inputs W and the terminal error.
    """
    system = GeneralSystem.plant(spec, M=integral_boundary(Kf, spec.k))
    traj = simulate(system, w0, T, N, h=H)
    k = spec.k
    W = traj.values[:, k:, -1].copy()
    M = integral_boundary(Kf, k)
    q = np.full(N + 1, 1.0 / N)
    q[0] = q[-1] = 0.5 / N
    W[0] = np.asarray(H[0] if not callable(H) else H(0.0)) + np.einsum("y,yqn,ny->q", q, M, traj.values[0])
    goal = np.zeros_like(traj.final) if target is None else np.asarray(target, dtype=float)
    err = traj.final - goal
    return traj, W, float(np.max(np.abs(err))), l2_norm(err, N)


def replay(spec: SystemSpec, W, w0, T: float, N: int, target=None):
    """Open-loop run of the plant with the inputs W; returns (trajectory, sup error, L2 error)."""
    traj = simulate(GeneralSystem.plant(spec), w0, T, N, h=np.asarray(W, dtype=float))
    goal = np.zeros_like(traj.final) if target is None else np.asarray(target, dtype=float)
    err = traj.final - goal
    return traj, float(np.max(np.abs(err))), l2_norm(err, N)
