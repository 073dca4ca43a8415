"""Least-norm boundary control by assembling the control-to-state map column by column.

The discrete plant is time invariant, so the response to a hat function at
time node n is the response to the hat at node 1 observed (n - 1) steps
earlier.  One batched simulation therefore yields every column.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..broad_solver import GeneralSystem, choose_time_step, simulate, time_grid
from ..model import SystemSpec
from .signal import ControlSignal, l2_norm


def control_map(system: GeneralSystem, T: float, N: int):
    """Time grid and matrix R with R @ h.ravel() = terminal state for zero data; h is (nt+1, m)."""
    t = time_grid(T, choose_time_step(system.speeds, N))
    nt, m, n = len(t) - 1, system.m, system.n
    eye = np.eye(m)
    zero = np.zeros((n, N + 1, m))
    h1 = np.zeros((nt + 1, m, m))
    h1[1] = eye
    full = simulate(system, zero, T, N, h=h1, keep="all").values
    h0 = np.zeros((nt + 1, m, m))
    h0[0] = eye
    first = simulate(system, zero, T, N, h=h0, keep="final").values[-1]
    R = np.empty((n * (N + 1), nt + 1, m))
    R[:, 0, :] = first.reshape(n * (N + 1), m)
    for node in range(1, nt + 1):
        R[:, node, :] = full[nt - node + 1].reshape(n * (N + 1), m)
    return t, R.reshape(n * (N + 1), (nt + 1) * m)


def regularized_solve(R: np.ndarray, rhs: np.ndarray, mu: float, sweeps: int = 8,
                      rcond: float = 1e-12) -> np.ndarray:
    """Iterated Tikhonov: ``sweeps`` rounds of h += argmin |R d - r|^2 + mu^2 |d|^2.

    In closed form the SVD filter is 1 - (mu^2 / (s^2 + mu^2))^sweeps, so
    singular values well above mu are inverted exactly and those well below
    are suppressed.  mu = 0 gives the minimum-norm least-squares solution.
    """
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    keep = s > rcond * s[0]
    s, U, Vt = s[keep], U[:, keep], Vt[keep]
    filt = 1.0 - (mu ** 2 / (s ** 2 + mu ** 2)) ** sweeps
    return Vt.T @ (filt / s * (U.T @ rhs))


def shooting_solve(spec: SystemSpec, w0, T: float, N: int, target=None, tol: Optional[float] = None,
                   regularization: float = 1.0, system: Optional[GeneralSystem] = None) -> ControlSignal:
    """Regularized minimum-norm control steering w0 towards ``target`` (default 0) at time T.

    The damping is ``regularization * dx * |R|``: singular values of the
    discrete control map that shrink like dx (discrete remnants of directions
    the continuous system cannot reach) are not inverted, so controls stay
    bounded under refinement, while well-conditioned directions are solved
    exactly.  ``feasible`` reports whether the terminal sup
    error is within ``tol`` (default 10 / N).
    """
    system = system or GeneralSystem.plant(spec)
    n = system.n
    t, R = control_map(system, T, N)
    free = simulate(system, w0, T, N, keep="final").final
    x = np.linspace(0, 1, N + 1)
    goal = np.zeros((n, N + 1)) if target is None else np.asarray(
        target(x) if callable(target) else target, dtype=float)
    mu = regularization * np.linalg.norm(R, 2) / N
    h = regularized_solve(R, (goal - free).ravel(), mu).reshape(len(t), system.m)
    final = simulate(system, w0, T, N, h=h, keep="final").final
    err = final - goal
    sup = float(np.max(np.abs(err)))
    tol = 10.0 / N if tol is None else tol
    return ControlSignal(t, h, sup, l2_norm(err, N), sup <= tol,
                         info={"method": "shooting", "T": float(T), "N": N, "columns": int(R.shape[1]),
                               "damping": float(mu)})
