"""The Volterra change of variables u = w - int_0^x K(x, y) w(y) dy and its inverse.

Both directions use the same trapezoid stencil on [0, x_a], so the inverse
is exact forward substitution for the discrete forward map.
"""
from __future__ import annotations

import numpy as np

from .characteristics import TravelTime
from .errors import InvalidSpecError
from .kernel import KernelField
from .model import SystemSpec


def _weights(N: int) -> np.ndarray:
    """q[a, b]: trapezoid weight of node b in the integral over [0, x_a]."""
    q = np.tril(np.full((N + 1, N + 1), 1.0 / N))
    q[np.arange(N + 1), np.arange(N + 1)] = 0.5 / N
    q[:, 0] = 0.5 / N
    q[0, 0] = 0.0
    return q


def _check(Kf: KernelField, w: np.ndarray):
    if w.shape[-2:] != (Kf.n, Kf.N + 1):
        raise InvalidSpecError(f"field shape {w.shape} does not match kernel grid ({Kf.n}, {Kf.N + 1})")


def forward(Kf: KernelField, w) -> np.ndarray:
    """u on the kernel grid; ``w`` has shape (..., n, N+1)."""
    w = np.asarray(w, dtype=float)
    _check(Kf, w)
    Kq = Kf.K * _weights(Kf.N)[None, None]
    return w - np.einsum("ijab,...jb->...ia", Kq, w)


def inverse(Kf: KernelField, u) -> np.ndarray:
    """w solving w = u + int_0^x K w by forward substitution in x."""
    u = np.asarray(u, dtype=float)
    _check(Kf, u)
    N, n = Kf.N, Kf.n
    q = _weights(N)
    w = np.empty_like(u)
    w[..., 0] = u[..., 0]
    eye = np.eye(n)
    for a in range(1, N + 1):
        Ka = Kf.K[:, :, a, :a]
        rhs = u[..., a] + np.einsum("ijb,b,...jb->...i", Ka, q[a, :a], w[..., :a])
        M = eye - q[a, a] * Kf.K[:, :, a, a]
        w[..., a] = np.linalg.solve(M, rhs[..., None])[..., 0]
    return w


def target_residual(t: np.ndarray, values: np.ndarray, S: np.ndarray, spec: SystemSpec) -> float:
    """Sup of the defect of du/dt = Sigma du/dx + S(x) u(t, 0) at interior nodes.

    The transport part is differenced along each characteristic over one time
    step (foot located exactly, value interpolated linearly) and the trace
    term is averaged over the two ends.  ``values`` has shape (nt+1, n, N+1)
    and ``S`` shape (N+1, n, n).
    """
    values = np.asarray(values, dtype=float)
    S = np.asarray(S, dtype=float)
    if len(t) < 2:
        return 0.0
    N = values.shape[-1] - 1
    x = np.linspace(0, 1, N + 1)
    worst = 0.0
    trace = values[:, :, 0]                                  # (nt+1, n)
    Sv = np.einsum("xij,tj->tix", S, trace)                  # (nt+1, n, N+1)
    for i in range(spec.n):
        tt = TravelTime(spec.speeds[i])
        for lvl in range(len(t) - 1):
            dt = t[lvl + 1] - t[lvl]
            foot = tt.inverse(tt(x[1:-1]) - (dt if i < spec.k else -dt))
            ok = (foot >= 0) & (foot <= 1)
            if not ok.any():
                continue
            prev = np.interp(foot[ok], x, values[lvl, i])
            src = 0.5 * (np.interp(foot[ok], x, Sv[lvl, i]) + Sv[lvl + 1, i, 1:-1][ok])
            res = (values[lvl + 1, i, 1:-1][ok] - prev) / dt - src
            worst = max(worst, float(np.max(np.abs(res))))
    return worst
