"""Open-loop controls designed on the boundary traces of the target system.

In the transformed coordinates the state obeys du/dt = Sigma du/dx + S(x) u(t, 0)
with S supported on the positive columns, so everything is decided by the
traces Y(t) = u_+(t, 0).  Along characteristics:

* a positive component reaches x = 0 carrying its boundary input (or its
  initial value) plus the integral of S_++ Y along the way; since S_++ is
  strictly upper triangular the traces can be computed fastest first;
* a negative component leaves x = 0 with B Y(t) and collects the integral of
  S_-+ Y, so its value at the final time on the whole interval is a set of
  linear conditions on Y over windows [T - tau_r, T].

Some traces are left free on those windows and the conditions become a square
linear system (a second-kind Fredholm equation after scaling by the trailing
minors of B).  The boundary inputs are then recovered from the traces.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..broad_solver import choose_time_step, grid_aligned, time_grid
from ..characteristics import TravelTime
from ..errors import (DeltaTooLargeError, ExceptionalGammaError, InfeasibleError, InvalidSpecError,
                      NotAdmissibleError)
from ..kernel import KernelField
from ..model import SystemSpec, check_B, times_from_tau
from ..transform import forward
from .signal import ControlSignal, closed_loop

FREE, CASCADE, ZERO = 1, 0, 2


def _sample(field, x: np.ndarray) -> np.ndarray:
    return np.asarray(field(x) if callable(field) else field, dtype=float)


class TraceDesign:
    """Quadrature along characteristics of the target system on one time grid."""

    def __init__(self, spec: SystemSpec, S: np.ndarray, N: int, T: float, u0: np.ndarray,
                 uT: Optional[np.ndarray] = None):
        self.spec = spec
        self.k, self.m, self.n = spec.k, spec.m, spec.n
        self.t = time_grid(T, choose_time_step(spec.speeds, N))
        self.T = float(self.t[-1])
        self.nt = len(self.t) - 1
        self.dt = self.t[1] - self.t[0]
        self.x = np.linspace(0, 1, N + 1)
        self.S = np.asarray(S, dtype=float)
        if self.S.shape != (N + 1, self.n, self.n):
            raise InvalidSpecError("S must be sampled on the same spatial grid")
        self.travel = [TravelTime(p) for p in spec.speeds]
        self.tau = np.array([tt.total for tt in self.travel])
        self.u0 = u0
        self.uT = np.zeros_like(u0) if uT is None else uT
        self.eps = 1e-9 * self.dt
        self.ny = self.m * (self.nt + 1)

    def row(self, q, idx):
        return q * (self.nt + 1) + idx

    def path(self, lo: float, hi: float):
        """Samples on [lo, hi], trapezoid weights and linear time interpolation (i0, theta)."""
        if hi - lo <= self.eps:
            return (np.empty(0),) * 2 + (np.empty(0, int), np.empty(0))
        t = self.t
        inner = t[(t > lo + self.eps) & (t < hi - self.eps)]
        sig = np.concatenate([[lo], inner, [hi]])
        d = np.diff(sig)
        om = np.zeros_like(sig)
        om[:-1] += 0.5 * d
        om[1:] += 0.5 * d
        s = sig / self.dt
        r = np.round(s)
        s = np.where(np.abs(s - r) < 1e-9, r, s)
        i0 = np.clip(np.floor(s), 0, self.nt - 1).astype(int)
        return sig, om, i0, s - i0

    def s_entry(self, i: int, j: int, pos):
        return np.interp(pos, self.x, self.S[:, i, j])

    def _couplings(self, c: int, qs, sig, om, i0, th, pos):
        """Y-row indices and weights of sum_q int S[c, k+q](pos) Y_q."""
        rows, vals = [], []
        for q in qs:
            coef = om * self.s_entry(c, self.k + q, pos)
            if not np.any(coef):
                continue
            rows += [self.row(q, i0), self.row(q, i0 + 1)]
            vals += [coef * (1 - th), coef * th]
        if not rows:
            return np.empty(0, int), np.empty(0)
        return np.concatenate(rows), np.concatenate(vals)

    def cascade(self, roles: np.ndarray, cols: np.ndarray, n_free: int):
        """Affine map U -> Y = P U + y0 for all traces on the grid."""
        k, m, t = self.k, self.m, self.t
        P = np.zeros((self.ny, n_free))
        y0 = np.zeros(self.ny)
        for q in reversed(range(m)):
            c = k + q
            tt, tau = self.travel[c], self.tau[c]
            for idx in range(self.nt + 1):
                r = self.row(q, idx)
                if roles[q, idx] == FREE:
                    P[r, cols[q, idx]] = 1.0
                    continue
                if roles[q, idx] == ZERO:
                    continue
                tn = t[idx]
                if tn <= tau + self.eps:
                    y0[r] = np.interp(tt.inverse(tn), self.x, self.u0[c])
                    lo = 0.0
                else:
                    lo = tn - tau
                if q == m - 1:
                    continue
                sig, om, i0, th = self.path(lo, tn)
                rows, vals = self._couplings(c, range(q + 1, m), sig, om, i0, th, tt.inverse(tn - sig))
                if len(rows):
                    P[r] = vals @ P[rows]
                    y0[r] += vals @ y0[rows]
        return P, y0

    def conditions(self, eqs):
        """Rows (B Y)_r(t_n) + int_{t_n}^T S_r+(pos) Y = J_r(t_n) for each (r, n) in eqs."""
        k, m, B = self.k, self.m, self.spec.B
        E = np.zeros((len(eqs), self.ny))
        J = np.zeros(len(eqs))
        for e, (r, idx) in enumerate(eqs):
            tn = self.t[idx]
            for q in range(m):
                E[e, self.row(q, idx)] += B[r, q]
            sig, om, i0, th = self.path(tn, self.T)
            tt = self.travel[r]
            rows, vals = self._couplings(r, range(m), sig, om, i0, th, tt.inverse(sig - tn))
            np.add.at(E[e], rows, vals)
            J[e] = np.interp(tt.inverse(self.T - tn), self.x, self.uT[r])
        return E, J

    def controls(self, Y: np.ndarray) -> np.ndarray:
        """Inputs u_+(s, 1) that realise the traces Y and the final values uT on the positive block."""
        k, m, t = self.k, self.m, self.t
        H = np.zeros((self.nt + 1, m))
        flat = Y.ravel()
        for q in range(m):
            c = k + q
            tt, tau = self.travel[c], self.tau[c]
            for idx in range(self.nt + 1):
                s = t[idx]
                arrive = s + tau
                if arrive < self.T - self.eps:
                    hi = arrive
                    base = np.interp(arrive, t, Y[q])
                else:
                    hi = self.T
                    base = np.interp(tt.inverse(arrive - self.T), self.x, self.uT[c])
                if q < m - 1:
                    sig, om, i0, th = self.path(s, hi)
                    rows, vals = self._couplings(c, range(q + 1, m), sig, om, i0, th,
                                                 tt.inverse(arrive - sig))
                    base -= vals @ flat[rows] if len(rows) else 0.0
                H[idx, q] = base
        return H


def _local_block(eqs, unknowns, B):
    """The pointwise part of the condition operator: entries B[r, q] at equal time nodes."""
    D = np.zeros((len(eqs), len(unknowns)))
    by_node = {}
    for u, (q, idx) in enumerate(unknowns):
        by_node.setdefault(idx, []).append((u, q))
    for e, (r, idx) in enumerate(eqs):
        for u, q in by_node.get(idx, []):
            D[e, u] = B[r, q]
    return D


def _horizon(spec: SystemSpec, T: Optional[float]):
    tau = np.array([TravelTime(p).total for p in spec.speeds])
    t_opt = times_from_tau(tau, spec.k, spec.m).t_opt
    if T is None:
        return tau, t_opt, t_opt
    if T < t_opt - 1e-12:
        raise InfeasibleError(f"horizon {T} is below the minimal time {t_opt}")
    return tau, t_opt, float(T)


def assemble_Topt(spec: SystemSpec, S: np.ndarray, u0: np.ndarray, N: int, uT=None,
                  T: Optional[float] = None):
    """Build the square trace system; returns a dict with the design and matrices."""
    k, m = spec.k, spec.m
    tau, t_opt, T = _horizon(spec, T)
    design = TraceDesign(spec, S, N, T, u0, uT)
    t, eps = design.t, design.eps
    kh = min(k, m)
    zero_from = None
    if uT is None and m == kh:
        zero_from = design.T - tau[k - kh]
    roles = np.zeros((m, design.nt + 1), int)
    cols = np.full((m, design.nt + 1), -1)
    unknowns, eqs = [], []
    for rh in range(kh):
        r, q = k - kh + rh, m - kh + rh
        start = design.T - tau[r]
        for idx in range(design.nt + 1):
            if t[idx] < start - eps or (zero_from is not None and t[idx] >= zero_from - eps):
                continue
            roles[q, idx] = FREE
            cols[q, idx] = len(unknowns)
            unknowns.append((q, idx))
            eqs.append((r, idx))
    if zero_from is not None:
        roles[:, t >= zero_from - eps] = ZERO
    P, y0 = design.cascade(roles, cols, len(unknowns))
    E, J = design.conditions(eqs)
    A = E @ P
    rhs = J - E @ y0
    D = _local_block(eqs, unknowns, spec.B)
    return {"design": design, "A": A, "rhs": rhs, "D": D, "P": P, "y0": y0,
            "t_opt": t_opt, "unknowns": len(unknowns)}


def condition_number(system: dict) -> float:
    """Condition number of the scaled operator D^{-1} A (identity plus integral part)."""
    A, D = system["A"], system["D"]
    if A.size == 0:
        return 1.0
    try:
        scaled = np.linalg.solve(D, A)
    except np.linalg.LinAlgError:
        return float("inf")
    return float(np.linalg.cond(scaled))


def scaled_determinant_sign(system: dict) -> float:
    """Sign of det(D^{-1} A); flips across an exceptional parameter value."""
    A, D = system["A"], system["D"]
    if A.size == 0:
        return 1.0
    return float(np.linalg.slogdet(np.linalg.solve(D, A))[0])


def synthesize_Topt(spec: SystemSpec, Kf: KernelField, S: np.ndarray, w0, N: int, target=None,
                    T: Optional[float] = None, cond_max: float = 1e8,
                    tol: Optional[float] = None) -> ControlSignal:
    """Null (or, with ``target``, exact) control at T_opt or a later horizon T."""
    k, m = spec.k, spec.m
    chk = check_B(spec.B, k, m)
    if target is not None and not chk.in_Be:
        raise NotAdmissibleError("exact control needs m >= k and all k trailing minors of B invertible",
                                 failing_minor=chk.failing_minor)
    if not chk.in_B:
        raise NotAdmissibleError(f"trailing {chk.failing_minor}x{chk.failing_minor} minor of B is singular",
                                 failing_minor=chk.failing_minor)
    x = np.linspace(0, 1, N + 1)
    w0s = _sample(w0, x)
    wT = None if target is None else _sample(target, x)
    u0 = forward(Kf, w0s)
    uT = None if wT is None else forward(Kf, wT)
    system = assemble_Topt(spec, S, u0, N, uT, T)
    design = system["design"]
    cond = condition_number(system)
    if cond > cond_max:
        raise ExceptionalGammaError(f"trace system is near singular (condition {cond:.3e})", cond)
    U = np.linalg.solve(system["A"], system["rhs"]) if system["unknowns"] else np.zeros(0)
    Y = (system["P"] @ U + system["y0"]).reshape(m, design.nt + 1)
    H = design.controls(Y)
    traj, W, sup, l2 = closed_loop(spec, Kf, H, w0s, design.T, N, target=wT)
    tol = 10.0 / N if tol is None else tol
    return ControlSignal(design.t, W, sup, l2, sup <= tol, u_values=H,
                         info={"method": "fredholm", "condition": cond, "T": design.T,
                               "t_opt": system["t_opt"], "unknowns": system["unknowns"],
                               "aligned": grid_aligned(spec.speeds, N, design.T)},
                         trajectory=traj)


def t2delta_limit(spec: SystemSpec) -> float:
    """Largest delta allowed by the window geometry (strict for the first bound)."""
    tau = np.array([TravelTime(p).total for p in spec.speeds])
    k, m = spec.k, spec.m
    bounds = [tau[k - 1]]
    if m >= 2:
        bounds.append(tau[k] - tau[k + 1])
    if k >= 2:
        bounds.append(tau[k - 1] - tau[k - 2])
    return float(min(bounds))


def synthesize_T2delta(spec: SystemSpec, Kf: KernelField, S: np.ndarray, w0, delta: float, N: int,
                       picard_tol: float = 1e-12, max_iter: int = 500,
                       tol: Optional[float] = None) -> ControlSignal:
    """Null control at T_2 - delta: every trace vanishes after tau_{k+1} except the fastest one,
    which is found on [tau_{k+1} - delta, tau_{k+1}] by fixed-point iteration."""
    k, m = spec.k, spec.m
    if m < 2:
        raise InvalidSpecError("this construction needs at least two controls")
    if not delta > 0:
        raise InvalidSpecError("delta must be positive")
    chk = check_B(spec.B, k, m)
    if not chk.in_B:
        raise NotAdmissibleError(f"trailing {chk.failing_minor}x{chk.failing_minor} minor of B is singular",
                                 failing_minor=chk.failing_minor)
    tau = np.array([TravelTime(p).total for p in spec.speeds])
    t_opt = times_from_tau(tau, k, m).t_opt
    T2 = tau[k - 1] + tau[k]
    limit = t2delta_limit(spec)
    if delta >= tau[k - 1] or delta > limit + 1e-12 or T2 - delta < t_opt - 1e-12:
        raise DeltaTooLargeError(
            f"delta = {delta} exceeds the admissible range (limit {min(limit, T2 - t_opt):.6g})", history=())
    x = np.linspace(0, 1, N + 1)
    w0s = _sample(w0, x)
    u0 = forward(Kf, w0s)
    design = TraceDesign(spec, S, N, T2 - delta, u0)
    t, eps = design.t, design.eps
    lo_w, hi_w = tau[k] - delta, tau[k]
    roles = np.zeros((m, design.nt + 1), int)
    cols = np.full((m, design.nt + 1), -1)
    for q in range(m):
        roles[q, t >= tau[k + q] - eps] = ZERO
    window = np.flatnonzero((t >= lo_w - eps) & (t <= hi_w + eps))
    roles[m - 1, window] = FREE
    cols[m - 1, window] = np.arange(len(window))
    P, y0 = design.cascade(roles, cols, len(window))
    E, J = design.conditions([(k - 1, idx) for idx in window])
    A = E @ P
    rhs = J - E @ y0
    b = spec.B[k - 1, m - 1]
    U = np.zeros(len(window))
    history = []
    for it in range(1, max_iter + 1):
        nxt = U + (rhs - A @ U) / b
        diff = float(np.max(np.abs(nxt - U))) if len(U) else 0.0
        U = nxt
        history.append(diff)
        scale = max(1.0, float(np.max(np.abs(U)))) if len(U) else 1.0
        if not np.isfinite(diff) or (it > 5 and diff > 1e3 * max(history[0], 1e-300)):
            raise DeltaTooLargeError("fixed-point iteration diverges; reduce delta", history=history[-10:])
        if diff <= picard_tol * scale:
            break
    else:
        raise DeltaTooLargeError("fixed-point iteration did not contract within max_iter",
                                 history=history[-10:])
    Y = (P @ U + y0).reshape(m, design.nt + 1)
    H = design.controls(Y)
    traj, W, sup, l2 = closed_loop(spec, Kf, H, w0s, design.T, N)
    tol = 10.0 / N if tol is None else tol
    return ControlSignal(design.t, W, sup, l2, sup <= tol, u_values=H,
                         info={"method": "t2delta", "delta": float(delta), "T": design.T,
                               "iterations": it, "t_opt": t_opt,
                               "aligned": grid_aligned(spec.speeds, N, design.T)},
                         trajectory=traj)


def synthesize_m1(spec: SystemSpec, Kf: KernelField, w0, N: int, T: Optional[float] = None,
                  tol: Optional[float] = None) -> ControlSignal:
    """Single control: zero input in the transformed coordinates."""
    if spec.m != 1:
        raise InvalidSpecError("this construction is for a single control (m = 1)")
    _, t_opt, T = _horizon(spec, T)
    x = np.linspace(0, 1, N + 1)
    w0s = _sample(w0, x)
    t = time_grid(T, choose_time_step(spec.speeds, N))
    H = np.zeros((len(t), 1))
    traj, W, sup, l2 = closed_loop(spec, Kf, H, w0s, T, N)
    tol = 10.0 / N if tol is None else tol
    return ControlSignal(t, W, sup, l2, sup <= tol, u_values=H,
                         info={"method": "m1", "T": float(T), "t_opt": t_opt,
                               "aligned": grid_aligned(spec.speeds, N, T)}, trajectory=traj)


def trace_system_at(spec: SystemSpec, gamma: float, N: int, T: Optional[float] = None) -> dict:
    """Trace system (with zero data) of ``spec`` at coupling strength ``gamma``."""
    from ..kernel import assemble_S, solve_kernel
    scaled = spec.with_gamma(gamma)
    S = assemble_S(solve_kernel(scaled, N), scaled)
    return assemble_Topt(scaled, S, np.zeros((spec.n, N + 1)), N, T=T)


def scan_exceptional_gamma(spec: SystemSpec, gammas, N: int, T: Optional[float] = None):
    """Brackets (g0, g1) of consecutive gammas across which det(D^{-1} A) changes sign."""
    signs = [scaled_determinant_sign(trace_system_at(spec, g, N, T)) for g in gammas]
    return [(float(gammas[i]), float(gammas[i + 1])) for i in range(len(gammas) - 1)
            if signs[i] * signs[i + 1] < 0]


def refine_exceptional_gamma(spec: SystemSpec, bracket, N: int, T: Optional[float] = None,
                             cond_target: float = 1e8, max_iter: int = 80):
    """Bisect a sign-change bracket until the condition number exceeds ``cond_target``.

    Returns (gamma, condition number).
    """
    lo, hi = bracket
    s_lo = scaled_determinant_sign(trace_system_at(spec, lo, N, T))
    best = (lo, 0.0)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        system = trace_system_at(spec, mid, N, T)
        cond = condition_number(system)
        if cond > best[1]:
            best = (mid, cond)
        if cond > cond_target or hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
        if scaled_determinant_sign(system) == s_lo:
            lo = mid
        else:
            hi = mid
    return best
