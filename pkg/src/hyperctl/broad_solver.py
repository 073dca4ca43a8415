"""Semi-Lagrangian solver for linear hyperbolic systems in the broad sense.

Solves

    dv/dt = Sigma(x) dv/dx + C(x) v + D(x) v(t, 0) + f(t, x)
    v_-(t, 0) = B v_+(t, 0) + g(t)
    v_+(t, 1) = sum_r A_r v(t, x_r) + int_0^1 M(y) v(t, y) dy + h(t)

on a uniform grid.  Each component is transported exactly along its
characteristic over one step; the solution is read off at the foot by linear
interpolation and the lower-order terms are integrated with the trapezoid rule
along the characteristic.  The implicit coupling inside a step (boundary
conditions and trapezoid end point) is resolved by fixed-point iteration,
which is the Picard iteration of the integral formulation restricted to one
time level.  Since the discrete map is causal this gives the same fixed point
as sweeping the whole time horizon at once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .characteristics import TravelTime
from .errors import InvalidSpecError, NonConvergenceError
from .model import Coupling, SpeedProfile, SystemSpec

_SNAP = 1e-9


def _as_matrix_field(obj, n_rows: int, n_cols: int, x: np.ndarray) -> Optional[np.ndarray]:
    """Sample a matrix-valued coefficient on the grid; returns (N+1, n_rows, n_cols) or None."""
    if obj is None:
        return None
    if isinstance(obj, Coupling) or callable(obj):
        out = np.asarray(obj(x), dtype=float)
    else:
        out = np.asarray(obj, dtype=float)
        if out.ndim == 2:
            out = np.broadcast_to(out, (len(x),) + out.shape)
        elif out.shape[0] != len(x):
            raise InvalidSpecError(f"coefficient sampled on {out.shape[0]} points, grid has {len(x)}")
    out = out.reshape(len(x), n_rows, n_cols)
    if not np.any(out):
        return None
    return np.ascontiguousarray(out)


class GeneralSystem:
    """Coefficients of a system solved by :func:`simulate`.

    ``C``, ``D`` and ``M`` may be constant matrices, callables of x, or arrays
    already sampled on the solver grid.  ``boundary_terms`` is a sequence of
    ``(position, matrix)`` pairs with matrices of shape (m, n).
    """

    def __init__(self, k: int, m: int, speeds: Sequence, B, C=None, D=None,
                 boundary_terms: Sequence = (), M=None, name: str = ""):
        self.k, self.m = int(k), int(m)
        self.speeds = tuple(s if isinstance(s, SpeedProfile) else SpeedProfile.constant(s) for s in speeds)
        if len(self.speeds) != self.n:
            raise InvalidSpecError("wrong number of speeds")
        self.B = np.atleast_2d(np.asarray(B, dtype=float)).reshape(self.k, self.m)
        self.C, self.D, self.M = C, D, M
        self.boundary_terms = [(float(p), np.asarray(A, dtype=float).reshape(self.m, self.n))
                               for p, A in boundary_terms]
        for p, _ in self.boundary_terms:
            if not 0.0 <= p <= 1.0:
                raise InvalidSpecError("boundary term position outside [0, 1]")
        self.name = name
        self.travel = [TravelTime(s) for s in self.speeds]

    @property
    def n(self) -> int:
        return self.k + self.m

    @classmethod
    def plant(cls, spec: SystemSpec, boundary_terms: Sequence = (), M=None) -> "GeneralSystem":
        """The controlled system itself, optionally with a feedback law on x = 1."""
        C = None if spec.C.is_zero or spec.gamma == 0 else spec.coupling
        return cls(spec.k, spec.m, spec.speeds, spec.B, C=C, boundary_terms=boundary_terms, M=M,
                   name=spec.name)

    @classmethod
    def target(cls, spec: SystemSpec, S, boundary_terms: Sequence = ()) -> "GeneralSystem":
        """Transport with the boundary-trace coupling ``S(x) v(t, 0)`` and no local coupling."""
        return cls(spec.k, spec.m, spec.speeds, spec.B, D=S, boundary_terms=boundary_terms,
                   name=spec.name)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    values: np.ndarray
    iterations: int
    residual: float

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def choose_time_step(speeds: Sequence[SpeedProfile], N: int, max_ratio: int = 8) -> float:
    """A step on which constant commensurate speeds move whole cells; else CFL one."""
    dx = 1.0 / N
    if all(s.is_constant for s in speeds):
        lam = np.array([s.values[0] for s in speeds])
        top = lam.max()
        for q in range(1, max_ratio + 1):
            ratios = lam * q / top
            if np.all(np.abs(ratios - np.round(ratios)) < 1e-12):
                return dx * q / top
    top = max(float(np.max(s.values)) for s in speeds)
    return dx / top


def grid_aligned(speeds: Sequence[SpeedProfile], N: int, T: float) -> bool:
    """True when every characteristic moves whole cells per step and T and all
    traversal times are whole numbers of steps; discontinuous controls are then
    transported without smearing."""
    if not all(s.is_constant for s in speeds):
        return False
    dt = choose_time_step(speeds, N)
    lam = np.array([s.values[0] for s in speeds])
    cells = lam * dt * N
    steps = np.append(N / cells, T / dt)
    return bool(np.all(np.abs(cells - np.round(cells)) < 1e-9)
                and np.all(np.abs(steps - np.round(steps)) < 1e-9))


def time_grid(T: float, dt: float) -> np.ndarray:
    if not np.isfinite(T) or T < 0:
        raise InvalidSpecError("horizon T must be finite and non-negative")
    ratio = T / dt
    nt = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 else int(np.ceil(ratio))
    nt = max(nt, 1)
    return np.linspace(0.0, T, nt + 1)


def _forcing(fun, t_index: int, t: float, shape) -> Optional[np.ndarray]:
    if fun is None:
        return None
    if callable(fun):
        val = np.asarray(fun(t), dtype=float)
    else:
        val = np.asarray(fun[t_index], dtype=float)
    if val.ndim == 1:
        val = val[:, None]
    return np.broadcast_to(val, shape)


class _Stepper:
    """Precomputed feet, weights and boundary data for one (system, grid, dt)."""

    def __init__(self, system: GeneralSystem, N: int, dt: float):
        self.sys = system
        self.N, self.dt = N, dt
        n, P = system.n, N + 1
        self.P = P
        x = np.linspace(0.0, 1.0, P)
        self.x = x
        lo, w, comp, inner = [], [], [], []
        theta, bnode = [], []
        for i, tt in enumerate(system.travel):
            phi = tt(x)
            if i < system.k:
                foot = phi - dt
                crossing = foot < _SNAP * dt
                th = 1.0 - phi / dt
                edge = 0
            else:
                foot = phi + dt
                crossing = foot > tt.total - _SNAP * dt
                th = 1.0 - (tt.total - phi) / dt
                edge = N
            X = tt.inverse(np.clip(foot, 0.0, tt.total))
            s = X * N
            r = np.round(s)
            s = np.where(np.abs(s - r) < _SNAP, r, s)
            base = np.clip(np.floor(s), 0, N - 1)
            lo.append(i * P + base.astype(int))
            w.append(s - base)
            comp.append(np.full(P, i))
            inner.append(~crossing)
            th = np.where(np.abs(th) < _SNAP, 0.0, np.where(np.abs(th - 1) < _SNAP, 1.0, th))
            theta.append(np.clip(th, 0.0, 1.0))
            bnode.append(np.full(P, i * P + edge))
        lo, w, comp = np.concatenate(lo), np.concatenate(w), np.concatenate(comp)
        inner, theta, bnode = np.concatenate(inner), np.concatenate(theta), np.concatenate(bnode)
        self.inner = np.flatnonzero(inner)
        self.cross = np.flatnonzero(~inner)
        self.lo = lo[self.inner]
        self.w = w[self.inner][:, None]
        self.theta = theta[self.cross][:, None]
        self.rem = ((1.0 - theta[self.cross]) * dt)[:, None]
        self.bnode = bnode[self.cross]
        self.ccomp = comp[self.cross]

        k, m = system.k, system.m
        self.Cg = _as_matrix_field(system.C, n, n, x)
        self.Dg = _as_matrix_field(system.D, n, n, x)
        Mg = _as_matrix_field(system.M, m, n, x)
        if Mg is not None:
            q = np.full(P, 1.0 / N)
            q[0] = q[-1] = 0.5 / N
            Mg = Mg * q[:, None, None]
        self.Mg = Mg
        self.terms = []
        for pos, A in system.boundary_terms:
            s = pos * N
            j = int(min(np.floor(s), N - 1))
            self.terms.append((j, s - j, A))

    def source(self, v: np.ndarray, f) -> np.ndarray:
        """C v + D v(t, 0) + f on the grid; v has shape (n, P, batch)."""
        out = np.zeros_like(v)
        if self.Cg is not None:
            out += np.einsum("jil,ljb->ijb", self.Cg, v)
        if self.Dg is not None:
            out += np.einsum("jil,lb->ijb", self.Dg, v[:, 0])
        if f is not None:
            out += f
        return out

    def boundary(self, v: np.ndarray, g, h) -> np.ndarray:
        """Boundary values prescribed at the current level, shape (n, batch)."""
        k = self.sys.k
        out = np.empty((self.sys.n, v.shape[-1]))
        out[:k] = self.sys.B @ v[k:, 0]
        if g is not None:
            out[:k] += g
        right = np.zeros((self.sys.m, v.shape[-1]))
        for j, a, A in self.terms:
            right += A @ ((1 - a) * v[:, j] + a * v[:, j + 1])
        if self.Mg is not None:
            right += np.einsum("jqn,njb->qb", self.Mg, v)
        if h is not None:
            right += h
        out[k:] = right
        return out


def _initial_state(v0, x: np.ndarray, n: int) -> np.ndarray:
    arr = np.asarray(v0(x) if callable(v0) else v0, dtype=float)
    if arr.shape[:2] != (n, len(x)):
        raise InvalidSpecError(f"initial data must have shape ({n}, {len(x)}[, batch]), got {arr.shape}")
    return arr[..., None] if arr.ndim == 2 else arr


def simulate(system: GeneralSystem, v0, T: float, N: int, h=None, g=None, f=None,
             dt: Optional[float] = None, picard_tol: float = 1e-13, max_iter: int = 200,
             keep: str = "all") -> Trajectory:
    """Integrate ``system`` from ``v0`` on [0, T] with N spatial cells.

    ``h`` (shape (m,) per time) and ``g`` (shape (k,)) are boundary inputs and
    ``f(t)`` returns an (n, N+1) forcing.  Inputs may be callables of t or
    arrays indexed by time level.  ``keep`` is "all" or "final".
    """
    if N < 2:
        raise InvalidSpecError("need at least two cells")
    if keep not in ("all", "final"):
        raise ValueError("keep must be 'all' or 'final'")
    t = time_grid(T, dt or choose_time_step(system.speeds, N))
    step = t[1] - t[0]
    st = _Stepper(system, N, step)
    n, P = system.n, st.P
    v = _initial_state(v0, st.x, n)
    batched = np.ndim(v0(st.x) if callable(v0) else v0) == 3
    nb = v.shape[-1]
    k, m = system.k, system.m

    def inputs(idx):
        return (_forcing(g, idx, t[idx], (k, nb)),
                _forcing(h, idx, t[idx], (m, nb)),
                None if f is None else np.broadcast_to(
                    np.asarray(f(t[idx]), dtype=float).reshape(n, P, -1), v.shape))

    g0, h0, f0 = inputs(0)
    s_old = st.source(v, f0).reshape(n * P, nb)
    b_old = st.boundary(v, g0, h0)
    store = [v.copy()] if keep == "all" else None
    total_iter, worst = 0, 0.0
    half = 0.5 * step
    for idx in range(1, len(t)):
        flat = v.reshape(n * P, nb)
        wi = st.w
        base = ((1 - wi) * flat[st.lo] + wi * flat[st.lo + 1]
                + half * ((1 - wi) * s_old[st.lo] + wi * s_old[st.lo + 1]))
        b_part = (1 - st.theta) * b_old[st.ccomp] + 0.5 * st.rem * (1 - st.theta) * s_old[st.bnode]
        gi, hi, fi = inputs(idx)
        new = flat.copy()
        for it in range(1, max_iter + 1):
            cur = new.reshape(n, P, nb)
            s_new = st.source(cur, fi).reshape(n * P, nb)
            b_new = st.boundary(cur, gi, hi)
            nxt = np.empty_like(new)
            nxt[st.inner] = base + half * s_new[st.inner]
            nxt[st.cross] = (b_part + st.theta * b_new[st.ccomp]
                             + 0.5 * st.rem * (st.theta * s_new[st.bnode] + s_new[st.cross]))
            diff = float(np.max(np.abs(nxt - new))) if nxt.size else 0.0
            new = nxt
            if diff <= picard_tol * max(1.0, float(np.max(np.abs(new)))) and it > 1:
                break
        else:
            raise NonConvergenceError(f"fixed-point iteration stalled at t = {t[idx]:.6g}",
                                      history=(diff,))
        total_iter += it
        worst = max(worst, diff)
        v = new.reshape(n, P, nb)
        cur = v
        s_old = st.source(cur, fi).reshape(n * P, nb)
        b_old = st.boundary(cur, gi, hi)
        if store is not None:
            store.append(v.copy())
    values = np.stack(store) if store is not None else v[None].copy()
    if not batched:
        values = values[..., 0]
    return Trajectory(t=t, x=st.x, values=values, iterations=total_iter, residual=worst)


def trace_at_boundary(traj: Trajectory, side: int) -> np.ndarray:
    """Values at x = 0 (side 0) or x = 1 (side 1), shape (len(t), n)."""
    if side not in (0, 1):
        raise InvalidSpecError("side must be 0 or 1")
    return traj.values[:, :, 0 if side == 0 else -1].copy()
