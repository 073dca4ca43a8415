"""Backstepping kernel on the triangle {0 <= y <= x <= 1} and the trace matrix S.

Entry K_ij satisfies the transport equation

    a_ij(y) dK/dy + b_ij(x) dK/dx = (K C)_ij(y) - K_ij Sigma_jj'(y)

with a_ij = Sigma_jj(y), b_ij = Sigma_ii(x).  Each node is updated by one
semi-Lagrangian step backwards along (b, a) towards the edge carrying the
data for that entry: the diagonal (K_ij = C_ij / (a - b)), the bottom edge
(zero for the negative block, the algebraic relation that kills the lower
triangle of S_++ otherwise) or the right edge (prescribed values).  One
sweep over all nodes is an affine map of K whose rows do not interact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .characteristics import TravelTime
from .errors import InvalidSpecError, NonConvergenceError
from .model import SystemSpec

_EPS = 1e-12


def pair_case(i: int, j: int, k: int) -> str:
    """Which edges feed K_ij: 'a' diagonal, 'b' diagonal/bottom, 'c' diagonal/right, 'd' bottom."""
    if i == j:
        return "d"
    if (i < k) != (j < k):
        return "a"
    if (i < j < k) or (k <= j < i):
        return "b"
    return "c"


def right_edge_pairs(k: int, m: int):
    n = k + m
    return [(i, j) for i in range(n) for j in range(n) if pair_case(i, j, k) == "c"]


@dataclass
class KernelField:
    x: np.ndarray
    K: np.ndarray                       # (n, n, N+1, N+1) indexed [i, j, x-node, y-node], y <= x
    gamma3: Dict[Tuple[int, int], object] = field(default_factory=dict)
    iterations: int = 0
    residual: float = 0.0

    @property
    def N(self) -> int:
        return len(self.x) - 1

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def bottom(self) -> np.ndarray:
        """K(x, 0) with shape (N+1, n, n)."""
        return np.moveaxis(self.K[:, :, :, 0], -1, 0)

    def right(self) -> np.ndarray:
        """K(1, y) with shape (N+1, n, n)."""
        return np.moveaxis(self.K[:, :, -1, :], -1, 0)

    def at(self, a: int) -> np.ndarray:
        """K(x_a, y) for y = x_0..x_a, shape (a+1, n, n)."""
        return np.moveaxis(self.K[:, :, a, : a + 1], -1, 0)

    @classmethod
    def constant(cls, matrix, N: int) -> "KernelField":
        M = np.asarray(matrix, dtype=float)
        n = M.shape[0]
        K = np.broadcast_to(M[:, :, None, None], (n, n, N + 1, N + 1)).copy()
        K *= np.tril(np.ones((N + 1, N + 1)))[None, None]
        return cls(np.linspace(0, 1, N + 1), K)

    @classmethod
    def zero(cls, n: int, N: int) -> "KernelField":
        return cls(np.linspace(0, 1, N + 1), np.zeros((n, n, N + 1, N + 1)))


def _tri_interp(x, y, N):
    """Vertices (flat a*P + b) and weights of the diagonal-split linear interpolant."""
    P = N + 1
    x = np.clip(x, 0.0, 1.0)
    y = np.clip(np.minimum(y, x), 0.0, 1.0)
    sx, sy = x * N, y * N
    sx = np.where(np.abs(sx - np.round(sx)) < 1e-9, np.round(sx), sx)
    sy = np.where(np.abs(sy - np.round(sy)) < 1e-9, np.round(sy), sy)
    a0 = np.clip(np.floor(sx), 0, N - 1).astype(int)
    b0 = np.minimum(np.clip(np.floor(sy), 0, N - 1).astype(int), a0)
    xi = sx - a0
    eta = np.clip(sy - b0, 0.0, 1.0)
    eta = np.where(b0 == a0, np.minimum(eta, xi), eta)
    lower = eta <= xi
    v0 = a0 * P + b0
    v1 = np.where(lower, (a0 + 1) * P + b0, a0 * P + b0 + 1)
    v2 = (a0 + 1) * P + b0 + 1
    w0 = np.where(lower, 1 - xi, 1 - eta)
    w1 = np.where(lower, xi - eta, eta - xi)
    w2 = np.where(lower, eta, xi)
    return np.stack([v0, v1, v2], -1), np.stack([w0, w1, w2], -1)


def _edge_values(fun, y):
    if callable(fun):
        return np.broadcast_to(np.asarray(fun(y), dtype=float), y.shape).copy()
    return np.full(y.shape, float(fun))


class _PairPlan:
    """Precomputed update for one entry (i, j)."""

    def __init__(self, spec: SystemSpec, i: int, j: int, N: int, travel, gamma3):
        k, n, P = spec.k, spec.n, N + 1
        self.i, self.j = i, j
        self.case = pair_case(i, j, k)
        x = np.linspace(0, 1, P)
        A, Bn = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
        inside = Bn <= A
        xa, yb = x[A[inside]], x[Bn[inside]]
        flat = (A * P + Bn)[inside]
        s_i, s_j = spec.signs[i], spec.signs[j]
        d = s_i if self.case == "c" else -s_i
        ti, tj = travel[i], travel[j]
        lam_max = max(float(np.max(spec.speeds[i].values)), float(np.max(spec.speeds[j].values)))
        h = 1.0 / (N * lam_max)

        def bc1(xe):
            C = spec.coupling(xe)[..., i, j]
            sig = spec.sigma(xe)
            return C / (sig[..., j] - sig[..., i])

        fixed_bc1 = np.zeros(flat.shape, bool) if i == j else (A[inside] == Bn[inside])
        fixed_right = (A[inside] == N) & ~fixed_bc1 if self.case == "c" else np.zeros(flat.shape, bool)
        fixed_bottom = ((Bn[inside] == 0) & ~fixed_bc1) if self.case in "bd" else np.zeros(flat.shape, bool)
        fixed = fixed_bc1 | fixed_right | fixed_bottom

        # bottom-edge relation: coefficient on K[i, r](x, 0) for r < k
        if i >= k and j >= k and self.case in "bd":
            lam0 = np.array([p(0.0) for p in spec.speeds])
            self.bottom_coef = lam0[:k] * spec.B[:, j - k] / lam0[j]
        else:
            self.bottom_coef = None

        const = np.zeros(flat.shape)
        const[fixed_bc1] = bc1(xa[fixed_bc1])
        if fixed_right.any():
            const[fixed_right] = _edge_values(gamma3.get((i, j), 0.0), yb[fixed_right])
        self.fixed_flat = flat[fixed]
        self.fixed_const = const[fixed]
        self.fixed_bottom_a = A[inside][fixed_bottom & fixed] if self.bottom_coef is not None else None
        self.fixed_bottom_pos = np.flatnonzero(fixed_bottom[fixed]) if self.bottom_coef is not None else None

        # stepped nodes
        mv = ~fixed
        px, py, pf = xa[mv], yb[mv], flat[mv]
        phx, phy = ti(px), tj(py)
        hx = np.full(px.shape, np.inf)
        hy = np.full(px.shape, np.inf)
        if s_i * d > 0:
            hx = ti.total - phx
        if s_j * d < 0:
            hy = phy.copy()

        def position(hh):
            return ti.inverse(phx + s_i * d * hh), tj.inverse(phy + s_j * d * hh)

        qx, qy = position(h)
        g0 = px - py
        gh = qx - qy
        hd = np.full(px.shape, np.inf)
        cross = gh < -_EPS
        if cross.any():
            lo = np.zeros(cross.sum())
            hi = np.full(cross.sum(), h)
            ti_sub = (ti, tj)
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                mx = ti_sub[0].inverse(phx[cross] + s_i * d * mid)
                my = ti_sub[1].inverse(phy[cross] + s_j * d * mid)
                below = (mx - my) >= 0
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            hd[cross] = 0.5 * (lo + hi)
        heff = np.minimum.reduce([np.full(px.shape, h), hx, hy, hd])
        exit_kind = np.select([heff == h, heff == hy, heff == hx], [0, 2, 3], 1)
        # heff equal to h and to an exit distance: exit takes priority
        exit_kind = np.where((heff == h) & (hy == h), 2, exit_kind)
        exit_kind = np.where((heff == h) & (hx == h), 3, exit_kind)
        ex, ey = position(heff)
        ey = np.where(exit_kind == 2, 0.0, ey)
        ex = np.where(exit_kind == 3, 1.0, ex)
        diag = exit_kind == 1
        mid = 0.5 * (ex + ey)
        ex = np.where(diag, mid, ex)
        ey = np.where(diag, mid, ey)
        verts, wts = _tri_interp(ex, ey, N)

        self.flat = pf
        self.verts, self.wts = verts, wts
        self.sig = d * heff
        self.interior = exit_kind == 0
        data = np.zeros(px.shape)
        if diag.any():
            data[diag] = bc1(ex[diag]) if i != j else 0.0
        right = exit_kind == 3
        if right.any():
            data[right] = _edge_values(gamma3.get((i, j), 0.0), ey[right])
        self.data = data
        bot = exit_kind == 2
        self.bot_idx = np.flatnonzero(bot)
        if self.bottom_coef is not None and bot.any():
            s = ex[bot] * N
            a0 = np.clip(np.floor(s), 0, N - 1).astype(int)
            self.bot_a0 = a0
            self.bot_w = s - a0
        else:
            self.bot_a0 = None


def _derivative_grid(spec, x):
    return np.stack([spec.signs[j] * spec.speeds[j].derivative(x) for j in range(spec.n)], -1)


def _row_system(plans, spec: SystemSpec, N: int, Cy, dsig, tri_id, T):
    """The affine sweep K_i. -> A K_i. + c for one row of K, as a sparse matrix."""
    n, k, P = spec.n, spec.k, N + 1
    rows, cols, vals = [], [], []
    c = np.zeros(n * T)

    def add(r, cl, v):
        v = np.broadcast_to(v, np.shape(r))
        keep = v != 0
        rows.append(r[keep])
        cols.append(cl[keep])
        vals.append(v[keep])

    for pl in plans:
        j, off = pl.j, pl.j * T
        rid = off + tri_id[pl.fixed_flat]
        c[rid] = pl.fixed_const
        if pl.bottom_coef is not None and len(pl.fixed_bottom_pos):
            sub = rid[pl.fixed_bottom_pos]
            for r in range(k):
                add(sub, r * T + tri_id[pl.fixed_bottom_a * P], pl.bottom_coef[r])
        rid = off + tri_id[pl.flat]
        node = tri_id[pl.flat]
        c[rid] = pl.data
        inner = pl.interior
        for v in range(3):
            add(rid[inner], off + tri_id[pl.verts[inner, v]], pl.wts[inner, v])
        if pl.bot_a0 is not None:
            sub = rid[pl.bot_idx]
            for r in range(k):
                add(sub, r * T + tri_id[pl.bot_a0 * P], pl.bottom_coef[r] * (1 - pl.bot_w))
                add(sub, r * T + tri_id[(pl.bot_a0 + 1) * P], pl.bottom_coef[r] * pl.bot_w)
        half = 0.5 * pl.sig
        points = [(node, pl.flat % P, np.ones_like(half))]
        points += [(tri_id[pl.verts[:, v]], pl.verts[:, v] % P, pl.wts[:, v]) for v in range(3)]
        for ids, b, w in points:
            if Cy is not None:
                for l in range(n):
                    add(rid, l * T + ids, -half * w * Cy[b, l, j])
            add(rid, off + ids, half * w * dsig[b, j])
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n * T, n * T))
    return A, c


def solve_kernel(spec: SystemSpec, N: int, gamma3_data: Optional[dict] = None,
                 picard_tol: float = 1e-12, max_iter: Optional[int] = None,
                 method: str = "picard") -> KernelField:
    """Kernel on the (N+1) x (N+1) restriction of the unit-square grid.

    The discrete sweep is affine, K -> A K + c, and rows of K decouple.  The
    default sweeps from zero until the increment is below ``picard_tol``;
    ``method="direct"`` starts the sweeps from a sparse LU solve of
    (I - A) K = c instead.
    """
    if method not in ("direct", "picard"):
        raise ValueError("method must be 'direct' or 'picard'")
    gamma3 = dict(gamma3_data or {})
    allowed = set(right_edge_pairs(spec.k, spec.m))
    bad = [key for key in gamma3 if tuple(key) not in allowed]
    if bad:
        raise InvalidSpecError(f"right-edge data given for pairs without right-edge inflow: {bad}")
    n, P = spec.n, N + 1
    x = np.linspace(0, 1, P)
    travel = [TravelTime(p) for p in spec.speeds]
    Cy = None if (spec.C.is_zero or spec.gamma == 0) else spec.coupling(x)
    dsig = _derivative_grid(spec, x)
    A_idx, B_idx = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
    inside = (B_idx <= A_idx).ravel()
    T = int(inside.sum())
    tri_id = np.full(P * P, -1)
    tri_id[inside] = np.arange(T)
    nodes = np.flatnonzero(inside)
    if max_iter is None:
        ratio = max(float(np.max(p.values)) / float(np.min(p.values)) for p in spec.speeds)
        max_iter = int(4 * N * ratio + 200)
    K = np.zeros((n, n, P, P))
    total_it, worst = 0, 0.0
    for i in range(n):
        plans = [_PairPlan(spec, i, j, N, travel, gamma3) for j in range(n)]
        A, c = _row_system(plans, spec, N, Cy, dsig, tri_id, T)
        if method == "direct":
            try:
                u = splinalg.splu((sparse.identity(n * T, format="csc") - A).tocsc()).solve(c)
            except RuntimeError:
                u = np.zeros(n * T)
        else:
            u = np.zeros(n * T)
        history = []
        for it in range(1, max_iter + 1):
            nxt = A @ u + c
            diff = float(np.max(np.abs(nxt - u)))
            u = nxt
            history.append(diff)
            if diff <= picard_tol * max(1.0, float(np.max(np.abs(u)))):
                break
        else:
            raise NonConvergenceError(f"kernel sweeps for row {i + 1} did not converge",
                                      history=history[-10:])
        total_it += it
        worst = max(worst, diff)
        K[i].reshape(n, P * P)[:, nodes] = u.reshape(n, T)
    return KernelField(x, K, gamma3, total_it, worst)


def assemble_S(Kf: KernelField, spec: SystemSpec, tol: float = 1e-8) -> np.ndarray:
    """S(x) = K(x, 0) Sigma(0) Q sampled on the kernel grid, shape (N+1, n, n)."""
    k, m, n = spec.k, spec.m, spec.n
    Q = np.zeros((n, n))
    Q[:k, k:] = spec.B
    Q[k:, k:] = np.eye(m)
    sig0 = spec.sigma(np.array(0.0))
    S = np.einsum("xij,j,jl->xil", Kf.bottom(), sig0, Q)
    lower = np.tril(np.ones((m, m), bool))
    # the corner x = y = 0 carries diagonal data, which need not match the bottom edge
    leak = S[1:, k:, k:][:, lower]
    scale = max(1.0, float(np.max(np.abs(S))))
    if leak.size and float(np.max(np.abs(leak))) > tol * scale:
        raise NonConvergenceError("lower triangle of S_++ does not vanish; bottom-edge data failed",
                                  history=(float(np.max(np.abs(leak))),))
    S[:, k:, k:][:, lower] = 0.0
    return S


def kernel_residual(Kf: KernelField, spec: SystemSpec) -> dict:
    """Finite-difference defects of the kernel equation and of the three edge conditions."""
    K, x, N = Kf.K, Kf.x, Kf.N
    n, k = spec.n, spec.k
    dx = 1.0 / N
    sig = spec.sigma(x)
    dsig = _derivative_grid(spec, x)
    Cy = spec.coupling(x)
    dKx = (K[:, :, 1:, :] - K[:, :, :-1, :]) / dx        # backward in x at a = 1..N
    dKy = (K[:, :, :, 1:] - K[:, :, :, :-1]) / dx        # forward in y at b = 0..N-1
    pde = 0.0
    for a in range(2, N + 1):
        b = np.arange(1, a)
        Kab = K[:, :, a, b]                                # (n, n, nb)
        term = (sig[b].T[None, :, :] * dKy[:, :, a, b] + sig[a][:, None, None] * dKx[:, :, a - 1, b]
                + Kab * dsig[b].T[None, :, :] - np.einsum("ilb,blj->ijb", Kab, Cy[b]))
        pde = max(pde, float(np.max(np.abs(term))))
    off = ~np.eye(n, dtype=bool)
    diag_vals = np.stack([K[:, :, a, a] for a in range(1, N)])
    c = Cy[1:N] - diag_vals * sig[1:N][:, None, :] + sig[1:N][:, :, None] * diag_vals
    bc1 = float(np.max(np.abs(c[:, off]))) if N > 1 else 0.0
    bc2 = 0.0
    bottom = Kf.bottom()[1:N]
    for i in range(k):
        for j in range(i, k):
            bc2 = max(bc2, float(np.max(np.abs(bottom[:, i, j]))))
    m = spec.m
    if m:
        Q = np.zeros((n, n))
        Q[:k, k:] = spec.B
        Q[k:, k:] = np.eye(m)
        S = np.einsum("xij,j,jl->xil", bottom, spec.sigma(np.array(0.0)), Q)
        low = np.tril(np.ones((m, m), bool))
        bc2 = max(bc2, float(np.max(np.abs(S[:, k:, k:][:, low]))))
    bc3 = 0.0
    y = x[1:N]
    for (i, j) in right_edge_pairs(k, m):
        want = _edge_values(Kf.gamma3.get((i, j), 0.0), y)
        bc3 = max(bc3, float(np.max(np.abs(K[i, j, N, 1:N] - want))))
    return {"pde_residual": pde, "bc1_residual": bc1, "bc2_residual": bc2, "bc3_residual": bc3}
