"""Problem datum, standing assumptions, time constants and admissible boundary matrices.

Speeds are magnitudes; component ``i < k`` travels with speed ``-lambda_i`` in
the equation (i.e. its characteristics move to the right), component
``i >= k`` with ``+lambda_i``.  All indices in the Python API are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidSpecError


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-linear positive speed on [0, 1], extended constantly outside."""

    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xs = np.atleast_1d(np.asarray(self.xs, dtype=float))
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if xs.shape != vals.shape or xs.ndim != 1:
            raise InvalidSpecError("speed profile: xs and values must be 1-D of equal length")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vals))):
            raise InvalidSpecError("speed profile: non-finite sample")
        if np.any(vals <= 0):
            raise InvalidSpecError("speed profile: speeds must be strictly positive")
        if len(xs) > 1:
            if abs(xs[0]) > 1e-14 or abs(xs[-1] - 1.0) > 1e-14 or np.any(np.diff(xs) <= 0):
                raise InvalidSpecError("speed profile: sample positions must increase from 0 to 1")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float) -> "SpeedProfile":
        return cls(np.array([0.0]), np.array([float(value)]))

    @classmethod
    def from_function(cls, fun: Callable, samples: int = 65) -> "SpeedProfile":
        xs = np.linspace(0.0, 1.0, samples)
        return cls(xs, np.asarray(fun(xs), dtype=float))

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1 or bool(np.all(self.values == self.values[0]))

    def __call__(self, x):
        if len(self.xs) == 1:
            return np.full_like(np.asarray(x, dtype=float), self.values[0])
        return np.interp(x, self.xs, self.values)

    def derivative(self, x):
        """Slope of the interpolant; averaged at interior sample points, 0 outside [0, 1]."""
        x = np.asarray(x, dtype=float)
        if len(self.xs) == 1:
            return np.zeros_like(x)
        slopes = np.diff(self.values) / np.diff(self.xs)
        right = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(slopes) - 1)
        left = np.clip(np.searchsorted(self.xs, x, side="left") - 1, 0, len(slopes) - 1)
        out = 0.5 * (slopes[left] + slopes[right])
        return np.where((x < 0) | (x > 1), 0.0, out)

    def lipschitz(self) -> float:
        if len(self.xs) == 1:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.xs))))


class Coupling:
    """Matrix-valued function of x: constant, or piecewise-linear between samples."""

    def __init__(self, matrix=None, xs=None, matrices=None, fun: Optional[Callable] = None):
        self._fun = fun
        if fun is not None:
            self.n = np.asarray(fun(np.array([0.0]))).shape[-1]
            self.xs = None
            self.mats = None
            return
        if matrix is not None:
            m = np.asarray(matrix, dtype=float)
            self.xs = np.array([0.0])
            self.mats = m[None]
        else:
            self.xs = np.asarray(xs, dtype=float)
            self.mats = np.asarray(matrices, dtype=float)
        if self.mats.ndim != 3 or self.mats.shape[1] != self.mats.shape[2]:
            raise InvalidSpecError("coupling: matrices must be square")
        if not np.all(np.isfinite(self.mats)):
            raise InvalidSpecError("coupling: non-finite entry")
        self.n = self.mats.shape[1]

    @property
    def is_zero(self) -> bool:
        if self._fun is not None:
            return not np.any(self(np.linspace(0, 1, 257)))
        return not np.any(self.mats)

    @property
    def is_constant(self) -> bool:
        return self._fun is None and len(self.xs) == 1

    def __call__(self, x) -> np.ndarray:
        """Return an array of shape ``x.shape + (n, n)``."""
        x = np.asarray(x, dtype=float)
        if self._fun is not None:
            return np.asarray(self._fun(x), dtype=float).reshape(x.shape + (self.n, self.n))
        if len(self.xs) == 1:
            return np.broadcast_to(self.mats[0], x.shape + (self.n, self.n)).copy()
        flat = x.ravel()
        out = np.empty((flat.size, self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                out[:, i, j] = np.interp(flat, self.xs, self.mats[:, i, j])
        return out.reshape(x.shape + (self.n, self.n))


@dataclass(frozen=True)
class SystemSpec:
    """dw/dt = Sigma(x) dw/dx + gamma C(x) w,  w_-(t,0) = B w_+(t,0),  w_+(t,1) = controls."""

    k: int
    m: int
    speeds: tuple
    C: Coupling
    B: np.ndarray
    gamma: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise InvalidSpecError("system: k and m must be >= 1")
        speeds = tuple(s if isinstance(s, SpeedProfile) else SpeedProfile.constant(s) for s in self.speeds)
        object.__setattr__(self, "speeds", speeds)
        if len(speeds) != self.n:
            raise InvalidSpecError(f"speeds: expected {self.n} profiles, got {len(speeds)}")
        C = self.C if isinstance(self.C, Coupling) else Coupling(matrix=self.C)
        object.__setattr__(self, "C", C)
        if C.n != self.n:
            raise InvalidSpecError(f"coupling: expected {self.n}x{self.n}")
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape != (self.k, self.m):
            raise InvalidSpecError(f"boundary: B must be {self.k}x{self.m}, got {B.shape}")
        object.__setattr__(self, "B", B)
        if not np.isfinite(self.gamma):
            raise InvalidSpecError("system: gamma must be finite")
        self._check_ordering()
        diag = np.diagonal(C(self.sample_points()), axis1=-2, axis2=-1)
        if np.any(diag != 0):
            raise InvalidSpecError("coupling: diagonal of C must vanish")

    @property
    def n(self) -> int:
        return self.k + self.m

    @property
    def signs(self) -> np.ndarray:
        """Sign of the diagonal entry of Sigma for every component."""
        return np.array([-1.0] * self.k + [1.0] * self.m)

    def sample_points(self) -> np.ndarray:
        pts = [np.array([0.0, 1.0])] + [s.xs for s in self.speeds]
        if self.C.xs is not None:
            pts.append(self.C.xs)
        return np.unique(np.concatenate(pts))

    def _check_ordering(self):
        xs = self.sample_points()
        lam = np.array([s(xs) for s in self.speeds])
        neg, pos = lam[: self.k], lam[self.k:]
        if self.k > 1 and np.any(np.diff(neg, axis=0) >= 0):
            raise InvalidSpecError("speeds: need lambda_1 > ... > lambda_k at every sample")
        if self.m > 1 and np.any(np.diff(pos, axis=0) <= 0):
            raise InvalidSpecError("speeds: need lambda_{k+1} < ... < lambda_{k+m} at every sample")

    def coupling(self, x) -> np.ndarray:
        """The effective coupling gamma * C(x)."""
        return self.gamma * self.C(x)

    def sigma(self, x) -> np.ndarray:
        """Signed diagonal of Sigma(x), shape ``x.shape + (n,)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([s * p(x) for s, p in zip(self.signs, self.speeds)], axis=-1)

    @property
    def constant_speeds(self) -> bool:
        return all(s.is_constant for s in self.speeds)

    def with_gamma(self, gamma: float) -> "SystemSpec":
        return SystemSpec(self.k, self.m, self.speeds, self.C, self.B, gamma, self.name)


@dataclass(frozen=True)
class TimeTable:
    tau: np.ndarray
    t_opt: float
    t1: float
    t2: float
    t3: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "tau": [float(t) for t in self.tau],
            "t_opt": float(self.t_opt),
            "t1": float(self.t1),
            "t2": float(self.t2),
            "t3": None if self.t3 is None else float(self.t3),
        }


def compute_tau(spec: SystemSpec, quad_points: int = 4097) -> np.ndarray:
    """Travel times tau_i = int_0^1 dx / lambda_i(x) by the composite trapezoid rule."""
    if quad_points < 2:
        raise InvalidSpecError("quad_points must be >= 2")
    xs = np.linspace(0.0, 1.0, quad_points)
    taus = []
    for prof in spec.speeds:
        vals = prof(xs)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidSpecError("speeds must be finite and positive")
        if prof.is_constant:
            taus.append(1.0 / prof.values[0])
        else:
            taus.append(float(np.trapezoid(1.0 / vals, xs)))
    return np.array(taus)


def times_from_tau(tau: Sequence[float], k: int, m: int) -> TimeTable:
    tau = np.asarray(tau, dtype=float)
    if m >= k:
        t_opt = max([tau[i] + tau[m + i] for i in range(k)] + [tau[k]])
        t3 = max(tau[k], tau[k - 1] + tau[m])
    else:
        t_opt = max(tau[k - m + j] + tau[k + j] for j in range(m))
        t3 = None
    t1 = tau[k - 1] + float(np.sum(tau[k:]))
    t2 = tau[k - 1] + tau[k]
    return TimeTable(tau, float(t_opt), float(t1), float(t2), t3)


def compute_times(spec: SystemSpec, quad_points: int = 4097) -> TimeTable:
    return times_from_tau(compute_tau(spec, quad_points), spec.k, spec.m)


@dataclass(frozen=True)
class BCheck:
    in_B: bool
    in_Be: bool
    failing_minor: Optional[int] = None
    determinants: dict = field(default_factory=dict)


def trailing_minor(B: np.ndarray, i: int) -> np.ndarray:
    """The i x i block formed by the last i rows and last i columns of B."""
    return B[B.shape[0] - i:, B.shape[1] - i:]


def minor_invertible(M: np.ndarray, tol: float = 1e-12) -> bool:
    scale = np.max(np.abs(M))
    if scale == 0:
        return False
    return abs(np.linalg.det(M / scale)) > tol


def check_B(B, k: int, m: int, tol: float = 1e-12) -> BCheck:
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape != (k, m):
        raise InvalidSpecError(f"B must be {k}x{m}, got {B.shape}")
    dets = {}
    ok = {}
    for i in range(1, min(k, m) + 1):
        M = trailing_minor(B, i)
        dets[i] = float(np.linalg.det(M))
        ok[i] = minor_invertible(M, tol)
    failing = None
    in_B = True
    for i in range(1, min(k, m - 1) + 1):
        if not ok[i]:
            in_B, failing = False, i
            break
    in_Be = m >= k and all(ok[i] for i in range(1, k + 1))
    if in_B and not in_Be and m >= k:
        failing = next(i for i in range(1, k + 1) if not ok[i])
    return BCheck(in_B, in_Be, failing, dets)
