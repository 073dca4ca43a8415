"""Characteristic flows of the diagonal transport operator.

For a positive piecewise-linear speed the travel-time coordinate
``phi(x) = int_0^x dy / lambda(y)`` is integrated exactly on each cell (a
logarithm), so flows are evaluated as ``phi^{-1}(phi(xi) +/- (t - s))`` with
the in-cell inverse given by an exponential.  Outside [0, 1] the speed is
held at its end value.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .model import SpeedProfile, SystemSpec


def _log_ratio(a, b):
    """log(b/a) / (b - a), continuous at a == b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = b / a - 1.0
    small = np.abs(r) < 1e-6
    safe_r = np.where(small, 1.0, r)
    exact = np.log1p(safe_r) / (a * safe_r)
    series = (1.0 - r / 2.0 + r * r / 3.0) / a
    return np.where(small, series, exact)


def _expm1_ratio(z):
    """expm1(z) / z, continuous at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0, np.expm1(safe) / safe)


class TravelTime:
    """phi(x) = int_0^x 1/lambda and its inverse for one speed profile."""

    def __init__(self, profile: SpeedProfile):
        self.profile = profile
        self.xs = profile.xs if len(profile.xs) > 1 else np.array([0.0, 1.0])
        self.lam = profile(self.xs)
        dx = np.diff(self.xs)
        cells = dx * _log_ratio(self.lam[:-1], self.lam[1:])
        self.nodes = np.concatenate([[0.0], np.cumsum(cells)])
        self.slopes = np.diff(self.lam) / dx

    @property
    def total(self) -> float:
        return float(self.nodes[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, 0.0, 1.0)
        cell = np.clip(np.searchsorted(self.xs, xc, side="right") - 1, 0, len(self.xs) - 2)
        xa = self.xs[cell]
        la = self.lam[cell]
        lx = la + self.slopes[cell] * (xc - xa)
        inside = self.nodes[cell] + (xc - xa) * _log_ratio(la, lx)
        below = x / self.lam[0]
        above = self.total + (x - 1.0) / self.lam[-1]
        return np.where(x < 0, below, np.where(x > 1, above, inside))

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        pc = np.clip(p, 0.0, self.total)
        cell = np.clip(np.searchsorted(self.nodes, pc, side="right") - 1, 0, len(self.xs) - 2)
        q = pc - self.nodes[cell]
        s = self.slopes[cell]
        la = self.lam[cell]
        inside = self.xs[cell] + la * q * _expm1_ratio(s * q)
        inside = np.minimum(inside, self.xs[cell + 1])
        below = p * self.lam[0]
        above = 1.0 + (p - self.total) * self.lam[-1]
        return np.where(p < 0, below, np.where(p > self.total, above, inside))


def travel_times(spec: SystemSpec) -> list:
    """One :class:`TravelTime` per component."""
    return [TravelTime(p) for p in spec.speeds]


def exact_tau(spec: SystemSpec) -> np.ndarray:
    return np.array([tt.total for tt in travel_times(spec)])


def direction(spec: SystemSpec, i: int) -> float:
    """+1 if characteristics of component i move right (i < k), -1 otherwise."""
    return 1.0 if i < spec.k else -1.0


def flow(spec: SystemSpec, i: int, s, xi, t, tt: Optional[TravelTime] = None):
    """Position at time t of the component-i characteristic through (s, xi)."""
    tt = tt or TravelTime(spec.speeds[i])
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    return tt.inverse(tt(xi) + direction(spec, i) * (t - s))


def crossing_time(spec: SystemSpec, i: int, anchor, boundary: int, window=None,
                  tt: Optional[TravelTime] = None):
    """Time at which the characteristic through ``anchor = (s, xi)`` meets x = boundary.

    Returns None if ``window = (t_lo, t_hi)`` is given and the crossing lies outside it.
    """
    if boundary not in (0, 1):
        raise ValueError("boundary must be 0 or 1")
    tt = tt or TravelTime(spec.speeds[i])
    s, xi = anchor
    t = s + direction(spec, i) * (float(tt(float(boundary))) - float(tt(xi)))
    if window is not None and not (window[0] <= t <= window[1]):
        return None
    return float(t)
