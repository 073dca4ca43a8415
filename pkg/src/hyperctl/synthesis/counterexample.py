"""A coupling for which the system is not null-controllable at T_opt.

With two negative and two positive components and constant speeds, the
coupling below has a constant kernel K (K C = 0), so S is constant as well.
The parameters are tuned so that the conditions for a zero state at T_opt
force a linear functional of the initial datum to vanish; any datum where it
does not vanish cannot be steered to zero at that time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpecError
from ..kernel import KernelField
from ..model import SystemSpec, times_from_tau
from ..transform import forward


@dataclass
class Counterexample:
    spec: SystemSpec
    alpha: float
    beta: float
    K: np.ndarray
    S: np.ndarray
    t1: float
    t2: float
    t_opt: float

    def kernel(self, N: int) -> KernelField:
        return KernelField.constant(self.K, N)

    def gamma3(self) -> dict:
        """Right-edge data that makes the kernel solver return the constant K."""
        return {(2, 3): float(self.K[2, 3])}


def counterexample_build(a: float, b: float, speeds=(2.0, 1.0, 1.0, 2.0), k: int = 2,
                         first_row=(1.0, 0.0)) -> Counterexample:
    """Coupling, constant kernel and S for the boundary relation u_2 = a u_3 + b u_4 at x = 0.

    ``speeds`` are the four constant magnitudes; ``first_row`` is the other row
    of B, which the construction leaves free.
    """
    if k != 2:
        raise InvalidSpecError("the construction is implemented for two negative components (k = 2)")
    if a == 0:
        raise InvalidSpecError("a must be nonzero: otherwise B has a singular trailing minor")
    if b == 0:
        raise InvalidSpecError("b must be nonzero")
    lam = np.asarray(speeds, dtype=float)
    if lam.shape != (4,) or np.any(lam <= 0):
        raise InvalidSpecError("need four positive speeds")
    tau = 1.0 / lam
    t_opt = times_from_tau(tau, 2, 2).t_opt
    t1, t2 = t_opt - tau[0], t_opt - tau[1]
    if abs(t1 - t2) < 1e-14:
        raise InvalidSpecError("the two negative speeds must differ")
    alpha = -b / (lam[3] * (t1 - t2))
    beta = alpha / a
    C = np.zeros((4, 4))
    C[1, 3] = alpha * (lam[3] + lam[1])
    C[2, 3] = beta * (lam[3] - lam[2])
    K = np.zeros((4, 4))
    K[1, 3], K[2, 3] = alpha, beta
    S = np.zeros((4, 4))
    S[1, 3], S[2, 3] = lam[3] * alpha, lam[3] * beta
    B = np.array([list(first_row), [a, b]], dtype=float)
    spec = SystemSpec(2, 2, lam, C, B, gamma=1.0, name="counterexample")
    return Counterexample(spec, float(alpha), float(beta), K, S, float(t1), float(t2), float(t_opt))


def _integral_linear(x: np.ndarray, f: np.ndarray, lo: float, hi: float) -> float:
    """Exact integral of the piecewise-linear interpolant of f over [lo, hi]."""
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (f[1:] + f[:-1]))])

    def F(p):
        j = int(np.clip(np.searchsorted(x, p, side="right") - 1, 0, len(x) - 2))
        fp = np.interp(p, x, f)
        return cum[j] + 0.5 * (p - x[j]) * (f[j] + fp)

    return float(F(hi) - F(lo))


def obstruction_value(ce: Counterexample, w0, N: int, tol: float = 1e-12) -> float:
    """Integral of u_3(0, lambda_3 t) over [t2, t1] for the transformed datum.

    Null control at T_opt would force this to vanish.  Requires the fourth
    component of the transformed datum to be zero.
    """
    x = np.linspace(0, 1, N + 1)
    w = np.asarray(w0(x) if callable(w0) else w0, dtype=float)
    u0 = forward(ce.kernel(N), w)
    if np.max(np.abs(u0[3])) > tol * max(1.0, float(np.max(np.abs(u0)))):
        raise InvalidSpecError("the fourth component of the initial datum must vanish")
    lam3 = ce.spec.speeds[2].values[0]
    lo, hi = lam3 * ce.t2, lam3 * ce.t1
    if hi > 1 + 1e-12:
        raise InvalidSpecError("the window leaves [0, 1] for these speeds")
    return _integral_linear(x, u0[2], lo, min(hi, 1.0)) / lam3
