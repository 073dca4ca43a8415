"""Time-independent boundary feedback for systems without interior coupling.

With C = 0 the trace relation at x = 0 is algebraic, so each fast positive
component can be chosen at x = 1 to cancel, one travel time later, the
combination of slower positive traces that would otherwise leak into the
last rows of B.  Each rule is read off from the trailing rows of B by
solving with the trailing minor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from ..characteristics import TravelTime
from ..errors import InvalidSpecError, NotAdmissibleError
from ..model import SystemSpec, check_B


@dataclass(frozen=True)
class Rule:
    """u[output](t, 1) = sum of coefficient * u[component](t, position)."""

    output: int
    inputs: Tuple[Tuple[int, float, float], ...]


@dataclass(frozen=True)
class FeedbackLaw:
    k: int
    m: int
    rules: Tuple[Rule, ...]
    zero: Tuple[int, ...] = field(default_factory=tuple)

    def boundary_terms(self) -> List[Tuple[float, np.ndarray]]:
        """Group the rules into (position, m x n matrix) pairs for the solver."""
        n = self.k + self.m
        by_pos = {}
        for rule in self.rules:
            for comp, pos, coef in rule.inputs:
                A = by_pos.setdefault(pos, np.zeros((self.m, n)))
                A[rule.output - self.k, comp] += coef
        return sorted(by_pos.items(), key=lambda item: item[0])

    def as_dict(self) -> dict:
        return {
            "kind": "feedback",
            "k": self.k,
            "m": self.m,
            "rules": [
                {"output": r.output + 1,
                 "inputs": [{"component": c + 1, "position": p, "coefficient": a} for c, p, a in r.inputs]}
                for r in self.rules
            ],
            "zero": [z + 1 for z in self.zero],
        }


def feedback_zero_C(spec: SystemSpec, tol: float = 1e-12) -> FeedbackLaw:
    """Build the feedback law; requires C = 0 and admissible B."""
    if not (spec.C.is_zero or spec.gamma == 0):
        raise InvalidSpecError("feedback construction needs a vanishing coupling C")
    k, m, B = spec.k, spec.m, spec.B
    chk = check_B(B, k, m, tol)
    if not chk.in_B:
        raise NotAdmissibleError(f"trailing {chk.failing_minor}x{chk.failing_minor} minor of B is singular",
                                 failing_minor=chk.failing_minor)
    travel = [TravelTime(p) for p in spec.speeds]
    rules, zero = [], []
    for l in range(1, min(k, m) + 1):
        out = k + m - l
        rows = B[k - l:]
        n_in = m - l
        if n_in == 0:
            zero.append(out)
            continue
        P, F = rows[:, n_in:], rows[:, :n_in]
        coef = -np.linalg.solve(P, F)[0]
        tau_out = travel[out].total
        inputs = []
        for q in range(n_in):
            comp = k + q
            if coef[q] == 0:
                continue
            pos = float(travel[comp].inverse(tau_out))
            inputs.append((comp, pos, float(coef[q])))
        rules.append(Rule(out, tuple(inputs)))
    zero.extend(range(k, k + m - min(k, m)))
    return FeedbackLaw(k, m, tuple(rules), tuple(sorted(zero)))


def law_from_dict(payload: dict) -> FeedbackLaw:
    """Inverse of FeedbackLaw.as_dict (1-based indices in the payload)."""
    if payload.get("kind") != "feedback":
        raise InvalidSpecError("stored control is not a feedback law")
    k, m = int(payload["k"]), int(payload["m"])
    rules = tuple(
        Rule(r["output"] - 1, tuple((i["component"] - 1, float(i["position"]), float(i["coefficient"]))
                                    for i in r["inputs"]))
        for r in payload["rules"])
    return FeedbackLaw(k, m, rules, tuple(z - 1 for z in payload.get("zero", [])))
