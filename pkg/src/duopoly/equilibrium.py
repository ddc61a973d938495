"""Equilibria of the coupled system: the saturation line and where runs land on it.

Every point with ``n1 + n2 = 1`` is an equilibrium. Linearizing around
``(n1*, 1 - n1*)`` gives a rank-one system whose solution is

    dn1(t) = c2 * (a/b) * exp((a+b) t) + c1
    dn2(t) = c2 * exp((a+b) t) - c1

so an inward perturbation relaxes back to the line, displaced by ``(c1, -c1)``.
Without cross terms the landing point from ``(0, 0)`` solves an implicit
scalar equation, handled here by safeguarded Newton-Raphson.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .bass_core import (BassParams, MarketState, Trajectory, final_state, integrate)
from .errors import (DegenerateLinearizationError, InvalidParamsError, NoConvergenceError)

FIG2_CASES = {
    "A": (0.0, 0.0),
    "B": (0.0, 0.5),
    "C": (0.5, 0.0),
    "D": (0.5, 0.5),
}


class EquilibriumPoint(NamedTuple):
    n1: float
    n2: float


@dataclass(frozen=True)
class PerturbationAnalysis:
    n1_star: float
    a: float
    b: float
    c1: float
    c2: float

    @property
    def decay_rate(self) -> float:
        return self.a + self.b

    def evolve(self, t):
        return perturbation_evolution(self.a, self.b, self.c1, self.c2, t)

    @property
    def limit_point(self) -> EquilibriumPoint:
        """Where the perturbed run settles on the saturation line."""
        return EquilibriumPoint(self.n1_star + self.c1, 1.0 - self.n1_star - self.c1)


def linearization_coeffs(params: BassParams, n1_star: float) -> tuple[float, float]:
    """Coefficients ``(a, b)`` of the linearized dynamics at ``(n1_star, 1 - n1_star)``."""
    if not 0.0 <= n1_star <= 1.0:
        raise InvalidParamsError(f"n1_star must lie in [0, 1], got {n1_star!r}")
    a = -(params.p1 + params.q12) + (params.q12 - params.q11) * n1_star
    b = -(params.p2 + params.q22) + (params.q22 - params.q21) * n1_star
    return a, b


def _check_nondegenerate(a: float, b: float) -> None:
    if b == 0.0:
        raise DegenerateLinearizationError("b == 0: cannot decouple the linearized system")
    if a + b == 0.0:
        raise DegenerateLinearizationError("a + b == 0: cannot decouple the linearized system")


def perturbation_constants(a: float, b: float, dn1_0: float, dn2_0: float) -> tuple[float, float]:
    """Constants ``(c1, c2)`` fixed by the initial displacement."""
    _check_nondegenerate(a, b)
    r = a / b
    c1 = (dn1_0 - r * dn2_0) / (1.0 + r)
    c2 = (dn1_0 + dn2_0) / (1.0 + r)
    return c1, c2


def perturbation_evolution(a: float, b: float, c1: float, c2: float, t):
    _check_nondegenerate(a, b)
    e = c2 * np.exp((a + b) * np.asarray(t, dtype=float))
    dn1 = e * (a / b) + c1
    dn2 = e - c1
    if np.ndim(dn1) == 0:
        return float(dn1), float(dn2)
    return dn1, dn2


def analyze_perturbation(params: BassParams, n1_star: float,
                         dn1_0: float, dn2_0: float) -> PerturbationAnalysis:
    a, b = linearization_coeffs(params, n1_star)
    c1, c2 = perturbation_constants(a, b, dn1_0, dn2_0)
    return PerturbationAnalysis(n1_star, a, b, c1, c2)


# --- within-brand equilibrium -------------------------------------------------

def within_brand_residual(n1, p1: float, p2: float, q11: float, q22: float):
    """``(1 + (q11/p1) n1)^(q22/q11) - 1 - (q22/p2)(1 - n1)``; zero at the landing point."""
    n1 = np.asarray(n1, dtype=float)
    return (1.0 + q11 / p1 * n1) ** (q22 / q11) - 1.0 - q22 / p2 * (1.0 - n1)


def _residual_and_slope(n1, p1, p2, q11, q22):
    r = q22 / q11
    base = 1.0 + q11 / p1 * n1
    f = base ** r - 1.0 - q22 / p2 * (1.0 - n1)
    df = r * (q11 / p1) * base ** (r - 1.0) + q22 / p2
    return f, df


def solve_within_brand_equilibrium(p1: float, p2: float, q11: float, q22: float, *,
                                   tol: float = 1e-12, max_iter: int = 100) -> EquilibriumPoint:
    """Final shares from ``(0, 0)`` when cross-brand terms vanish.

    Newton-Raphson from ``n1 = 0.5``; any iterate leaving the current
    bracket is replaced by a bisection step. The residual is increasing in
    ``n1`` and changes sign on ``(0, 1)``, so the root is unique.

    Raises:
        InvalidParamsError: a coefficient is not strictly positive.
        NoConvergenceError: ``max_iter`` iterations without meeting ``tol``.
    """
    for name, v in (("p1", p1), ("p2", p2), ("q11", q11), ("q22", q22)):
        if not (math.isfinite(v) and v > 0):
            raise InvalidParamsError(f"{name} must be > 0, got {v!r}")
    lo, hi = 1e-9, 1.0 - 1e-9
    x = 0.5
    for _ in range(max_iter):
        f, df = _residual_and_slope(x, p1, p2, q11, q22)
        if abs(f) < tol:
            return EquilibriumPoint(x, 1.0 - x)
        if f < 0:
            lo = x
        else:
            hi = x
        x_new = x - f / df
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if x_new == x or hi - lo <= 4 * math.ulp(x):
            # floating-point floor reached before |f| < tol
            f_new, _ = _residual_and_slope(x_new, p1, p2, q11, q22)
            if abs(f_new) <= 64 * math.ulp(1.0 + q22 / p2):
                return EquilibriumPoint(x_new, 1.0 - x_new)
            raise NoConvergenceError(f"stalled at n1={x_new!r} with residual {f_new!r}")
        x = x_new
    raise NoConvergenceError(f"no convergence after {max_iter} iterations (n1={x!r})")


class SweepRow(NamedTuple):
    delta: float
    n1: float
    n2: float


def sweep_fig1(base: BassParams, deltas: Sequence[float],
               which: Literal["imitation", "innovation"]) -> list[SweepRow]:
    """Landing shares as brand 2's imitation (``q22 = q11 + d``) or innovation
    (``p2 = p1 + d``) coefficient is raised above brand 1's."""
    rows = []
    for d in deltas:
        if which == "imitation":
            p1, p2, q11, q22 = base.p1, base.p2, base.q11, base.q11 + d
        elif which == "innovation":
            p1, p2, q11, q22 = base.p1, base.p1 + d, base.q11, base.q22
        else:
            raise InvalidParamsError(f"unknown sweep kind {which!r}")
        eq = solve_within_brand_equilibrium(p1, p2, q11, q22)
        rows.append(SweepRow(float(d), eq.n1, eq.n2))
    return rows


def fig1_deltas(which: str) -> list[float]:
    if which == "imitation":
        return [round(0.1 * i, 10) for i in range(9)]
    return [round(0.01 * i, 10) for i in range(10)]


def sweep_fig2(params: BassParams, cross_cases=None, *, t_end: float = 100.0,
               dt: float = 0.01, record_every: int = 1) -> dict[str, Trajectory]:
    """One trajectory from ``(0, 0)`` per ``(q12, q21)`` case, keyed by label."""
    if cross_cases is None:
        cross_cases = FIG2_CASES
    elif not isinstance(cross_cases, dict):
        cross_cases = {str(i): c for i, c in enumerate(cross_cases)}
    out = {}
    for label, (q12, q21) in cross_cases.items():
        p = BassParams(params.p1, params.p2, params.q11, params.q22, q12, q21, params.m)
        out[label] = integrate(p, MarketState(0.0, 0.0, 0.0), t_end, dt, record_every=record_every)
    return out


def landing_point(params: BassParams, init: MarketState = MarketState(0.0, 0.0, 0.0), *,
                  dt: float = 0.01, gap: float = 1e-12, t_max: float = 1e5) -> EquilibriumPoint:
    """Integrate until saturation and return the point reached on the line."""
    state, _ = final_state(params, init, dt=dt, t_max=t_max, gap=gap)
    tot = state.n1 + state.n2
    return EquilibriumPoint(state.n1 / tot, state.n2 / tot)


def sweep_table_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["delta,n1,n2"]
    lines += [f"{r.delta:.17g},{r.n1:.17g},{r.n2:.17g}" for r in rows]
    return "\n".join(lines) + "\n"


def fig2_table_csv(trajs: dict[str, Trajectory]) -> str:
    lines = ["case,t,n1,n2"]
    for label, tr in trajs.items():
        lines += [f"{label},{t:.17g},{a:.17g},{b:.17g}" for t, a, b in zip(tr.t, tr.n1, tr.n2)]
    return "\n".join(lines) + "\n"
