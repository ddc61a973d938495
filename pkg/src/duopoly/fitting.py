"""Fitting the coupled Bass system to agent-based adoption curves.

Metrics (``sse``, ``r_squared``, ``area_difference_pct``), a bounded
Nelder-Mead minimizer, the tied cross-coefficient search that reproduces
a target final split, and the four comparison experiments.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .bass_core import (PARAM_NAMES, BassParams, MarketState, SingleBrandParams, Trajectory,
                        closed_form_single, final_state, sample_on_grid)
from .equilibrium import EquilibriumPoint
from .errors import (GridMismatchError, InvalidParamsError, NoBracketError, ZeroAreaError,
                     ZeroVarianceError)

log = logging.getLogger(__name__)

MAX_EVALS = 5000
DEFAULT_BOUNDS = {"p1": (0.0, 1.0), "p2": (0.0, 1.0), "q11": (0.0, 3.0), "q22": (0.0, 3.0),
                  "q12": (0.0, 3.0), "q21": (0.0, 3.0)}


# --- metrics ------------------------------------------------------------------

def _pair(curves):
    if isinstance(curves, (Trajectory,)) or hasattr(curves, "n1"):
        return np.asarray(curves.t, float), np.asarray(curves.n1, float), np.asarray(curves.n2, float)
    t, n1, n2 = curves
    return np.asarray(t, float), np.asarray(n1, float), np.asarray(n2, float)


def _same_grid(ta, tb):
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1e-9):
        raise GridMismatchError("model and target are sampled on different time grids")


def sse(model, target) -> float:
    """Sum of squared residuals over both brand curves."""
    tm, a1, a2 = _pair(model)
    tt, b1, b2 = _pair(target)
    _same_grid(tm, tt)
    return float(np.sum((a1 - b1) ** 2) + np.sum((a2 - b2) ** 2))


def r_squared(model_curve, target_curve) -> float:
    model_curve = np.asarray(model_curve, float)
    target_curve = np.asarray(target_curve, float)
    if model_curve.shape != target_curve.shape:
        raise GridMismatchError("curves differ in length")
    ss_tot = np.sum((target_curve - target_curve.mean()) ** 2)
    if ss_tot == 0:
        raise ZeroVarianceError("target curve is constant")
    return float(1.0 - np.sum((target_curve - model_curve) ** 2) / ss_tot)


def area_difference_pct(model, target) -> float:
    """Absolute area between curves as a percentage of the area under the target,
    both brands pooled, trapezoidal rule on the shared grid."""
    tm, a1, a2 = _pair(model)
    tt, b1, b2 = _pair(target)
    _same_grid(tm, tt)
    denom = trapezoid(b1, tt) + trapezoid(b2, tt)
    if denom == 0:
        raise ZeroAreaError("target curves enclose zero area")
    num = trapezoid(np.abs(a1 - b1), tt) + trapezoid(np.abs(a2 - b2), tt)
    return float(100.0 * num / denom)


# --- Nelder-Mead ----------------------------------------------------------------

@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    history: list[float] = field(default_factory=list)


class _BudgetExhausted(Exception):
    pass


def nelder_mead(func: Callable[[np.ndarray], float], x0, lower, upper, *,
                xatol: float = 1e-9, fatol: float = 1e-12, max_evals: int = MAX_EVALS,
                restarts: int = 8) -> MinimizeResult:
    """Bounded Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5).

    Trial points are clipped onto the box. A run stops when the simplex
    diameter drops below ``xatol`` or the spread of objective values below
    ``fatol``; it is then restarted around the best vertex until a restart
    stops improving. ``history`` holds the best value after each iteration.
    ``max_evals`` is a hard cap on objective calls.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    x0 = np.clip(np.asarray(x0, float), lower, upper)
    n = len(x0)
    evals = 0
    seen_x, seen_f = x0, math.inf

    def f(x):
        nonlocal evals, seen_x, seen_f
        if evals >= max_evals:
            raise _BudgetExhausted
        evals += 1
        v = func(x)
        v = v if math.isfinite(v) else math.inf
        if v < seen_f:
            seen_x, seen_f = np.array(x, float), v
        return v

    if n == 0:
        return MinimizeResult(x0, f(x0), 0, 1, True, [])

    history: list[float] = []
    iterations = 0
    converged = False
    try:
        best_x, best_f = x0, f(x0)
        for attempt in range(restarts + 1):
            sim = [best_x]
            for i in range(n):
                step = 0.1 * abs(best_x[i]) if best_x[i] != 0 else 0.01 * (upper[i] - lower[i])
                if step == 0:
                    step = 1e-3
                y = best_x.copy()
                y[i] = best_x[i] + step if best_x[i] + step <= upper[i] else best_x[i] - step
                sim.append(np.clip(y, lower, upper))
            sim = np.array(sim)
            fs = np.array([best_f] + [f(v) for v in sim[1:]])
            while True:
                order = np.argsort(fs, kind="stable")
                sim, fs = sim[order], fs[order]
                iterations += 1
                history.append(float(fs[0]))
                if (np.max(np.abs(sim[1:] - sim[0])) < xatol or fs[-1] - fs[0] < fatol):
                    break
                centroid = sim[:-1].mean(axis=0)
                xr = np.clip(centroid + (centroid - sim[-1]), lower, upper)
                fr = f(xr)
                if fr < fs[0]:
                    xe = np.clip(centroid + 2.0 * (centroid - sim[-1]), lower, upper)
                    fe = f(xe)
                    sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
                    continue
                if fr < fs[-2]:
                    sim[-1], fs[-1] = xr, fr
                    continue
                if fr < fs[-1]:
                    xc = np.clip(centroid + 0.5 * (xr - centroid), lower, upper)
                    fc = f(xc)
                    if fc <= fr:
                        sim[-1], fs[-1] = xc, fc
                        continue
                else:
                    xc = np.clip(centroid + 0.5 * (sim[-1] - centroid), lower, upper)
                    fc = f(xc)
                    if fc < fs[-1]:
                        sim[-1], fs[-1] = xc, fc
                        continue
                for i in range(1, n + 1):
                    sim[i] = np.clip(sim[0] + 0.5 * (sim[i] - sim[0]), lower, upper)
                    fs[i] = f(sim[i])
            i_best = int(np.argmin(fs))
            improved = fs[i_best] < best_f - max(fatol, 1e-12 * abs(best_f))
            if fs[i_best] < best_f:
                best_x, best_f = sim[i_best].copy(), float(fs[i_best])
            if not improved and attempt > 0:
                converged = True
                break
        else:
            converged = True
    except _BudgetExhausted:
        pass
    if history and seen_f < history[-1]:
        history.append(seen_f)
    return MinimizeResult(seen_x, seen_f, iterations, evals, converged, history)


def bisect(g: Callable[[float], float], lo: float, hi: float, *, xtol: float = 1e-12,
           max_iter: int = 200) -> tuple[float, int]:
    """Root of ``g`` on ``[lo, hi]`` by bisection; returns (root, iterations)."""
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo, 0
    if ghi == 0:
        return hi, 0
    if np.sign(glo) == np.sign(ghi):
        raise NoBracketError(f"no sign change on [{lo}, {hi}] (g={glo:.3g}, {ghi:.3g})")
    it = 0
    while hi - lo > xtol and it < max_iter:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        it += 1
        if gm == 0:
            return mid, it
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi), it


# --- final-proportion matching -----------------------------------------------

def final_n1(params: BassParams, dt: float = 0.01) -> float:
    state, _ = final_state(params, MarketState(0.0, 0.0, 0.0), dt=dt, t_max=1e5, gap=1e-12)
    return state.n1 / (state.n1 + state.n2)


def _solve_cross(params: BassParams, name: str, target_n1: float, tied: bool,
                 hi: float = 10.0, dt: float = 0.01) -> tuple[BassParams, int]:
    def with_value(c):
        kw = {name: c}
        if tied:
            kw = {"q12": c, "q21": c}
        return replace(params, **kw)

    c, it = bisect(lambda c: final_n1(with_value(c), dt) - target_n1, 0.0, hi)
    return with_value(c), it


def match_final_proportions(params_base: BassParams, target_eq: EquilibriumPoint, *,
                            dt: float = 0.01) -> float:
    """Common cross coefficient ``c = q12 = q21`` whose run from (0, 0) lands on ``target_eq``.

    Raises:
        NoBracketError: no ``c`` in [0, 10] brackets the target.
    """
    if abs(target_eq.n1 + target_eq.n2 - 1.0) > 1e-9:
        raise InvalidParamsError("target must lie on the saturation line")
    p, _ = _solve_cross(params_base, "q12", target_eq.n1, tied=True, dt=dt)
    return p.q12


# --- general fit -----------------------------------------------------------------

@dataclass
class FitSpec:
    """What to optimize.

    ``free`` names the optimized coefficients. ``ties`` maps a follower to
    the coefficient it copies. ``solve_for`` names one coefficient that is
    not optimized but root-found at every evaluation so that the run from
    (0, 0) lands on ``final_target`` (if ``solve_for`` is tied, its
    follower moves with it).
    """

    target: Trajectory
    initial: BassParams
    free: tuple[str, ...] = PARAM_NAMES
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    ties: dict = field(default_factory=dict)
    solve_for: str | None = None
    final_target: EquilibriumPoint | None = None
    max_evals: int = MAX_EVALS
    dt: float = 0.01

    def __post_init__(self):
        for name in (*self.free, *self.ties, *self.ties.values()):
            if name not in PARAM_NAMES:
                raise InvalidParamsError(f"unknown coefficient {name!r}")
        for name, (lo, hi) in self.bounds.items():
            if lo < 0 or hi < lo:
                raise InvalidParamsError(f"bad bounds for {name}: [{lo}, {hi}]")
        for name in self.free:
            lo, hi = self.bounds[name]
            if not lo <= getattr(self.initial, name) <= hi:
                raise InvalidParamsError(f"initial {name} outside its bounds")
        if set(self.free) & set(self.ties):
            raise InvalidParamsError("a tied follower cannot also be free")
        if (self.solve_for is None) != (self.final_target is None):
            raise InvalidParamsError("solve_for and final_target go together")


@dataclass
class FitResult:
    params: BassParams
    sse: float
    r2: tuple[float, float]
    area_diff_pct: float
    iterations: int
    converged: bool
    evaluations: int = 0
    experiment: str = ""
    model: Trajectory | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": {n: getattr(self.params, n) for n in PARAM_NAMES},
            "sse": self.sse,
            "r2": list(self.r2),
            "area_diff_pct": self.area_diff_pct,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def evaluate(params: BassParams, target: Trajectory, *, dt: float = 0.01,
             iterations: int = 0, converged: bool = True, experiment: str = "") -> FitResult:
    """Metrics of ``params`` against ``target`` without optimizing."""
    model = sample_on_grid(params, target.t, dt)
    return FitResult(params, sse(model, target), (r_squared(model.n1, target.n1),
                     r_squared(model.n2, target.n2)), area_difference_pct(model, target),
                     iterations, converged, experiment=experiment, model=model)


def fit(spec: FitSpec) -> FitResult:
    """Minimize SSE over the free coefficients with bounded Nelder-Mead."""
    names = spec.free
    lower = np.array([spec.bounds[n][0] for n in names])
    upper = np.array([spec.bounds[n][1] for n in names])
    x0 = np.array([getattr(spec.initial, n) for n in names])
    solve_tied = spec.solve_for is not None and (spec.ties.get("q21") == "q12" or
                                                 spec.ties.get("q12") == "q21")

    def assemble(x) -> BassParams | None:
        kw = dict(zip(names, (float(v) for v in x)))
        p = replace(spec.initial, **kw)
        if spec.ties:
            p = replace(p, **{f: getattr(p, lead) for f, lead in spec.ties.items()})
        if spec.solve_for is not None:
            try:
                p, _ = _solve_cross(p, spec.solve_for, spec.final_target.n1, tied=solve_tied,
                                    dt=spec.dt)
            except NoBracketError:
                return None
        return p

    def objective(x) -> float:
        p = assemble(x)
        if p is None:
            return math.inf
        return sse(sample_on_grid(p, spec.target.t, spec.dt), spec.target)

    res = nelder_mead(objective, x0, lower, upper, max_evals=spec.max_evals)
    best = assemble(res.x)
    if best is None:
        raise NoBracketError("no feasible point satisfies the final-proportion constraint")
    out = evaluate(best, spec.target, dt=spec.dt, iterations=res.iterations,
                   converged=res.converged)
    out.evaluations = res.evaluations
    if not res.converged:
        log.warning("fit stopped after %d evaluations without converging", res.evaluations)
    return out


# --- single brand ----------------------------------------------------------------

@dataclass
class SingleBrandFit:
    params: SingleBrandParams
    sse: float
    r2: float
    iterations: int
    converged: bool

    def to_json_dict(self) -> dict:
        return {"p": self.params.p, "q": self.params.q, "sse": self.sse, "r2": self.r2,
                "iterations": self.iterations, "converged": self.converged}


def fit_single_brand(t, share, initial: SingleBrandParams = SingleBrandParams(0.01, 0.4)
                     ) -> SingleBrandFit:
    """Fit the closed-form single-brand curve to one adoption curve."""
    t = np.asarray(t, float)
    share = np.asarray(share, float)

    def objective(x):
        return float(np.sum((closed_form_single(SingleBrandParams(x[0], x[1]), t) - share) ** 2))

    res = nelder_mead(objective, [initial.p, initial.q], [1e-9, 0.0], [1.0, 5.0])
    sb = SingleBrandParams(float(res.x[0]), float(res.x[1]))
    model = closed_form_single(sb, t)
    return SingleBrandFit(sb, res.fun, r_squared(model, share), res.iterations, res.converged)


# --- experiments ------------------------------------------------------------------

def target_from_abm(abm_traj) -> Trajectory:
    return Trajectory(np.asarray(abm_traj.t, float), np.asarray(abm_traj.n1, float),
                      np.asarray(abm_traj.n2, float))


def run_experiments(abm_target, base: BassParams, *, dt: float = 0.01,
                    max_evals: int = MAX_EVALS) -> list[FitResult]:
    """The four macro-vs-micro comparisons against one duopoly target.

    1. monopoly coefficients, no cross terms (metrics only);
    2. common cross coefficient chosen to reproduce the final split;
    3. independent cross coefficients fitted to the curves, final split held;
    4. all six coefficients free.
    """
    target = abm_target if isinstance(abm_target, Trajectory) else target_from_abm(abm_target)
    tot = target.n1[-1] + target.n2[-1]
    if tot < 1 - 1e-6:
        log.warning("target ends unsaturated (n1+n2=%.6f); final split is normalized", tot)
    final_eq = EquilibriumPoint(target.n1[-1] / tot, target.n2[-1] / tot)
    base = replace(base, q12=0.0, q21=0.0)

    exp1 = evaluate(base, target, dt=dt, experiment="1")

    exp2_params, it2 = _solve_cross(base, "q12", final_eq.n1, tied=True, dt=dt)
    exp2 = evaluate(exp2_params, target, dt=dt, iterations=it2, experiment="2")

    exp3 = fit(FitSpec(target, exp2_params, free=("q21",), solve_for="q12",
                       final_target=final_eq, max_evals=max_evals, dt=dt))
    exp3.experiment = "3"

    exp4 = fit(FitSpec(target, exp3.params, free=PARAM_NAMES, max_evals=max_evals, dt=dt))
    exp4.experiment = "4"
    return [exp1, exp2, exp3, exp4]
