"""Coupled two-brand Bass system with cross-brand terms.

Dimensionless form, with ``s = 1 - n1 - n2`` the unsaturated share::

    dn1/dt = (p1 + q11*n1 + q12*n2) * s
    dn2/dt = (p2 + q22*n2 + q21*n1) * s

Integration is fixed-step classical RK4 compiled with numba, so repeated
solves inside fitting loops stay cheap.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from numba import njit

from .errors import InvalidParamsError, InvalidStateError, StepTooLargeError

EPS_STATE = 1e-9
SUBSTEP_LIMIT = 0.01
DEFAULT_DT = 0.01
SATURATION_GAP = 1e-6

PARAM_NAMES = ("p1", "p2", "q11", "q22", "q12", "q21")


@dataclass(frozen=True)
class BassParams:
    """Coefficients of the coupled system (rates per unit time).

    ``q12`` is the influence of brand-2 adopters on brand 1, ``q21`` the
    reverse. ``m`` is only used when converting to head counts.
    """

    p1: float
    p2: float
    q11: float
    q22: float
    q12: float = 0.0
    q21: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidParamsError(f"{name} must be finite and >= 0, got {value!r}")
        if not self.m > 0:
            raise InvalidParamsError(f"m must be > 0, got {self.m!r}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values, m: float = 1.0) -> "BassParams":
        return cls(*(float(v) for v in values), m=m)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def swapped(self) -> "BassParams":
        """Relabel brand 1 as brand 2 and vice versa."""
        return replace(self, p1=self.p2, p2=self.p1, q11=self.q22, q22=self.q11,
                       q12=self.q21, q21=self.q12)


class MarketState(NamedTuple):
    t: float
    n1: float
    n2: float


@dataclass(frozen=True)
class SingleBrandParams:
    p: float
    q: float

    def __post_init__(self):
        if not self.p > 0:
            raise InvalidParamsError(f"p must be > 0, got {self.p!r}")
        if not self.q >= 0:
            raise InvalidParamsError(f"q must be >= 0, got {self.q!r}")


@dataclass
class Trajectory:
    """Uniformly sampled shares ``n1(t)``, ``n2(t)``.

    ``saturated`` records whether integration stopped because the
    unsaturated share fell below the saturation gap rather than at ``t_end``.
    """

    t: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    saturated: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[MarketState]:
        for t, a, b in zip(self.t, self.n1, self.n2):
            yield MarketState(float(t), float(a), float(b))

    @property
    def samples(self) -> list[MarketState]:
        return list(self)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def final(self) -> MarketState:
        return MarketState(float(self.t[-1]), float(self.n1[-1]), float(self.n2[-1]))

    def to_csv(self, path=None) -> str:
        """Serialize as ``t,n1,n2`` with 17 significant digits."""
        buf = io.StringIO()
        buf.write("t,n1,n2\n")
        for t, a, b in zip(self.t, self.n1, self.n2):
            buf.write(f"{t:.17g},{a:.17g},{b:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise InvalidStateError(f"{path}: no rows")
        t = np.array([float(r["t"]) for r in rows])
        n1 = np.array([float(r["n1"]) for r in rows])
        n2 = np.array([float(r["n2"]) for r in rows])
        return cls(t, n1, n2)


def _check_state(n1: float, n2: float) -> None:
    if n1 < 0 or n2 < 0:
        raise InvalidStateError(f"shares must be >= 0, got ({n1!r}, {n2!r})")
    if n1 + n2 > 1 + EPS_STATE:
        raise InvalidStateError(f"n1 + n2 = {n1 + n2!r} exceeds 1")


def bass_rhs(params: BassParams, state: MarketState) -> tuple[float, float]:
    """Time derivatives of both shares at ``state``."""
    n1, n2 = state.n1, state.n2
    _check_state(n1, n2)
    s = max(1.0 - (n1 + n2), 0.0)
    return ((params.p1 + params.q11 * n1 + params.q12 * n2) * s,
            (params.p2 + params.q22 * n2 + params.q21 * n1) * s)


# status codes returned by the kernel
_DONE, _SATURATED, _SUBSTEP_OVERSHOOT, _STEP_OVERSHOOT = 0, 1, -1, -2


@njit(cache=True)
def _rk4_kernel(c, n1, n2, dt, n_steps, stride, stop_gap, out1, out2):
    # c = (p1, p2, q11, q22, q12, q21); stride <= 0 disables recording;
    # stop_gap <= 0 disables the saturation stop.
    p1, p2, q11, q22, q12, q21 = c[0], c[1], c[2], c[3], c[4], c[5]
    half = 0.5 * dt
    lim = 1.0 + 0.01
    rec = 0
    if stride > 0:
        out1[0] = n1
        out2[0] = n2
        rec = 1
    k = 0
    while k < n_steps:
        s = 1.0 - (n1 + n2)
        a1 = (p1 + q11 * n1 + q12 * n2) * s
        b1 = (p2 + q22 * n2 + q21 * n1) * s
        x1 = n1 + half * a1
        y1 = n2 + half * b1
        if x1 + y1 > lim:
            return rec, -1, k, n1, n2
        s = 1.0 - (x1 + y1)
        a2 = (p1 + q11 * x1 + q12 * y1) * s
        b2 = (p2 + q22 * y1 + q21 * x1) * s
        x2 = n1 + half * a2
        y2 = n2 + half * b2
        if x2 + y2 > lim:
            return rec, -1, k, n1, n2
        s = 1.0 - (x2 + y2)
        a3 = (p1 + q11 * x2 + q12 * y2) * s
        b3 = (p2 + q22 * y2 + q21 * x2) * s
        x3 = n1 + dt * a3
        y3 = n2 + dt * b3
        if x3 + y3 > lim:
            return rec, -1, k, n1, n2
        s = 1.0 - (x3 + y3)
        a4 = (p1 + q11 * x3 + q12 * y3) * s
        b4 = (p2 + q22 * y3 + q21 * x3) * s
        n1 = n1 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        n2 = n2 + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        tot = n1 + n2
        if tot > 1.0:
            if tot - 1.0 > 1e-9:
                return rec, -2, k, n1, n2
            n1 = n1 / tot
            n2 = n2 / tot
        k += 1
        if stride > 0 and k % stride == 0:
            out1[rec] = n1
            out2[rec] = n2
            rec += 1
            if stop_gap > 0.0 and 1.0 - (n1 + n2) < stop_gap:
                return rec, 1, k, n1, n2
        elif stride <= 0 and stop_gap > 0.0 and 1.0 - (n1 + n2) < stop_gap:
            return rec, 1, k, n1, n2
    return rec, 0, k, n1, n2


def _n_steps(span: float, dt: float) -> int:
    n = round(span / dt)
    if abs(n * dt - span) > 1e-9 * max(span, 1.0):
        n = math.ceil(span / dt)
    return int(n)


def _raise_for_status(status: int, k: int, dt: float) -> None:
    if status == _SUBSTEP_OVERSHOOT:
        raise StepTooLargeError(
            f"RK4 stage at step {k} exceeded n1+n2 > 1+{SUBSTEP_LIMIT}; reduce dt (={dt})")
    if status == _STEP_OVERSHOOT:
        raise StepTooLargeError(
            f"RK4 step {k} overshot the saturation line by more than {EPS_STATE}; reduce dt (={dt})")


def integrate(params: BassParams, init: MarketState = MarketState(0.0, 0.0, 0.0),
              t_end: float = 100.0, dt: float = DEFAULT_DT, *,
              record_every: int = 1, stop_at_saturation: bool = False) -> Trajectory:
    """Integrate the coupled system with fixed-step RK4.

    Samples are written every ``record_every`` steps, so the returned grid
    has spacing ``dt * record_every``. With ``stop_at_saturation`` the run
    ends at the first recorded sample whose unsaturated share is below
    ``SATURATION_GAP``.

    Raises:
        StepTooLargeError: an RK4 stage left the feasible region.
    """
    if not dt > 0:
        raise InvalidParamsError(f"dt must be > 0, got {dt!r}")
    if record_every < 1:
        raise InvalidParamsError("record_every must be >= 1")
    _check_state(init.n1, init.n2)
    if t_end < init.t:
        raise InvalidParamsError(f"t_end ({t_end}) precedes the initial time ({init.t})")
    n_steps = _n_steps(t_end - init.t, dt)
    n_rec = n_steps // record_every + 1
    out1 = np.empty(n_rec)
    out2 = np.empty(n_rec)
    gap = SATURATION_GAP if stop_at_saturation else 0.0
    rec, status, k, _, _ = _rk4_kernel(params.as_array(), float(init.n1), float(init.n2),
                                       float(dt), n_steps, record_every, gap, out1, out2)
    _raise_for_status(status, k, dt)
    t = init.t + dt * record_every * np.arange(rec)
    n1, n2 = out1[:rec], out2[:rec]
    saturated = bool(1.0 - (n1[-1] + n2[-1]) < SATURATION_GAP)
    return Trajectory(t, n1, n2, saturated=saturated,
                      meta={"dt": dt, "stop": "saturation" if status == _SATURATED else "t_end"})


def final_state(params: BassParams, init: MarketState = MarketState(0.0, 0.0, 0.0),
                dt: float = DEFAULT_DT, t_max: float = 1e4,
                gap: float = SATURATION_GAP) -> tuple[MarketState, bool]:
    """Run until ``1 - (n1 + n2) < gap`` or ``t_max``; return (state, saturated)."""
    _check_state(init.n1, init.n2)
    n_steps = _n_steps(t_max - init.t, dt)
    dummy = np.empty(1)
    _, status, k, n1, n2 = _rk4_kernel(params.as_array(), float(init.n1), float(init.n2),
                                       float(dt), n_steps, 0, gap, dummy, dummy)
    _raise_for_status(status, k, dt)
    return MarketState(init.t + k * dt, float(n1), float(n2)), status == _SATURATED


def sample_on_grid(params: BassParams, times: np.ndarray, dt: float = DEFAULT_DT) -> Trajectory:
    """Integrate from (0, 0) at ``times[0]`` and sample at a uniform grid ``times``.

    The grid spacing must be a whole multiple of ``dt``.
    """
    times = np.asarray(times, dtype=float)
    if len(times) == 1:
        return Trajectory(times.copy(), np.zeros(1), np.zeros(1))
    spacing = times[1] - times[0]
    stride = round(spacing / dt)
    if stride < 1 or abs(stride * dt - spacing) > 1e-9 * spacing:
        raise InvalidParamsError(f"grid spacing {spacing} is not a multiple of dt={dt}")
    traj = integrate(params, MarketState(float(times[0]), 0.0, 0.0), float(times[-1]), dt,
                     record_every=stride)
    traj.t = times.copy()
    return traj


def closed_form_single(sb: SingleBrandParams, t):
    """Single-brand Bass share ``(1 - e^{-(p+q)t}) / (1 + (q/p) e^{-(p+q)t})``.

    Accepts a scalar or array ``t``.
    """
    if not sb.p > 0:
        raise InvalidParamsError(f"p must be > 0, got {sb.p!r}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParamsError("t must be >= 0")
    e = np.exp(-(sb.p + sb.q) * t)
    out = (1.0 - e) / (1.0 + (sb.q / sb.p) * e)
    return float(out) if out.ndim == 0 else out


def to_dimensional(traj: Trajectory, m: float) -> np.ndarray:
    """Head counts: columns ``(t, N1, N2)`` with ``N_i = m * n_i``."""
    if not m > 0:
        raise InvalidParamsError(f"m must be > 0, got {m!r}")
    return np.column_stack([traj.t, m * traj.n1, m * traj.n2])
