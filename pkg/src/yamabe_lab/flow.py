"""Yamabe flow dg/dt = -R g advanced as d(phi)/dt = -R/2.

Explicit midpoint RK2 with a parabolic step bound, sup|R| growth control,
blow-up detection, blow-up time fitting and parabolic rescaling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from . import _stencils
from .conformal import (
    FLOW_BOUNDARY_SKIP,
    UNDEFINED,
    Chart,
    ConformalField,
    scalar_curvature,
)
from .errors import (
    BlowUpReached,
    InsufficientHistory,
    NonpositiveCurvatureAtBasePoint,
    StepFailure,
)

DEFAULT_BLOWUP_FACTOR = 1e3
GROWTH_LIMIT = 4.0
MAX_HALVINGS = 40
DT_FLOOR = 1e-15
CURVATURE_DT_CAP = 0.01

_RUNNING, _REACHED, _BLOWUP, _FAILURE, _HALVINGS = range(5)


class StopReason(str, enum.Enum):
    REACHED_T_END = "ReachedTEnd"
    BLOWUP = "BlowUpReached"
    STEP_FAILURE = "StepFailure"


# Reductions use four independent accumulators; a single running max is a
# serial dependency chain and dominates the step cost at N ~ 1e3.
@njit(cache=True, fastmath=True)
def _max_abs(R, count):
    s0 = s1 = s2 = s3 = 0.0
    m = count // 4
    for k in range(m):
        j = 4 * k
        x0 = abs(R[j])
        x1 = abs(R[j + 1])
        x2 = abs(R[j + 2])
        x3 = abs(R[j + 3])
        s0 = x0 if x0 > s0 else s0
        s1 = x1 if x1 > s1 else s1
        s2 = x2 if x2 > s2 else s2
        s3 = x3 if x3 > s3 else s3
    for j in range(4 * m, count):
        x0 = abs(R[j])
        s0 = x0 if x0 > s0 else s0
    s0 = s1 if s1 > s0 else s0
    s2 = s3 if s3 > s2 else s2
    return s2 if s2 > s0 else s0


@njit(cache=True, fastmath=True)
def _max(R, count):
    s0 = s1 = s2 = s3 = R[0]
    m = count // 4
    for k in range(m):
        j = 4 * k
        s0 = R[j] if R[j] > s0 else s0
        s1 = R[j + 1] if R[j + 1] > s1 else s1
        s2 = R[j + 2] if R[j + 2] > s2 else s2
        s3 = R[j + 3] if R[j + 3] > s3 else s3
    for j in range(4 * m, count):
        s0 = R[j] if R[j] > s0 else s0
    s0 = s1 if s1 > s0 else s0
    s2 = s3 if s3 > s2 else s2
    return s2 if s2 > s0 else s0


@njit(cache=True, fastmath=True)
def _min(P):
    s0 = s1 = s2 = s3 = P[0]
    count = P.shape[0]
    m = count // 4
    for k in range(m):
        j = 4 * k
        s0 = P[j] if P[j] < s0 else s0
        s1 = P[j + 1] if P[j + 1] < s1 else s1
        s2 = P[j + 2] if P[j + 2] < s2 else s2
        s3 = P[j + 3] if P[j + 3] < s3 else s3
    for j in range(4 * m, count):
        s0 = P[j] if P[j] < s0 else s0
    s0 = s1 if s1 < s0 else s0
    s2 = s3 if s3 < s2 else s2
    return s2 if s2 < s0 else s0


@njit(cache=True, fastmath=True)
def _scaled_exp(E, R, c, out, count):
    """out[j] = E[j] * exp(c R[j]) for j < count.

    When every |c R| < 0.1 a degree-10 Taylor polynomial (exact to rounding)
    replaces exp so the loop vectorises.
    """
    if abs(c) * _max_abs(R, count) < 0.1:
        for j in range(count):
            x = c * R[j]
            out[j] = E[j] * (1.0 + x * (1.0 + x * (0.5 + x * (1.0 / 6 + x * (1.0 / 24 + x * (
                1.0 / 120 + x * (1.0 / 720 + x * (1.0 / 5040 + x * (
                    1.0 / 40320 + x * (1.0 / 362880 + x / 3628800.0))))))))))
    else:
        for j in range(count):
            out[j] = E[j] * math.exp(c * R[j])


@njit(cache=True)
def _advance(phi, n, h, inv_r, geom, outer, ghost, t, t_end,
             max_steps, sigma, dt_fixed, blow_threshold, n_sup, n_active):
    """Advance ``phi`` in place by up to ``max_steps`` accepted RK2 steps.

    exp(-2 phi) is carried multiplicatively between stages and rebuilt from
    phi on entry, so the result depends only on phi at call boundaries.
    Returns (t, steps, status, dt_last).
    """
    N = phi.shape[0]
    P = phi.copy()
    Pt = phi.copy()
    H = phi.copy()
    E = np.exp(-2.0 * P)
    Et = E.copy()
    Eh = E.copy()
    R = np.empty(N)
    Rh = np.empty(N)
    Rn = np.empty(N)
    _stencils.scalar_curvature_into(P, E, n, h, inv_r, geom, outer, ghost, R)
    periodic = geom == _stencils.GEOM_PLANAR
    base_dt = sigma * h * h / (2.0 * n * (n - 1.0))
    pmin = _min(P)
    steps = 0
    dt_last = 0.0
    status = _RUNNING
    while steps < max_steps:
        if t >= t_end:
            status = _REACHED
            break
        sup_abs = _max_abs(R, n_sup)
        if dt_fixed > 0.0:
            dt = dt_fixed
        else:
            dt = base_dt * math.exp(2.0 * pmin)
            if sup_abs > 0.0 and dt > CURVATURE_DT_CAP / sup_abs:
                dt = CURVATURE_DT_CAP / sup_abs
        if t + dt > t_end:
            dt = t_end - t
        accepted = False
        halvings = 0
        while True:
            if dt < DT_FLOOR:
                status = _FAILURE
                break
            c = 0.25 * dt
            for j in range(n_active):
                H[j] = P[j] - c * R[j]
            _scaled_exp(E, R, 0.5 * dt, Eh, n_active)
            if periodic:
                H[N - 1] = H[0]
                Eh[N - 1] = Eh[0]
            _stencils.scalar_curvature_into(H, Eh, n, h, inv_r, geom, outer, ghost, Rh)
            c = 0.5 * dt
            for j in range(n_active):
                Pt[j] = P[j] - c * Rh[j]
            _scaled_exp(E, Rh, dt, Et, n_active)
            if periodic:
                Pt[N - 1] = Pt[0]
                Et[N - 1] = Et[0]
            _stencils.scalar_curvature_into(Pt, Et, n, h, inv_r, geom, outer, ghost, Rn)
            if sup_abs > 0.0 and _max_abs(Rn, n_sup) > GROWTH_LIMIT * sup_abs:
                halvings += 1
                if halvings > MAX_HALVINGS:
                    status = _HALVINGS
                    break
                dt *= 0.5
                continue
            accepted = True
            break
        if not accepted:
            break
        P, Pt = Pt, P
        E, Et = Et, E
        R, Rn = Rn, R
        pmin = _min(P)
        t += dt
        dt_last = dt
        steps += 1
        if _max(R, n_sup) >= blow_threshold:
            status = _BLOWUP
            break
        if t >= t_end:
            status = _REACHED
            break
    if steps > 0:
        phi[:] = P
    return t, steps, status, dt_last


def _sup_count(f: ConformalField) -> int:
    if f.chart is Chart.PERIODIC:
        return f.phi.shape[0] - 1
    return f.phi.shape[0] - FLOW_BOUNDARY_SKIP


def _active_count(f: ConformalField) -> int:
    count = f.phi.shape[0]
    if f.chart is Chart.PERIODIC or f.outer_bc == "dirichlet":
        return count - 1
    return count


def sup_R(f: ConformalField, R=None) -> float:
    """Signed sup of R over the nodes the flow engine watches."""
    R = scalar_curvature(f) if R is None else R
    return float(np.max(R[: _sup_count(f)]))


def sup_abs_R(f: ConformalField, R=None) -> float:
    R = scalar_curvature(f) if R is None else R
    return float(np.max(np.abs(R[: _sup_count(f)])))


@dataclass
class FlowState:
    field: ConformalField
    dt: float = 0.0
    step_index: int = 0
    sup_R_history: list = field(default_factory=list)
    cfl_safety: float = 0.5

    @property
    def t(self) -> float:
        return self.field.t

    @classmethod
    def start(cls, f: ConformalField, cfl_safety: float = 0.5) -> "FlowState":
        if not 0.0 < cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        state = cls(f, 0.0, 0, [], cfl_safety)
        state.dt = adaptive_dt(state)
        state.sup_R_history.append((f.t, sup_R(f)))
        return state


def adaptive_dt(state: FlowState) -> float:
    """sigma h^2 min(exp(2 phi)) / (2n(n-1)), capped at 0.01 / sup|R|."""
    f = state.field
    n = f.n
    dt = state.cfl_safety * f.h**2 * math.exp(2.0 * float(f.phi.min())) / (2.0 * n * (n - 1))
    s = sup_abs_R(f)
    if s > 0.0:
        dt = min(dt, CURVATURE_DT_CAP / s)
    return dt


def blowup_threshold(f: ConformalField, factor: float) -> float:
    """factor * sup R(0); for nonpositive sup R, factor * sup|R(0)|; flat data never blow up."""
    s0 = sup_R(f)
    if s0 > 0.0:
        return factor * s0
    a0 = sup_abs_R(f)
    return factor * a0 if a0 > 0.0 else math.inf


def _kernel_call(f: ConformalField, phi, t_end, max_steps, sigma, dt_fixed, threshold):
    return _advance(
        phi, float(f.n), f.h, f.inv_r, f.geom, f.outer_code, f.ghost_offset,
        f.t, t_end, max_steps, sigma, dt_fixed, threshold, _sup_count(f), _active_count(f),
    )


def step(state: FlowState, dt: float | None = None) -> FlowState:
    """One accepted midpoint-RK2 step; returns a new state.

    ``dt`` overrides the adaptive step (halvings still apply).
    """
    f = state.field
    phi = f.phi.copy()
    t, steps, status, dt_used = _kernel_call(
        f, phi, math.inf, 1, state.cfl_safety, dt or 0.0, math.inf
    )
    if status == _HALVINGS:
        raise BlowUpReached(f"step rejected {MAX_HALVINGS} times at t={f.t!r}")
    if status == _FAILURE or steps != 1:
        raise StepFailure(f"step size underflow at t={f.t!r}")
    new = f.with_phi(phi, t)
    return FlowState(
        new, dt_used, state.step_index + 1,
        state.sup_R_history + [(t, sup_R(new))], state.cfl_safety,
    )


@dataclass
class RunResult:
    trajectory: list
    records: list
    stop_reason: StopReason
    state: FlowState


def run(state: FlowState, t_end: float, *, monitor: Callable | None = None,
        callbacks: Sequence[Callable] = (), record_every: int = 100,
        blowup_factor: float = DEFAULT_BLOWUP_FACTOR, threshold: float | None = None,
        keep_trajectory: bool = True) -> RunResult:
    """Step until ``t_end`` or blow-up.

    Every ``record_every`` accepted steps a snapshot is taken and
    ``monitor(previous_snapshot, snapshot, last_dt)`` is appended to the
    records; ``callbacks`` receive the live state.
    At a fresh start (step 0) the monitor first sees ``(None, initial, 0.0)``.
    """
    if not t_end > state.t:
        raise ValueError("t_end must exceed the current time")
    f = state.field
    if threshold is None:
        threshold = blowup_threshold(f, blowup_factor)
    trajectory = [f] if keep_trajectory else []
    records = []
    if monitor is not None and state.step_index == 0:
        records.append(monitor(None, f, 0.0))
    phi = f.phi.copy()
    last = f
    reason = None
    while reason is None:
        # chunks end on multiples of record_every so resumed runs line up
        todo = record_every - (state.step_index % record_every)
        t, steps, status, dt_last = _kernel_call(
            state.field, phi, t_end, todo, state.cfl_safety, 0.0, threshold
        )
        if steps:
            cur = f.with_phi(phi, t)
            state = FlowState(cur, dt_last, state.step_index + steps,
                              state.sup_R_history, state.cfl_safety)
            state.sup_R_history.append((t, sup_R(cur)))
            if keep_trajectory:
                trajectory.append(cur)
            if monitor is not None:
                records.append(monitor(last, cur, dt_last))
            last = cur
            for cb in callbacks:
                cb(state)
        if status == _REACHED:
            reason = StopReason.REACHED_T_END
        elif status in (_BLOWUP, _HALVINGS):
            reason = StopReason.BLOWUP
        elif status == _FAILURE:
            reason = StopReason.STEP_FAILURE
    return RunResult(trajectory, records, reason, state)


def estimate_blowup_time(history, window: int = 16) -> float:
    """Root of a least-squares line through 1/sup R over the trailing window.

    Returns ``UNDEFINED`` when the tail has fewer than 8 positive samples or
    1/sup R is not decreasing.
    """
    data = np.asarray(history, dtype=float).reshape(-1, 2)
    if data.shape[0] < 8:
        raise InsufficientHistory(f"need at least 8 history points, got {data.shape[0]}")
    tail = data[-max(window, 8):]
    tail = tail[tail[:, 1] > 0.0]
    if tail.shape[0] < 8:
        return UNDEFINED
    t, s = tail[:, 0], tail[:, 1]
    slope, intercept = np.polyfit(t, 1.0 / s, 1)
    if not slope < 0.0:
        return UNDEFINED
    return float(-intercept / slope)


@dataclass
class RescaledTrajectory:
    Q: float
    base_node: int
    base_time: float
    times: np.ndarray  # rescaled clock, 0 at the base time
    fields: list


def parabolic_rescale(trajectory: Sequence[ConformalField], base_node: int,
                      base_index: int) -> RescaledTrajectory:
    """g_i(s) = Q g(t_i + s/Q) with Q = R(x_i, t_i), realised as phi + ln(Q)/2."""
    base = trajectory[base_index]
    Q = float(scalar_curvature(base)[base_node])
    if not Q > 0.0:
        raise NonpositiveCurvatureAtBasePoint(f"R = {Q!r} at node {base_node}")
    shift = 0.5 * math.log(Q)
    fields, times = [], []
    for f in trajectory:
        s = Q * (f.t - base.t)
        fields.append(f.with_phi(f.phi + shift, s))
        times.append(s)
    return RescaledTrajectory(Q, base_node, base.t, np.array(times), fields)
