"""Diagnostics evaluated on flow snapshots.

Residuals of the scalar and Ricci evolution equations and of the evolution
identity for the normalized traceless Ricci quantity f, the Harnack
minimum, pinching/epsilon/gap monitors and a singularity-type classifier.

All tensors are rotationally (or translation) symmetric, so Ricci has two
eigenvalues: mu_rad (multiplicity 1) and mu_tan (multiplicity n-1).
Tensor Laplacians and covariant derivatives are taken in the orthonormal
frame of the warped product g = ds^2 + rho(s)^2 (fibre), where the only
Christoffel data is H = rho_s / rho (see ``conformal.gap_warp``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .conformal import (
    UNDEFINED,
    Chart,
    ConformalField,
    CurvatureState,
    chart_derivatives,
    gap_warp,
    is_undefined,
    jet,
    laplace_beltrami,
    ricci_eigenvalues,
)
from .errors import (
    AllNodesUndefined,
    HypothesisViolated,
    InsufficientHistory,
    UnsupportedChart,
)

PINCHING_TOLERANCE = 0.05
HARNACK_TOLERANCE = 1e-3
IDENTITY_R_FLOOR = 0.25  # fraction of max R below which f-identity nodes are dropped
DEFAULT_IDENTITY_DELTA = 0.5
MIN_CLASSIFY_RECORDS = 16
DRIFT_LIMIT = 0.10
DIVERGENCE_RATIO = 3.0
BLOWUP_FIT_WINDOW = 8
DECAY_FRACTION = 0.1  # t sup R below this share of its peak and falling: curvature dies out


# ---------------------------------------------------------------------------
# pair handling


def _check_pair(prev: ConformalField, cur: ConformalField) -> float:
    if prev.phi.shape != cur.phi.shape or prev.n != cur.n or prev.chart is not cur.chart:
        raise ValueError("snapshots must share grid, dimension and chart")
    dt = cur.t - prev.t
    if not dt > 0.0:
        raise ValueError("snapshots must be time-ordered with distinct times")
    return dt


def _midpoint(prev: ConformalField, cur: ConformalField) -> ConformalField:
    return cur.with_phi(0.5 * (prev.phi + cur.phi), 0.5 * (prev.t + cur.t))


def _sup_sq_scale(R, mask) -> float:
    return 1.0 + float(np.max(R[mask] ** 2))


# ---------------------------------------------------------------------------
# evolution residuals


def scalar_evolution_residual(prev: ConformalField, cur: ConformalField) -> float:
    """max |dR/dt - (n-1) Lap_g R - R^2| / (1 + sup R^2) over interior nodes."""
    dt = _check_pair(prev, cur)
    mid = _midpoint(prev, cur)
    n = cur.n
    j = jet(mid)
    R = ricci_eigenvalues(mid).R
    rhs = (n - 1) * laplace_beltrami(mid, R, j) + R * R
    lhs = (ricci_eigenvalues(cur).R - ricci_eigenvalues(prev).R) / dt
    mask = mid.interior()
    return float(np.max(np.abs(lhs - rhs)[mask]) / _sup_sq_scale(R, mask))


def ricci_source(cs: CurvatureState):
    """Frame components (B_rad, B_tan) of
    B = (n-1)|Rc|^2 g + n R Rc - n(n-1) Rc^2 - R^2 g."""
    n = cs.n
    R, q = cs.R, cs.ric_norm_sq
    b_rad = (n - 1) * q + n * R * cs.mu_rad - n * (n - 1) * cs.mu_rad**2 - R * R
    b_tan = (n - 1) * q + n * R * cs.mu_tan - n * (n - 1) * cs.mu_tan**2 - R * R
    return b_rad, b_tan


def ricci_source_trace(f: ConformalField) -> np.ndarray:
    """|tr_g B| / ((1 + R^2)(1 + |Rc|^2)) per node; zero up to rounding."""
    cs = ricci_eigenvalues(f)
    b_rad, b_tan = ricci_source(cs)
    return np.abs(b_rad + (cs.n - 1) * b_tan) / ((1 + cs.R**2) * (1 + cs.ric_norm_sq))


def ricci_laplacian(f: ConformalField, cs: CurvatureState | None = None, j=None):
    """Frame components of the rough Laplacian of Rc.

    For T = a nu(x)nu + b (g - nu(x)nu) on a warped product with m = n-1
    fibre directions, (Lap T)_rad = Lap a - 2m (a-b) H^2 and
    (Lap T)_tan = Lap b + 2 (a-b) H^2.
    """
    if f.chart is Chart.PERIODIC:
        raise UnsupportedChart("Ricci tensor monitors need a radial chart")
    cs = cs or ricci_eigenvalues(f)
    j = j or jet(f)
    wh2 = gap_warp(f, j)
    m = f.n - 1
    lap_rad = laplace_beltrami(f, cs.mu_rad, j) - 2 * m * wh2
    lap_tan = laplace_beltrami(f, cs.mu_tan, j) + 2 * wh2
    return lap_rad, lap_tan


def ricci_evolution_residual(prev: ConformalField, cur: ConformalField) -> float:
    """Residual of d/dt R_ij = (n-1) Lap R_ij + B_ij/(n-2), covariant chart
    components differenced in time and compared in the midpoint frame."""
    if cur.chart is Chart.PERIODIC:
        raise UnsupportedChart("Ricci evolution residual needs a radial chart")
    dt = _check_pair(prev, cur)
    mid = _midpoint(prev, cur)
    n = cur.n
    c0, c1 = ricci_eigenvalues(prev), ricci_eigenvalues(cur)
    w0, w1 = np.exp(2 * prev.phi), np.exp(2 * cur.phi)
    j = jet(mid)
    cs = ricci_eigenvalues(mid)
    lap_rad, lap_tan = ricci_laplacian(mid, cs, j)
    b_rad, b_tan = ricci_source(cs)
    scale = np.exp(2 * mid.phi)
    res_rad = (w1 * c1.mu_rad - w0 * c0.mu_rad) / dt / scale - ((n - 1) * lap_rad + b_rad / (n - 2))
    res_tan = (w1 * c1.mu_tan - w0 * c0.mu_tan) / dt / scale - ((n - 1) * lap_tan + b_tan / (n - 2))
    mask = mid.interior()
    worst = np.maximum(np.abs(res_rad), np.abs(res_tan))
    return float(np.max(worst[mask]) / _sup_sq_scale(cs.R, mask))


# ---------------------------------------------------------------------------
# pinching quantity and its evolution identity


def traceless_ratio(cs: CurvatureState, delta: float) -> np.ndarray:
    """f = (|Rc|^2 - R^2/n) / R^(2-delta); NaN where R <= 0."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cs.R > 0, cs.traceless_sq / np.abs(cs.R) ** (2 - delta), np.nan)


def cubic_defect(cs: CurvatureState) -> np.ndarray:
    """J = 2/(n-2) (n(n-1) tr Rc^3 + R^3 - (2n-1) R |Rc|^2).

    Expanded about the mean eigenvalue so that Einstein points give 0 exactly:
    J = 2 R S2 + 2 (n-1)^2 w^3 / n with w = mu_rad - mu_tan.
    """
    n = cs.n
    w = cs.mu_rad - cs.mu_tan
    return 2 * cs.R * cs.traceless_sq + 2 * (n - 1) ** 2 * w**3 / n


def gradient_defect_sq(f: ConformalField, cs: CurvatureState | None = None, j=None) -> np.ndarray:
    """|R nabla Rc - nabla R (x) Rc|^2 in the g-norm, per node.

    Frame components along the symmetry direction come from chart
    derivatives; the mixed components (a, b, rad) pick up (mu_rad - mu_tan) H
    from the connection, 2m of them in total.
    """
    cs = cs or ricci_eigenvalues(f)
    j = j or jet(f)
    m = f.n - 1
    R = cs.R
    dR = chart_derivatives(f, R)[0]
    da = chart_derivatives(f, cs.mu_rad)[0]
    db = chart_derivatives(f, cs.mu_tan)[0]
    w = cs.mu_rad - cs.mu_tan
    v_sq = j.E * ((R * da - dR * cs.mu_rad) ** 2 + m * (R * db - dR * cs.mu_tan) ** 2)
    return v_sq + 2 * m * R * R * w * gap_warp(f, j)


def pinching_identity_terms(f: ConformalField, delta: float):
    """Right-hand side of the evolution identity for f, per node."""
    n = f.n
    m = n - 1
    j = jet(f)
    cs = ricci_eigenvalues(f)
    R = cs.R
    fv = traceless_ratio(cs, delta)
    dR = chart_derivatives(f, R)[0]
    dfv = chart_derivatives(f, fv)[0]
    v_sq = gradient_defect_sq(f, cs, j)
    with np.errstate(invalid="ignore", divide="ignore"):
        Rp = np.where(R > 0, R, np.nan)
        rhs = (
            2 * (1 - delta) * m / Rp * j.E * dfv * dR
            - 2 * m * v_sq / Rp ** (4 - delta)
            - (1 - delta) * delta * m * cs.traceless_sq * j.E * dR**2 / Rp ** (4 - delta)
            + (delta * R * cs.traceless_sq - cubic_defect(cs)) / Rp ** (2 - delta)
        )
    return rhs, fv, cs


def pinching_identity_residual(prev: ConformalField, cur: ConformalField,
                     delta: float = DEFAULT_IDENTITY_DELTA) -> float:
    """|(d/dt - (n-1) Lap_g) f - rhs| on nodes with R above a floor.

    Normalized by 1 + max(|df/dt| + (n-1)|Lap_g f|) over the same nodes.
    Returns UNDEFINED when R <= 0 on every interior node.
    """
    if cur.chart is Chart.PERIODIC:
        raise UnsupportedChart("the f identity residual needs a radial chart")
    dt = _check_pair(prev, cur)
    mid = _midpoint(prev, cur)
    rhs, f_mid, cs = pinching_identity_terms(mid, delta)
    f0 = traceless_ratio(ricci_eigenvalues(prev), delta)
    f1 = traceless_ratio(ricci_eigenvalues(cur), delta)
    ft = (f1 - f0) / dt
    lap = (mid.n - 1) * laplace_beltrami(mid, f_mid)
    mask = mid.interior() & (cs.R > 0)
    if not mask.any():
        return UNDEFINED
    mask &= cs.R > IDENTITY_R_FLOOR * np.max(cs.R[mask])
    mask &= np.isfinite(rhs) & np.isfinite(ft) & np.isfinite(lap)
    if not mask.any():
        return UNDEFINED
    scale = 1.0 + float(np.max(np.abs(ft[mask]) + np.abs(lap[mask])))
    return float(np.max(np.abs(ft - lap - rhs)[mask]) / scale)


# ---------------------------------------------------------------------------
# pointwise monitors


@dataclass
class HarnackReport:
    Z: np.ndarray  # NaN where Ricci is not positive definite
    Z_min: float


def harnack_min(f: ConformalField, t: float) -> HarnackReport:
    """Z minimized over the vector field: dR/dt + R/t - (n-1)/2 <Rc^-1 grad R, grad R>.

    dR/dt is taken from the scalar evolution equation, not a time difference.
    """
    if not t > 0.0:
        raise ValueError("Harnack quantity needs t > 0")
    n = f.n
    j = jet(f)
    cs = ricci_eigenvalues(f)
    R = cs.R
    dR = chart_derivatives(f, R)[0]
    ok = (cs.mu_rad > 0) & (cs.mu_tan > 0) & f.interior()
    if not ok.any():
        raise AllNodesUndefined("Ricci curvature is nowhere positive definite")
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = (n - 1) * laplace_beltrami(f, R, j) + R * R + R / t - 0.5 * (n - 1) * j.E * dR**2 / cs.mu_rad
    Z = np.where(ok, Z, np.nan)
    return HarnackReport(Z, float(np.min(Z[ok])))


@dataclass(frozen=True)
class RescaledHarnack:
    rescaled_clock: float  # Z_min with t = s, the rescaled time (undefined for s <= 0)
    flow_clock: float  # Z_min with t = Q (t_base + s / Q), elapsed flow time in rescaled units


def rescaled_harnack(resc, index: int) -> RescaledHarnack:
    """Z_min of a rescaled snapshot under both candidate clocks."""
    f = resc.fields[index]
    s = float(resc.times[index])
    tau = resc.Q * resc.base_time + s
    a = harnack_min(f, s).Z_min if s > 0 else UNDEFINED
    b = harnack_min(f, tau).Z_min if tau > 0 else UNDEFINED
    return RescaledHarnack(a, b)


def _positive_interior(f: ConformalField, cs: CurvatureState):
    mask = f.interior()
    if np.any(cs.R[mask] <= 0):
        raise HypothesisViolated("scalar curvature is not positive on the interior")
    return mask


@dataclass(frozen=True)
class PinchingReport:
    f_max: float
    bound: float
    delta: float
    passed: bool


def pinching_monitor(f: ConformalField, eps0: float, t: float, *, delta: float | None = None,
                     tolerance: float = PINCHING_TOLERANCE) -> PinchingReport:
    """max f against (3t)^(-delta), delta = n eps0 / 3 unless given."""
    n = f.n
    if delta is None:
        if not 0.0 < eps0 <= 1.0 / n:
            raise ValueError("eps0 must lie in (0, 1/n]")
        delta = n * eps0 / 3.0
    cs = ricci_eigenvalues(f)
    mask = _positive_interior(f, cs)
    f_max = float(np.max(traceless_ratio(cs, delta)[mask]))
    bound = (3.0 * t) ** (-delta) if t > 0 else math.inf
    return PinchingReport(f_max, bound, delta, f_max <= bound * (1 + tolerance))


def epsilon_monitor(f: ConformalField) -> float:
    """inf of lambda_min / R over interior nodes with R > 0."""
    cs = ricci_eigenvalues(f)
    mask = f.interior() & (cs.R > 0)
    if not mask.any():
        return UNDEFINED
    return float(np.min(cs.eps_pt[mask]))


def eigenvalue_gap_monitor(f: ConformalField, eps0: float) -> float:
    """sup of (lambda_max - lambda_min) / R^(1 - n eps0)."""
    cs = ricci_eigenvalues(f)
    mask = _positive_interior(f, cs)
    gap = (cs.lambda_max - cs.lambda_min) / cs.R ** (1 - f.n * eps0)
    return float(np.max(gap[mask]))


def einstein_defect(f: ConformalField) -> float:
    """max (|Rc|^2 - R^2/n) / (1 + R^2) over interior nodes."""
    cs = ricci_eigenvalues(f)
    mask = f.interior()
    return float(np.max((cs.traceless_sq / (1 + cs.R**2))[mask]))


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class MonitorRecord:
    t: float
    dt: float
    sup_R: float
    inf_R: float
    eps_min: float
    delta: float
    f_max: float
    f_bound: float
    Z_min: float
    res_scalar: float
    res_ricci: float
    res_lemma41: float
    chow_gap: float
    Tm_t_supR: float
    t_supR: float

    def __post_init__(self):
        for fd in fields(self):
            v = getattr(self, fd.name)
            if not (math.isfinite(v) or is_undefined(v)):
                raise ValueError(f"{fd.name} must be finite or undefined, got {v!r}")

    @classmethod
    def columns(cls) -> tuple:
        return tuple(fd.name for fd in fields(cls))


def _guard(fn, *args, **kw) -> float:
    try:
        return fn(*args, **kw)
    except (HypothesisViolated, AllNodesUndefined, UnsupportedChart):
        return UNDEFINED


@dataclass
class RecordCollector:
    """Builds one MonitorRecord per snapshot (single writer).

    delta and the pinching baseline are frozen on the first snapshot unless
    ``fixed_delta`` is given.
    """

    fixed_delta: float | None = None
    eps0: float = UNDEFINED
    delta: float = UNDEFINED
    gap0: float = UNDEFINED
    initialized: bool = False

    def start(self, f: ConformalField):
        cs = ricci_eigenvalues(f)
        mask = f.interior()
        eps = epsilon_monitor(f) if np.all(cs.R[mask] > 0) else UNDEFINED
        self.eps0 = eps
        if self.fixed_delta is not None:
            self.delta = float(self.fixed_delta)
        elif not is_undefined(eps) and eps > 0:
            self.delta = f.n * eps / 3.0
        else:
            self.delta = UNDEFINED
        self.gap0 = UNDEFINED if is_undefined(eps) else _guard(eigenvalue_gap_monitor, f, eps)
        self.initialized = True

    def __call__(self, prev: ConformalField | None, cur: ConformalField, dt: float) -> MonitorRecord:
        if not self.initialized:
            self.start(cur)
        cs = ricci_eigenvalues(cur)
        mask = cur.interior()
        R = cs.R[mask]
        sup_R, inf_R = float(R.max()) + 0.0, float(R.min()) + 0.0  # no -0.0 in records
        positive = bool(np.all(R > 0))
        eps_min = epsilon_monitor(cur) if positive else UNDEFINED
        t = cur.t
        f_max = f_bound = UNDEFINED
        if positive and not is_undefined(self.delta):
            rep = pinching_monitor(cur, UNDEFINED, t, delta=self.delta)
            f_max = rep.f_max
            f_bound = rep.bound if math.isfinite(rep.bound) else UNDEFINED
        z_min = _guard(lambda: harnack_min(cur, t).Z_min) if t > 0 else UNDEFINED
        gap = UNDEFINED
        if positive and not is_undefined(self.eps0):
            gap = eigenvalue_gap_monitor(cur, self.eps0)
        res_s = res_r = res_l = UNDEFINED
        if prev is not None:
            res_s = scalar_evolution_residual(prev, cur)
            res_r = _guard(ricci_evolution_residual, prev, cur)
            identity_delta = DEFAULT_IDENTITY_DELTA if is_undefined(self.delta) else self.delta
            res_l = _guard(pinching_identity_residual, prev, cur, identity_delta)
        return MonitorRecord(
            t=t, dt=float(dt), sup_R=sup_R, inf_R=inf_R, eps_min=eps_min, delta=self.delta,
            f_max=f_max, f_bound=f_bound, Z_min=z_min, res_scalar=res_s, res_ricci=res_r,
            res_lemma41=res_l, chow_gap=gap, Tm_t_supR=UNDEFINED, t_supR=t * sup_R,
        )


def with_blowup_time(records: Sequence[MonitorRecord], T_hat: float) -> list:
    """Fill (T_hat - t) sup R once the blow-up time is known."""
    if is_undefined(T_hat):
        return list(records)
    return [replace(r, Tm_t_supR=(T_hat - r.t) * r.sup_R) for r in records]


# ---------------------------------------------------------------------------
# singularity classification


class SingularityKind(str, enum.Enum):
    TYPE_I = "TypeI"
    TYPE_IIA = "TypeIIa"
    TYPE_IIB = "TypeIIb"
    TYPE_III = "TypeIII"
    NONE = "NoSingularity"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SingularityVerdict:
    kind: SingularityKind
    T_hat: float = UNDEFINED
    Omega: float = UNDEFINED
    A: float = UNDEFINED
    window: dict = field(default_factory=dict)


def _trend(series: np.ndarray) -> dict:
    """Quarter statistics of a window: drift of the last quarter, block means."""
    quarters = np.array_split(series, 4)
    means = np.array([q.mean() for q in quarters])
    last = quarters[-1]
    level = abs(last.mean())
    drift = (last.max() - last.min()) / level if level > 0 else math.inf
    increasing = bool(np.all(np.diff(means) > 0))
    ratio = means[-1] / means[0] if means[0] > 0 else math.inf
    return {
        "quarter_means": means.tolist(),
        "last_quarter_drift": float(drift),
        "growth_ratio": float(ratio),
        "diverging": increasing and ratio > DIVERGENCE_RATIO,
        "converging": drift < DRIFT_LIMIT,
        "limit": float(last.mean()),
    }


def classify_singularity(records: Sequence[MonitorRecord], stop_reason, t_end: float | None = None,
                         window: int | None = None) -> SingularityVerdict:
    """Finite-horizon proxies for the singularity types.

    Blow-up runs: (T_hat - t) sup R over the window (all records unless
    ``window`` is given); a last-quarter drift under 10% gives TypeI with
    Omega its limit, otherwise monotone growth by more than 3x gives TypeIIa.
    Runs reaching t_end use t sup R in the same way (TypeIII with A = |limit| /
    TypeIIb); vanishing or steadily decaying curvature gives NoSingularity.  Convergence is tested
    first because t sup R climbs from 0 early in every run.
    """
    from .flow import StopReason, estimate_blowup_time

    if len(records) < MIN_CLASSIFY_RECORDS:
        raise InsufficientHistory(f"need at least {MIN_CLASSIFY_RECORDS} records, got {len(records)}")
    reason = StopReason(stop_reason)
    t = np.array([r.t for r in records], dtype=float)
    s = np.array([r.sup_R for r in records], dtype=float)
    size = window or len(records)
    t_w, s_w = t[-size:], s[-size:]

    if reason is StopReason.BLOWUP:
        # the nearest samples carry the least extrapolation bias
        T_hat = estimate_blowup_time(np.column_stack([t, s]), window=BLOWUP_FIT_WINDOW)
        if is_undefined(T_hat):
            return SingularityVerdict(SingularityKind.INCONCLUSIVE, window={"reason": "no blow-up fit"})
        keep = t_w < T_hat
        if keep.sum() < 8:
            return SingularityVerdict(SingularityKind.INCONCLUSIVE, T_hat, window={"reason": "fit before data"})
        stats = _trend((T_hat - t_w[keep]) * s_w[keep])
        if stats["converging"]:
            return SingularityVerdict(SingularityKind.TYPE_I, T_hat, Omega=stats["limit"], window=stats)
        if stats["diverging"]:
            return SingularityVerdict(SingularityKind.TYPE_IIA, T_hat, window=stats)
        return SingularityVerdict(SingularityKind.INCONCLUSIVE, T_hat, window=stats)

    scale = max(1.0, float(np.max(np.abs(s))))
    if np.all(np.abs(s) <= 1e-12 * scale) or np.max(np.abs(s)) == 0.0:
        return SingularityVerdict(SingularityKind.NONE, window={"sup_abs_R": float(np.max(np.abs(s)))})
    ts = np.abs(t_w * s_w)
    stats = _trend(ts)
    peak = float(np.max(np.abs(t * s)))
    means = stats["quarter_means"]
    if stats["converging"]:
        return SingularityVerdict(SingularityKind.TYPE_III, A=stats["limit"], window=stats)
    if means[-1] < means[-2] < means[-3] and stats["limit"] <= DECAY_FRACTION * peak:
        return SingularityVerdict(SingularityKind.NONE, window=stats)
    if stats["diverging"]:
        return SingularityVerdict(SingularityKind.TYPE_IIB, window=stats)
    return SingularityVerdict(SingularityKind.INCONCLUSIVE, window=stats)
