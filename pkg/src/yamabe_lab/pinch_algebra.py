"""Pointwise Ricci-eigenvalue algebra, independent of any PDE.

The cubic defect J, its triple-sum expansion, the pinched lower bound for J,
the diagonal of the Harnack quadratic form and the homogeneous comparison ODE
for the pinching quantity.  Batched numpy kernels back the fuzz suite; single
tuples go through :class:`EigenTuple`.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import HypothesisViolated

TRIPLE_SUM_TOL = 1e-12
MARGIN_TOL = 1e-9
HOMOGENEITY_TOL = 1e-12
TRACE_TOL = 1e-10
HYPOTHESIS_SLACK = 1e-12
ODE_TOL = 1e-6
FUZZ_BATCH = 50_000


@dataclass(frozen=True)
class EigenTuple:
    values: tuple

    def __post_init__(self):
        vals = tuple(sorted(float(v) for v in self.values))
        if len(vals) < 3:
            raise ValueError("need n >= 3 eigenvalues")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("eigenvalues must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values)

    @property
    def R(self) -> float:
        return math.fsum(self.values)

    @property
    def ric_norm_sq(self) -> float:
        return math.fsum(v * v for v in self.values)

    @property
    def tr_cubed(self) -> float:
        return math.fsum(v**3 for v in self.values)


def _as_batch(lam) -> np.ndarray:
    if isinstance(lam, EigenTuple):
        lam = lam.array
    arr = np.asarray(lam, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def _unbatch(x, lam):
    return float(x[0]) if np.ndim(lam.array if isinstance(lam, EigenTuple) else lam) == 1 else x


# ---------------------------------------------------------------------------
# J and its expansions


def j_functional(lam):
    """J = 2/(n-2) (n(n-1) tr Rc^3 + R^3 - (2n-1) R |Rc|^2), literally."""
    b = _as_batch(lam)
    n = b.shape[1]
    R = b.sum(axis=1)
    q = (b * b).sum(axis=1)
    c = (b**3).sum(axis=1)
    J = 2.0 / (n - 2) * (n * (n - 1) * c + R**3 - (2 * n - 1) * R * q)
    return _unbatch(J, lam)


def _centered(b):
    # shift by the smallest entry first: equal tuples then give exact zeros
    shifted = b - b[:, :1]
    d = shifted - shifted.mean(axis=1, keepdims=True)
    mean = b[:, 0] + shifted.mean(axis=1)
    return mean, d


def j_centered(lam):
    """J written about the mean eigenvalue: 2 n mean S2 + 2n(n-1)/(n-2) S3.

    Algebraically equal to :func:`j_functional`; no cancellation near
    Einstein tuples.
    """
    b = _as_batch(lam)
    n = b.shape[1]
    mean, d = _centered(b)
    J = 2 * n * mean * (d * d).sum(axis=1) + 2 * n * (n - 1) / (n - 2) * (d**3).sum(axis=1)
    return _unbatch(J, lam)


def _triples(n):
    return np.array(list(itertools.combinations(range(n), 3))).T


def triple_sum(lam):
    """2 sum_{i<j<k} [l_k(l_k-l_i)(l_k-l_j) + l_j(l_j-l_i)(l_j-l_k) + l_i(l_i-l_k)(l_i-l_j)]."""
    b = _as_batch(lam)
    i, j, k = _triples(b.shape[1])
    li, lj, lk = b[:, i], b[:, j], b[:, k]
    s = lk * (lk - li) * (lk - lj) + lj * (lj - li) * (lj - lk) + li * (li - lk) * (li - lj)
    return _unbatch(2.0 * s.sum(axis=1), lam)


@dataclass(frozen=True)
class TripleSumCheck:
    lhs: float
    rhs: float
    gap: float


def _triple_gap(lhs, rhs, b):
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), np.max(np.abs(b), axis=1) ** 3)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(scale > 0, np.abs(lhs - rhs) / scale, 0.0)


def triple_sum_identity(lam) -> TripleSumCheck:
    """((n-2)/2) J against the triple sum; gap relative to the cubic scale max|l|^3."""
    b = _as_batch(lam)
    n = b.shape[1]
    lhs = (n - 2) / 2.0 * np.atleast_1d(j_functional(b))
    rhs = np.atleast_1d(triple_sum(b))
    gap = _triple_gap(lhs, rhs, b)
    return TripleSumCheck(float(lhs[0]), float(rhs[0]), float(gap[0]))


# ---------------------------------------------------------------------------
# pinched lower bound


def _margin_batch(b, eps):
    n = b.shape[1]
    mean, d = _centered(b)
    s2 = (d * d).sum(axis=1)
    J = 2 * n * mean * s2 + 2 * n * (n - 1) / (n - 2) * (d**3).sum(axis=1)
    return J - 4.0 / 3.0 * n * eps * (n * mean) * s2, J


def _hypothesis_ok(b, eps):
    R = b.sum(axis=1)
    return (R > 0) & (b.min(axis=1) >= eps * R - HYPOTHESIS_SLACK * np.abs(R))


def j_lower_bound_check(lam, eps: float) -> float:
    """margin = J - (4/3) n eps R (|Rc|^2 - R^2/n), needs lambda_min >= eps R > 0."""
    b = _as_batch(lam)
    if not np.all(_hypothesis_ok(b, eps)) or not eps > 0:
        raise HypothesisViolated("tuple is not eps-pinched with positive trace")
    margin, _ = _margin_batch(b, eps)
    return _unbatch(margin, lam)


def exact_margin(values: Sequence[float], eps) -> Fraction:
    """The same margin in rational arithmetic (values taken as exact binary floats)."""
    lam = [Fraction(v) for v in values]
    e = Fraction(eps)
    n = len(lam)
    R = sum(lam)
    q = sum(v * v for v in lam)
    c = sum(v**3 for v in lam)
    J = Fraction(2, n - 2) * (n * (n - 1) * c + R**3 - (2 * n - 1) * R * q)
    return J - Fraction(4, 3) * n * e * R * (q - R * R / n)


# ---------------------------------------------------------------------------
# Harnack quadratic form


@dataclass(frozen=True)
class AMatrixDiagonal:
    literal: np.ndarray  # A_ii from B_ii and the displayed correction term
    reference: np.ndarray  # nu_i, pairwise-difference formula
    difference: np.ndarray


def a_matrix_diagonal(lam) -> AMatrixDiagonal:
    b = np.asarray(EigenTuple(tuple(np.ravel(lam.array if isinstance(lam, EigenTuple) else lam))).array)
    n = b.shape[0]
    R = b.sum()
    q = (b * b).sum()
    B = (n - 1) * q + n * R * b - n * (n - 1) * b * b - R * R
    correction = n * b * b - R * b
    literal = B / (2 * (n - 1) * (n - 2)) + correction / (2 * (n - 2))
    nu = np.empty(n)
    for i in range(n):
        rest = np.delete(b, i)
        diffs = rest[:, None] - rest[None, :]
        nu[i] = np.sum(np.triu(diffs, 1) ** 2) / (2 * (n - 1) * (n - 2))
    return AMatrixDiagonal(literal, nu, literal - nu)


# ---------------------------------------------------------------------------
# comparison ODE


def comparison_closed_form(t, eps: float, n: int, f0: float, t0: float):
    """(3(t - t0) + f0^(-1/delta))^(-delta), delta = n eps / 3."""
    delta = n * eps / 3.0
    t = np.asarray(t, dtype=float)
    if f0 == 0:
        return np.zeros_like(t)
    return (3.0 * (t - t0) + f0 ** (-1.0 / delta)) ** (-delta)


@dataclass
class OdeComparison:
    eps: float
    n: int
    f0: float
    t0: float
    t1: float
    times: np.ndarray
    numeric: np.ndarray
    closed: np.ndarray
    max_rel_error: float
    bound_holds: bool | None  # None when the initial bound does not hold


def ode_comparison(eps: float, n: int, f0: float, t0: float, t1: float, points: int = 64) -> OdeComparison:
    """Integrate f' = -n eps f^(1+1/delta) (DOP853) against its closed form."""
    if not eps > 0 or n < 3 or f0 < 0 or t0 < 0 or not t1 > t0:
        raise ValueError("need eps > 0, n >= 3, f0 >= 0, 0 <= t0 < t1")
    delta = n * eps / 3.0
    times = np.linspace(t0, t1, points)
    closed = comparison_closed_form(times, eps, n, f0, t0)
    if f0 == 0:
        numeric = np.zeros_like(times)
    else:
        # trial stages may overshoot and overflow; the step is then rejected
        with np.errstate(over="ignore"):
            sol = solve_ivp(
                lambda _t, y: -n * eps * np.abs(y) ** (1.0 + 1.0 / delta),
                (t0, t1), [f0], method="DOP853", t_eval=times, rtol=1e-13, atol=0.0,
            )
        if not sol.success:
            raise RuntimeError(sol.message)
        numeric = sol.y[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(closed > 0, np.abs(numeric - closed) / closed, np.abs(numeric))
    bound_ok = None
    if t0 > 0 and f0 <= (3 * t0) ** (-delta):
        bound_ok = bool(np.all(closed <= (3 * times) ** (-delta) * (1 + 1e-12))
                        and np.all(numeric <= (3 * times) ** (-delta) * (1 + ODE_TOL)))
    elif t0 == 0:
        pos = times > 0
        bound_ok = bool(np.all(closed[pos] <= (3 * times[pos]) ** (-delta)))
    return OdeComparison(eps, n, f0, t0, t1, times, numeric, closed, float(rel.max()), bound_ok)


# ---------------------------------------------------------------------------
# fuzzing


def draw_pinched(rng: np.random.Generator, count: int, n: int):
    """Tuples with log-uniform trace and lambda_min / R drawn in [1/(10n), 1/n].

    Returns (tuples sorted ascending, pinching ratio used as eps).
    """
    R = 10.0 ** rng.uniform(-3.0, 3.0, count)
    eps = rng.uniform(1.0 / (10 * n), 1.0 / n, count)
    w = rng.dirichlet(np.ones(n - 1), count)
    low = eps * R
    rest = low[:, None] + (R * (1 - n * eps))[:, None] * w
    lam = np.sort(np.column_stack([low, rest]), axis=1)
    return lam, eps


@dataclass
class Violation:
    check: str
    n: int
    values: tuple
    value: float


@dataclass
class CheckSummary:
    samples: int = 0
    worst: float = 0.0
    violations: int = 0
    rechecked: int = 0

    def merge(self, other: "CheckSummary"):
        self.samples += other.samples
        self.worst = max(self.worst, other.worst)
        self.violations += other.violations
        self.rechecked += other.rechecked


@dataclass
class FuzzReport:
    samples: int
    seed: int
    n_values: tuple
    checks: dict = field(default_factory=dict)  # (check, n) -> CheckSummary
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def lines(self) -> list:
        out = []
        for (name, n), s in sorted(self.checks.items()):
            flag = "PASS" if s.violations == 0 else "FAIL"
            out.append(f"{flag} {name} n={n} samples={s.samples} worst={s.worst:.3e} "
                       f"violations={s.violations} exact_rechecks={s.rechecked}")
        for v in self.violations[:20]:
            out.append(f"  violation {v.check} n={v.n} value={v.value!r} tuple={v.values!r}")
        return out


def _fuzz_batch(n: int, count: int, seed_seq: np.random.SeedSequence, exact_recheck: bool):
    rng = np.random.default_rng(seed_seq)
    lam, eps = draw_pinched(rng, count, n)
    res = {}
    bad = []

    # triple-sum identity
    lhs = (n - 2) / 2.0 * j_functional(lam)
    gap = _triple_gap(lhs, triple_sum(lam), lam)
    s = CheckSummary(count, float(gap.max()))
    for idx in np.flatnonzero(gap > TRIPLE_SUM_TOL):
        s.violations += 1
        bad.append(Violation("triple_sum", n, tuple(lam[idx]), float(gap[idx])))
    res["triple_sum"] = s

    # pinched lower bound, near-violations confirmed in rational arithmetic
    margin, J = _margin_batch(lam, eps)
    scaled = -margin / (1 + np.abs(J))
    s = CheckSummary(count, float(max(scaled.max(), 0.0)))
    for idx in np.flatnonzero(scaled > MARGIN_TOL):
        if exact_recheck:
            s.rechecked += 1
            exact = exact_margin(lam[idx], eps[idx])
            if exact >= -MARGIN_TOL * (1 + abs(Fraction(float(J[idx])))):
                continue
        s.violations += 1
        bad.append(Violation("pinched_margin", n, tuple(lam[idx]), float(margin[idx])))
    res["pinched_margin"] = s

    # trace of the Ricci source term
    R = lam.sum(axis=1)
    q = (lam * lam).sum(axis=1)
    B = (n - 1) * q[:, None] + n * R[:, None] * lam - n * (n - 1) * lam * lam - (R * R)[:, None]
    tr = np.abs(B.sum(axis=1)) / ((1 + R * R) * (1 + q))
    s = CheckSummary(count, float(tr.max()))
    for idx in np.flatnonzero(tr > TRACE_TOL):
        s.violations += 1
        bad.append(Violation("source_trace", n, tuple(lam[idx]), float(tr[idx])))
    res["source_trace"] = s

    # cubic homogeneity and permutation invariance of the centered J
    Jc = j_centered(lam)
    worst = 0.0
    for c in (2.0, 10.0, 1.0 / 3.0):
        Js = j_centered(c * lam)
        rel = _triple_gap(Js, c**3 * Jc, c * lam)
        worst = max(worst, float(rel.max()))
        for idx in np.flatnonzero(rel > HOMOGENEITY_TOL):
            bad.append(Violation(f"homogeneity_c={c:g}", n, tuple(lam[idx]), float(rel[idx])))
    res["homogeneity"] = CheckSummary(count, worst, sum(v.check.startswith("homogeneity") for v in bad))

    perm = rng.permuted(lam, axis=1)
    mp, _ = _margin_batch(perm, eps)
    unsorted_J = j_functional(perm)
    rel = np.maximum(np.abs(mp - margin), np.abs(unsorted_J - j_functional(lam)))
    rel = rel / np.maximum(1.0, np.max(np.abs(lam), axis=1) ** 3)
    s = CheckSummary(count, float(rel.max()))
    for idx in np.flatnonzero(rel > HOMOGENEITY_TOL):
        s.violations += 1
        bad.append(Violation("permutation", n, tuple(lam[idx]), float(rel[idx])))
    res["permutation"] = s
    return res, bad


def fuzz_suite(samples: int, n_values: Iterable[int] = (3, 4, 5, 6), seed: int = 0, *,
               workers: int = 1, exact_recheck: bool = True, batch: int = FUZZ_BATCH) -> FuzzReport:
    """Property checks on ``samples`` pinched tuples per dimension.

    Batches are fixed-size and seeded by spawning from ``seed``, so the
    report does not depend on ``workers``.
    """
    n_values = tuple(int(n) for n in n_values)
    if samples < 1 or any(n < 3 for n in n_values):
        raise ValueError("need samples >= 1 and n >= 3")
    report = FuzzReport(samples, seed, n_values)
    jobs = []
    root = np.random.SeedSequence(seed)
    for n, child in zip(n_values, root.spawn(len(n_values))):
        sizes = [batch] * (samples // batch) + ([samples % batch] if samples % batch else [])
        for size, ss in zip(sizes, child.spawn(len(sizes))):
            jobs.append((n, size, ss))

    def work(job):
        n, size, ss = job
        return n, _fuzz_batch(n, size, ss, exact_recheck)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    for n, (res, bad) in results:
        for name, s in res.items():
            report.checks.setdefault((name, n), CheckSummary()).merge(s)
        report.violations.extend(bad)
    return report
