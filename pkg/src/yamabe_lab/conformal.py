"""Locally conformally flat metrics g = exp(2 phi) * flat on symmetric charts.

A field is a log-conformal factor sampled on a one-dimensional grid:

* ``RadialRn``: phi(r) on [0, r_max] in R^n, even at the origin.
* ``StereographicSphere``: phi(r) on [0, 1], the northern hemisphere of a
  metric on S^n seen through stereographic projection.  The outer boundary
  r = 1 is the equator; data are taken symmetric under inversion r -> 1/r.
* ``PeriodicBox``: phi(x1) on a torus of period L, constant in the other
  n - 1 directions.

In all three cases the Ricci tensor has one eigenvalue along the symmetry
direction (``mu_rad``) and one of multiplicity n - 1 (``mu_tan``), both
available in closed form from phi, phi' and phi''.  The Weyl tensor vanishes
identically and is never formed.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import _stencils
from .errors import InvalidField

UNDEFINED = math.nan

# sup/inf over a field skip this many outermost nodes
FLOW_BOUNDARY_SKIP = 2
MONITOR_BOUNDARY_SKIP = 4


def is_undefined(x) -> bool:
    return x is None or (isinstance(x, float) and math.isnan(x))


class Chart(str, enum.Enum):
    RADIAL = "RadialRn"
    SPHERE = "StereographicSphere"
    PERIODIC = "PeriodicBox"

    @classmethod
    def parse(cls, value) -> "Chart":
        if isinstance(value, Chart):
            return value
        for c in cls:
            if value in (c.value, c.name, c.value.lower(), c.name.lower()):
                return c
        raise InvalidField(f"unknown chart {value!r}")


@dataclass(frozen=True)
class Profile:
    kind: str
    params: tuple = ()

    KINDS = ("flat", "sphere_bubble", "hyperbolic_ball", "gaussian_bump", "table")

    @classmethod
    def parse(cls, spec) -> "Profile":
        """Accepts a Profile, or text such as ``"gaussian_bump(0.1, 1.0)"``."""
        if isinstance(spec, Profile):
            return spec
        m = re.fullmatch(r"\s*(\w+)\s*(?:\((.*)\))?\s*", str(spec))
        if not m or m.group(1) not in cls.KINDS:
            raise InvalidField(f"unknown profile {spec!r}")
        kind, args = m.group(1), m.group(2)
        params = tuple(float(a) for a in args.split(",") if a.strip()) if args else ()
        if kind == "gaussian_bump" and len(params) != 2:
            raise InvalidField("gaussian_bump needs (amplitude, width)")
        if kind == "gaussian_bump" and params[1] <= 0:
            raise InvalidField("gaussian_bump width must be positive")
        return cls(kind, params)

    def __str__(self):
        if self.kind == "table":
            return "table"
        if self.params:
            return f"{self.kind}({', '.join(repr(p) for p in self.params)})"
        return self.kind


def _bump(chart: Chart, x, amplitude, width, period=None):
    x = np.asarray(x, dtype=float)
    if chart is Chart.SPHERE:
        # chordal distance^2 to the north/south pole; symmetric under r -> 1/r
        dn2 = 4.0 * x**2 / (1.0 + x**2)
        ds2 = 4.0 / (1.0 + x**2)
        return amplitude * (np.exp(-dn2 / width**2) + np.exp(-ds2 / width**2))
    if chart is Chart.PERIODIC:
        k = (period / (2.0 * np.pi * width)) ** 2
        return amplitude * np.exp(2.0 * k * (np.cos(2.0 * np.pi * (x - period / 2) / period) - 1.0))
    return amplitude * np.exp(-(x**2) / width**2)


def _profile_values(profile: Profile, chart: Chart, x, period=None):
    x = np.asarray(x, dtype=float)
    if profile.kind == "flat":
        return np.zeros_like(x)
    if profile.kind == "sphere_bubble":
        return math.log(2.0) - np.log1p(x**2)
    if profile.kind == "hyperbolic_ball":
        return math.log(2.0) - np.log1p(-(x**2))
    if profile.kind == "gaussian_bump":
        return _bump(chart, x, profile.params[0], profile.params[1], period)
    raise InvalidField(f"profile {profile.kind} has no closed form")


@dataclass(frozen=True)
class ConformalField:
    """Log-conformal factor on a symmetric flat chart; metric exp(2 phi) delta."""

    n: int
    chart: Chart
    h: float
    extent: float  # r_max for radial charts, period L for PeriodicBox
    phi: np.ndarray
    t: float = 0.0
    outer_bc: str = "dirichlet"
    ghost_offset: float = 0.0

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        if not np.all(np.isfinite(phi)):
            raise InvalidField("phi must be finite at every node")

    @property
    def N(self) -> int:
        return self.phi.shape[0] - (1 if self.chart is Chart.PERIODIC else 0)

    @property
    def geom(self) -> int:
        return _stencils.GEOM_PLANAR if self.chart is Chart.PERIODIC else _stencils.GEOM_RADIAL

    @property
    def outer_code(self) -> int:
        return {
            "dirichlet": _stencils.OUTER_ONESIDED,
            "neumann": _stencils.OUTER_GHOST,
            "periodic": _stencils.OUTER_PERIODIC,
        }[self.outer_bc]

    @property
    def coords(self) -> np.ndarray:
        return np.arange(self.phi.shape[0]) * self.h

    @property
    def inv_r(self) -> np.ndarray:
        r = self.coords
        out = np.zeros_like(r)
        if self.geom == _stencils.GEOM_RADIAL:
            out[1:] = 1.0 / r[1:]
        return out

    def interior(self, skip: int = MONITOR_BOUNDARY_SKIP) -> np.ndarray:
        """Mask of nodes kept in sup/inf reductions."""
        mask = np.ones(self.phi.shape[0], dtype=bool)
        if self.chart is Chart.PERIODIC:
            mask[-1] = False  # duplicate of node 0
        elif skip:
            mask[-skip:] = False
        return mask

    def with_phi(self, phi, t=None) -> "ConformalField":
        return ConformalField(
            self.n, self.chart, self.h, self.extent, phi,
            self.t if t is None else t, self.outer_bc, self.ghost_offset,
        )

    def shifted(self, c: float) -> "ConformalField":
        """Same chart, phi + c (the metric scaled by exp(2c))."""
        return self.with_phi(self.phi + c)


def build_field(chart, n: int, N: int, *, h=None, r_max=None, L=None,
                profile="flat", perturbation=None, outer_bc=None, t=0.0) -> ConformalField:
    """Sample a profile on a chart.

    ``perturbation`` is an optional ``(amplitude, width)`` pair added on top
    of the profile (a Gaussian bump; on the sphere chart, a pair of bumps at
    both poles so the data stay inversion symmetric).
    """
    chart = Chart.parse(chart)
    profile = Profile.parse(profile) if not isinstance(profile, (list, tuple, np.ndarray)) else profile
    if n < 3:
        raise InvalidField("dimension must be at least 3")
    if N < 16:
        raise InvalidField("need at least 16 nodes")

    if chart is Chart.PERIODIC:
        if L is None and h is None:
            raise InvalidField("PeriodicBox needs L or h")
        L = float(L) if L is not None else float(h) * N
        h = L / N
        outer_bc = "periodic"
        extent = L
        count = N + 1
    else:
        if chart is Chart.SPHERE:
            r_max = 1.0
            h = 1.0 / (N - 1)
            outer_bc = outer_bc or "neumann"
        else:
            if h is not None:
                r_max = float(h) * (N - 1)
            elif r_max is not None:
                h = float(r_max) / (N - 1)
            else:
                raise InvalidField("RadialRn needs r_max or h")
            outer_bc = outer_bc or "dirichlet"
        extent = float(r_max)
        count = N
    if not (h > 0 and math.isfinite(h)):
        raise InvalidField("grid spacing must be positive")
    if outer_bc not in ("dirichlet", "neumann", "periodic"):
        raise InvalidField(f"unknown outer boundary condition {outer_bc!r}")

    x = np.arange(count) * h
    ghost_x = extent + h
    if isinstance(profile, Profile) and profile.kind == "hyperbolic_ball":
        if chart is Chart.PERIODIC or extent >= 1.0:
            raise InvalidField("hyperbolic_ball needs a radial chart with r_max < 1")
        if outer_bc == "neumann" and ghost_x >= 1.0:
            raise InvalidField("hyperbolic_ball ghost node falls outside the unit ball")

    if isinstance(profile, Profile) and profile.kind != "table":
        phi = _profile_values(profile, chart, x, period=extent)
        ghost_val = _profile_values(profile, chart, ghost_x, period=extent)
    else:
        values = profile.params if isinstance(profile, Profile) else profile
        phi = np.asarray(values, dtype=float).copy()
        if chart is Chart.PERIODIC and phi.shape[0] == N:
            phi = np.append(phi, phi[0])
        if phi.shape[0] != count:
            raise InvalidField(f"table has {phi.shape[0]} values, grid has {count}")
        # cubic extrapolation from the last four nodes
        ghost_val = 4 * phi[-1] - 6 * phi[-2] + 4 * phi[-3] - phi[-4]

    if perturbation is not None:
        amp, width = perturbation
        if width <= 0:
            raise InvalidField("perturbation width must be positive")
        phi = phi + _bump(chart, x, amp, width, extent)
        ghost_val = ghost_val + float(_bump(chart, ghost_x, amp, width, extent))

    if chart is Chart.PERIODIC:
        phi[-1] = phi[0]
    ghost_offset = float(ghost_val - phi[-2]) if outer_bc == "neumann" else 0.0
    return ConformalField(n, chart, float(h), extent, phi, float(t), outer_bc, ghost_offset)


# ---------------------------------------------------------------------------
# grid calculus on derived quantities


@dataclass
class Jet:
    """phi with its first/second chart derivatives and phi'/r at every node."""

    phi: np.ndarray
    E: np.ndarray  # exp(-2 phi)
    d1: np.ndarray
    d2: np.ndarray
    q: np.ndarray


def jet(f: ConformalField) -> Jet:
    phi = np.ascontiguousarray(f.phi)
    d1, d2, q = (np.empty_like(phi) for _ in range(3))
    _stencils.derivatives(phi, f.h, f.inv_r, f.geom, f.outer_code, f.ghost_offset, d1, d2, q)
    return Jet(phi, np.exp(-2.0 * phi), d1, d2, q)


def chart_derivatives(f: ConformalField, u):
    """(u', u'', u'/r) for an even derived quantity (one-sided at the outer edge)."""
    u = np.ascontiguousarray(u, dtype=float)
    d1, d2, q = (np.empty_like(u) for _ in range(3))
    outer = _stencils.OUTER_PERIODIC if f.chart is Chart.PERIODIC else _stencils.OUTER_ONESIDED
    _stencils.derivatives(u, f.h, f.inv_r, f.geom, outer, 0.0, d1, d2, q)
    return d1, d2, q


def laplace_beltrami(f: ConformalField, u, j: Jet | None = None):
    """Delta_g u = exp(-2 phi) (Delta_flat u + (n - 2) grad phi . grad u)."""
    j = j or jet(f)
    d1, d2, q = chart_derivatives(f, u)
    return j.E * (d2 + (f.n - 1) * q + (f.n - 2) * j.d1 * d1)


def grad_norm_sq(f: ConformalField, u, j: Jet | None = None):
    """|grad u|_g^2 for a symmetric function u."""
    j = j or jet(f)
    d1, _, _ = chart_derivatives(f, u)
    return j.E * d1 * d1


def gap_warp(f: ConformalField, j: Jet | None = None):
    """(mu_rad - mu_tan) * H^2 per node.

    H = rho_s / rho is the logarithmic derivative of the warping function of
    g = ds^2 + rho(s)^2 (fibre), rho = r exp(phi) (radial) or exp(phi)
    (planar).  In the radial case H ~ 1/r, so the product is formed from
    (mu_rad - mu_tan) / r^2 = (n-2) E (q^2 - q'/r), q = phi'/r, which keeps
    it O(h^2)-accurate at the origin.
    """
    j = j or jet(f)
    n = f.n
    if f.geom == _stencils.GEOM_PLANAR:
        return (n - 2) * j.E * (-j.d2 + j.d1**2) * j.E * j.d1**2
    _, _, qq = chart_derivatives(f, j.q)
    gap_over_r2 = (n - 2) * j.E * (j.q**2 - qq)
    return j.E * (1.0 + f.coords * j.d1) ** 2 * gap_over_r2


# ---------------------------------------------------------------------------
# curvature


@dataclass
class CurvatureState:
    n: int
    R: np.ndarray
    mu_rad: np.ndarray
    mu_tan: np.ndarray
    ric_norm_sq: np.ndarray
    tr_ric_cubed: np.ndarray
    lambda_min: np.ndarray
    lambda_max: np.ndarray
    eps_pt: np.ndarray = field(repr=False)

    @property
    def traceless_sq(self):
        """|Rc|^2 - R^2/n, formed from the eigenvalue gap (no cancellation)."""
        n = self.n
        return (n - 1) / n * (self.mu_rad - self.mu_tan) ** 2


def scalar_curvature(f: ConformalField) -> np.ndarray:
    """Scalar curvature per node from the conformal transformation law."""
    j = jet(f)
    m = f.n - 1
    return -j.E * (2 * m * (j.d2 + m * j.q) + m * (f.n - 2) * j.d1**2)


def _eigen_from_jet(n, j: Jet):
    m = n - 1
    mu_rad = -m * j.E * (j.d2 + j.q)
    mu_tan = j.E * (-j.d2 - (2 * n - 3) * j.q - (n - 2) * j.d1**2)
    return mu_rad, mu_tan


def ricci_eigenvalues(f: ConformalField) -> CurvatureState:
    j = jet(f)
    n = f.n
    mu_rad, mu_tan = _eigen_from_jet(n, j)
    R = mu_rad + (n - 1) * mu_tan
    lam_min = np.minimum(mu_rad, mu_tan)
    lam_max = np.maximum(mu_rad, mu_tan)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps_pt = np.where(R > 0, lam_min / R, UNDEFINED)
    return CurvatureState(
        n=n,
        R=R,
        mu_rad=mu_rad,
        mu_tan=mu_tan,
        ric_norm_sq=mu_rad**2 + (n - 1) * mu_tan**2,
        tr_ric_cubed=mu_rad**3 + (n - 1) * mu_tan**3,
        lambda_min=lam_min,
        lambda_max=lam_max,
        eps_pt=eps_pt,
    )


def christoffel(f: ConformalField, node: int, j: Jet | None = None) -> np.ndarray:
    """Chart Christoffel symbols G[k, i, j] = Gamma^k_ij at ``node``.

    The node is placed on the first coordinate axis, so grad phi = (phi', 0, ...).
    """
    if node < 0 or node >= f.phi.shape[0]:
        raise IndexError(node)
    j = j or jet(f)
    n = f.n
    dphi = np.zeros(n)
    dphi[0] = j.d1[node]
    I = np.eye(n)
    return (
        np.einsum("ik,j->kij", I, dphi)
        + np.einsum("jk,i->kij", I, dphi)
        - np.einsum("ij,k->kij", I, dphi)
    )
