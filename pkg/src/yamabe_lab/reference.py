"""Closed-form homothetic solutions and soliton-equation probes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformal import Chart, ConformalField, christoffel, jet, ricci_eigenvalues
from .errors import PastBlowUp


def homothety(R0: float, n: int, t: float) -> tuple[float, float]:
    """Einstein metric moving by g(t) = (1 - R0 t) g0; returns (scale, R(t))."""
    if R0 == 0:
        raise ValueError("R0 must be nonzero")
    if n < 3:
        raise ValueError("n must be at least 3")
    scale = 1.0 - R0 * t
    if R0 > 0 and not scale > 0:
        raise PastBlowUp(f"t = {t!r} is not before the blow-up time {1.0 / R0!r}")
    return scale, R0 / scale


def homothety_blowup_time(R0: float) -> float:
    if not R0 > 0:
        raise ValueError("only shrinking homotheties blow up")
    return 1.0 / R0


@dataclass
class SolitonProbe:
    X: np.ndarray  # chart component along the symmetry direction, per node
    t: float
    residual_soliton: float
    residual_gradient_eq: float
    soliton_per_node: np.ndarray
    gradient_per_node: np.ndarray


def _covariant_derivative(f: ConformalField, X, j) -> np.ndarray:
    """nabla_k X_i (lowered) at every node, shape (N, n, n).

    X = X(r) x/r (radial charts) or X(x1) e_1 (PeriodicBox); each node sits on
    the first axis so partial_k X^i is diagonal: (X', X/r, ..., X/r) or (X', 0, ...).
    """
    n = f.n
    dX = np.gradient(X, f.h, edge_order=2)
    if f.chart is Chart.PERIODIC:
        M = X.shape[0] - 1
        dX[:M] = (np.roll(X[:M], -1) - np.roll(X[:M], 1)) / (2 * f.h)
        dX[M] = dX[0]
        tangential = np.zeros_like(X)
    else:
        tangential = np.empty_like(X)
        tangential[1:] = X[1:] / f.coords[1:]
        tangential[0] = dX[0]
    out = np.empty((X.shape[0], n, n))
    vec = np.zeros(n)
    for node in range(X.shape[0]):
        G = christoffel(f, node, j)
        vec[0] = X[node]
        nabla_up = np.diag([dX[node]] + [tangential[node]] * (n - 1))
        # (nabla X)^i_k = d_k X^i + Gamma^i_{k l} X^l
        nabla_up = nabla_up + np.einsum("ikl,l->ki", G, vec)
        out[node] = np.exp(2.0 * j.phi[node]) * nabla_up
    return out


def soliton_residual(f: ConformalField, X, t: float) -> SolitonProbe:
    """g-norms of nabla_k X_i - (R + 1/t) g_ik and nabla_i R + R_ij X^j / (n-1).

    ``t`` is the soliton clock and is never inferred from the snapshot.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    X = np.asarray(X, dtype=float)
    if X.shape != f.phi.shape:
        raise ValueError("X must have one value per node")
    n = f.n
    j = jet(f)
    cs = ricci_eigenvalues(f)
    nabla = _covariant_derivative(f, X, j)
    c = cs.R + 1.0 / t
    g = np.exp(2.0 * j.phi)[:, None, None] * np.eye(n)
    T = nabla - c[:, None, None] * g
    sol = np.sqrt(np.einsum("kij,kij->k", T, T)) * j.E  # g^{..} g^{..} = E^2 on each factor pair
    dR = np.gradient(cs.R, f.h, edge_order=2) if f.chart is not Chart.PERIODIC else _periodic_d1(cs.R, f.h)
    if f.chart is not Chart.PERIODIC:
        dR[0] = 0.0
    grad = np.abs(dR + np.exp(2.0 * j.phi) * cs.mu_rad * X / (n - 1)) * np.exp(-j.phi)
    mask = f.interior()
    return SolitonProbe(X, t, float(np.max(sol[mask])), float(np.max(grad[mask])), sol, grad)


def _periodic_d1(u, h):
    M = u.shape[0] - 1
    d = np.empty_like(u)
    d[:M] = (np.roll(u[:M], -1) - np.roll(u[:M], 1)) / (2 * h)
    d[M] = d[0]
    return d


def dilation_field(f: ConformalField, t: float) -> np.ndarray:
    """X = x / t in chart components (radial charts)."""
    return f.coords / t


def soliton_zero_field_residual(f: ConformalField, t: float) -> np.ndarray:
    """|R + 1/t| sqrt(n) per node: the soliton residual of X = 0."""
    return np.abs(ricci_eigenvalues(f).R + 1.0 / t) * math.sqrt(f.n)
