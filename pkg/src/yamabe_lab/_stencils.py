"""Compiled finite-difference kernels shared by the curvature code and the stepper.

Every array here lives on a one-dimensional grid that represents a
cohomogeneity-one conformally flat metric: either a radial profile phi(r) on
[0, r_max] or a planar profile phi(x) on a periodic interval.

Origin handling (radial geometry) is chosen so that the truncation error of
u'/r has the same smooth expansion at r = 0 as in the interior.  A plain
L'Hopital substitution u'/r -> u''(0) leaves an O(h^2) jump at the origin,
which turns into O(1) errors once derived quantities are differentiated again.
"""

from numba import njit

GEOM_RADIAL = 0
GEOM_PLANAR = 1

OUTER_ONESIDED = 0
OUTER_GHOST = 1
OUTER_PERIODIC = 2


@njit(cache=True)
def derivatives(u, h, inv_r, geom, outer, ghost, d1, d2, q):
    """First/second derivative of ``u`` and u'/r (zero for planar geometry)."""
    N = u.shape[0]
    ih2 = 1.0 / (h * h)
    i2h = 0.5 / h
    if geom == GEOM_PLANAR:
        M = N - 1
        for j in range(M):
            left = u[j - 1] if j > 0 else u[M - 1]
            right = u[j + 1]
            d1[j] = (right - left) * i2h
            d2[j] = (right - 2.0 * u[j] + left) * ih2
            q[j] = 0.0
        d1[M] = d1[0]
        d2[M] = d2[0]
        q[M] = 0.0
        return
    # even symmetry at the origin
    d1[0] = 0.0
    d2[0] = 2.0 * (u[1] - u[0]) * ih2
    q[0] = (u[2] + 8.0 * u[1] - 9.0 * u[0]) * ih2 / 6.0
    for j in range(1, N - 1):
        d1[j] = (u[j + 1] - u[j - 1]) * i2h
        d2[j] = (u[j + 1] - 2.0 * u[j] + u[j - 1]) * ih2
        q[j] = d1[j] * inv_r[j]
    j = N - 1
    if outer == OUTER_GHOST:
        right = u[j - 1] + ghost
        d1[j] = (right - u[j - 1]) * i2h
        d2[j] = (right - 2.0 * u[j] + u[j - 1]) * ih2
    else:
        d1[j] = (3.0 * u[j] - 4.0 * u[j - 1] + u[j - 2]) * i2h
        d2[j] = (2.0 * u[j] - 5.0 * u[j - 1] + 4.0 * u[j - 2] - u[j - 3]) * ih2
    q[j] = d1[j] * inv_r[j]


@njit(cache=True, fastmath=True)
def scalar_curvature_into(phi, E, n, h, inv_r, geom, outer, ghost, out):
    """R = -E (2(n-1)(phi'' + (n-1) phi'/r) + (n-1)(n-2) phi'^2), E = exp(-2 phi).

    Fused version of ``derivatives`` + the conformal law; the stepper calls
    this twice per step so it avoids temporaries.
    """
    N = phi.shape[0]
    m = n - 1.0
    c1 = 2.0 * m
    c2 = m * (n - 2.0)
    ih2 = 1.0 / (h * h)
    i2h = 0.5 / h
    if geom == GEOM_PLANAR:
        M = N - 1
        left = phi[M - 1]
        d1 = (phi[1] - left) * i2h
        d2 = (phi[1] - 2.0 * phi[0] + left) * ih2
        out[0] = -E[0] * (c1 * d2 + c2 * d1 * d1)
        for j in range(1, M):
            d1 = (phi[j + 1] - phi[j - 1]) * i2h
            d2 = (phi[j + 1] - 2.0 * phi[j] + phi[j - 1]) * ih2
            out[j] = -E[j] * (c1 * d2 + c2 * d1 * d1)
        out[M] = out[0]
        return
    d2 = 2.0 * (phi[1] - phi[0]) * ih2
    q = (phi[2] + 8.0 * phi[1] - 9.0 * phi[0]) * ih2 / 6.0
    out[0] = -E[0] * c1 * (d2 + m * q)
    for j in range(1, N - 1):
        d1 = (phi[j + 1] - phi[j - 1]) * i2h
        d2 = (phi[j + 1] - 2.0 * phi[j] + phi[j - 1]) * ih2
        out[j] = -E[j] * (c1 * (d2 + m * d1 * inv_r[j]) + c2 * d1 * d1)
    j = N - 1
    if outer == OUTER_GHOST:
        right = phi[j - 1] + ghost
        d1 = (right - phi[j - 1]) * i2h
        d2 = (right - 2.0 * phi[j] + phi[j - 1]) * ih2
    else:
        d1 = (3.0 * phi[j] - 4.0 * phi[j - 1] + phi[j - 2]) * i2h
        d2 = (2.0 * phi[j] - 5.0 * phi[j - 1] + 4.0 * phi[j - 2] - phi[j - 3]) * ih2
    out[j] = -E[j] * (c1 * (d2 + m * d1 * inv_r[j]) + c2 * d1 * d1)
