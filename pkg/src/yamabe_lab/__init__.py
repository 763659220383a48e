"""Numerical laboratory for the Yamabe flow on locally conformally flat manifolds."""

from .conformal import (
    UNDEFINED,
    Chart,
    ConformalField,
    CurvatureState,
    Profile,
    build_field,
    christoffel,
    is_undefined,
    ricci_eigenvalues,
    scalar_curvature,
)

__version__ = "0.1.0"

__all__ = [
    "UNDEFINED",
    "Chart",
    "ConformalField",
    "CurvatureState",
    "Profile",
    "build_field",
    "christoffel",
    "is_undefined",
    "ricci_eigenvalues",
    "scalar_curvature",
]
