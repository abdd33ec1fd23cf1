"""Numerical laboratory for the quantum ax+b group at desk scale."""

from .deformation import (
    Deformation,
    QexpPoint,
    QexpProfile,
    QuadratureConfig,
    get_profile,
    make_deformation,
    qexp,
    theta_fn,
    theta_fn_shifted,
)

__version__ = "0.1.0"

__all__ = [
    "Deformation",
    "QexpPoint",
    "QexpProfile",
    "QuadratureConfig",
    "get_profile",
    "make_deformation",
    "qexp",
    "theta_fn",
    "theta_fn_shifted",
    "__version__",
]
