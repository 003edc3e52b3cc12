"""Numerical experiments on stratified (Carnot) groups.

Group law and homogeneous norm, left-invariant differential operators on
grids, heat-semigroup cut-offs, space-time test functions, and semilinear
heat/wave solvers with lifespan measurement.
"""

__version__ = "0.1.0"

from .stratified_group import (  # noqa: E402
    StratifiedAlgebra,
    abelian,
    cd_parameters,
    dilate,
    engel,
    heisenberg,
    hom_norm,
    inverse,
    multiply,
    preset,
)

__all__ = [
    "__version__",
    "StratifiedAlgebra",
    "abelian",
    "cd_parameters",
    "dilate",
    "engel",
    "heisenberg",
    "hom_norm",
    "inverse",
    "multiply",
    "preset",
]
