from .base import BilevelProblem, true_hypergrad
from .hyperrep import HyperRepBilevel, HyperRepSpec, make_hyper_rep
from .quadratic import QuadraticBilevel, QuadraticBilevelSpec, make_quadratic

__all__ = [
    "BilevelProblem",
    "HyperRepBilevel",
    "HyperRepSpec",
    "QuadraticBilevel",
    "QuadraticBilevelSpec",
    "make_hyper_rep",
    "make_quadratic",
    "true_hypergrad",
]
