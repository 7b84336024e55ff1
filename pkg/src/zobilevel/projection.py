"""Closed-form prox steps onto simple convex sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidParameterError


@dataclass(frozen=True)
class ProjectionSpec:
    """Feasible set of the upper variable.

    ``kind`` is ``"all"`` (no constraint), ``"box"`` (``lower <= x <= upper``)
    or ``"ball"`` (``||x - center|| <= radius``).
    """

    kind: str = "all"
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None
    center: np.ndarray | float | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("all", "box", "ball"):
            raise InvalidParameterError(f"unknown projection kind {self.kind!r}")
        if self.kind == "box":
            lo = np.asarray(-np.inf if self.lower is None else self.lower, dtype=float)
            hi = np.asarray(np.inf if self.upper is None else self.upper, dtype=float)
            if np.any(lo > hi):
                raise InvalidParameterError("box lower bound exceeds upper bound")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise InvalidParameterError("ball radius must be positive")
            center = np.asarray(0.0 if self.center is None else self.center, dtype=float)
            object.__setattr__(self, "center", center)

    @classmethod
    def box(cls, lower, upper):
        return cls(kind="box", lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius):
        return cls(kind="ball", center=center, radius=radius)

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "all":
            return x
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        d = x - self.center
        norm = float(np.linalg.norm(d))
        if norm <= self.radius:
            return x
        return self.center + d * (self.radius / norm)


def prox_step(x: np.ndarray, grad: np.ndarray, alpha: float, projection: ProjectionSpec | None = None) -> np.ndarray:
    """``argmin_{x' in X} <grad, x' - x> + ||x' - x||^2 / (2 alpha)``."""
    step = x - alpha * grad
    if projection is None:
        return step
    return projection.project(step)
