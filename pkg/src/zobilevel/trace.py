"""Per-iteration convergence records and the random output index."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream


@dataclass(frozen=True)
class TraceRecord:
    """State after ``k`` outer iterations.

    ``surrogate_norm`` is the norm of the estimate that produced ``x_k`` and
    is NaN at ``k = 0``. ``hypergrad_norm`` is ``None`` when not logged.
    """

    k: int
    f_evals: int
    g_evals: int
    hypergrad_norm: float | None
    surrogate_norm: float


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)
    chosen_index: int | None = None
    x_final: np.ndarray | None = None
    x_output: np.ndarray | None = None
    y_final: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def f_evals(self) -> np.ndarray:
        return np.array([r.f_evals for r in self.records])

    @property
    def g_evals(self) -> np.ndarray:
        return np.array([r.g_evals for r in self.records])

    @property
    def hypergrad_norms(self) -> np.ndarray:
        """Logged norms with NaN where the norm was not computed."""
        return np.array([math.nan if r.hypergrad_norm is None else r.hypergrad_norm for r in self.records])


def sample_output_index(alphas, stream: RngStream) -> int | None:
    """Draw ``R`` with ``P(R = k) = alpha_k / sum(alpha)``; ``None`` for an empty run."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        return None
    p = alphas / alphas.sum()
    return int(stream.rng.choice(alphas.size, p=p))
