"""Shared types: random streams, query counters, smoothing radii and problem constants."""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np


class ZOBilevelError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(ZOBilevelError, ValueError):
    """A numeric parameter is outside its admissible range."""


class InvalidDimensionError(InvalidParameterError):
    """A requested dimension is smaller than one."""


class ConfigError(ZOBilevelError, ValueError):
    """An experiment or solver configuration is inconsistent."""


class NumericError(ZOBilevelError, ArithmeticError):
    """A non-finite value appeared in an oracle output or an iterate.

    Attributes
    ----------
    index : int or None
        Sample or iteration index at which the value was first seen.
    tag : str
        Short label of the computation that produced it.
    """

    def __init__(self, message, *, index=None, tag=""):
        super().__init__(message)
        self.index = index
        self.tag = tag


class DivergenceError(NumericError):
    """An iterate norm crossed the divergence guard.

    The partial convergence trace, when one exists, is attached as ``trace``.
    """

    def __init__(self, message, *, index=None, tag="", trace=None):
        super().__init__(message, index=index, tag=tag)
        self.trace = trace


class UnsupportedOperationError(ZOBilevelError, NotImplementedError):
    """The problem does not provide the requested analytic quantity."""


# iterates beyond this multiple of the initial scale abort the loop
DIVERGENCE_FACTOR = 1e6


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """Reproducible random stream identified by a root seed and a path.

    Two streams with the same ``(root_seed, path)`` produce the same draws.
    Substreams are derived from the identity, never from the current state,
    so derivation order does not matter.

    Parameters
    ----------
    root_seed : int
        Non-negative 64-bit seed.
    path : tuple of (str, int)
        Sequence of ``(label, index)`` pairs naming the substream.
    """

    def __init__(self, root_seed: int, path: tuple = ()):
        root_seed = int(root_seed)
        if not 0 <= root_seed < 2**64:
            raise InvalidParameterError(f"root_seed must fit in 64 bits, got {root_seed}")
        self.root_seed = root_seed
        self.path = tuple((str(label), int(index)) for label, index in path)
        self._rng = None

    def __repr__(self):
        return f"RngStream(root_seed={self.root_seed}, path={self.path!r})"

    def __eq__(self, other):
        if not isinstance(other, RngStream):
            return NotImplemented
        return (self.root_seed, self.path) == (other.root_seed, other.path)

    def __hash__(self):
        return hash((self.root_seed, self.path))

    def derive(self, label: str, index: int = 0) -> "RngStream":
        return RngStream(self.root_seed, self.path + ((label, index),))

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            key = []
            for label, index in self.path:
                key.extend((_label_key(label), index))
            seq = np.random.SeedSequence(self.root_seed, spawn_key=tuple(key))
            self._rng = np.random.Generator(np.random.Philox(seq))
        return self._rng

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws of the given shape."""
        return self.rng.standard_normal(shape)

    def integers(self, high: int, size) -> np.ndarray:
        return self.rng.integers(0, high, size=size)

    def subsets(self, population: int, k: int, count: int) -> np.ndarray:
        """``count`` independent uniformly random ``k``-subsets of ``range(population)``."""
        keys = self.rng.random((count, population))
        return np.argsort(keys, axis=1, kind="stable")[:, :k]


def derive_stream(root: RngStream, label: str, index: int) -> RngStream:
    return root.derive(label, index)


def sample_gaussian(stream: RngStream, dim: int) -> np.ndarray:
    """Draw ``dim`` i.i.d. standard normal entries, advancing ``stream``."""
    if int(dim) < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    return stream.normal(int(dim))


@dataclass(frozen=True)
class QueryCounter:
    """Snapshot of evaluation counts of the upper (F) and lower (G) oracles."""

    f_evals: int = 0
    g_evals: int = 0

    def __sub__(self, other: "QueryCounter") -> "QueryCounter":
        return QueryCounter(self.f_evals - other.f_evals, self.g_evals - other.g_evals)

    @property
    def total(self) -> int:
        return self.f_evals + self.g_evals


class EvalTally:
    """Thread-safe monotone evaluation count owned by one oracle."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        with self._lock:
            self._count += int(k)

    @property
    def count(self) -> int:
        return self._count


@dataclass(frozen=True)
class SmoothingParams:
    """Gaussian smoothing radii.

    ``eta1``/``mu1`` act on the upper function in the x/y blocks and
    ``eta2``/``mu2`` on the lower function. ``eta2 = 0`` leaves x unperturbed
    in lower-level evaluations.
    """

    eta1: float
    mu1: float
    eta2: float
    mu2: float

    def __post_init__(self):
        for name in ("eta1", "mu1", "eta2", "mu2"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite, got {value}")
        if self.eta1 <= 0 or self.mu1 <= 0 or self.mu2 <= 0:
            raise InvalidParameterError("eta1, mu1 and mu2 must be positive")
        if self.eta2 < 0:
            raise InvalidParameterError("eta2 must be non-negative")

    @classmethod
    def uniform(cls, eta: float, mu: float | None = None) -> "SmoothingParams":
        """Single radius ``eta`` for x and ``mu`` for y at both levels."""
        mu = eta if mu is None else mu
        return cls(eta1=eta, mu1=mu, eta2=eta, mu2=mu)


@dataclass(frozen=True)
class ProblemConstants:
    """Regularity constants of a bilevel problem, where known.

    Attributes
    ----------
    l0f, l1f : float
        Lipschitz constants of f and of its gradient.
    l1g, l2g : float
        Lipschitz constants of the gradient and Hessian of g.
    lam_g : float
        Strong convexity modulus of g in y.
    sig1f2, sig1g2, sig2g2 : float
        Variance bounds of stochastic gradients of F, G and Hessians of G.
    l1psi : float
        Lipschitz constant of the hypergradient.
    """

    l0f: float = 1.0
    l1f: float = 1.0
    l1g: float = 1.0
    l2g: float = 0.0
    lam_g: float = 1.0
    sig1f2: float = 0.0
    sig1g2: float = 0.0
    sig2g2: float = 0.0
    l1psi: float = 1.0

    def __post_init__(self):
        for name in ("l0f", "l1f", "l1g", "l2g", "sig1f2", "sig1g2", "sig2g2"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if self.lam_g <= 0 or self.l1psi <= 0:
            raise InvalidParameterError("lam_g and l1psi must be positive")
        if self.lam_g > self.l1g * (1 + 1e-12):
            raise InvalidParameterError("lam_g cannot exceed l1g")


@dataclass(frozen=True)
class Point:
    """Pair of upper variable ``x`` and lower variable ``y``."""

    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size < 1 or y.size < 1:
            raise InvalidDimensionError("x and y need at least one entry")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NumericError("point has non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def check_vector(v, size: int | None = None, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite 1-d float array, optionally of a fixed size."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if size is not None and arr.size != size:
        raise InvalidDimensionError(f"{name} must have length {size}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} has non-finite entries")
    return arr


def check_diverged(v: np.ndarray, limit_sq: float, *, index: int, tag: str) -> None:
    sq = float(np.dot(v, v))
    if not np.isfinite(sq) or sq > limit_sq:
        raise DivergenceError(f"{tag}: iterate norm exceeded guard at step {index}", index=index, tag=tag)


def divergence_limit_sq(v0: np.ndarray) -> float:
    return (DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(v0)))) ** 2
