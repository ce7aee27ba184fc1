"""Core types: states, particle populations, model oracles, and deterministic RNG streams.

Conventions used throughout the package:

* a *point* is a 1-d float64 array of length ``d``;
* model callables (potential values/gradients, drifts, diffusion matrices)
  accept either a single point of shape ``(d,)`` or a batch of shape
  ``(n, d)`` and return correspondingly shaped arrays;
* all randomness is derived from :class:`RngStream`, a counter-style stream
  keyed by ``(seed, particle, step, substream)``, so that identical keys give
  bit-identical draws on any platform or thread schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

__all__ = [
    "ParticleSet",
    "PotentialModel",
    "DiffusionModel",
    "RngStream",
    "as_point",
    "standard_normal_vector",
    "finite_difference_gradient",
    "langevin_diffusion",
]


def as_point(x, d: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float64 array, optionally checking length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"point must be 1-d, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("point must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite entries")
    if d is not None and arr.size != d:
        raise ValueError(f"point has dimension {arr.size}, expected {d}")
    return arr


@dataclass(frozen=True)
class ParticleSet:
    """A population of sampler states, stored as an ``(n, d)`` float64 array."""

    points: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise ValueError(f"points must be (n, d), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("particle set needs n >= 1 points of dimension d >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("particle set has non-finite entries")
        object.__setattr__(self, "points", arr)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PotentialModel:
    """Target potential ``f`` with value and gradient oracles.

    ``value`` maps ``(n, d) -> (n,)`` (or ``(d,) -> scalar``) and ``gradient``
    maps ``(n, d) -> (n, d)`` (or ``(d,) -> (d,)``).  The target density is
    proportional to ``exp(-f)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "potential"


@dataclass(frozen=True)
class DiffusionModel:
    """Drift and diffusion coefficient oracles for an Ito diffusion.

    ``drift`` maps points to points; ``sigma`` maps a point to a ``(d, m)``
    matrix (batched: ``(n, d) -> (n, d, m)``); ``sigma_column(x, i)`` returns
    the ``i``-th column of ``sigma(x)`` and must agree with it entrywise.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]
    dim: int
    noise_dim: int
    sigma_column: Callable[[np.ndarray, int], np.ndarray] = None  # type: ignore[assignment]
    name: str = "diffusion"

    def __post_init__(self):
        if self.sigma_column is None:
            sigma = self.sigma

            def column_from_matrix(x, i, _sigma=sigma):
                full = _sigma(x)
                return full[..., i]

            object.__setattr__(self, "sigma_column", column_from_matrix)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by ``(seed, particle, step, substream)``.

    Streams are pure values: :meth:`generator` builds a fresh
    ``numpy.random.Generator`` (Philox) from the key every call, so repeated
    calls replay the same draw sequence.  Distinct coordinates give
    statistically independent streams via ``numpy.random.SeedSequence`` spawn
    keys.
    """

    seed: int
    particle: int = 0
    step: int = 0
    substream: int = 0

    def child(self, particle: int | None = None, step: int | None = None,
              substream: int | None = None) -> "RngStream":
        """Derive a stream with some coordinates replaced."""
        return replace(
            self,
            particle=self.particle if particle is None else particle,
            step=self.step if step is None else step,
            substream=self.substream if substream is None else substream,
        )

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(self.particle, self.step, self.substream),
        )
        return np.random.Generator(np.random.Philox(ss))


def standard_normal_vector(stream: RngStream, d: int) -> np.ndarray:
    """Draw ``d`` i.i.d. standard normals, deterministically from ``stream``."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return stream.generator().standard_normal(d)


def finite_difference_gradient(model: PotentialModel, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference approximation of the potential gradient at ``x``.

    This is the independent oracle every shipped analytic gradient is checked
    against; it only queries ``model.value``.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x = as_point(x, model.dim)
    d = x.size
    offsets = step * np.eye(d)
    plus = np.asarray(model.value(x[None, :] + offsets), dtype=np.float64)
    minus = np.asarray(model.value(x[None, :] - offsets), dtype=np.float64)
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise FloatingPointError("value oracle returned non-finite output")
    return (plus - minus) / (2.0 * step)


def langevin_diffusion(potential: PotentialModel) -> DiffusionModel:
    """Overdamped Langevin diffusion for a potential: drift ``-grad f``, diffusion ``sqrt(2) I``.

    Its invariant law is proportional to ``exp(-f)``.
    """
    d = potential.dim
    root2 = np.sqrt(2.0)

    def drift(x):
        return -np.asarray(potential.gradient(x))

    def sigma(x):
        x = np.asarray(x, dtype=np.float64)
        batch = x.shape[:-1]
        out = np.zeros(batch + (d, d))
        idx = np.arange(d)
        out[..., idx, idx] = root2
        return out

    def sigma_column(x, i):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        out[..., i] = root2
        return out

    return DiffusionModel(
        drift=drift,
        sigma=sigma,
        dim=d,
        noise_dim=d,
        sigma_column=sigma_column,
        name=f"langevin({potential.name})",
    )
