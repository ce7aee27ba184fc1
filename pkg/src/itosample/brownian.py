"""Brownian increments and iterated Ito integrals.

The iterated integrals over one step of size ``h`` are

    I(i)    = int_0^h dB^(i),
    J(l, i) = int_0^h int_0^s dB^(l) dB^(i),

decomposed as ``J(l, i) = (I(l) I(i) - h delta_li) / 2 + A(l, i)`` where the
antisymmetric Levy area ``A`` is simulated by truncating its Fourier series
(Kloeden-Platen-Wright) after ``n`` terms:

    A(l, i) = h / (2 pi) * sum_k 1/k * ( xi_{l,k} (eta_{i,k} + sqrt(2/h) I(i))
                                       - xi_{i,k} (eta_{l,k} + sqrt(2/h) I(l)) )

with all ``xi, eta`` i.i.d. standard normal.  The truncation has mean-square
error of order ``h^2 / n``; the default ``n = 3000`` follows the rule of thumb
``n ~ 1/h`` for the step sizes used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream

__all__ = [
    "DEFAULT_LEVY_TRUNCATION",
    "IteratedIntegrals",
    "sample_increments",
    "kpw_iterated_integrals",
    "kpw_batch",
    "brownian_with_time_integral",
    "double_time_integral_sample",
]

DEFAULT_LEVY_TRUNCATION = 3000

# Fixed batch block so draw order (hence output) never depends on memory limits.
_BATCH_BLOCK = 512


@dataclass(frozen=True)
class IteratedIntegrals:
    """Single-step Brownian increments and the iterated-integral matrix.

    ``increments[i] = I(i)`` and ``matrix[l, i] = J(l, i)``.  By construction
    the diagonal is exact, ``J(i, i) = (I(i)^2 - h) / 2``, and the Levy area
    ``matrix - (outer(I, I) - h Id) / 2`` is exactly antisymmetric.
    """

    increments: np.ndarray
    matrix: np.ndarray
    h: float
    truncation: int

    @property
    def noise_dim(self) -> int:
        return self.increments.size

    def levy_area(self) -> np.ndarray:
        sym = (np.outer(self.increments, self.increments)
               - self.h * np.eye(self.noise_dim)) / 2.0
        return self.matrix - sym


def sample_increments(stream: RngStream, m: int, h: float, size: int | None = None) -> np.ndarray:
    """Brownian increments over one step: ``m`` independent ``N(0, h)`` draws.

    With ``size`` given, returns a ``(size, m)`` array of independent steps
    drawn from the single ``stream`` (useful for Monte Carlo studies).
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    if m < 1:
        raise ValueError(f"noise dimension m must be >= 1, got {m}")
    shape = (m,) if size is None else (size, m)
    return np.sqrt(h) * stream.generator().standard_normal(shape)


def _series_factors(increments: np.ndarray, h: float, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Levy areas from series normals xi, eta of shape (..., m, n)."""
    n = xi.shape[-1]
    weights = 1.0 / np.arange(1, n + 1)
    u = eta + np.sqrt(2.0 / h) * increments[..., None]
    m_mat = np.einsum("...lk,...ik->...li", xi * weights, u)
    swap = m_mat.swapaxes(-1, -2)
    return (h / (2.0 * np.pi)) * (m_mat - swap)


def kpw_iterated_integrals(stream: RngStream, increments: np.ndarray, h: float,
                           n: int = DEFAULT_LEVY_TRUNCATION) -> IteratedIntegrals:
    """Iterated-integral matrix for one step from given increments.

    Parameters
    ----------
    stream : RngStream
        Stream for the series normals.  Row ``l`` of the series uses the
        substream ``stream.substream + 1 + l``, and within it the pairs
        ``(xi_{l,k}, eta_{l,k})`` are drawn in order of ``k``, so enlarging
        ``n`` extends each series without perturbing earlier terms or any
        other substream.
    increments : array, shape (m,)
        Brownian increments ``I(i)`` over the step (e.g. from
        :func:`sample_increments`, or aggregated from a finer lattice).
    h : float
        Step size the increments correspond to.
    n : int
        Number of series terms for the Levy areas.  Ignored when ``m = 1``,
        where the single entry ``(I^2 - h) / 2`` is exact.
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    if n < 1:
        raise ValueError(f"series truncation n must be >= 1, got {n}")
    increments = np.asarray(increments, dtype=np.float64)
    if increments.ndim != 1 or increments.size < 1:
        raise ValueError("increments must be a 1-d array of length m >= 1")
    m = increments.size

    sym = (np.outer(increments, increments) - h * np.eye(m)) / 2.0
    if m == 1:
        return IteratedIntegrals(increments=increments, matrix=sym, h=h, truncation=n)

    xi = np.empty((m, n))
    eta = np.empty((m, n))
    for l in range(m):
        sub = stream.child(substream=stream.substream + 1 + l)
        pairs = sub.generator().standard_normal((n, 2))
        xi[l] = pairs[:, 0]
        eta[l] = pairs[:, 1]
    area = _series_factors(increments, h, xi, eta)
    return IteratedIntegrals(increments=increments, matrix=sym + area, h=h, truncation=n)


def kpw_batch(stream: RngStream, m: int, h: float, n: int, size: int):
    """Vectorized sampler of ``size`` independent (increments, J-matrix) pairs.

    Draws everything from the single ``stream`` in a fixed order, so results
    are deterministic.  Returns ``(I, J)`` with shapes ``(size, m)`` and
    ``(size, m, m)``.  Intended for Monte Carlo studies of the truncated law;
    per-step simulation should use :func:`kpw_iterated_integrals`.
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    if n < 1:
        raise ValueError(f"series truncation n must be >= 1, got {n}")
    if m < 1 or size < 1:
        raise ValueError("m and size must be >= 1")
    gen = stream.generator()
    incs = np.sqrt(h) * gen.standard_normal((size, m))
    eye = np.eye(m)
    sym = (incs[:, :, None] * incs[:, None, :] - h * eye) / 2.0
    if m == 1:
        return incs, sym

    out = np.empty((size, m, m))
    for start in range(0, size, _BATCH_BLOCK):
        stop = min(start + _BATCH_BLOCK, size)
        xi = gen.standard_normal((stop - start, m, n))
        eta = gen.standard_normal((stop - start, m, n))
        out[start:stop] = _series_factors(incs[start:stop], h, xi, eta)
    return incs, sym + out


def brownian_with_time_integral(stream: RngStream, d: int, t: float, size: int | None = None):
    """Jointly sample the endpoint ``B_t`` and ``Z_t = int_0^t int_0^s dB_u ds``.

    The pair is Gaussian with ``Var(B_t) = t``, ``Var(Z_t) = t^3 / 3`` and
    ``Cov(B_t, Z_t) = t^2 / 2`` per coordinate; the construction below matches
    those moments exactly.
    """
    if t <= 0:
        raise ValueError(f"time t must be positive, got {t}")
    if d < 1:
        raise ValueError(f"dimension d must be >= 1, got {d}")
    shape = (2, d) if size is None else (size, 2, d)
    draws = stream.generator().standard_normal(shape)
    xi = draws[..., 0, :]
    eta = draws[..., 1, :]
    endpoint = np.sqrt(t) * xi
    integral = t ** 1.5 * (xi / 2.0 + eta / (2.0 * np.sqrt(3.0)))
    return endpoint, integral


def double_time_integral_sample(stream: RngStream, d: int, t: float,
                                size: int | None = None) -> np.ndarray:
    """One draw of ``int_0^t int_0^s dB_u ds``, distributed ``N(0, t^3 I_d / 3)``."""
    _, integral = brownian_with_time_integral(stream, d, t, size=size)
    return integral
