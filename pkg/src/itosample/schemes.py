"""One-step integrators (EM, SRK-LD, SRK-ID) and chain simulation.

All step maps are pure: they take the current state, the model oracles, the
step size, and externally supplied noise.  ``simulate`` wires them to
per-step :class:`~itosample.core.RngStream` draws so that chains are
reproducible bit-for-bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .brownian import DEFAULT_LEVY_TRUNCATION, IteratedIntegrals, _series_factors
from .core import DiffusionModel, ParticleSet, PotentialModel, RngStream, langevin_diffusion

__all__ = [
    "SchemeKind",
    "SchemeConfig",
    "Trajectory",
    "ChainDivergedError",
    "DIVERGENCE_NORM",
    "em_step",
    "srk_ld_step",
    "srk_id_step",
    "simulate",
]

# Euclidean norm beyond which an iterate counts as diverged.
DIVERGENCE_NORM = 1e8

# SRK-LD stage coefficients.
_C_PLUS = 0.5 + 1.0 / np.sqrt(6.0)
_C_MINUS = 0.5 - 1.0 / np.sqrt(6.0)
_C_ETA = 1.0 / np.sqrt(12.0)

# Substream tags used by ``simulate`` for each step's draws.
_SUB_XI = 0
_SUB_ETA = 1
_SUB_INCREMENTS = 2
_SUB_LEVY = 3

_SERIES_BLOCK = 512


class SchemeKind(str, enum.Enum):
    EM = "em"
    SRK_LD = "srk_ld"
    SRK_ID = "srk_id"


@dataclass(frozen=True)
class SchemeConfig:
    kind: SchemeKind
    h: float
    levy_truncation: int = DEFAULT_LEVY_TRUNCATION
    snapshot_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.h <= 0:
            raise ValueError(f"step size h must be positive, got {self.h}")
        if self.kind is SchemeKind.SRK_ID and self.levy_truncation < 1:
            raise ValueError("levy_truncation must be >= 1 for SRK-ID")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of a simulated chain, ``(step index, ParticleSet)`` pairs."""

    snapshots: tuple

    def __post_init__(self):
        steps = [s for s, _ in self.snapshots]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("snapshot step indices must be strictly increasing")

    @property
    def final(self) -> ParticleSet:
        return self.snapshots[-1][1]

    def at_step(self, step: int) -> ParticleSet:
        for s, particles in self.snapshots:
            if s == step:
                return particles
        raise KeyError(f"no snapshot recorded at step {step}")


class ChainDivergedError(RuntimeError):
    """A chain iterate went non-finite or beyond the divergence norm."""

    def __init__(self, step: int, particle: int, scheme: str):
        self.step = step
        self.particle = particle
        self.scheme = scheme
        super().__init__(f"{scheme} chain diverged at step {step} (particle {particle})")


def _check_state(x, d, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != d:
        raise ValueError(f"{name} has dimension {x.shape[-1]}, model expects {d}")
    return x


def em_step(x, model: DiffusionModel, h: float, xi) -> np.ndarray:
    """Euler-Maruyama update ``x + h b(x) + sqrt(h) sigma(x) xi``.

    ``xi`` is a raw ``N(0, I_d)`` draw; the ``sqrt(h)`` scaling is applied
    here and only the first ``m`` entries enter through ``sigma``.
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    d, m = model.dim, model.noise_dim
    if m > d:
        raise ValueError(f"noise dimension {m} exceeds state dimension {d}")
    x = _check_state(x, d)
    xi = _check_state(np.asarray(xi, dtype=np.float64), d, "xi")
    if xi.shape != x.shape:
        raise ValueError(f"xi shape {xi.shape} does not match state shape {x.shape}")
    sigma = np.asarray(model.sigma(x))
    noise = np.einsum("...dm,...m->...d", sigma, xi[..., :m])
    out = x + h * np.asarray(model.drift(x)) + np.sqrt(h) * noise
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("em_step produced non-finite output")
    return out


def srk_ld_step(x, potential: PotentialModel, h: float, xi, eta) -> np.ndarray:
    """One step of the order-1.5 stochastic Runge-Kutta map for Langevin dynamics.

    Two stage points are built from the pair of independent ``N(0, I_d)``
    draws ``(xi, eta)``::

        H1 = x + sqrt(2h) [ (1/2 + 1/sqrt(6)) xi + eta / sqrt(12) ]
        H2 = x - h grad(x) + sqrt(2h) [ (1/2 - 1/sqrt(6)) xi + eta / sqrt(12) ]
        x' = x - h/2 [ grad(H1) + grad(H2) ] + sqrt(2h) xi

    Exactly three gradient evaluations per call.
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    d = potential.dim
    x = _check_state(x, d)
    xi = _check_state(np.asarray(xi, dtype=np.float64), d, "xi")
    eta = _check_state(np.asarray(eta, dtype=np.float64), d, "eta")
    root = np.sqrt(2.0 * h)
    g0 = np.asarray(potential.gradient(x))
    h1 = x + root * (_C_PLUS * xi + _C_ETA * eta)
    h2 = x - h * g0 + root * (_C_MINUS * xi + _C_ETA * eta)
    g1 = np.asarray(potential.gradient(h1))
    g2 = np.asarray(potential.gradient(h2))
    out = x - 0.5 * h * (g1 + g2) + root * xi
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("srk_ld_step produced non-finite output")
    return out


def srk_id_step(x, model: DiffusionModel, h: float, ii: IteratedIntegrals) -> np.ndarray:
    """One step of the order-1.0 stochastic Runge-Kutta map for Ito diffusions.

    Stage points perturb ``x`` along ``sigma(x) J / sqrt(h)`` columns::

        H1^(i) = x + sum_j sigma_j(x) J[j, i] / sqrt(h)       (H2 mirrors it)
        x' = x + h b(x) + sigma(x) I
               + sqrt(h)/2 * sum_i [ sigma_i(H1^(i)) - sigma_i(H2^(i)) ]
    """
    if h <= 0:
        raise ValueError(f"step size h must be positive, got {h}")
    if abs(ii.h - h) > 1e-12 * max(1.0, h):
        raise ValueError(f"iterated integrals built for h={ii.h}, step uses h={h}")
    if ii.noise_dim != model.noise_dim:
        raise ValueError(
            f"iterated integrals have m={ii.noise_dim}, model expects {model.noise_dim}")
    x = _check_state(x, model.dim)
    if x.ndim != 1:
        raise ValueError("srk_id_step takes a single point; simulate handles batches")
    out = _srk_id_core(x[None, :], model, h, ii.increments[None, :], ii.matrix[None, :, :])
    return out[0]


def _srk_id_core(x, model, h, incs, jmat):
    """Batched SRK-ID update: x (n, d), incs (n, m), jmat (n, m, m)."""
    m = model.noise_dim
    sigma0 = np.asarray(model.sigma(x))
    offsets = np.einsum("ndj,nji->ndi", sigma0, jmat) / np.sqrt(h)
    out = x + h * np.asarray(model.drift(x)) + np.einsum("ndm,nm->nd", sigma0, incs)
    corr = np.zeros_like(x)
    for i in range(m):
        corr += np.asarray(model.sigma_column(x + offsets[:, :, i], i))
        corr -= np.asarray(model.sigma_column(x - offsets[:, :, i], i))
    out = out + 0.5 * np.sqrt(h) * corr
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("srk_id_step produced non-finite output")
    return out


def _levy_matrices(gen, incs, h, n):
    """J matrices for a batch of increment rows, series drawn from ``gen``."""
    size, m = incs.shape
    eye = np.eye(m)
    sym = (incs[:, :, None] * incs[:, None, :] - h * eye) / 2.0
    if m == 1:
        return sym
    area = np.empty((size, m, m))
    for start in range(0, size, _SERIES_BLOCK):
        stop = min(start + _SERIES_BLOCK, size)
        xi = gen.standard_normal((stop - start, m, n))
        eta = gen.standard_normal((stop - start, m, n))
        area[start:stop] = _series_factors(incs[start:stop], h, xi, eta)
    return sym + area


def _as_diffusion(model, kind: SchemeKind) -> DiffusionModel:
    if isinstance(model, DiffusionModel):
        return model
    if isinstance(model, PotentialModel):
        return langevin_diffusion(model)
    raise TypeError(f"cannot drive {kind.value} with model of type {type(model).__name__}")


def simulate(initial: ParticleSet, model, cfg: SchemeConfig, steps: int, seed: int) -> Trajectory:
    """Advance every particle ``steps`` times under the configured scheme.

    Noise for step ``k`` is drawn from ``RngStream(seed, step=k)`` substreams,
    one ``(n, d)`` matrix per draw with row ``i`` belonging to particle ``i``,
    so trajectories are reproducible and particles are independent.
    Snapshots are recorded at ``cfg.snapshot_stride`` plus the initial and
    final states.  A non-finite iterate or one with Euclidean norm beyond
    ``DIVERGENCE_NORM`` aborts with :class:`ChainDivergedError`.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    x = initial.points.copy()
    n, d = x.shape

    if cfg.kind is SchemeKind.SRK_LD:
        if not isinstance(model, PotentialModel):
            raise TypeError("SRK-LD requires a PotentialModel (Langevin dynamics)")
        if model.dim != d:
            raise ValueError(f"model dimension {model.dim} != particle dimension {d}")
        potential = model
        diffusion = None
    else:
        potential = None
        diffusion = _as_diffusion(model, cfg.kind)
        if diffusion.dim != d:
            raise ValueError(f"model dimension {diffusion.dim} != particle dimension {d}")

    snapshots = [(0, ParticleSet(x.copy()))]
    root = RngStream(seed)
    for k in range(steps):
        try:
            if cfg.kind is SchemeKind.EM:
                xi = root.child(step=k, substream=_SUB_XI).generator().standard_normal((n, d))
                x = em_step(x, diffusion, cfg.h, xi)
            elif cfg.kind is SchemeKind.SRK_LD:
                xi = root.child(step=k, substream=_SUB_XI).generator().standard_normal((n, d))
                eta = root.child(step=k, substream=_SUB_ETA).generator().standard_normal((n, d))
                x = srk_ld_step(x, potential, cfg.h, xi, eta)
            else:
                m = diffusion.noise_dim
                incs = np.sqrt(cfg.h) * (
                    root.child(step=k, substream=_SUB_INCREMENTS)
                    .generator().standard_normal((n, m)))
                levy_gen = root.child(step=k, substream=_SUB_LEVY).generator()
                jmat = _levy_matrices(levy_gen, incs, cfg.h, cfg.levy_truncation)
                x = _srk_id_core(x, diffusion, cfg.h, incs, jmat)
        except FloatingPointError:
            raise ChainDivergedError(step=k + 1, particle=-1, scheme=cfg.kind.value) from None

        norms = np.linalg.norm(x, axis=1)
        bad = ~np.isfinite(norms) | (norms > DIVERGENCE_NORM)
        if np.any(bad):
            raise ChainDivergedError(step=k + 1, particle=int(np.argmax(bad)),
                                     scheme=cfg.kind.value)
        if (k + 1) % cfg.snapshot_stride == 0 or k + 1 == steps:
            snapshots.append((k + 1, ParticleSet(x.copy())))
    return Trajectory(snapshots=tuple(snapshots))
