"""Concrete targets: Gaussian mixture, Bayesian logistic regression, pseudo-Huber
and Student-t candidate diffusions, plus dissipativity checks.

Every potential here ships an analytic gradient that is validated against
:func:`itosample.core.finite_difference_gradient` in the test suite, and every
diffusion's closed-form drift is validated against
:func:`drift_divergence_oracle`, the numerical evaluation of the invariant
measure construction ``b = (1/2p) <grad, p w>`` with ``w = sigma sigma^T``.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DiffusionModel, PotentialModel, RngStream

__all__ = [
    "GaussianMixtureSpec",
    "BlrDataset",
    "PseudoHuberSpec",
    "StudentTRegressionSpec",
    "quadratic_potential",
    "gaussian_mixture_potential",
    "mixture_sample",
    "blr_generate",
    "blr_potential",
    "blr_save_csv",
    "blr_load_csv",
    "pseudo_huber_potential",
    "pseudo_huber_diffusion",
    "pseudo_huber_dissipativity_bound",
    "student_t_generate",
    "student_t_potential",
    "student_t_diffusion",
    "student_t_dissipativity_holds",
    "drift_divergence_oracle",
    "uniform_dissipativity_margin",
]


def _rows(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _softplus(z):
    # log(1 + exp(z)) without overflow for large |z|
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def quadratic_potential(d: int) -> PotentialModel:
    """``f(x) = ||x||^2 / 2``; under Langevin dynamics this is the OU process
    with stationary law ``N(0, I_d)``."""

    def value(x):
        xb, single = _rows(x)
        v = 0.5 * np.sum(xb * xb, axis=1)
        return v[0] if single else v

    def gradient(x):
        return np.asarray(x, dtype=np.float64)

    return PotentialModel(value=value, gradient=gradient, dim=d, name=f"quadratic(d={d})")


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Two-mode mixture with density proportional to
    ``exp(-||t - a||^2 / 2) + exp(-||t + a||^2 / 2)``."""

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 1 or a.size < 1:
            raise ValueError("mode offset a must be a 1-d vector")
        object.__setattr__(self, "a", a)
        if np.linalg.norm(a) >= 1.0:
            warnings.warn("||a|| >= 1: mixture potential is not strongly convex",
                          stacklevel=2)

    @property
    def dim(self) -> int:
        return self.a.size


def gaussian_mixture_potential(spec: GaussianMixtureSpec) -> PotentialModel:
    """Potential ``f(t) = ||t - a||^2 / 2 - log(1 + exp(-2 t.a))`` with analytic
    gradient ``(t - a) + 2 a sigmoid(-2 t.a)``."""
    a = spec.a

    def value(x):
        xb, single = _rows(x)
        dot = xb @ a
        v = 0.5 * np.sum((xb - a) ** 2, axis=1) - _softplus(-2.0 * dot)
        return v[0] if single else v

    def gradient(x):
        xb, single = _rows(x)
        dot = xb @ a
        g = (xb - a) + 2.0 * _sigmoid(-2.0 * dot)[:, None] * a
        return g[0] if single else g

    return PotentialModel(value=value, gradient=gradient, dim=spec.dim,
                          name=f"mixture(d={spec.dim})")


def mixture_sample(spec: GaussianMixtureSpec, stream: RngStream, size: int) -> np.ndarray:
    """Exact i.i.d. draws from the mixture ``(N(a, I) + N(-a, I)) / 2``."""
    gen = stream.generator()
    signs = np.where(gen.random(size) < 0.5, 1.0, -1.0)
    return signs[:, None] * spec.a + gen.standard_normal((size, spec.dim))


# ---------------------------------------------------------------------------
# Bayesian logistic regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlrDataset:
    """Design, labels and regularizer for the logistic-regression posterior."""

    x: np.ndarray
    y: np.ndarray
    alpha: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("design must be (n, d)")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must be length n")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be in {0, 1}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def sample_covariance(self) -> np.ndarray:
        return self.x.T @ self.x / self.n


def default_blr_alpha(d: int) -> float:
    return 0.3 * d / np.pi ** 2


def blr_generate(seed: int, n: int, d: int) -> BlrDataset:
    """Synthetic logistic-regression data.

    Rows are Rademacher vectors, jointly rescaled by ``||X||_F / sqrt(d)`` so
    the design has Frobenius norm ``sqrt(d)``; labels are drawn from the
    logistic model at the true parameter ``1_d``; the regularizer defaults to
    ``0.3 d / pi^2``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    gen = RngStream(seed).generator()
    x = np.where(gen.random((n, d)) < 0.5, -1.0, 1.0)
    x = x / (np.linalg.norm(x) / np.sqrt(d))
    probs = _sigmoid(x @ np.ones(d))
    y = (gen.random(n) < probs).astype(np.float64)
    return BlrDataset(x=x, y=y, alpha=default_blr_alpha(d))


def blr_potential(data: BlrDataset) -> PotentialModel:
    """Negative log posterior
    ``f(t) = -Y^T X t + sum_i log(1 + exp(-t.x_i)) + (alpha/2) t^T Cov t``."""
    x_mat, y, alpha = data.x, data.y, data.alpha
    cov = data.sample_covariance
    xty = x_mat.T @ y

    def value(t):
        tb, single = _rows(t)
        logits = tb @ x_mat.T
        v = -logits @ y + np.sum(_softplus(-logits), axis=1)
        v += 0.5 * alpha * np.sum((tb @ cov) * tb, axis=1)
        return v[0] if single else v

    def gradient(t):
        tb, single = _rows(t)
        logits = tb @ x_mat.T
        g = -xty - _sigmoid(-logits) @ x_mat + alpha * (tb @ cov)
        return g[0] if single else g

    return PotentialModel(value=value, gradient=gradient, dim=data.dim,
                          name=f"blr(n={data.n},d={data.dim})")


def blr_save_csv(data: BlrDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# alpha={data.alpha!r}\n")
        fh.write("y," + ",".join(f"x{j}" for j in range(data.dim)) + "\n")
        for yi, row in zip(data.y, data.x):
            fh.write(f"{int(yi)}," + ",".join(repr(v) for v in row) + "\n")


def blr_load_csv(path) -> BlrDataset:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# alpha="):
            raise ValueError(f"{path}: missing alpha header line")
        alpha = float(first[len("# alpha="):])
        body = fh.read()
    rows = np.loadtxt(io.StringIO(body), delimiter=",", skiprows=1, ndmin=2)
    return BlrDataset(x=rows[:, 1:], y=rows[:, 0], alpha=alpha)


# ---------------------------------------------------------------------------
# Pseudo-Huber potential and its candidate diffusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoHuberSpec:
    """Parameters of ``f(x) = (beta + ||x||^2)^(1/2) + gamma log(beta + ||x||^2)``."""

    beta: float
    gamma: float
    dim: int

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("beta and gamma must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


def pseudo_huber_potential(spec: PseudoHuberSpec) -> PotentialModel:
    beta, gamma = spec.beta, spec.gamma

    def value(x):
        xb, single = _rows(x)
        u = beta + np.sum(xb * xb, axis=1)
        v = np.sqrt(u) + gamma * np.log(u)
        return v[0] if single else v

    def gradient(x):
        xb, single = _rows(x)
        u = beta + np.sum(xb * xb, axis=1)
        g = xb * (1.0 / np.sqrt(u) + 2.0 * gamma / u)[:, None]
        return g[0] if single else g

    return PotentialModel(value=value, gradient=gradient, dim=spec.dim,
                          name=f"pseudo_huber(beta={spec.beta},gamma={spec.gamma},d={spec.dim})")


def pseudo_huber_diffusion(spec: PseudoHuberSpec) -> DiffusionModel:
    """Candidate diffusion with invariant law ``exp(-f)``: diffusion coefficient
    ``sigma(x) = g(x)^(1/2) I_d`` with ``g(x) = (beta + ||x||^2)^(1/2)`` and the
    matching drift from the divergence construction,

        b(x) = (1/2) (grad g(x) - g(x) grad f(x)) = -(x/2) (1 + (2 gamma - 1) / g(x)).
    """
    beta, gamma, d = spec.beta, spec.gamma, spec.dim

    def g(xb):
        return np.sqrt(beta + np.sum(xb * xb, axis=1))

    def drift(x):
        xb, single = _rows(x)
        b = -0.5 * xb * (1.0 + (2.0 * gamma - 1.0) / g(xb))[:, None]
        return b[0] if single else b

    def sigma(x):
        xb, single = _rows(x)
        scale = np.sqrt(g(xb))
        out = np.zeros((xb.shape[0], d, d))
        idx = np.arange(d)
        out[:, idx, idx] = scale[:, None]
        return out[0] if single else out

    def sigma_column(x, i):
        xb, single = _rows(x)
        out = np.zeros_like(xb)
        out[:, i] = np.sqrt(g(xb))
        return out[0] if single else out

    return DiffusionModel(drift=drift, sigma=sigma, dim=d, noise_dim=d,
                          sigma_column=sigma_column,
                          name=f"pseudo_huber(beta={beta},gamma={gamma},d={d})")


def pseudo_huber_dissipativity_bound(spec: PseudoHuberSpec) -> float:
    """Analytic lower bound on the uniform-dissipativity constant:
    ``1/2 - |gamma - 1/2| * 2 / sqrt(beta) - d / (8 sqrt(beta))``."""
    root = np.sqrt(spec.beta)
    return 0.5 - abs(spec.gamma - 0.5) * 2.0 / root - spec.dim / (8.0 * root)


# ---------------------------------------------------------------------------
# Student-t regression (optional model)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudentTRegressionSpec:
    """Student-t regression posterior under an improper uniform prior."""

    x: np.ndarray
    y: np.ndarray
    nu: int
    sigma: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        s = np.asarray(self.sigma, dtype=np.float64)
        n = x.shape[0]
        if x.ndim != 2 or y.shape != (n,):
            raise ValueError("need design (n, d) and responses (n,)")
        if self.nu < 1:
            raise ValueError("degrees of freedom nu must be >= 1")
        if s.shape != (n, n) or not np.allclose(s, s.T, atol=1e-12):
            raise ValueError("sigma must be a symmetric (n, n) matrix")
        if np.min(np.linalg.eigvalsh(s)) <= 0:
            raise ValueError("sigma must be positive definite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", s)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def student_t_generate(seed: int, n: int, d: int, nu: int = 2) -> StudentTRegressionSpec:
    """Exact-fit data ``y = X 1_d`` with rows ``x_i ~ N(0, I/d)`` and ``Sigma = I``."""
    gen = RngStream(seed).generator()
    x = gen.standard_normal((n, d)) / np.sqrt(d)
    y = x @ np.ones(d)
    return StudentTRegressionSpec(x=x, y=y, nu=nu, sigma=np.eye(n))


def _student_t_scale(spec, tb):
    resid = spec.y - tb @ spec.x.T
    solved = np.linalg.solve(spec.sigma, resid.T).T
    return 1.0 + np.sum(resid * solved, axis=1) / spec.nu, solved


def student_t_potential(spec: StudentTRegressionSpec) -> PotentialModel:
    """``f(t) = ((nu + n) / 2) log(1 + (y - Xt)^T Sigma^-1 (y - Xt) / nu)``."""
    half_exp = 0.5 * (spec.nu + spec.n)

    def value(t):
        tb, single = _rows(t)
        s, _ = _student_t_scale(spec, tb)
        v = half_exp * np.log(s)
        return v[0] if single else v

    def gradient(t):
        tb, single = _rows(t)
        s, solved = _student_t_scale(spec, tb)
        g = (2.0 * half_exp / spec.nu) * (-(solved @ spec.x)) / s[:, None]
        return g[0] if single else g

    return PotentialModel(value=value, gradient=gradient, dim=spec.dim,
                          name=f"student_t(n={spec.n},d={spec.dim},nu={spec.nu})")


def student_t_diffusion(spec: StudentTRegressionSpec) -> DiffusionModel:
    """Candidate diffusion ``sigma(t) = s(t)^(1/2) I_d`` with
    ``s(t) = 1 + (y - Xt)^T Sigma^-1 (y - Xt) / nu``; the divergence
    construction collapses to the linear drift
    ``b(t) = ((nu + n - 2) / (2 nu)) X^T Sigma^-1 (y - Xt)``."""
    d = spec.dim
    coeff = (spec.nu + spec.n - 2.0) / (2.0 * spec.nu)

    def drift(t):
        tb, single = _rows(t)
        _, solved = _student_t_scale(spec, tb)
        b = coeff * (solved @ spec.x)
        return b[0] if single else b

    def sigma(t):
        tb, single = _rows(t)
        s, _ = _student_t_scale(spec, tb)
        out = np.zeros((tb.shape[0], d, d))
        idx = np.arange(d)
        out[:, idx, idx] = np.sqrt(s)[:, None]
        return out[0] if single else out

    def sigma_column(t, i):
        tb, single = _rows(t)
        s, _ = _student_t_scale(spec, tb)
        out = np.zeros_like(tb)
        out[:, i] = np.sqrt(s)
        return out[0] if single else out

    return DiffusionModel(drift=drift, sigma=sigma, dim=d, noise_dim=d,
                          sigma_column=sigma_column,
                          name=f"student_t(n={spec.n},d={spec.dim},nu={spec.nu})")


def student_t_dissipativity_holds(spec: StudentTRegressionSpec) -> bool:
    """Check the sufficient condition ``nu + n > (2 + d) * lmax(Cov_X) * lmax(Sigma)
    / (lmin(Sigma) * lmin(Cov_X))`` for uniform dissipativity."""
    cov_x = spec.x.T @ spec.x / spec.n
    ev_x = np.linalg.eigvalsh(cov_x)
    ev_s = np.linalg.eigvalsh(spec.sigma)
    rhs = ((2.0 * ev_x[-1] / ev_s[0] + spec.dim * ev_x[-1] / ev_s[0])
           * ev_s[-1] / ev_x[0])
    return spec.nu + spec.n > rhs


# ---------------------------------------------------------------------------
# Oracles and checks shared by all diffusions
# ---------------------------------------------------------------------------

def drift_divergence_oracle(potential: PotentialModel, w, x, step: float = 1e-5) -> np.ndarray:
    """Numerical drift from the invariant-measure construction.

    Evaluates ``b_i(x) = (1 / 2 p(x)) sum_j d[p w_ij] / dx_j`` by central
    differences, with ``p = exp(-f)`` (normalization cancels) and ``w`` a
    callable returning the ``(d, d)`` matrix ``sigma sigma^T``.  Density
    ratios are formed as ``exp(f(x) - f(x'))`` so no overflow occurs away
    from the tails.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    f0 = float(potential.value(x))
    total = np.zeros(d)
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = step
        up, down = x + ej, x - ej
        ratio_up = np.exp(f0 - float(potential.value(up)))
        ratio_down = np.exp(f0 - float(potential.value(down)))
        total += (ratio_up * np.asarray(w(up))[:, j]
                  - ratio_down * np.asarray(w(down))[:, j]) / (2.0 * step)
    return 0.5 * total


def uniform_dissipativity_margin(model: DiffusionModel, seed: int, pairs: int,
                                 radius: float) -> float:
    """Sampled lower bound on the uniform-dissipativity constant.

    Draws ``pairs`` pairs ``(x, y)`` uniformly from the radius ball and
    returns the minimum of
    ``-( <b(x)-b(y), x-y> + ||sigma(x)-sigma(y)||_F^2 / 2 ) / ||x-y||^2``.
    A positive value certifies dissipativity on the sample only.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    d = model.dim
    gen = RngStream(seed).generator()
    direction = gen.standard_normal((2 * pairs, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * gen.random(2 * pairs) ** (1.0 / d)
    points = direction * radii[:, None]
    x, y = points[:pairs], points[pairs:]

    gap = x - y
    sq = np.sum(gap * gap, axis=1)
    keep = sq > 1e-24
    if not np.any(keep):
        raise ValueError("all sampled pairs were degenerate (x == y)")
    x, y, gap, sq = x[keep], y[keep], gap[keep], sq[keep]

    drift_term = np.sum((np.asarray(model.drift(x)) - np.asarray(model.drift(y))) * gap, axis=1)
    sig_gap = np.asarray(model.sigma(x)) - np.asarray(model.sigma(y))
    frob = np.sum(sig_gap * sig_gap, axis=(1, 2))
    return float(np.min(-(drift_term + 0.5 * frob) / sq))
