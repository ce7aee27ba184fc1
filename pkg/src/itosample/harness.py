"""Experiment drivers: synchronous-coupling MSE, empirical strong-order fits,
stationary-bias sweeps, and scheme-vs-scheme comparisons.

The coupling protocol: a reference ("continuous") path is simulated with EM at
the fine step ``h / R`` and the coarse scheme consumes noise aggregated from
the same Brownian lattice.  EM and SRK-ID take the summed increments; SRK-ID
draws its Levy-area series from a substream tagged by the coarse step; SRK-LD
rebuilds its ``(xi, eta)`` pair from the coarse-step endpoint ``B_h`` and the
time integral ``Psi_h = int B ds`` via the moment-matching affine map
``xi = B_h / sqrt(h)``, ``eta = 2 sqrt(3) (Psi_h / h^(3/2) - xi / 2)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .core import DiffusionModel, ParticleSet, PotentialModel, RngStream, langevin_diffusion
from .metrics import corrected_w2_squared, energy_distance_squared, ksd_squared_imq
from .schemes import (ChainDivergedError, DIVERGENCE_NORM, SchemeConfig, SchemeKind,
                      _levy_matrices, _srk_id_core, simulate, srk_ld_step)

__all__ = [
    "CouplingPlan",
    "SweepRow",
    "SweepResult",
    "OrderFit",
    "reconstruct_srk_noise",
    "coupled_mse",
    "fit_log_slope",
    "strong_order_fit",
    "stationary_bias_sweep",
    "scheme_comparison",
    "derive_seed",
    "write_sweep_csv",
    "write_series_csv",
    "write_metadata",
]

_SUB_FINE = 0
_SUB_LEVY_COARSE = 1


def derive_seed(root_seed: int, *tags) -> int:
    """Stable per-cell seed from the root seed and arbitrary tags.

    Independent of evaluation order, so sweeps may parallelize over cells
    without changing any result.
    """
    text = "|".join([str(root_seed)] + [repr(t) for t in tags])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class CouplingPlan:
    """Synchronous-coupling study: coarse step ``h``, fine step ``h / refinement``."""

    model: object
    schemes: tuple
    h: float
    horizon: float
    particles: int
    refinement: int = 64
    levy_truncation: int = 3000
    riemann: str = "left"
    initial: ParticleSet | None = None

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(SchemeKind(s) for s in self.schemes))
        if self.refinement < 2:
            raise ValueError("refinement must be >= 2")
        if self.h <= 0 or self.horizon <= 0:
            raise ValueError("h and horizon must be positive")
        steps = self.horizon / self.h
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"horizon {self.horizon} is not a multiple of h {self.h}")
        if self.particles < 1:
            raise ValueError("particles must be >= 1")
        if self.riemann not in ("left", "trapezoid"):
            raise ValueError("riemann must be 'left' or 'trapezoid'")

    @property
    def coarse_steps(self) -> int:
        return int(round(self.horizon / self.h))


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    h: float
    metric: str
    value: float
    stderr: float
    n: int
    seed: int

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"sweep value must be finite, got {self.value}")
        if not (np.isfinite(self.stderr) and self.stderr >= 0):
            raise ValueError(f"stderr must be finite and >= 0, got {self.stderr}")


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def filtered(self, scheme=None, metric=None) -> "SweepResult":
        rows = [r for r in self.rows
                if (scheme is None or r.scheme == scheme)
                and (metric is None or r.metric == metric)]
        return SweepResult(rows=tuple(rows))

    def value(self, scheme: str, h: float, metric: str) -> float:
        for r in self.rows:
            if r.scheme == scheme and r.metric == metric and abs(r.h - h) < 1e-12:
                return r.value
        raise KeyError(f"no row for ({scheme}, {h}, {metric})")


@dataclass(frozen=True)
class OrderFit:
    """Least-squares fit of ``log mse`` against ``log h``."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple  # ((h, mse), ...)

    @property
    def mean_square_order(self) -> float:
        return self.slope / 2.0


def reconstruct_srk_noise(b_end: np.ndarray, psi: np.ndarray, h: float):
    """Invert the joint law of ``(B_h, int_0^h B_s ds)`` to the standard pair.

    This is the unique variance/covariance matching affine map: ``xi`` and
    ``eta`` come out unit-variance and uncorrelated when the inputs carry the
    exact joint law.
    """
    xi = b_end / np.sqrt(h)
    eta = 2.0 * np.sqrt(3.0) * (psi / h ** 1.5 - xi / 2.0)
    return xi, eta


def _em_with_increments(x, diffusion, h, db):
    drift = np.asarray(diffusion.drift(x))
    sigma = np.asarray(diffusion.sigma(x))
    return x + h * drift + np.einsum("ndm,nm->nd", sigma, db)


def _check_coupled(x, scheme, step):
    norms = np.linalg.norm(x, axis=1)
    bad = ~np.isfinite(norms) | (norms > DIVERGENCE_NORM)
    if np.any(bad):
        raise ChainDivergedError(step=step, particle=int(np.argmax(bad)), scheme=scheme)


def coupled_mse(plan: CouplingPlan, seed: int) -> dict:
    """Mean-square error between the fine reference path and each coarse scheme.

    Returns ``{scheme_name: array of length coarse_steps + 1}`` with entry
    ``k`` the mean over particles of ``||X_fine(t_k) - X_coarse(t_k)||^2``;
    entry 0 is exactly zero (shared start).
    """
    if isinstance(plan.model, PotentialModel):
        potential = plan.model
        diffusion = langevin_diffusion(potential)
    else:
        potential = None
        diffusion = plan.model
    if SchemeKind.SRK_LD in plan.schemes and potential is None:
        raise TypeError("SRK-LD coupling requires a PotentialModel")

    n, d, m = plan.particles, diffusion.dim, diffusion.noise_dim
    h, big_r = plan.h, plan.refinement
    h_fine = h / big_r
    if plan.initial is None:
        x_fine = np.zeros((n, d))
    else:
        if plan.initial.dim != d or plan.initial.size != n:
            raise ValueError("initial set shape does not match the plan")
        x_fine = plan.initial.points.copy()
    coarse = {kind: x_fine.copy() for kind in plan.schemes}
    series = {kind.value: np.zeros(plan.coarse_steps + 1) for kind in plan.schemes}

    root = RngStream(seed)
    sqrt_h_fine = np.sqrt(h_fine)
    for k in range(plan.coarse_steps):
        b_step = np.zeros((n, m))
        psi = np.zeros((n, m))
        for j in range(big_r):
            fine_idx = k * big_r + j
            db = sqrt_h_fine * (root.child(step=fine_idx, substream=_SUB_FINE)
                                .generator().standard_normal((n, m)))
            if plan.riemann == "left":
                psi += b_step * h_fine
            else:
                psi += (b_step + 0.5 * db) * h_fine
            x_fine = _em_with_increments(x_fine, diffusion, h_fine, db)
            b_step += db
        _check_coupled(x_fine, "reference", k + 1)

        for kind in plan.schemes:
            x = coarse[kind]
            if kind is SchemeKind.EM:
                x = _em_with_increments(x, diffusion, h, b_step)
            elif kind is SchemeKind.SRK_LD:
                xi, eta = reconstruct_srk_noise(b_step, psi, h)
                x = srk_ld_step(x, potential, h, xi, eta)
            else:
                levy_gen = root.child(step=k, substream=_SUB_LEVY_COARSE).generator()
                jmat = _levy_matrices(levy_gen, b_step, h, plan.levy_truncation)
                x = _srk_id_core(x, diffusion, h, b_step, jmat)
            _check_coupled(x, kind.value, k + 1)
            coarse[kind] = x
            gap = x - x_fine
            series[kind.value][k + 1] = float(np.mean(np.sum(gap * gap, axis=1)))
    return series


def fit_log_slope(h_values, errors) -> OrderFit:
    """Least-squares fit of ``log errors`` against ``log h_values``."""
    h_arr = np.asarray(h_values, dtype=np.float64)
    err = np.asarray(errors, dtype=np.float64)
    if h_arr.size < 3:
        raise ValueError("need at least 3 step sizes")
    if np.any(err <= 0) or np.any(h_arr <= 0):
        raise ValueError("step sizes and errors must be positive to fit a slope")
    logs_h, logs_m = np.log(h_arr), np.log(err)
    slope, intercept = np.polyfit(logs_h, logs_m, 1)
    pred = slope * logs_h + intercept
    ss_res = float(np.sum((logs_m - pred) ** 2))
    ss_tot = float(np.sum((logs_m - logs_m.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return OrderFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared,
                    points=tuple((float(h), float(m)) for h, m in zip(h_arr, err)))


def strong_order_fit(model, scheme, h_list, horizon: float, particles: int, seed: int,
                     refinement: int = 64, levy_truncation: int = 3000) -> OrderFit:
    """Slope of ``log MSE(horizon)`` against ``log h`` under synchronous coupling.

    The mean-square order of the scheme is ``slope / 2``.  Requires at least
    three step sizes spanning a factor of four or more.
    """
    scheme = SchemeKind(scheme)
    h_arr = np.asarray(sorted(h_list, reverse=True), dtype=np.float64)
    if h_arr.size < 3:
        raise ValueError("need at least 3 step sizes")
    if h_arr[0] / h_arr[-1] < 4.0 - 1e-12:
        raise ValueError("step sizes must span at least a 4x range")
    mses = []
    for h in h_arr:
        plan = CouplingPlan(model=model, schemes=(scheme,), h=float(h), horizon=horizon,
                            particles=particles, refinement=refinement,
                            levy_truncation=levy_truncation)
        series = coupled_mse(plan, derive_seed(seed, "order", scheme.value, float(h)))
        mses.append(series[scheme.value][-1])
    return fit_log_slope(h_arr, mses)


def _pooled_moments(snapshots):
    pts = np.concatenate([p.points for p in snapshots], axis=0)
    mean = pts.mean(axis=0)
    var = float(pts.var())
    per_snap = np.array([p.points.var() for p in snapshots])
    stderr = float(per_snap.std(ddof=1) / np.sqrt(len(per_snap))) if len(per_snap) > 1 else 0.0
    return mean, var, stderr


def _stationary_cell(potential, kind, h, particles, cell_seed, burn_in_factor,
                     measure_snapshots, spacing_time, reference_sampler):
    d = potential.dim
    burn = int(np.ceil(burn_in_factor / h))
    spacing = max(1, int(round(spacing_time / h)))
    steps = burn + measure_snapshots * spacing
    cfg = SchemeConfig(kind=kind, h=h, snapshot_stride=spacing)
    initial = ParticleSet(np.zeros((particles, d)))
    try:
        traj = simulate(initial, potential, cfg, steps, cell_seed)
    except ChainDivergedError:
        return [SweepRow(kind.value, h, "diverged", 1.0, 0.0, particles, cell_seed)]
    snaps = [p for s, p in traj.snapshots if s > burn]
    if reference_sampler is None:
        mean, var, stderr = _pooled_moments(snaps)
        w2 = float(mean @ mean) + d * (np.sqrt(var) - 1.0) ** 2
        return [
            SweepRow(kind.value, h, "var", var, stderr, particles, cell_seed),
            SweepRow(kind.value, h, "mean_sq", float(mean @ mean), 0.0, particles, cell_seed),
            SweepRow(kind.value, h, "w2sq_gauss", w2, 0.0, particles, cell_seed),
        ]
    half = particles // 2
    vals = []
    for idx, snap in enumerate(snaps):
        ref_stream = RngStream(derive_seed(cell_seed, "reference", idx))
        ref = reference_sampler(ref_stream, 2 * half)
        report = corrected_w2_squared(
            ParticleSet(snap.points[:half]), ParticleSet(snap.points[half:2 * half]),
            ParticleSet(ref[:half]), ParticleSet(ref[half:]))
        vals.append(report.corrected)
    vals = np.asarray(vals)
    stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return [SweepRow(kind.value, h, "w2sq_corrected", float(vals.mean()), stderr,
                     particles, cell_seed)]


def stationary_bias_sweep(potential: PotentialModel, schemes, h_list, particles: int,
                          seed: int, *, burn_in_factor: float = 10.0,
                          measure_snapshots: int = 20, spacing_time: float = 1.0,
                          reference_sampler=None, threads: int = 1) -> SweepResult:
    """Asymptotic-error sweep: run each (scheme, h) cell to stationarity and
    record its error metric.

    For a Gaussian target (no ``reference_sampler``) the rows report the
    pooled chain variance (``var``), squared mean norm (``mean_sq``), and the
    closed-form squared W2 of the fitted isotropic Gaussian to ``N(0, I)``
    (``w2sq_gauss``).  With a ``reference_sampler`` (a callable
    ``(stream, size) -> (size, d) array``), rows report the bias-corrected
    squared W2 between chain halves and two reference draws
    (``w2sq_corrected``).  A diverged cell contributes a ``diverged`` row
    instead of aborting the sweep.  Cells carry independent derived seeds, so
    evaluating them on ``threads`` workers cannot change any value.
    """
    cells = [(SchemeKind(s), float(h)) for s in schemes for h in h_list]

    def run(cell):
        kind, h = cell
        cell_seed = derive_seed(seed, "stationary", kind.value, h)
        return _stationary_cell(potential, kind, h, particles, cell_seed, burn_in_factor,
                                measure_snapshots, spacing_time, reference_sampler)

    if threads > 1 and len(cells) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, cells))
    else:
        chunks = [run(c) for c in cells]
    return SweepResult(rows=tuple(row for chunk in chunks for row in chunk))


def scheme_comparison(model, schemes, h: float, steps: int, particles: int, metrics,
                      seed: int, *, diffusion: DiffusionModel | None = None,
                      reference: ParticleSet | None = None, score=None,
                      stride: int = 10, levy_truncation: int = 3000) -> dict:
    """Metric series along trajectories of several schemes from a shared start.

    Returns ``{(scheme, metric): [(step, value), ...]}``.  The corrected-W2
    metric splits both the chain and the reference sample into halves;
    ``ksd_sq`` requires the target ``score`` callable.  When a separate
    ``diffusion`` is supplied, EM and SRK-ID drive it while SRK-LD keeps the
    potential ``model``.
    """
    schemes = [SchemeKind(s) for s in schemes]
    metrics = list(metrics)
    need_ref = {"w2sq_corrected", "energy_sq"} & set(metrics)
    if need_ref and reference is None:
        raise ValueError(f"metrics {sorted(need_ref)} require a reference sample")
    if "ksd_sq" in metrics and score is None:
        raise ValueError("ksd_sq requires the target score callable")
    d = model.dim
    initial = ParticleSet(np.zeros((particles, d)))
    half = particles // 2
    if reference is not None:
        ref_half = reference.size // 2
        ref_a = ParticleSet(reference.points[:ref_half])
        ref_b = ParticleSet(reference.points[ref_half:2 * ref_half])

    out = {}
    for kind in schemes:
        cfg = SchemeConfig(kind=kind, h=h, snapshot_stride=stride,
                           levy_truncation=levy_truncation)
        driven = model if (kind is SchemeKind.SRK_LD or diffusion is None) else diffusion
        traj = simulate(initial, driven, cfg, steps, derive_seed(seed, "compare", kind.value))
        for metric in metrics:
            series = []
            for s, snap in traj.snapshots:
                if metric == "w2sq_corrected":
                    if half != ref_half:
                        raise ValueError("corrected W2 needs equal chain/reference halves")
                    rep = corrected_w2_squared(
                        ParticleSet(snap.points[:half]),
                        ParticleSet(snap.points[half:2 * half]), ref_a, ref_b)
                    series.append((s, rep.corrected))
                elif metric == "energy_sq":
                    series.append((s, energy_distance_squared(snap, reference)))
                elif metric == "ksd_sq":
                    series.append((s, ksd_squared_imq(snap, score)))
                else:
                    raise ValueError(f"unknown metric {metric!r}")
            out[(kind.value, metric)] = series
    return out


def tail_mean_rows(comparison: dict, h: float, particles: int, seed: int,
                   tail: int = 5) -> SweepResult:
    """Collapse metric series to rows: mean and stderr over the last ``tail`` points."""
    rows = []
    for (scheme, metric), series in sorted(comparison.items()):
        vals = np.asarray([v for _, v in series[-tail:]])
        stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        rows.append(SweepRow(scheme, h, metric, float(vals.mean()), stderr, particles, seed))
    return SweepResult(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_sweep_csv(result: SweepResult, path) -> None:
    """Emit rows as ``scheme,h,metric,value,stderr,n,seed`` (sorted, LF endings)."""
    rows = sorted(result.rows, key=lambda r: (r.scheme, r.h, r.metric))
    with open(path, "w", newline="") as fh:
        fh.write("scheme,h,metric,value,stderr,n,seed\n")
        for r in rows:
            fh.write(f"{r.scheme},{_fmt(r.h)},{r.metric},{_fmt(r.value)},"
                     f"{_fmt(r.stderr)},{r.n},{r.seed}\n")


def write_series_csv(comparison: dict, h: float, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("scheme,h,metric,step,value\n")
        for (scheme, metric), series in sorted(comparison.items()):
            for step, value in series:
                fh.write(f"{scheme},{_fmt(h)},{metric},{step},{_fmt(value)}\n")


def write_metadata(path, config: dict, extra: dict | None = None) -> None:
    """JSON sidecar: the full configuration plus a content hash, so every run
    is self-describing."""
    canonical = json.dumps(config, sort_keys=True)
    payload = {
        "config": config,
        "content_hash": hashlib.sha256(canonical.encode()).hexdigest(),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
