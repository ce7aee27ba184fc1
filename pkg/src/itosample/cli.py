"""Command-line front end.

Subcommands: ``sample``, ``order``, ``metrics``, ``experiment``,
``dissipativity``, ``gen-blr``.  Configuration comes from a TOML or JSON file
(``--config``); ``--seed`` overrides the config seed, ``--out`` picks the
output directory, ``--threads`` bounds sweep parallelism (results are
independent of it).  Exit codes: 0 success, 2 config/IO error, 3 input-shape
error, 4 numerical divergence in a non-sweep command.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import harness, metrics, models
from .core import ParticleSet, RngStream, langevin_diffusion
from .schemes import ChainDivergedError, SchemeConfig, SchemeKind, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SHAPE = 3
EXIT_DIVERGED = 4

MODEL_KINDS = ("quadratic", "mixture", "blr", "pseudo_huber", "student_t")


class ConfigError(Exception):
    """Configuration problem; the message names the offending field."""


class ShapeError(Exception):
    """Input samples have incompatible shapes."""


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------

def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = p.read_bytes()
    if p.suffix == ".json":
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return tomllib.loads(raw.decode())
    except tomllib.TOMLDecodeError as exc:
        if p.suffix == ".toml":
            raise ConfigError(f"{path}: invalid TOML: {exc}") from None
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            raise ConfigError(f"{path}: not valid TOML or JSON") from None


def _require(cfg: dict, key: str, kinds, where: str):
    if key not in cfg:
        raise ConfigError(f"missing field '{where}{key}'")
    value = cfg[key]
    if kinds is not None and not isinstance(value, kinds):
        raise ConfigError(f"field '{where}{key}' has invalid type {type(value).__name__}")
    return value


def _positive(cfg: dict, key: str, where: str) -> float:
    value = _require(cfg, key, (int, float), where)
    if value <= 0:
        raise ConfigError(f"field '{where}{key}' must be positive, got {value}")
    return float(value)


def _seed_from(cfg: dict, override) -> int:
    if override is not None:
        return int(override)
    if "seed" not in cfg:
        raise ConfigError("missing field 'seed' (no wall-clock default; pass --seed "
                          "or set it in the config)")
    seed = cfg["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"field 'seed' must be a non-negative integer, got {seed!r}")
    return seed


def _resolve_model(cfg: dict):
    """Build (potential, diffusion_or_None) from a ``[model]`` table."""
    table = _require(cfg, "model", dict, "")
    kind = _require(table, "kind", str, "model.")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"field 'model.kind' names unknown model {kind!r}; "
                          f"expected one of {', '.join(MODEL_KINDS)}")
    if kind == "quadratic":
        dim = int(_positive(table, "dim", "model."))
        return models.quadratic_potential(dim), None
    if kind == "mixture":
        a = _require(table, "a", list, "model.")
        spec = models.GaussianMixtureSpec(a=np.asarray(a, dtype=np.float64))
        return models.gaussian_mixture_potential(spec), None
    if kind == "blr":
        if "path" in table:
            data = models.blr_load_csv(table["path"])
        else:
            n = int(_positive(table, "n", "model."))
            dim = int(_positive(table, "dim", "model."))
            gen_seed = int(_require(table, "data_seed", int, "model."))
            data = models.blr_generate(gen_seed, n, dim)
        return models.blr_potential(data), None
    if kind == "pseudo_huber":
        spec = models.PseudoHuberSpec(beta=_positive(table, "beta", "model."),
                                      gamma=_positive(table, "gamma", "model."),
                                      dim=int(_positive(table, "dim", "model.")))
        return models.pseudo_huber_potential(spec), models.pseudo_huber_diffusion(spec)
    # student_t (optional model)
    n = int(_positive(table, "n", "model."))
    dim = int(_positive(table, "dim", "model."))
    nu = int(table.get("nu", 2))
    gen_seed = int(_require(table, "data_seed", int, "model."))
    spec = models.student_t_generate(gen_seed, n, dim, nu=nu)
    return models.student_t_potential(spec), models.student_t_diffusion(spec)


def _model_for_scheme(kind: SchemeKind, potential, diffusion):
    if kind is SchemeKind.SRK_LD:
        return potential
    return diffusion if diffusion is not None else potential


def _scheme_list(cfg: dict):
    raw = cfg.get("schemes", cfg.get("scheme"))
    if raw is None:
        raise ConfigError("missing field 'schemes'")
    if isinstance(raw, str):
        raw = [raw]
    out = []
    for name in raw:
        try:
            out.append(SchemeKind(name))
        except ValueError:
            valid = ", ".join(k.value for k in SchemeKind)
            raise ConfigError(f"field 'schemes' names unknown scheme {name!r}; "
                              f"expected one of {valid}") from None
    return out


def _h_list(cfg: dict):
    raw = _require(cfg, "h", None, "")
    values = raw if isinstance(raw, list) else [raw]
    if not values:
        raise ConfigError("field 'h' must not be empty")
    out = []
    for v in values:
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"field 'h' entries must be positive numbers, got {v!r}")
        out.append(float(v))
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _initial_particles(cfg: dict, particles: int, dim: int) -> ParticleSet:
    warm = cfg.get("warm_start")
    if warm is None:
        return ParticleSet(np.zeros((particles, dim)))
    if not Path(warm).exists():
        raise ConfigError(f"field 'warm_start' file not found: {warm}")
    ps = metrics_read(warm)
    if ps.dim != dim:
        raise ShapeError(f"warm start has dimension {ps.dim}, model expects {dim}")
    if ps.size != particles:
        raise ShapeError(f"warm start has {ps.size} points, config asks for {particles}")
    return ps


# ---------------------------------------------------------------------------
# Particle CSV plumbing
# ---------------------------------------------------------------------------

def write_particles_csv(ps: ParticleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"x{j}" for j in range(ps.dim)) + "\n")
        for row in ps.points:
            fh.write(",".join(repr(v) for v in row) + "\n")


def metrics_read(path) -> ParticleSet:
    import io as _io
    text = Path(path).read_text()
    arr = np.loadtxt(_io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    return ParticleSet(arr)


def _write_snapshots_csv(traj, path) -> None:
    dim = traj.final.dim
    with open(path, "w", newline="") as fh:
        fh.write("step," + ",".join(f"x{j}" for j in range(dim)) + "\n")
        for step, ps in traj.snapshots:
            for row in ps.points:
                fh.write(f"{step}," + ",".join(repr(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_sample(cfg: dict, args) -> int:
    seed = _seed_from(cfg, args.seed)
    potential, diffusion = _resolve_model(cfg)
    kinds = _scheme_list(cfg)
    if len(kinds) != 1:
        raise ConfigError("'sample' takes exactly one scheme")
    h = _h_list(cfg)
    if len(h) != 1:
        raise ConfigError("'sample' takes exactly one step size")
    steps = _require(cfg, "steps", int, "")
    if steps < 0:
        raise ConfigError(f"field 'steps' must be >= 0, got {steps}")
    particles = int(_positive(cfg, "particles", ""))
    stride = int(cfg.get("snapshot_stride", max(1, steps)))
    model = _model_for_scheme(kinds[0], potential, diffusion)
    initial = _initial_particles(cfg, particles, potential.dim)

    scheme_cfg = SchemeConfig(kind=kinds[0], h=h[0], snapshot_stride=stride,
                              levy_truncation=int(cfg.get("levy_truncation", 3000)))
    traj = simulate(initial, model, scheme_cfg, steps, seed)

    out = _out_dir(args)
    write_particles_csv(traj.final, out / "final.csv")
    _write_snapshots_csv(traj, out / "snapshots.csv")
    harness.write_metadata(out / "metadata.json", _echo_config(cfg, seed, args))
    return EXIT_OK


def cmd_order(cfg: dict, args) -> int:
    seed = _seed_from(cfg, args.seed)
    potential, diffusion = _resolve_model(cfg)
    kinds = _scheme_list(cfg)
    if len(kinds) != 1:
        raise ConfigError("'order' takes exactly one scheme")
    h_list = _h_list(cfg)
    if len(h_list) < 3:
        raise ConfigError("'order' needs an h-list of at least 3 values")
    horizon = _positive(cfg, "horizon", "")
    particles = int(_positive(cfg, "particles", ""))
    refinement = int(cfg.get("refinement", 64))
    model = _model_for_scheme(kinds[0], potential, diffusion)

    fit = harness.strong_order_fit(model, kinds[0], h_list, horizon, particles, seed,
                                   refinement=refinement,
                                   levy_truncation=int(cfg.get("levy_truncation", 3000)))
    out = _out_dir(args)
    with open(out / "order.csv", "w", newline="") as fh:
        fh.write("h,mse\n")
        for h, mse in fit.points:
            fh.write(f"{h!r},{mse!r}\n")
    report = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
              "order": fit.mean_square_order}
    (out / "order.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    harness.write_metadata(out / "metadata.json", _echo_config(cfg, seed, args))
    return EXIT_OK


def _metric_report(cfg: dict, args) -> dict:
    names = cfg.get("metrics")
    if not names or not isinstance(names, list):
        raise ConfigError("missing field 'metrics' (list of metric names)")
    files = cfg.get("samples")
    if not files or not isinstance(files, list):
        raise ConfigError("missing field 'samples' (list of CSV paths)")
    for f in files:
        if not Path(f).exists():
            raise ConfigError(f"sample file not found: {f}")
    sets = [metrics_read(f) for f in files]
    if len({s.dim for s in sets}) > 1:
        raise ShapeError("sample files have mismatched dimensions")

    report = {}
    for name in names:
        if name == "w2sq":
            if len(sets) < 2:
                raise ConfigError("metric 'w2sq' needs two sample files")
            if sets[0].size != sets[1].size:
                raise ShapeError("w2sq needs equal sample sizes")
            report["w2sq"] = metrics.empirical_w2_squared(sets[0], sets[1])
        elif name == "w2sq_corrected":
            if len(sets) != 4:
                raise ConfigError("metric 'w2sq_corrected' needs four sample files "
                                  "(a, a_prime, b, b_prime)")
            if len({s.size for s in sets}) > 1:
                raise ShapeError("w2sq_corrected needs four equal-size samples")
            rep = metrics.corrected_w2_squared(*sets)
            report["w2sq_corrected"] = rep.corrected
            report["w2sq_vanilla"] = rep.vanilla
            report["w2sq_components"] = list(rep.components)
        elif name == "energy_sq":
            if len(sets) < 2:
                raise ConfigError("metric 'energy_sq' needs two sample files")
            report["energy_sq"] = metrics.energy_distance_squared(sets[0], sets[1])
        elif name == "ksd_sq":
            potential, _ = _resolve_model(cfg)
            if potential.dim != sets[0].dim:
                raise ShapeError(f"model dimension {potential.dim} != sample dimension "
                                 f"{sets[0].dim}")
            grad = potential.gradient
            report["ksd_sq"] = metrics.ksd_squared_imq(
                sets[0], lambda x: -np.asarray(grad(x)),
                c=float(cfg.get("ksd_c", 1.0)), beta=float(cfg.get("ksd_beta", -0.5)))
        else:
            raise ConfigError(f"field 'metrics' names unknown metric {name!r}")
    return report


def cmd_metrics(cfg: dict, args) -> int:
    report = _metric_report(cfg, args)
    out = _out_dir(args)
    (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_experiment(cfg: dict, args) -> int:
    seed = _seed_from(cfg, args.seed)
    mode = cfg.get("mode", "stationary")
    if mode not in ("stationary", "comparison"):
        raise ConfigError(f"field 'mode' must be 'stationary' or 'comparison', got {mode!r}")
    potential, diffusion = _resolve_model(cfg)
    kinds = _scheme_list(cfg)
    h_list = _h_list(cfg)
    particles = int(_positive(cfg, "particles", ""))
    out = _out_dir(args)

    if mode == "stationary":
        model_kind = cfg["model"]["kind"]
        sampler = None
        if model_kind == "mixture":
            spec = models.GaussianMixtureSpec(np.asarray(cfg["model"]["a"], dtype=np.float64))
            sampler = lambda stream, size: models.mixture_sample(spec, stream, size)
        result = harness.stationary_bias_sweep(
            potential, kinds, h_list, particles, seed,
            burn_in_factor=float(cfg.get("burn_in_factor", 10.0)),
            measure_snapshots=int(cfg.get("measure_snapshots", 20)),
            spacing_time=float(cfg.get("spacing_time", 1.0)),
            reference_sampler=sampler,
            threads=args.threads)
        harness.write_sweep_csv(result, out / "sweep.csv")
    else:
        if len(h_list) != 1:
            raise ConfigError("'comparison' mode takes exactly one step size")
        steps = _require(cfg, "steps", int, "")
        metric_names = cfg.get("metrics", ["w2sq_corrected"])
        reference = None
        if cfg.get("reference_path"):
            reference = metrics_read(cfg["reference_path"])
        elif cfg["model"]["kind"] == "mixture":
            spec = models.GaussianMixtureSpec(np.asarray(cfg["model"]["a"], dtype=np.float64))
            ref_size = int(cfg.get("reference_size", particles))
            reference = ParticleSet(models.mixture_sample(
                spec, RngStream(harness.derive_seed(seed, "reference")), ref_size))
        grad = potential.gradient
        comparison = harness.scheme_comparison(
            potential, kinds, h_list[0], steps, particles, metric_names, seed,
            diffusion=diffusion, reference=reference,
            score=lambda x: -np.asarray(grad(x)),
            stride=int(cfg.get("snapshot_stride", 10)))
        harness.write_series_csv(comparison, h_list[0], out / "series.csv")
        result = harness.tail_mean_rows(comparison, h_list[0], particles, seed,
                                        tail=int(cfg.get("tail", 5)))
        harness.write_sweep_csv(result, out / "sweep.csv")

    harness.write_metadata(out / "metadata.json", _echo_config(cfg, seed, args))
    return EXIT_OK


def cmd_dissipativity(cfg: dict, args) -> int:
    seed = _seed_from(cfg, args.seed)
    potential, diffusion = _resolve_model(cfg)
    if diffusion is None:
        diffusion = langevin_diffusion(potential)
    pairs = int(cfg.get("pairs", 10000))
    radius = float(cfg.get("radius", 5.0))
    margin = models.uniform_dissipativity_margin(diffusion, seed, pairs, radius)
    report = {"margin": margin, "pairs": pairs, "radius": radius}
    if cfg["model"]["kind"] == "pseudo_huber":
        spec = models.PseudoHuberSpec(beta=float(cfg["model"]["beta"]),
                                      gamma=float(cfg["model"]["gamma"]),
                                      dim=int(cfg["model"]["dim"]))
        report["analytic_bound"] = models.pseudo_huber_dissipativity_bound(spec)
    out = _out_dir(args)
    (out / "dissipativity.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_gen_blr(cfg: dict, args) -> int:
    seed = _seed_from(cfg, args.seed)
    n = int(_positive(cfg, "n", ""))
    d = int(_positive(cfg, "dim", ""))
    data = models.blr_generate(seed, n, d)
    out = _out_dir(args)
    models.blr_save_csv(data, out / "blr.csv")
    harness.write_metadata(out / "metadata.json", _echo_config(cfg, seed, args))
    return EXIT_OK


def _echo_config(cfg: dict, seed: int, args) -> dict:
    echo = dict(cfg)
    echo["seed"] = seed
    echo["threads"] = args.threads
    return echo


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "sample": cmd_sample,
    "order": cmd_order,
    "metrics": cmd_metrics,
    "experiment": cmd_experiment,
    "dissipativity": cmd_dissipativity,
    "gen-blr": cmd_gen_blr,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="itosample",
                                     description="Diffusion sampling toolkit")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="sweep-cell parallelism (results are independent of it)")
    args = parser.parse_args(argv)
    if args.threads is None:
        import os
        args.threads = os.cpu_count() or 1
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ChainDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
