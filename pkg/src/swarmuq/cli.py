"""Configuration-driven command line: run experiments, sweeps, reference solves.

Commands:
    swarmuq run CONFIG       integrate a preset/experiment, emit artifacts
    swarmuq converge CONFIG --sweep AXIS=V1,V2,...   error table vs a reference
    swarmuq oracle CONFIG    finite-difference reference for the homogeneous case

CONFIG is an INI-style file (key = value under [section] headers); see the
shipped presets for the full schema.  Uncertain scalars are written as
affine expressions in theta, e.g. ``gamma = 0.1 + 0.05*theta``.  Exit
codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import __version__
from .diagnostics import (
    compute_stats,
    convergence_error,
    expected_temperature,
    reconstruct_expected_density,
    velocity_field,
    write_density_csv,
    write_pgm,
    write_stats_csv,
    write_velocity_field_csv,
)
from .ensemble import InitialCondition, save_snapshot
from .errors import ConfigurationError, IntegrationBlowupError, SchemeFailureError
from .gpc import PolynomialFamily, TensorBasis2D, build_basis
from .models import CuckerSmaleParams, MorseSwarmParams, UncertainScalar
from .pde_oracle import VelocityGrid, bimodal_density, oracle_expected_temperature, sg_homogeneous_solve
from .solver import ModelSpec, SolverConfig, run

EXPERIMENTS = ("homogeneous", "cs_1d", "cs_2d", "mill_2d", "combined_2d")

_DEFAULT_IC_KIND = {
    "homogeneous": "bimodal_velocity_1d",
    "cs_1d": "bivariate_bimodal_1d",
    "cs_2d": "annulus_rotating_2d",
    "mill_2d": "annulus_rotating_2d",
    "combined_2d": "annulus_rotating_2d",
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_particles: int
    subsample_size: int
    order: int
    quad_points: int | None
    dt: float
    t_end: float
    seed: int
    family: str
    model_params: dict
    ic_kind: str
    ic_params: dict
    out_dir: str
    stride: int
    grid_min: float
    grid_max: float
    grid_bins: int
    pgm: bool
    integrator: str
    reference: str
    reference_order: int | None
    oracle_points: int
    oracle_v_min: float
    oracle_v_max: float
    source: str


def preset_path(name: str) -> Path:
    """Filesystem path of a shipped preset (name with or without .cfg)."""
    fname = name if name.endswith(".cfg") else name + ".cfg"
    path = resources.files("swarmuq").joinpath("presets", fname)
    if not path.is_file():
        raise ConfigurationError(f"no shipped preset named {name!r}")
    return Path(str(path))


def available_presets() -> list[str]:
    folder = resources.files("swarmuq").joinpath("presets")
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file (or shipped preset name)."""
    candidate = Path(path)
    if not candidate.exists():
        try:
            candidate = preset_path(str(path))
        except ConfigurationError:
            raise ConfigurationError(f"config file {path!r} not found")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        with open(candidate) as fh:
            parser.read_file(fh, source=str(candidate))
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {candidate}: {exc}") from exc

    def need(section, key, cast=str):
        if not parser.has_option(section, key):
            raise ConfigurationError(f"{candidate}: missing [{section}] {key}")
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{candidate}: bad value for [{section}] {key}: {raw!r}") from exc

    def opt(section, key, default, cast=str):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{candidate}: bad value for [{section}] {key}: {raw!r}") from exc

    as_int = lambda s: int(float(s))
    kind = need("experiment", "kind")
    if kind not in EXPERIMENTS:
        raise ConfigurationError(f"{candidate}: unknown experiment kind {kind!r} (choose from {EXPERIMENTS})")
    family = opt("experiment", "family", "legendre").lower()
    if family not in ("legendre", "hermite"):
        raise ConfigurationError(f"{candidate}: unknown family {family!r}")
    model_params = dict(parser.items("model")) if parser.has_section("model") else {}
    ic_kind = opt("initial", "kind", _DEFAULT_IC_KIND[kind])
    ic_params = {k: float(v) for k, v in (parser.items("initial") if parser.has_section("initial") else [])
                 if k != "kind"}
    cfg = ExperimentConfig(
        kind=kind,
        n_particles=need("experiment", "N", as_int),
        subsample_size=need("experiment", "S", as_int),
        order=need("experiment", "M", as_int),
        quad_points=opt("experiment", "Q", None, as_int),
        dt=need("experiment", "dt", float),
        t_end=need("experiment", "t_end", float),
        seed=opt("experiment", "seed", 0, as_int),
        family=family,
        model_params=model_params,
        ic_kind=ic_kind,
        ic_params=ic_params,
        out_dir=opt("output", "dir", "out"),
        stride=opt("output", "stride", 1, as_int),
        grid_min=opt("output", "grid_min", -2.0, float),
        grid_max=opt("output", "grid_max", 2.0, float),
        grid_bins=opt("output", "grid_bins", 50, as_int),
        pgm=opt("output", "pgm", False, lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
        integrator=opt("experiment", "integrator", "rk4"),
        reference=opt("converge", "reference", "particle"),
        reference_order=opt("converge", "reference_order", None, as_int),
        oracle_points=opt("oracle", "points", 801, as_int),
        oracle_v_min=opt("oracle", "v_min", -2.0, float),
        oracle_v_max=opt("oracle", "v_max", 2.0, float),
        source=str(candidate),
    )
    build_experiment(cfg)  # validate eagerly, before any artifact is written
    return cfg


def _model_scalar(cfg: ExperimentConfig, key: str, default=None) -> UncertainScalar:
    if key in cfg.model_params:
        return UncertainScalar.parse(cfg.model_params[key])
    if default is None:
        raise ConfigurationError(f"{cfg.source}: experiment {cfg.kind!r} needs [model] {key}")
    return UncertainScalar.parse(str(default))


def _model_float(cfg: ExperimentConfig, key: str, default=None) -> float:
    if key in cfg.model_params:
        try:
            return float(cfg.model_params[key])
        except ValueError as exc:
            raise ConfigurationError(f"{cfg.source}: [model] {key} must be a number") from exc
    if default is None:
        raise ConfigurationError(f"{cfg.source}: experiment {cfg.kind!r} needs [model] {key}")
    return float(default)


def _build_morse(cfg: ExperimentConfig) -> MorseSwarmParams:
    return MorseSwarmParams(
        a=_model_float(cfg, "a", 0.07),
        b=_model_float(cfg, "b", 0.05),
        C_A=_model_scalar(cfg, "c_a", "30 + theta"),
        C_R=_model_scalar(cfg, "c_r", "10 + theta"),
        ell_A=_model_float(cfg, "ell_a", 100.0),
        ell_R=_model_float(cfg, "ell_r", 3.0),
    )


def build_experiment(cfg: ExperimentConfig) -> tuple[InitialCondition, SolverConfig]:
    """Resolve a config into the initial condition and solver configuration."""
    family = PolynomialFamily(cfg.family)
    basis = build_basis(family, cfg.order, cfg.quad_points)
    if cfg.kind == "homogeneous":
        gamma = _model_scalar(cfg, "gamma", "0")
        if not (gamma.is_constant and gamma.c0 == 0.0):
            raise ConfigurationError(
                f"{cfg.source}: the homogeneous experiment requires gamma = 0, got {gamma}"
            )
        model = ModelSpec(basis=basis, alignment=CuckerSmaleParams(K=_model_scalar(cfg, "k", "1.0"), gamma=gamma))
    elif cfg.kind in ("cs_1d", "cs_2d"):
        model = ModelSpec(basis=basis, alignment=CuckerSmaleParams(
            K=_model_scalar(cfg, "k", "1.0"), gamma=_model_scalar(cfg, "gamma", "0.1 + 0.05*theta")))
    elif cfg.kind == "mill_2d":
        model = ModelSpec(basis=basis, morse=_build_morse(cfg))
    elif cfg.kind == "combined_2d":
        # Alignment rides the first random input, Morse strengths the second.
        tensor = TensorBasis2D(basis, build_basis(family, cfg.order, cfg.quad_points))
        morse = _build_morse(cfg)
        model = ModelSpec(basis=tensor, alignment=CuckerSmaleParams(
            K=_model_scalar(cfg, "k", "5.0"), gamma=_model_scalar(cfg, "gamma", "0.1 + 0.05*theta")),
            morse=morse)
    else:  # pragma: no cover - kinds validated at parse time
        raise ConfigurationError(f"unknown experiment kind {cfg.kind!r}")

    builders = {
        "bimodal_velocity_1d": InitialCondition.bimodal_velocity_1d,
        "bivariate_bimodal_1d": InitialCondition.bivariate_bimodal_1d,
        "annulus_rotating_2d": InitialCondition.annulus_rotating_2d,
    }
    if cfg.ic_kind not in builders:
        raise ConfigurationError(f"{cfg.source}: unknown initial condition {cfg.ic_kind!r}")
    try:
        ic = builders[cfg.ic_kind](**cfg.ic_params)
    except TypeError as exc:
        raise ConfigurationError(f"{cfg.source}: bad [initial] parameters: {exc}") from exc
    expected_dim = 2 if cfg.kind in ("cs_2d", "mill_2d", "combined_2d") else 1
    if ic.dim != expected_dim:
        raise ConfigurationError(
            f"{cfg.source}: experiment {cfg.kind!r} is {expected_dim}D but initial condition is {ic.dim}D"
        )
    solver_cfg = SolverConfig(
        n_particles=cfg.n_particles,
        dt=cfg.dt,
        t_end=cfg.t_end,
        subsample_size=cfg.subsample_size,
        seed=cfg.seed,
        model=model,
        integrator=cfg.integrator,
    )
    return ic, solver_cfg


def _manifest_lines(cfg: ExperimentConfig, command: str, threads: int | None, extra: dict | None = None) -> list[str]:
    lines = [f"swarmuq_version={__version__}", f"command={command}", f"threads={threads or 1}"]
    for fld in dataclasses.fields(cfg):
        value = getattr(cfg, fld.name)
        if isinstance(value, dict):
            for key, item in sorted(value.items()):
                lines.append(f"{fld.name}.{key}={item}")
        else:
            lines.append(f"{fld.name}={value}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    return lines


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, command: str, threads: int | None,
                    extra: dict | None = None) -> None:
    (out_dir / "manifest.txt").write_text("\n".join(_manifest_lines(cfg, command, threads, extra)) + "\n")


def _grid_axes(cfg: ExperimentConfig, n: int):
    return [(cfg.grid_min, cfg.grid_max, cfg.grid_bins)] * n


def _emit_densities(out_dir: Path, ens, cfg: ExperimentConfig) -> None:
    kinds = [("position", ens.dim), ("velocity", ens.dim)]
    if ens.dim == 1:
        kinds.append(("phase-space", 2))
    for kind, n_axes in kinds:
        grid = reconstruct_expected_density(ens, _grid_axes(cfg, n_axes), kind=kind)
        name = kind.replace("-", "_")
        write_density_csv(grid, out_dir / f"density_{name}.csv")
        if cfg.pgm and grid.values.ndim == 2:
            write_pgm(grid, out_dir / f"density_{name}.pgm")
    if ens.dim == 2:
        counts, means = velocity_field(ens, _grid_axes(cfg, 2))
        write_velocity_field_csv(counts, means, out_dir / "velocity_field.csv")


def cmd_run(config_path, out: str | None = None, seed: int | None = None,
            threads: int | None = None) -> int:
    try:
        cfg = load_config(config_path)
        if out is not None:
            cfg = dataclasses.replace(cfg, out_dir=out)
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        ic, solver_cfg = build_experiment(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    basis = solver_cfg.model.basis
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        records, final = run(ic, solver_cfg, observers=[lambda e: compute_stats(e, basis)],
                             observer_stride=cfg.stride)
    except (IntegrationBlowupError, SchemeFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    write_stats_csv([stats for _, (stats,) in records], out_dir / "stats.csv")
    _emit_densities(out_dir, final, cfg)
    save_snapshot(final, out_dir / "ensemble_final.csv", basis=basis, seed=cfg.seed)
    _write_manifest(out_dir, cfg, "run", threads)
    return 0


def _sweep_points(cfg: ExperimentConfig, axis: str, values: list[int]):
    for value in values:
        if axis == "M":
            yield value, dataclasses.replace(cfg, order=value, quad_points=None)
        elif axis == "S":
            yield value, dataclasses.replace(cfg, subsample_size=value)
        elif axis == "N":
            sub = min(cfg.subsample_size, value)
            yield value, dataclasses.replace(cfg, n_particles=value, subsample_size=sub)
        else:
            raise ConfigurationError(f"sweep axis must be M, S or N, got {axis!r}")


def _final_temperature(cfg: ExperimentConfig) -> float:
    ic, solver_cfg = build_experiment(cfg)
    _, final = run(ic, solver_cfg)
    return expected_temperature(final, solver_cfg.model.basis)


def _oracle_temperature(cfg: ExperimentConfig) -> float:
    grid = VelocityGrid(cfg.oracle_v_min, cfg.oracle_v_max, cfg.oracle_points)
    basis = build_basis(PolynomialFamily(cfg.family), cfg.order, cfg.quad_points)
    params = {k: v for k, v in cfg.ic_params.items() if k in ("sigma_v_sq", "mu")}
    f0 = bimodal_density(grid, **params)
    sol = sg_homogeneous_solve(f0, _model_scalar(cfg, "k", "1.0"), basis, grid, t_end=cfg.t_end)
    return oracle_expected_temperature(sol, basis)


def cmd_converge(config_path, sweep: str, out: str | None = None, seed: int | None = None,
                 threads: int | None = None) -> int:
    try:
        cfg = load_config(config_path)
        if out is not None:
            cfg = dataclasses.replace(cfg, out_dir=out)
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        axis, _, raw_values = sweep.partition("=")
        axis = axis.strip().upper()
        try:
            values = [int(float(v)) for v in raw_values.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"bad sweep values {raw_values!r}") from exc
        if not values:
            raise ConfigurationError(f"empty sweep {sweep!r}")
        points = list(_sweep_points(cfg, axis, values))
        if cfg.reference not in ("particle", "oracle"):
            raise ConfigurationError(f"reference must be 'particle' or 'oracle', got {cfg.reference!r}")
        if cfg.reference == "oracle" and cfg.kind != "homogeneous":
            raise ConfigurationError("the oracle reference is only available for the homogeneous experiment")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if cfg.reference == "oracle":
            reference = _oracle_temperature(cfg)
        else:
            ref_order = cfg.reference_order
            if ref_order is None:
                ref_order = max(values) + 4 if axis == "M" else cfg.order
            ref_cfg = dataclasses.replace(cfg, order=ref_order, quad_points=None,
                                          subsample_size=cfg.n_particles)
            reference = _final_temperature(ref_cfg)
        with ThreadPoolExecutor(max_workers=threads or 1) as pool:
            temps = list(pool.map(lambda pc: _final_temperature(pc[1]), points))
    except (IntegrationBlowupError, SchemeFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    with open(out_dir / "errors.csv", "w") as fh:
        fh.write("M,S,N,temperature,reference,abs_error,rel_error\n")
        for (value, point_cfg), temp in zip(points, temps):
            fh.write(
                f"{point_cfg.order},{point_cfg.subsample_size},{point_cfg.n_particles},"
                f"{temp!r},{reference!r},"
                f"{convergence_error(temp, reference)!r},"
                f"{convergence_error(temp, reference, relative=True)!r}\n"
            )
    _write_manifest(out_dir, cfg, f"converge --sweep {sweep}", threads,
                    extra={"reference_value": reference})
    return 0


def cmd_oracle(config_path, out: str | None = None, seed: int | None = None,
               threads: int | None = None) -> int:
    try:
        cfg = load_config(config_path)
        if out is not None:
            cfg = dataclasses.replace(cfg, out_dir=out)
        if cfg.kind != "homogeneous":
            raise ConfigurationError("the oracle command only applies to the homogeneous experiment")
        grid = VelocityGrid(cfg.oracle_v_min, cfg.oracle_v_max, cfg.oracle_points)
        basis = build_basis(PolynomialFamily(cfg.family), cfg.order, cfg.quad_points)
        params = {k: v for k, v in cfg.ic_params.items() if k in ("sigma_v_sq", "mu")}
        f0 = bimodal_density(grid, **params)
        strength = _model_scalar(cfg, "k", "1.0")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history = []
    stride = max(1, int(round(cfg.dt / (grid.dv ** 2)))) * max(cfg.stride, 1)
    try:
        sol = sg_homogeneous_solve(
            f0, strength, basis, grid, t_end=cfg.t_end,
            observers=[lambda s: history.append((s.time, oracle_expected_temperature(s, basis)))],
            observer_stride=stride,
        )
    except (ConfigurationError, SchemeFailureError) as exc:
        failure_code = 2 if isinstance(exc, ConfigurationError) else 3
        print(f"oracle failure: {exc}", file=sys.stderr)
        return failure_code
    with open(out_dir / "oracle_solution.csv", "w") as fh:
        for j in range(grid.n_points):
            fh.write(",".join(repr(float(x)) for x in sol.coeffs[:, j]) + "\n")
    meta = {
        "v_min": grid.v_min, "v_max": grid.v_max, "n_points": grid.n_points,
        "M": cfg.order, "family": cfg.family, "time": sol.time, "u": sol.u,
    }
    (out_dir / "oracle_solution.csv.meta.txt").write_text(
        "".join(f"{k}={v}\n" for k, v in meta.items()))
    with open(out_dir / "oracle_temperature.csv", "w") as fh:
        fh.write("t,temperature\n")
        for t, temp in history:
            fh.write(f"{t!r},{temp!r}\n")
    _write_manifest(out_dir, cfg, "oracle", threads)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="swarmuq", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"swarmuq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="config file path or shipped preset name")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker pool size for sweeps")

    common(sub.add_parser("run", help="integrate one experiment and emit artifacts"))
    conv = sub.add_parser("converge", help="sweep M, S or N and tabulate temperature errors")
    common(conv)
    conv.add_argument("--sweep", required=True, metavar="AXIS=V1,V2,...",
                      help="sweep axis and values, e.g. M=1,2,3,4,5")
    common(sub.add_parser("oracle", help="finite-difference reference for the homogeneous case"))

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, out=args.out, seed=args.seed, threads=args.threads)
    if args.command == "converge":
        return cmd_converge(args.config, sweep=args.sweep, out=args.out, seed=args.seed,
                            threads=args.threads)
    return cmd_oracle(args.config, out=args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
