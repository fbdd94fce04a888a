"""Batch command line: generate | simulate | calibrate | sweep | validate | plot.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from . import figures
from .geometry import (
    MeshIntegrityError,
    ResolutionError,
    ScrewSpec,
    SpecError,
    build_profile,
    export_stl,
    generate_surface_mesh,
    mesh_volume,
    section_properties,
    transform_for_build,
    validate_spec,
)
from .material import MaterialModel, material_from_dict, sensitivity_set
from .solver import (
    DEFAULT_ELEMENTS,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOL,
    CalibrationError,
    ConvergenceError,
    calibrate_kappa,
    discretize,
    run_protocol,
    sweep,
)
from .validation import (
    CurveError,
    emit_overlay_svg,
    experimental_average,
    load_curve_csv,
    metrics_csv_text,
    compute_metrics,
    render_report,
    resample,
    write_curve_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DATA = 0, 2, 3, 4
STANDARD_SWEEP = "standard-sweep"


class ConfigError(ValueError):
    pass


@dataclass
class SolverSettings:
    n_elements: int = DEFAULT_ELEMENTS
    tol: float = DEFAULT_TOL
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    bending_policy: str | None = None
    kappa_f: float | None = None
    calibration: tuple[float, float] | None = None  # (delta mm, force N)


@dataclass
class RunConfig:
    screw: ScrewSpec
    materials: list[MaterialModel] | None
    solver: SolverSettings | None
    out_dir: str = "out"
    mesh: dict = field(default_factory=dict)
    sweep: bool = False

    def require_solver(self) -> SolverSettings:
        if self.solver is None:
            raise ConfigError("config has no 'solver' block")
        if self.materials is None:
            raise ConfigError("config has no 'material' entry")
        return self.solver


def _solver_settings(block: dict) -> SolverSettings:
    known = {"n_elements", "tol", "max_iterations", "bending_policy", "kappa_f", "calibration"}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown solver fields: {sorted(unknown)}")
    has_kappa = block.get("kappa_f") is not None
    has_cal = block.get("calibration") is not None
    if has_kappa == has_cal:
        raise ConfigError("solver needs exactly one of 'kappa_f' or 'calibration'")
    cal = None
    if has_cal:
        c = block["calibration"]
        try:
            cal = (float(c.get("delta_mm", 6.0)), float(c["force_n"]))
        except (KeyError, TypeError, ValueError, AttributeError):
            raise ConfigError("calibration needs {'delta_mm': ..., 'force_n': ...}") from None
    s = SolverSettings(
        n_elements=int(block.get("n_elements", DEFAULT_ELEMENTS)),
        tol=float(block.get("tol", DEFAULT_TOL)),
        max_iterations=int(block.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
        bending_policy=block.get("bending_policy"),
        kappa_f=float(block["kappa_f"]) if has_kappa else None,
        calibration=cal,
    )
    if s.kappa_f is not None and not 0 < s.kappa_f <= 1:
        raise ConfigError(f"kappa_f must lie in (0, 1], got {s.kappa_f}")
    return s


CONFIG_SECTIONS = {"screw", "material", "solver", "mesh", "output"}


def parse_config(data: dict) -> RunConfig:
    """Turn the JSON object into a RunConfig; raises ConfigError or SpecError."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    if "screw" not in data:
        raise ConfigError("config has no 'screw' block")
    if not isinstance(data["screw"], dict):
        raise ConfigError("'screw' must be an object")
    try:
        screw = ScrewSpec.from_dict(data["screw"])
    except TypeError as exc:
        raise ConfigError(f"invalid screw block: {exc}") from None
    violations = validate_spec(screw)
    if violations:
        raise SpecError(violations)

    solver = _solver_settings(data["solver"]) if "solver" in data else None
    materials, is_sweep = None, False
    if "material" in data:
        mat = data["material"]
        policy = solver.bending_policy if solver and solver.bending_policy else None
        try:
            if mat == STANDARD_SWEEP:
                materials, is_sweep = sensitivity_set(policy or "use_e_z"), True
            elif isinstance(mat, dict):
                m = material_from_dict(mat)
                materials = [m.with_policy(policy) if policy else m]
            elif isinstance(mat, list):
                materials = [material_from_dict(x) for x in mat]
                if policy:
                    materials = [m.with_policy(policy) for m in materials]
            else:
                raise ConfigError(f"material must be an object, a list or '{STANDARD_SWEEP}'")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid material: {exc}") from None

    output = data.get("output", {})
    out_dir = output.get("dir", "out") if isinstance(output, dict) else None
    if not out_dir:
        raise ConfigError("output.dir must be a non-empty path")
    return RunConfig(screw, materials, solver, out_dir, data.get("mesh", {}), is_sweep)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config(data)


def _resolve_kappa(cfg: RunConfig) -> float:
    s = cfg.require_solver()
    if s.kappa_f is not None:
        return s.kappa_f
    delta, force = s.calibration
    return calibrate_kappa(
        cfg.screw, cfg.materials[0], delta, force, s.n_elements, tol=s.tol, max_iterations=s.max_iterations
    )


def _out(cfg: RunConfig, args) -> str:
    d = args.out or cfg.out_dir
    os.makedirs(d, exist_ok=True)
    return d


def _apply_elements(cfg: RunConfig, args):
    if getattr(args, "elements", None):
        cfg.require_solver().n_elements = args.elements


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    out = _out(cfg, args)
    mesh = generate_surface_mesh(
        cfg.screw,
        int(cfg.mesh.get("segments_per_turn", 64)),
        cfg.mesh.get("axial_segments"),
    )
    if args.orient is not None:
        mesh = transform_for_build(mesh, args.orient)
    volume = mesh_volume(mesh)
    stl_path = os.path.join(out, "screw.stl")
    export_stl(mesh, stl_path)

    csv_path = os.path.join(out, "sections.csv")
    lines = ["z_mm,outer_d_mm,inner_d_mm,region,area_mm2,second_moment_mm4"]
    for z, do, di, region in build_profile(cfg.screw).rows():
        area, inertia = section_properties(do, di)
        lines.append(f"{z!r},{do!r},{di!r},{region},{area!r},{inertia!r}")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"generate: {mesh.n_triangles} triangles, volume {volume:.3f} mm^3 -> {stl_path}, {csv_path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    _apply_elements(cfg, args)
    s = cfg.require_solver()
    if s.calibration is None:
        raise ConfigError("calibrate needs a solver.calibration target")
    kappa = _resolve_kappa(cfg)
    delta, force = s.calibration
    print(json.dumps({"kappa_f": kappa, "material": cfg.materials[0].label, "delta_mm": delta, "force_n": force}))
    return EXIT_OK


def _write_curves(results, out):
    paths = []
    for m, curve in results:
        path = os.path.join(out, f"{m.slug}.csv")
        write_curve_csv(curve, path)
        paths.append(path)
    return paths


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    _apply_elements(cfg, args)
    s = cfg.require_solver()
    if cfg.sweep or len(cfg.materials) != 1:
        raise ConfigError("simulate takes a single material; use 'sweep' for several")
    kappa = _resolve_kappa(cfg)
    m = cfg.materials[0]
    curve = run_protocol(discretize(cfg.screw, m, kappa, s.n_elements), m.label, s.tol, s.max_iterations)
    out = _out(cfg, args)
    (path,) = _write_curves([(m, curve)], out)
    print(f"simulate: {m.label} kappa_f={kappa:.6g} F({curve.displacement[-1]:g} mm)={curve.force[-1]:.4f} N -> {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    _apply_elements(cfg, args)
    s = cfg.require_solver()
    kappa = _resolve_kappa(cfg)
    results = sweep(cfg.screw, cfg.materials, kappa, s.n_elements, s.tol, s.max_iterations)
    out = _out(cfg, args)
    _write_curves(results, out)
    curves = [c for _, c in results]
    emit_overlay_svg(curves, os.path.join(out, "overlay.svg"))
    figures.plot_overlay(curves, os.path.join(out, "overlay.png"))
    finals = ", ".join(f"{m.label}:{c.force[-1]:.3f}" for m, c in results)
    print(f"sweep: kappa_f={kappa:.6g}, F(6 mm) [N] {finals} -> {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    fe = [load_curve_csv(p) for p in args.fe]
    runs = [load_curve_csv(p) for p in args.exp]
    exp = experimental_average(runs)
    try:
        reports = [compute_metrics(resample(c, exp.displacement), exp, c.label) for c in fe]
    except CurveError:
        raise
    except ValueError as exc:
        raise CurveError(str(exc)) from None
    text = render_report(reports)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        stem = os.path.splitext(args.out)[0]
        with open(stem + "_metrics.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(metrics_csv_text(reports))
        figures.plot_metrics(reports, stem + "_metrics.png")
        figures.plot_overlay(fe, stem + "_overlay.png", experimental=exp)
        print(f"validate: {len(reports)} rows, {len(runs)} experimental runs -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    curves = [load_curve_csv(p) for p in args.curves]
    emit_overlay_svg(curves, args.out)
    png = os.path.splitext(args.out)[0] + ".png"
    figures.plot_overlay(curves, png)
    print(f"plot: {len(curves)} curves -> {args.out}, {png}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexscrew", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the screw STL and section properties")
    g.add_argument("config")
    g.add_argument("--orient", type=float, metavar="DEG", help="tilt the axis DEG degrees above the build plate")
    g.add_argument("--out", help="output directory (overrides output.dir)")
    g.set_defaults(func=cmd_generate)

    for name, func, text in (
        ("simulate", cmd_simulate, "force-displacement curve for one material"),
        ("calibrate", cmd_calibrate, "fit the flexure knock-down factor"),
        ("sweep", cmd_sweep, "curves for every material plus overlay"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config")
        sp.add_argument("--elements", type=int, metavar="N", help="number of beam elements")
        if name != "calibrate":
            sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.set_defaults(func=func)

    v = sub.add_parser("validate", help="compare model curves with experimental runs")
    v.add_argument("--fe", nargs="+", required=True, metavar="CSV")
    v.add_argument("--exp", nargs="+", required=True, metavar="CSV")
    v.add_argument("--out", help="report file (default: stdout)")
    v.set_defaults(func=cmd_validate)

    pl = sub.add_parser("plot", help="overlay curve CSVs as SVG (and PNG)")
    pl.add_argument("curves", nargs="+", metavar="CSV")
    pl.add_argument("--out", required=True, help="SVG path")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SpecError, ResolutionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        summary = exc.trace.summary() if exc.trace is not None else ""
        print(f"solver error: {exc}\n  trace: {summary}", file=sys.stderr)
        return EXIT_SOLVER
    except CalibrationError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CurveError, MeshIntegrityError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
