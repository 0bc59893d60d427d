"""Command-line interface: ``nagumofem {mesh,diagnose,solve,converge,report}``.

Exit codes: 0 success, 2 invalid input (parse, validation, I/O),
3 mesh satisfies only the non-obtuse condition, 4 neither angle condition,
5 run aborted by strict condition enforcement.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import ConfigError, nagumo
from .experiments import (
    builtin_diffusion,
    convergence_study,
    get_problem,
    write_point_cloud,
    write_ppm_heatmap,
    write_svg_heatmap,
)
from .geometry import DiffusionField, d_acute
from .linalg import IterativeSolverError
from .mesh import (
    ACUTE8_MAX_ANGLE_DEG,
    MeshError,
    MeshVariant,
    StructuredMeshKind,
    generate_structured_mesh,
    load_mesh,
    save_mesh,
)
from .schemes import ConditionViolationError, SchemeConfig, run_simulation, write_step_log

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ANOAC_ONLY = 3
EXIT_NO_ANGLE_CONDITION = 4
EXIT_STRICT_ABORT = 5

OUTPUT_ENV = "NAGUMOFEM_OUTPUT_DIR"
FORMATS = ("csv", "json", "svg", "ppm")

log = logging.getLogger("nagumofem")


class UsageError(Exception):
    pass


def _rect(text):
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise UsageError(f"bad rectangle {text!r}; expected x0,x1,y0,y1") from None
    if len(vals) != 4:
        raise UsageError(f"bad rectangle {text!r}; expected x0,x1,y0,y1")
    return vals


def _field(name: str | None, tensor: str | None) -> DiffusionField:
    if tensor:
        try:
            vals = [float(v) for v in tensor.split(",")]
        except ValueError:
            raise UsageError(f"bad tensor {tensor!r}") from None
        n = int(round(math.sqrt(len(vals))))
        if n * n != len(vals):
            raise UsageError("tensor needs d*d comma-separated entries")
        return DiffusionField(np.reshape(vals, (n, n)), name="custom")
    return builtin_diffusion(name or "ex1")


# -- run configuration ----------------------------------------------------


@dataclass
class RunConfig:
    """Everything ``solve`` needs; built from an INI file plus flag overrides."""

    problem: str = "ex2"
    mesh_kind: str | None = "right45"
    nx: int = 160
    ny: int | None = None
    rect: tuple | None = None
    mesh_file: str | None = None
    treatment: str = "EM"
    lumping: str = "consistent"
    dt: float = 0.1
    T: float | None = None
    a: float = 0.1
    enforce: str = "off"
    output: str = "output"
    formats: tuple = ("csv", "json")
    verbosity: str = "WARNING"
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if (self.mesh_kind is None) == (self.mesh_file is None):
            raise UsageError("exactly one mesh source (generator kind or mesh file) is required")
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise UsageError(f"unknown output formats {sorted(bad)}")


_INI_KEYS = {
    ("problem", "name"): "problem",
    ("mesh", "kind"): "mesh_kind",
    ("mesh", "nx"): "nx",
    ("mesh", "ny"): "ny",
    ("mesh", "rect"): "rect",
    ("mesh", "file"): "mesh_file",
    ("scheme", "treatment"): "treatment",
    ("scheme", "lumping"): "lumping",
    ("scheme", "dt"): "dt",
    ("scheme", "t"): "T",
    ("scheme", "a"): "a",
    ("scheme", "enforce"): "enforce",
    ("output", "directory"): "output",
    ("output", "formats"): "formats",
    ("output", "verbosity"): "verbosity",
}

_CONVERT = {
    "nx": int,
    "ny": int,
    "dt": float,
    "T": float,
    "a": float,
    "rect": _rect,
    "formats": lambda s: tuple(f.strip() for f in str(s).split(",") if f.strip()),
}


def _set(cfg: RunConfig, key: str, value) -> None:
    try:
        setattr(cfg, key, _CONVERT.get(key, str)(value))
    except (TypeError, ValueError):
        raise UsageError(f"bad value {value!r} for {key}") from None


def load_run_config(path) -> RunConfig:
    """Read an INI file with [problem], [mesh], [scheme] and [output] sections."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    cfg = RunConfig()
    if parser.has_option("mesh", "file"):
        cfg.mesh_kind = None
    for section in parser.sections():
        for key, value in parser.items(section):
            target = _INI_KEYS.get((section, key))
            if target is None:
                raise UsageError(f"unknown config key [{section}] {key}")
            _set(cfg, target, value)
    return cfg


# -- helpers --------------------------------------------------------------


def _angle_exit(report) -> int:
    if report.aaac_holds:
        return EXIT_OK
    return EXIT_ANOAC_ONLY if report.anoac_holds else EXIT_NO_ANGLE_CONDITION


def _output_dir(flag: str | None, configured: str | None = None) -> Path:
    out = flag or os.environ.get(OUTPUT_ENV) or configured or "output"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _dump_json(obj, target) -> None:
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default, allow_nan=True)
        fh.write("\n")


def _build_mesh(kind, nx, ny, rect, mesh_file, default_rect=None):
    if mesh_file:
        with open(mesh_file, encoding="utf-8") as fh:
            return load_mesh(fh)
    rect = rect if rect is not None else (default_rect or (0.0, 1.0, 0.0, 1.0))
    return generate_structured_mesh(StructuredMeshKind(MeshVariant(kind), nx, ny or nx, rect))


# -- subcommands ----------------------------------------------------------


def cmd_mesh(args) -> int:
    if args.import_path:
        with open(args.import_path, encoding="utf-8") as fh:
            mesh = load_mesh(fh)
    else:
        mesh = _build_mesh(args.kind, args.nx, args.ny, args.rect, None)
    print(f"N_v = {mesh.n_vertices}")
    print(f"N_e = {mesh.n_elements}")
    print(f"N_vi = {mesh.n_interior}")
    if args.kind == "acute8" and not args.import_path:
        rep = d_acute(mesh, DiffusionField.identity(mesh.dim))
        print(f"max angle of the unit split = {ACUTE8_MAX_ANGLE_DEG:.4f} deg")
        print(f"d_acute (D = I) = {rep.d_acute:.6g}  acute = {rep.aaac_holds}")
    if args.output:
        save_mesh(mesh, args.output)
        print(f"wrote {args.output}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    default_rect = None if args.tensor else get_problem(args.diffusion).rect
    mesh = _build_mesh(args.kind, args.nx, args.ny, args.rect, args.mesh, default_rect)
    rep = d_acute(mesh, _field(args.diffusion, args.tensor))
    out = rep.to_dict()
    out["n_elements"] = mesh.n_elements
    print(json.dumps(out, indent=2, default=_json_default))
    return _angle_exit(rep)


def _run_config_from_args(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    overrides = {
        "problem": args.problem,
        "nx": args.nx,
        "ny": args.ny,
        "rect": args.rect,
        "treatment": args.treatment,
        "lumping": args.lumping,
        "dt": args.dt,
        "T": args.T,
        "a": args.a,
        "enforce": args.enforce,
        "formats": args.formats,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.mesh is not None:
        cfg.mesh_file, cfg.mesh_kind = args.mesh, None
    elif args.kind is not None:
        cfg.mesh_kind, cfg.mesh_file = args.kind, None
    cfg.output = str(_output_dir(args.output, cfg.output if args.config else None))
    cfg.validate()
    return cfg


def cmd_solve(args) -> int:
    rc = _run_config_from_args(args)
    logging.getLogger().setLevel(rc.verbosity.upper() if args.verbose == 0 else logging.INFO)
    problem = get_problem(rc.problem)
    problem.rf = nagumo(rc.a)
    mesh = _build_mesh(rc.mesh_kind, rc.nx, rc.ny, rc.rect, rc.mesh_file, problem.rect)
    T = problem.T if rc.T is None else rc.T
    scheme = SchemeConfig(rc.treatment, rc.lumping, problem.rf, rc.dt, rc.enforce)
    out = Path(rc.output)
    try:
        state, summary = run_simulation(problem, mesh, scheme, T)
    except ConditionViolationError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        if "json" in rc.formats:
            _dump_json({"aborted": True, "step": exc.step, "dt": exc.dt, "window": exc.window.to_dict()}, out / "summary.json")
        return EXIT_STRICT_ABORT
    summary["problem"] = problem.name
    summary["n_elements"] = mesh.n_elements
    summary["n_vertices"] = mesh.n_vertices
    if problem.metadata:
        summary["metadata"] = problem.metadata
    if "csv" in rc.formats:
        write_step_log(state.history, out / "steps.csv")
        write_point_cloud(mesh, state.u, out / "solution.csv")
    if "json" in rc.formats:
        _dump_json(summary, out / "summary.json")
    if "svg" in rc.formats:
        write_svg_heatmap(mesh, state.u, out / "solution.svg")
    if "ppm" in rc.formats:
        write_ppm_heatmap(mesh, state.u, out / "solution.ppm")
    print(
        f"{problem.name} {scheme.treatment.value}/{scheme.lumping.value} dt={scheme.dt:g} T={T:g}: "
        f"u_min={summary['u_min']:.6g} u_max={summary['u_max']:.6g} "
        f"(final {summary['final_u_min']:.6g}, {summary['final_u_max']:.6g})"
    )
    return EXIT_OK


def cmd_converge(args) -> int:
    levels = args.levels
    if levels is None:
        levels = [0.5, 0.25, 0.125, 0.0625] if args.mode == "time" else [25, 50, 100, 200]
    if len(levels) < 2:
        raise UsageError("need >= 2 levels for a convergence study")
    problem = get_problem(args.problem)
    dt = args.dt if args.dt is not None else (levels[0] if args.mode == "time" else 1e-3)
    T = args.T if args.T is not None else (10.0 if args.mode == "time" else 0.25)
    cfg = SchemeConfig(args.treatment, args.lumping, problem.rf, dt)
    mesh = problem.mesh(args.kind, args.nx) if args.mode == "time" else None
    table = convergence_study(problem, cfg, args.mode, levels, T, mesh=mesh, variant=args.kind,
                               workers=args.workers, reference=args.reference)
    out = _output_dir(args.output)
    table.to_csv(out / f"convergence_{args.mode}.csv")
    table.to_json(out / f"convergence_{args.mode}.json")
    for r in table.rows:
        rate = "" if r.rate is None else f"{r.rate:.3f}"
        print(f"{r.parameter:12.6g} {r.n_elements:9d} {r.error:.6e} {rate}")
    return EXIT_OK


def cmd_report(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory")
    found = False
    summary = directory / "summary.json"
    if summary.exists():
        found = True
        data = json.loads(summary.read_text(encoding="utf-8"))
        if data.get("aborted"):
            print(f"run aborted at step {data['step']} (dt={data['dt']:g})")
        else:
            for key in ("problem", "treatment", "lumping", "dt", "T", "steps", "n_elements",
                        "u_min", "u_max", "final_u_min", "final_u_max", "d_acute", "wall_time"):
                if key in data:
                    print(f"{key:>12}: {data[key]}")
            print(f"{'violations':>12}: {len(data.get('condition_violations', []))}")
    for path in sorted(directory.glob("convergence_*.json")):
        found = True
        table = json.loads(path.read_text(encoding="utf-8"))
        print(f"{table['mode']} convergence ({table['treatment']}):")
        for r in table["rows"]:
            rate = "" if r["rate"] is None else f"{r['rate']:.3f}"
            print(f"  {r['parameter']:12.6g} {r['error']:.6e} {rate}")
    if not found:
        raise UsageError(f"no summary.json or convergence tables in {directory}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------


def _add_mesh_source(p, default_kind=None):
    p.add_argument("--kind", choices=[v.value for v in MeshVariant], default=default_kind)
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--rect", type=_rect_arg, default=None, help="x0,x1,y0,y1")


def _rect_arg(text):
    try:
        return _rect(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _formats_arg(text):
    return tuple(f.strip() for f in text.split(",") if f.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nagumofem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate or import a mesh")
    _add_mesh_source(p, "right45")
    p.add_argument("--import", dest="import_path", default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_mesh, nx=None)

    p = sub.add_parser("diagnose", help="anisotropic angle-condition report")
    _add_mesh_source(p, "right45")
    p.add_argument("--mesh", default=None, help="mesh file (overrides the generator)")
    p.add_argument("--diffusion", choices=["ex1", "ex2", "ex3"], default="ex1")
    p.add_argument("--tensor", default=None, help="constant tensor entries, row major")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("solve", help="run a simulation")
    p.add_argument("--config", default=None)
    p.add_argument("--problem", choices=["ex1", "ex2", "ex3"], default=None)
    _add_mesh_source(p)
    p.add_argument("--mesh", default=None)
    p.add_argument("--treatment", default=None)
    p.add_argument("--lumping", choices=["consistent", "lumped"], default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--enforce", choices=["off", "warn", "strict"], default=None)
    p.add_argument("--formats", type=_formats_arg, default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge", help="convergence study for ex1")
    p.add_argument("--problem", choices=["ex1"], default="ex1")
    p.add_argument("--mode", choices=["time", "space"], required=True)
    p.add_argument("--levels", type=lambda s: [float(v) for v in s.split(",")], default=None)
    p.add_argument("--kind", choices=[v.value for v in MeshVariant], default="right45")
    p.add_argument("--nx", type=int, default=100, help="mesh size for time mode")
    p.add_argument("--treatment", default="EM")
    p.add_argument("--lumping", choices=["consistent", "lumped"], default="consistent")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--reference", choices=["exact", "fine"], default="exact",
                   help="time mode: measure against the exact solution or a fine-step run")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("report", help="summarize an output directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report)
    return parser


def _join_negative_values(argv):
    # "--rect -100,100,..." would otherwise be read as an unknown option
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--rect", "--tensor", "--levels"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(sys.argv[1:] if argv is None else list(argv)))
    except SystemExit as exc:  # argparse reports bad flags with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "nx", None) is None and args.command in ("mesh", "diagnose", "solve"):
        args.nx = None if args.command == "solve" else (10 if args.command == "mesh" else 160)
    try:
        return args.func(args)
    except (UsageError, ConfigError, MeshError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IterativeSolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
