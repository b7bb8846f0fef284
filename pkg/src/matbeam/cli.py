"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from .experiment import (
    SWEEP_COLUMNS,
    TRAJECTORY_COLUMNS,
    ConfigError,
    ExperimentConfig,
    InvariantError,
    default_config_path,
    load_config,
    run_experiment,
    setup_base_station,
    sweep_row,
    trajectory_rows,
    write_report,
)
from .materials import (
    TABLE_ANGLES_DEG,
    RlModel,
    UnknownMaterialError,
    build_rl_database,
    builtin_materials,
    load_materials,
)
from .raytrace import trace_pair
from .scene import SceneError, save_scene
from .stl import import_stl, load_sidecar
from .sweep import simulate_sweep
from .tables import write_rows

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("matbeam")


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _common() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags sit before or after the subcommand without the
    # subparser's defaults clobbering values given to the main parser.
    p = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    p.add_argument("--config", type=Path, default=s, help="experiment JSON (default: bundled office)")
    p.add_argument("--scene", type=Path, default=s, help="scene file overriding the config's")
    p.add_argument("--freq", type=_positive, default=s, help="carrier frequency in GHz")
    p.add_argument("--out", type=Path, default=s, help="output file or directory")
    p.add_argument("--format", choices=("csv", "json"), default=s, help="output format")
    p.add_argument("--seed", type=int, default=s, help="reserved; runs are deterministic")
    p.add_argument("-v", "--verbose", action="store_true", default=s)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="matbeam", description="Material-aware beam sweep simulator.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rl-table", parents=[common], help="reflection-loss database")
    p.add_argument("--materials", type=lambda s: [x.strip() for x in s.split(",") if x.strip()],
                   help="comma-separated material names (default: all)")
    p.add_argument("--angles", type=_floats, nargs="+", help="incident angles in degrees")
    p.add_argument("--material-db", type=Path, help="CSV or JSON material parameters")
    p.add_argument("--polarization", choices=("mixed", "te"), default="mixed")
    p.add_argument("--roughness", type=float, default=None, help="rms roughness in metres")
    p.add_argument("--figure", type=Path, help="also plot RL curves to this PNG")

    for name, help_ in (("trace", "trajectories of one BS-UE pair"), ("sweep", "simulate one beam sweep")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--bs", required=True)
        p.add_argument("--ue", required=True)
        if name == "sweep":
            p.add_argument("--plan", choices=("priority", "exhaustive"), default="priority")
            p.add_argument("--threshold", type=float, help="RSRP threshold in dBm (-inf allowed)")
            p.add_argument("--figure", type=Path, help="plot the beam map and sweep path")

    p = sub.add_parser("experiment", parents=[common], help="run every BS-UE pair")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("import-stl", parents=[common], help="convert STL + material map to a scene")
    p.add_argument("stl", type=Path)
    p.add_argument("--map", type=Path, required=True, help="JSON sidecar: solid name -> material")
    p.add_argument("--no-merge", action="store_true", help="keep one surface per facet")
    p.add_argument("--material-db", type=Path)
    return parser


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _precision(args) -> int | None:
    return None if _opt(args, "format", "csv") == "json" else 2


def _emit(args, text: str) -> None:
    out = _opt(args, "out")
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _csv_text(header, rows, precision) -> str:
    import io

    buf = io.StringIO()
    write_rows(buf, header, rows, precision)
    return buf.getvalue()


def _records(header, rows) -> list[dict]:
    return [dict(zip(header, r)) for r in rows]


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _config(args) -> ExperimentConfig:
    config = load_config(_opt(args, "config") or default_config_path())
    changes = {}
    if _opt(args, "scene") is not None:
        if not Path(args.scene).is_file():
            raise ConfigError(f"scene file {args.scene} does not exist")
        changes["scene_path"] = Path(args.scene)
    if _opt(args, "freq") is not None:
        changes["f_c"] = args.freq
    return config.replace(**changes) if changes else config


def _pair(config: ExperimentConfig, args):
    try:
        return config.bs(args.bs), config.ue(args.ue)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def cmd_rl_table(args) -> int:
    if _opt(args, "config") is not None and args.material_db is None:
        materials = load_config(args.config).materials()
    elif args.material_db is not None:
        materials = load_materials(args.material_db)
    else:
        materials = builtin_materials()
    if args.materials:
        known = {m.name: m for m in materials}
        missing = [n for n in args.materials if n not in known]
        if missing:
            raise UsageError(f"unknown material(s) {missing}; known: {list(known)}")
        materials = [known[n] for n in args.materials]
    angles = TABLE_ANGLES_DEG
    if args.angles:
        angles = sorted({a for group in args.angles for a in group})
        bad = [a for a in angles if not 0 <= a < 90]
        if bad:
            raise UsageError(f"angles must lie in [0, 90): {bad}")
    try:
        model = RlModel(args.polarization, 6e-5 if args.roughness is None else args.roughness)
        if args.polarization == "te" and args.roughness is None:
            model = RlModel.te()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    db = build_rl_database(materials, angles, _opt(args, "freq", 100.0), model)
    header = ("material", "angle_deg", "rl_db")
    if _opt(args, "format") == "json":
        _emit(args, _json_text(_records(header, db.rows())))
    else:
        _emit(args, _csv_text(header, db.rows(), 2))
    if args.figure:
        from .plotting import plot_rl_curves

        plot_rl_curves(db, args.figure)
    return EXIT_OK


def cmd_trace(args) -> int:
    config = _config(args)
    bs, ue = _pair(config, args)
    paths = trace_pair(config.scene(), bs.position, ue.position, config.f_c, config.materials(), config.rl_model)
    rows = list(trajectory_rows(bs.id, ue.id, paths))
    if _opt(args, "format") == "json":
        _emit(args, _json_text(_records(TRAJECTORY_COLUMNS, rows)))
    else:
        _emit(args, _csv_text(TRAJECTORY_COLUMNS, rows, 2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _config(args)
    bs, ue = _pair(config, args)
    scene = config.scene()
    setup = setup_base_station(config, bs, scene, config.database())
    plan = setup.priority if args.plan == "priority" else setup.exhaustive
    paths = trace_pair(scene, bs.position, ue.position, config.f_c, config.materials(), config.rl_model)
    threshold = config.threshold if args.threshold is None else args.threshold
    outcome = simulate_sweep(plan, paths, setup.codebook, bs.position, config.budget, threshold)
    row = sweep_row(bs.id, ue.id, args.plan, outcome, setup.codebook.size)
    visited = plan.ordered_beams[: outcome.sweeps_used]
    steps = [(k, b.az, b.el, plan.group_of(k - 1)) for k, b in enumerate(visited, start=1)]
    step_header = ("step", "az_index", "el_index", "group")
    if _opt(args, "format") == "json":
        _emit(args, _json_text({"outcome": dict(zip(SWEEP_COLUMNS, row)), "visited": _records(step_header, steps)}))
    else:
        _emit(args, _csv_text(SWEEP_COLUMNS, [row], 2) + "\n" + _csv_text(step_header, steps, 2))
    if args.figure:
        from .plotting import plot_beam_map

        markers = []
        for k, t in enumerate(paths, start=1):
            target = t.rx if t.reflection_point is None else t.reflection_point
            beam = setup.codebook.nearest(*setup.codebook.to_local(target - bs.position))
            if beam is not None:
                markers.append((beam, str(k)))
        plot_beam_map(setup.codebook, setup.hits, scene, args.figure, markers, visited,
                      title=f"{bs.id} to {ue.id}, {args.plan} plan")
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _config(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    out = _opt(args, "out") or config.output_dir or Path("matbeam-run")
    report = run_experiment(config, jobs=args.jobs)
    write_report(report, out, figures=not args.no_figures)
    summary = report.summary()
    if _opt(args, "format") == "json":
        sys.stdout.write(_json_text(summary))
    else:
        pri = summary["priority"]
        print(
            f"{summary['n_pairs']} pairs, {summary['n_reflected_trajectories']} reflected trajectories; "
            f"priority mean sweeps {pri['mean_sweeps']:.2f} of {summary['codebook_size']} "
            f"({pri['mean_latency_reduction_pct']:.2f}% reduction); "
            f"best reflected path on {summary['top_priority_material']} in "
            f"{100 * summary['best_reflected_on_top_material_fraction']:.2f}% of pairs; wrote {out}"
        )
    return EXIT_OK


def cmd_import_stl(args) -> int:
    mapping = load_sidecar(args.map)
    scene = import_stl(args.stl, mapping, merge=not args.no_merge)
    materials = load_materials(args.material_db) if args.material_db else builtin_materials()
    scene.check_materials(materials)
    if _opt(args, "out") is None:
        sys.stdout.write(json.dumps(scene.to_json(), indent=2) + "\n")
    else:
        save_scene(scene, args.out)
    return EXIT_OK


COMMANDS = {
    "rl-table": cmd_rl_table,
    "trace": cmd_trace,
    "sweep": cmd_sweep,
    "experiment": cmd_experiment,
    "import-stl": cmd_import_stl,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if _opt(args, "verbose") else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"matbeam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"matbeam: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, SceneError, UnknownMaterialError, OSError, ValueError) as exc:
        print(f"matbeam: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
