"""Scenario configuration and the batch runner over every BS-UE pair.

A configuration is one JSON file::

    {
      "scene": "office.scene",          # relative to the config file
      "materials": null,                # optional CSV/JSON material database
      "frequency_ghz": 100.0,
      "base_stations": [{"id": "BS1", "position": [x, y, z],
                         "bearing_deg": 28.3, "downtilt_deg": 7.7}, ...],
      "ue_positions": [{"id": "P1", "position": [x, y, z]}, ...],
      "codebook": {"fov_deg": 70.0, "beamwidth_deg": 5.0},
      "budget": {"p_tx_dbm": 30.0, "tx_gain_dbi": 0.0, "rx_gain_dbi": 0.0},
      "threshold_dbm": -100.0,
      "reference_angle_deg": 0.0,
      "rl_model": {"polarization": "mixed", "roughness_m": 6e-05},
      "output_dir": "office-run"
    }

A base station may give ``"boresight": [x, y, z]`` instead of bearing and
downtilt; with neither, it faces the centre of the scene bounds.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .beams import BeamCodebook, BeamId, MountOrientation, build_codebook, first_hit_map
from .materials import (
    BUILTIN_MATERIALS,
    TABLE_ANGLES_DEG,
    Material,
    RlDatabase,
    RlModel,
    build_rl_database,
    load_materials,
)
from .propagation import LinkBudget
from .raytrace import LOS, Trajectory, trace_all_pairs
from .scene import Scene, load_scene
from .sweep import (
    SweepOutcome,
    SweepPlan,
    exhaustive_plan,
    latency_reduction,
    prioritize_groups,
    priority_plan,
    refine_best,
    simulate_sweep,
)
from .tables import write_rows

TRAJECTORY_COLUMNS = (
    "bs", "ue", "trajectory_id", "kind", "reflector", "material", "length_m",
    "fspl_db", "incident_deg", "rl_db", "overall_pl_db",
)
SWEEP_COLUMNS = (
    "bs", "ue", "plan_type", "connected", "sweeps_used", "total_beams",
    "latency_reduction_pct", "beam_az", "beam_el", "material", "overall_pl_db",
)
PAIR_COLUMNS = (
    "bs", "ue", "n_trajectories", "best_reflector", "best_material", "best_overall_pl_db",
    "best_reflected_material", "best_reflected_pl_db", "priority_reflector",
    "priority_material", "priority_sweeps", "exhaustive_sweeps", "material_mismatch",
)
LOSS_COLUMNS = ("pair", "trajectory", "material", "overall_pl_db")
BEAM_MAP_COLUMNS = ("az_index", "el_index", "az_deg", "el_deg", "first_hit_surface")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class InvariantError(RuntimeError):
    """An internal consistency check failed during a run."""


@dataclass(frozen=True)
class BaseStation:
    id: str
    position: tuple[float, float, float]
    mount: MountOrientation


@dataclass(frozen=True)
class UePosition:
    id: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class ExperimentConfig:
    scene_path: Path
    base_stations: tuple[BaseStation, ...]
    ue_positions: tuple[UePosition, ...]
    f_c: float = 100.0
    materials_path: Path | None = None
    fov: float = 70.0
    beamwidth: float = 5.0
    budget: LinkBudget = field(default_factory=LinkBudget)
    threshold: float = -100.0
    reference_angle: float = 0.0
    rl_model: RlModel = field(default_factory=RlModel)
    output_dir: Path | None = None

    def __post_init__(self):
        if not self.f_c > 0:
            raise ConfigError(f"frequency must be positive, got {self.f_c}")
        if not self.base_stations:
            raise ConfigError("at least one base station is required")
        if not self.ue_positions:
            raise ConfigError("at least one UE position is required")
        for kind, items in (("BS", self.base_stations), ("UE", self.ue_positions)):
            ids = [x.id for x in items]
            if len(set(ids)) != len(ids):
                raise ConfigError(f"duplicate {kind} ids in {ids}")
        if self.budget.f_c != self.f_c:
            object.__setattr__(self, "budget", dataclasses.replace(self.budget, f_c=self.f_c))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def materials(self) -> list[Material]:
        if self.materials_path is None:
            return list(BUILTIN_MATERIALS)
        try:
            return load_materials(self.materials_path)
        except OSError as exc:
            raise ConfigError(f"cannot read material database: {exc}") from exc

    def scene(self) -> Scene:
        try:
            return load_scene(self.scene_path, self.materials())
        except OSError as exc:
            raise ConfigError(f"cannot read scene: {exc}") from exc

    def database(self) -> RlDatabase:
        return build_rl_database(self.materials(), TABLE_ANGLES_DEG, self.f_c, self.rl_model)

    def codebook(self, bs: BaseStation) -> BeamCodebook:
        return build_codebook(self.fov, self.beamwidth, bs.mount)

    def bs(self, bs_id: str) -> BaseStation:
        for b in self.base_stations:
            if b.id == bs_id:
                return b
        raise KeyError(f"unknown BS id {bs_id!r}; known: {[b.id for b in self.base_stations]}")

    def ue(self, ue_id: str) -> UePosition:
        for u in self.ue_positions:
            if u.id == ue_id:
                return u
        raise KeyError(f"unknown UE id {ue_id!r}; known: {[u.id for u in self.ue_positions]}")


def _point(value, where: str) -> tuple[float, float, float]:
    try:
        p = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected three numbers, got {value!r}") from None
    if len(p) != 3 or not all(math.isfinite(v) for v in p):
        raise ConfigError(f"{where}: expected three finite numbers, got {value!r}")
    return p


def _number(doc: Mapping, key: str, default: float, where: str) -> float:
    value = doc.get(key, default)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}") from None


def config_from_dict(doc: Any, base_dir: Path = Path("."), source: str = "<config>") -> ExperimentConfig:
    """Validate a parsed config document; relative paths resolve against `base_dir`."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    if "scene" not in doc:
        raise ConfigError(f"{source}: missing field 'scene'")
    scene_path = base_dir / str(doc["scene"])
    if not scene_path.is_file():
        raise ConfigError(f"{source}: scene file {scene_path} does not exist")
    materials_path = None
    if doc.get("materials"):
        materials_path = base_dir / str(doc["materials"])
        if not materials_path.is_file():
            raise ConfigError(f"{source}: material file {materials_path} does not exist")

    stations = []
    for i, rec in enumerate(doc.get("base_stations", [])):
        where = f"{source}: base_stations[{i}]"
        if not isinstance(rec, dict) or "id" not in rec or "position" not in rec:
            raise ConfigError(f"{where}: needs 'id' and 'position'")
        pos = _point(rec["position"], f"{where}.position")
        if "bearing_deg" in rec or "downtilt_deg" in rec:
            try:
                mount = MountOrientation(
                    _number(rec, "bearing_deg", 0.0, where), _number(rec, "downtilt_deg", 0.0, where)
                )
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
        elif "boresight" in rec:
            mount = MountOrientation.facing(pos, _point(rec["boresight"], f"{where}.boresight"))
        else:
            mount = None  # resolved against the scene below
        stations.append((str(rec["id"]), pos, mount))

    ues = []
    for i, rec in enumerate(doc.get("ue_positions", [])):
        where = f"{source}: ue_positions[{i}]"
        if not isinstance(rec, dict) or "id" not in rec or "position" not in rec:
            raise ConfigError(f"{where}: needs 'id' and 'position'")
        ues.append(UePosition(str(rec["id"]), _point(rec["position"], f"{where}.position")))

    if any(m is None for _, _, m in stations):
        bounds = load_scene(scene_path, load_materials(materials_path) if materials_path else None).bounds
        centre = (bounds.lo + bounds.hi) / 2.0
        stations = [(i, p, m or MountOrientation.facing(p, centre)) for i, p, m in stations]

    cb = doc.get("codebook", {}) or {}
    bud = doc.get("budget", {}) or {}
    rl = doc.get("rl_model", {}) or {}
    f_c = _number(doc, "frequency_ghz", 100.0, source)
    try:
        budget = LinkBudget(
            _number(bud, "p_tx_dbm", 30.0, f"{source}: budget"),
            _number(bud, "tx_gain_dbi", 0.0, f"{source}: budget"),
            _number(bud, "rx_gain_dbi", 0.0, f"{source}: budget"),
            f_c if f_c > 0 else 1.0,
        )
        model = RlModel(str(rl.get("polarization", "mixed")), _number(rl, "roughness_m", 6e-5, f"{source}: rl_model"))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    out = doc.get("output_dir")
    return ExperimentConfig(
        scene_path=scene_path,
        base_stations=tuple(BaseStation(*s) for s in stations),
        ue_positions=tuple(ues),
        f_c=f_c,
        materials_path=materials_path,
        fov=_number(cb, "fov_deg", 70.0, f"{source}: codebook"),
        beamwidth=_number(cb, "beamwidth_deg", 5.0, f"{source}: codebook"),
        budget=budget,
        threshold=_number(doc, "threshold_dbm", -100.0, source),
        reference_angle=_number(doc, "reference_angle_deg", 0.0, source),
        rl_model=model,
        output_dir=None if out is None else base_dir / str(out),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc, path.parent, str(path))


def default_config_path() -> Path:
    """The bundled office scenario."""
    return Path(__file__).with_name("data") / "office-experiment.json"


# -- running -------------------------------------------------------------------


@dataclass(frozen=True)
class BsSetup:
    bs: BaseStation
    codebook: BeamCodebook
    hits: Mapping[BeamId, str | None]
    priority: SweepPlan
    exhaustive: SweepPlan


@dataclass(frozen=True)
class PairResult:
    bs: str
    ue: str
    trajectories: tuple[Trajectory, ...]
    priority: SweepOutcome
    exhaustive: SweepOutcome

    @property
    def best(self) -> Trajectory | None:
        return refine_best(self.trajectories) if self.trajectories else None

    @property
    def best_reflected(self) -> Trajectory | None:
        reflected = [t for t in self.trajectories if t.kind != LOS]
        return refine_best(reflected) if reflected else None

    @property
    def material_mismatch(self) -> bool:
        """Priority sweep connected on a different material than the best path."""
        if not self.priority.connected or self.best is None:
            return False
        return _material(self.priority.trajectory) != _material(self.best)


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    scene: Scene
    database: RlDatabase
    setups: tuple[BsSetup, ...]
    pairs: tuple[PairResult, ...]
    top_material: str

    def summary(self) -> dict:
        return summarize(self.pairs, self.setups[0].codebook.size, self.top_material, self.config.threshold)


def _material(t: Trajectory | None) -> str:
    if t is None or t.material is None:
        return ""
    return t.material


def setup_base_station(config: ExperimentConfig, bs: BaseStation, scene: Scene, db: RlDatabase) -> BsSetup:
    codebook = config.codebook(bs)
    hits = first_hit_map(codebook, bs.position, scene)
    plan = priority_plan(codebook, scene, bs.position, db, config.reference_angle, hits)
    return BsSetup(bs, codebook, hits, plan, exhaustive_plan(codebook))


def _check_plan(plan: SweepPlan, codebook: BeamCodebook, label: str) -> None:
    if sorted(plan.ordered_beams) != sorted(codebook.beams()):
        raise InvariantError(f"{label}: plan is not a permutation of the codebook")
    start = 0
    for g in plan.groups:
        if g.start != start:
            raise InvariantError(f"{label}: plan groups are not contiguous")
        start += g.length
    if start != len(plan):
        raise InvariantError(f"{label}: plan groups do not cover the plan")


def _check_trajectories(paths: Sequence[Trajectory], label: str) -> None:
    for t in paths:
        if abs(t.overall_pl - (t.fspl + t.rl)) > 1e-9:
            raise InvariantError(f"{label}: overall PL differs from FSPL + RL on {t.reflector}")


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    scene = config.scene()
    db = config.database()
    setups = tuple(setup_base_station(config, bs, scene, db) for bs in config.base_stations)
    for s in setups:
        _check_plan(s.priority, s.codebook, f"{s.bs.id} priority")
        _check_plan(s.exhaustive, s.codebook, f"{s.bs.id} exhaustive")
    traced = trace_all_pairs(
        scene,
        [b.position for b in config.base_stations],
        [u.position for u in config.ue_positions],
        config.f_c,
        config.materials(),
        config.rl_model,
        jobs=jobs,
    )
    pairs = []
    for (bi, ui), paths in traced.items():
        setup, ue = setups[bi], config.ue_positions[ui]
        label = f"{setup.bs.id}-{ue.id}"
        _check_trajectories(paths, label)
        args = (paths, setup.codebook, setup.bs.position, config.budget, config.threshold)
        pri = simulate_sweep(setup.priority, *args)
        exh = simulate_sweep(setup.exhaustive, *args)
        pairs.append(PairResult(setup.bs.id, ue.id, tuple(paths), pri, exh))
    groups = prioritize_groups(scene, db, config.reference_angle)
    top = groups[0].material if groups else ""
    return ExperimentReport(config, scene, db, setups, tuple(pairs), top)


def summarize(pairs: Sequence[PairResult], total_beams: int, top_material: str, threshold: float) -> dict:
    """Aggregate metrics; every value can be recomputed from the per-pair tables."""
    n = len(pairs)

    def plan_stats(attr):
        outcomes = [getattr(p, attr) for p in pairs]
        mean = sum(o.sweeps_used for o in outcomes) / n
        return {
            "connected": sum(o.connected for o in outcomes),
            "mean_sweeps": mean,
            "mean_latency_reduction_pct": latency_reduction(mean, total_beams),
        }

    best_counts: dict[str, int] = {}
    for p in pairs:
        b = p.best_reflected
        if b is not None:
            best_counts[b.material] = best_counts.get(b.material, 0) + 1
    with_reflection = sum(best_counts.values())
    on_top = [p.priority.sweeps_used for p in pairs if p.priority.connected and _material(p.priority.trajectory) == top_material]
    return {
        "n_pairs": n,
        "codebook_size": total_beams,
        "threshold_dbm": threshold,
        "n_reflected_trajectories": sum(t.kind != LOS for p in pairs for t in p.trajectories),
        "n_los_trajectories": sum(t.kind == LOS for p in pairs for t in p.trajectories),
        "priority": plan_stats("priority"),
        "exhaustive": plan_stats("exhaustive"),
        "top_priority_material": top_material,
        "pairs_with_reflection": with_reflection,
        "best_reflected_material_counts": dict(sorted(best_counts.items())),
        "best_reflected_on_top_material_fraction": (
            best_counts.get(top_material, 0) / with_reflection if with_reflection else 0.0
        ),
        "priority_connected_on_top_material": len(on_top),
        "mean_sweeps_connected_on_top_material": sum(on_top) / len(on_top) if on_top else None,
        "material_mismatch_pairs": sum(p.material_mismatch for p in pairs),
    }


# -- tables --------------------------------------------------------------------


def trajectory_rows(bs: str, ue: str, paths: Sequence[Trajectory]):
    for k, t in enumerate(paths, start=1):
        yield (
            bs, ue, k, t.kind, t.reflector, _material(t), t.length, t.fspl,
            t.incident_angle, t.rl, t.overall_pl,
        )


def sweep_row(bs: str, ue: str, plan_type: str, outcome: SweepOutcome, total: int):
    beam = outcome.beam
    traj = outcome.trajectory
    return (
        bs, ue, plan_type, int(outcome.connected), outcome.sweeps_used, total,
        latency_reduction(outcome.sweeps_used, total),
        None if beam is None else beam.az,
        None if beam is None else beam.el,
        _material(traj) if traj is not None else None,
        None if traj is None else traj.overall_pl,
    )


def pair_row(p: PairResult):
    best, refl, conn = p.best, p.best_reflected, p.priority.trajectory
    return (
        p.bs, p.ue, len(p.trajectories),
        None if best is None else best.reflector, _material(best),
        None if best is None else best.overall_pl,
        _material(refl), None if refl is None else refl.overall_pl,
        None if conn is None else conn.reflector, _material(conn),
        p.priority.sweeps_used, p.exhaustive.sweeps_used, int(p.material_mismatch),
    )


def loss_rows(pairs: Sequence[PairResult]):
    for p in pairs:
        for k, t in enumerate(p.trajectories, start=1):
            if t.kind != LOS:
                yield f"{p.bs}-{p.ue}", k, t.material, t.overall_pl


def beam_map_rows(setup: BsSetup):
    cb = setup.codebook
    for beam in cb.beams():
        az, el = cb.angles(beam)
        yield beam.az, beam.el, az, el, setup.hits[beam]


def write_report(report: ExperimentReport, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write every output file; nothing appears in `out_dir` unless all succeed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".matbeam-", dir=out_dir))
    try:
        total = report.setups[0].codebook.size
        write_rows(
            tmp / "trajectories.csv", TRAJECTORY_COLUMNS,
            (r for p in report.pairs for r in trajectory_rows(p.bs, p.ue, p.trajectories)),
        )
        write_rows(
            tmp / "sweeps.csv", SWEEP_COLUMNS,
            (
                sweep_row(p.bs, p.ue, name, getattr(p, name), total)
                for p in report.pairs for name in ("priority", "exhaustive")
            ),
        )
        write_rows(tmp / "pairs.csv", PAIR_COLUMNS, (pair_row(p) for p in report.pairs))
        write_rows(tmp / "losses.csv", LOSS_COLUMNS, loss_rows(report.pairs))
        for s in report.setups:
            write_rows(tmp / f"beam_map_{s.bs.id}.csv", BEAM_MAP_COLUMNS, beam_map_rows(s))
        (tmp / "summary.json").write_text(
            json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8"
        )
        if figures:
            from . import plotting

            plotting.render_report(report, tmp / "figures")
        written = []
        for src in sorted(tmp.rglob("*")):
            if src.is_file():
                dst = out_dir / src.relative_to(tmp)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
                written.append(dst)
        return written
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
