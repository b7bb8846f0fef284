"""Beam-sweep planning and threshold-stopped sweep simulation.

A priority plan visits beams grouped by the material their center ray first
lands on, lowest reflection loss first, each group in sawtooth order (bottom
row left to right, then one row up).  The exhaustive baseline is one sawtooth
pass over the whole codebook.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .beams import BeamCodebook, BeamId, direction_to_beam, first_hit_map
from .materials import RlDatabase, UnknownMaterialError
from .propagation import LinkBudget, received_power
from .raytrace import Trajectory
from .scene import Scene

NO_HIT = "no-hit"


class SurfaceGroup(NamedTuple):
    material: str
    rl: float
    surface_ids: tuple[str, ...]


class GroupSpan(NamedTuple):
    label: str
    start: int
    length: int


@dataclass(frozen=True)
class SweepPlan:
    ordered_beams: tuple[BeamId, ...]
    groups: tuple[GroupSpan, ...]

    def __len__(self) -> int:
        return len(self.ordered_beams)

    def group_of(self, position: int) -> str:
        """Label of the group containing plan index `position` (0-based)."""
        for g in self.groups:
            if g.start <= position < g.start + g.length:
                return g.label
        raise IndexError(position)


@dataclass(frozen=True)
class SweepOutcome:
    connected: bool
    sweeps_used: int
    beam: BeamId | None = None
    trajectory: Trajectory | None = None
    rsrp: float | None = None
    group: str | None = None


def prioritize_groups(scene: Scene, db: RlDatabase, reference_angle: float = 0.0) -> list[SurfaceGroup]:
    """Scene surfaces grouped by material, lowest RL at `reference_angle` first."""
    by_material: dict[str, list[str]] = {}
    for s in scene.surfaces:
        by_material.setdefault(s.material, []).append(s.id)
    groups = []
    for material, ids in by_material.items():
        if material not in db.entries:
            raise UnknownMaterialError(f"material {material!r} missing from the RL database")
        groups.append(SurfaceGroup(material, db.rl_at(material, reference_angle), tuple(sorted(ids))))
    groups.sort(key=lambda g: (g.rl, g.material))
    return groups


def sawtooth_order(beams: Iterable[BeamId]) -> list[BeamId]:
    return sorted((BeamId(*b) for b in beams), key=lambda b: (b.el, b.az))


def exhaustive_plan(codebook: BeamCodebook) -> SweepPlan:
    order = tuple(sawtooth_order(codebook.beams()))
    return SweepPlan(order, (GroupSpan("all", 0, len(order)),))


def priority_plan(
    codebook: BeamCodebook,
    scene: Scene,
    bs_pos,
    db: RlDatabase,
    reference_angle: float = 0.0,
    hits: dict[BeamId, str | None] | None = None,
) -> SweepPlan:
    """Material-priority plan; beams whose center ray hits nothing go last."""
    hits = first_hit_map(codebook, bs_pos, scene) if hits is None else hits
    order: list[BeamId] = []
    spans: list[GroupSpan] = []

    def add(label, beams):
        if beams:
            spans.append(GroupSpan(label, len(order), len(beams)))
            order.extend(sawtooth_order(beams))

    for group in prioritize_groups(scene, db, reference_angle):
        members = set(group.surface_ids)
        add(group.material, [b for b, sid in hits.items() if sid in members])
    add(NO_HIT, [b for b, sid in hits.items() if sid is None])
    return SweepPlan(tuple(order), tuple(spans))


def beam_trajectories(
    trajectories: Sequence[Trajectory], codebook: BeamCodebook, bs_pos
) -> dict[BeamId, Trajectory]:
    """Lowest-PL trajectory departing through each beam cell."""
    best: dict[BeamId, Trajectory] = {}
    for traj in trajectories:
        target = traj.rx if traj.reflection_point is None else traj.reflection_point
        beam = direction_to_beam(codebook, bs_pos, target)
        if beam is None:
            continue
        if beam not in best or traj.overall_pl < best[beam].overall_pl:
            best[beam] = traj
    return best


def simulate_sweep(
    plan: SweepPlan,
    trajectories: Sequence[Trajectory],
    codebook: BeamCodebook,
    bs_pos,
    budget: LinkBudget,
    threshold: float,
) -> SweepOutcome:
    """Walk `plan` until a beam's best trajectory reaches `threshold` dBm."""
    per_beam = beam_trajectories(trajectories, codebook, bs_pos)
    for i, beam in enumerate(plan.ordered_beams):
        traj = per_beam.get(beam)
        if traj is None:
            continue
        rsrp = received_power(budget, traj.overall_pl)
        if rsrp >= threshold:
            return SweepOutcome(True, i + 1, beam, traj, rsrp, plan.group_of(i))
    return SweepOutcome(False, len(plan))


def refine_best(trajectories: Sequence[Trajectory]) -> Trajectory:
    if not trajectories:
        raise ValueError("no trajectories to refine over")
    best = trajectories[0]
    for t in trajectories[1:]:
        if t.overall_pl < best.overall_pl:
            best = t
    return best


def latency_reduction(sweeps_used: float, total_beams: int) -> float:
    """Percentage of the exhaustive sweep that was skipped."""
    if total_beams <= 0:
        raise ValueError("total_beams must be positive")
    if not 0 <= sweeps_used <= total_beams:
        raise ValueError(f"sweeps_used must lie in [0, {total_beams}], got {sweeps_used}")
    return 100.0 * (total_beams - sweeps_used) / total_beams
