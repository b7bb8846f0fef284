"""Line-of-sight and single-bounce trajectories via the image method."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .materials import BUILTIN_MATERIALS, DEFAULT_RL_MODEL, Material, RlModel, material_index, reflection_loss
from .propagation import fspl, overall_pl
from .scene import Scene, Surface, segment_blocked, vec3

LOS = "los"
SINGLE_BOUNCE = "single-bounce"


@dataclass(frozen=True, eq=False)
class Trajectory:
    kind: str
    tx: np.ndarray
    rx: np.ndarray
    length: float
    fspl: float
    rl: float
    overall_pl: float
    reflection_point: np.ndarray | None = None
    surface_id: str | None = None
    material: str | None = None
    incident_angle: float | None = None

    @property
    def departure(self) -> np.ndarray:
        """Unit direction in which the path leaves the transmitter."""
        target = self.rx if self.reflection_point is None else self.reflection_point
        d = target - self.tx
        return d / np.linalg.norm(d)

    @property
    def reflector(self) -> str:
        return self.surface_id if self.surface_id is not None else "LOS"


def mirror_point(p, surface: Surface) -> np.ndarray:
    """Mirror image of `p` across the supporting plane of `surface`."""
    p = np.asarray(p, dtype=float)
    return p - 2.0 * surface.signed_distance(p) * surface.normal


def trace_los(scene: Scene, tx, rx, f_c: float) -> Trajectory | None:
    tx, rx = vec3(tx), vec3(rx)
    d = float(np.linalg.norm(rx - tx))
    if d == 0:
        raise ValueError("tx and rx coincide")
    if segment_blocked(scene, tx, rx):
        return None
    loss = fspl(f_c, d)
    return Trajectory(LOS, tx, rx, d, loss, 0.0, overall_pl(loss, 0.0))


def _bounce(scene, surface, tx, rx, f_c, material, model) -> Trajectory | None:
    s_tx = surface.signed_distance(tx)
    s_rx = surface.signed_distance(rx)
    # Both ends must sit strictly on the same side of the reflecting plane.
    if s_tx * s_rx <= 0 or abs(s_tx) < 1e-12 or abs(s_rx) < 1e-12:
        return None
    image = tx - 2.0 * s_tx * surface.normal
    t = s_tx / (s_tx + s_rx)  # where image->rx crosses the plane
    q = image + t * (rx - image)
    if not surface.contains(q):
        return None
    skip = (surface.id,)
    if segment_blocked(scene, tx, q, skip) or segment_blocked(scene, q, rx, skip):
        return None
    # |rx - image|**2 == |rx - tx|**2 + 4 s_tx s_rx; this form is symmetric in
    # tx and rx, so swapping the ends reproduces length and angle bit-for-bit.
    d = rx - tx
    length = math.sqrt(float(d @ d) + 4.0 * s_tx * s_rx)
    # atan2 of the in-plane offset over the summed heights stays accurate near
    # normal incidence, where acos loses about half the digits.
    lateral = float(np.linalg.norm(d - float(d @ surface.normal) * surface.normal))
    angle = math.degrees(math.atan2(lateral, abs(s_tx + s_rx)))
    rl = reflection_loss(angle, material, f_c, model) if angle < 90.0 else 0.0
    if math.isinf(rl):
        return None
    loss = fspl(f_c, length)
    return Trajectory(
        SINGLE_BOUNCE, tx, rx, length, loss, rl, overall_pl(loss, rl),
        reflection_point=q, surface_id=surface.id, material=surface.material,
        incident_angle=angle,
    )


def _materials(materials) -> Mapping[str, Material]:
    if isinstance(materials, Mapping):
        return materials
    return material_index(materials)


def trace_single_bounce(
    scene: Scene,
    tx,
    rx,
    f_c: float,
    materials: Mapping[str, Material] | Sequence[Material],
    model: RlModel = DEFAULT_RL_MODEL,
) -> list[Trajectory]:
    """All unoccluded specular single-bounce paths, lowest overall PL first."""
    tx, rx = vec3(tx), vec3(rx)
    if np.array_equal(tx, rx):
        raise ValueError("tx and rx coincide")
    mats = _materials(materials)
    out = []
    for s in scene.surfaces:
        traj = _bounce(scene, s, tx, rx, f_c, mats[s.material], model)
        if traj is not None:
            out.append(traj)
    out.sort(key=lambda t: (t.overall_pl, t.surface_id))
    return out


def trace_pair(scene, tx, rx, f_c, materials, model=DEFAULT_RL_MODEL) -> list[Trajectory]:
    """LOS (when unblocked) plus single-bounce paths, sorted by overall PL."""
    paths = trace_single_bounce(scene, tx, rx, f_c, materials, model)
    los = trace_los(scene, tx, rx, f_c)
    if los is not None:
        paths.append(los)
    paths.sort(key=lambda t: (t.overall_pl, t.reflector))
    return paths


def trace_all_pairs(
    scene: Scene,
    bs_list: Sequence,
    ue_list: Sequence,
    f_c: float,
    materials=None,
    model: RlModel = DEFAULT_RL_MODEL,
    keep=None,
    jobs: int = 1,
) -> dict[tuple[int, int], list[Trajectory]]:
    """Trace every BS x UE pair; keys are ``(bs_index, ue_index)`` in order.

    `keep(bs_index, trajectory) -> bool` optionally filters paths, e.g. to
    those leaving the BS inside its antenna field of view.
    """
    if not bs_list or not ue_list:
        raise ValueError("need at least one BS and one UE position")
    mats = _materials(BUILTIN_MATERIALS if materials is None else materials)
    keys = [(b, u) for b in range(len(bs_list)) for u in range(len(ue_list))]

    def run(key):
        b, u = key
        paths = trace_pair(scene, bs_list[b], ue_list[u], f_c, mats, model)
        if keep is not None:
            paths = [p for p in paths if keep(b, p)]
        return paths

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, keys))
    else:
        results = [run(k) for k in keys]
    return dict(zip(keys, results))
