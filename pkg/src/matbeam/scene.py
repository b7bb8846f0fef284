"""Planar polygonal scene model, native JSON scene files and ray queries.

Coordinates are metres.  A surface is a convex planar polygon whose vertex
winding is counter-clockwise about its unit normal; surfaces reflect from
either side and block rays from either side.
"""

from __future__ import annotations

import json
import re
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .materials import BUILTIN_MATERIALS, Material, UnknownMaterialError

logger = logging.getLogger(__name__)

PLANARITY_TOL = 1e-6
HIT_EPS = 1e-9
# Slack for point-in-polygon tests so reflection points on shared edges count.
EDGE_TOL = 1e-9


class SceneError(ValueError):
    """Invalid or unparsable scene description."""


def vec3(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"expected a finite 3-vector, got {p!r}")
    return a


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalise a zero vector")
    return v / n


def polygon_normal(vertices: np.ndarray) -> np.ndarray:
    """Newell normal of a polygon; direction follows the winding."""
    v = vertices
    w = np.roll(v, -1, axis=0)
    n = np.array(
        [
            np.sum((v[:, 1] - w[:, 1]) * (v[:, 2] + w[:, 2])),
            np.sum((v[:, 2] - w[:, 2]) * (v[:, 0] + w[:, 0])),
            np.sum((v[:, 0] - w[:, 0]) * (v[:, 1] + w[:, 1])),
        ]
    )
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise SceneError("degenerate polygon (zero area)")
    return n / norm


def polygon_area(vertices: np.ndarray) -> float:
    v = vertices
    cross = np.cross(v, np.roll(v, -1, axis=0)).sum(axis=0)
    return 0.5 * float(np.linalg.norm(cross))


def is_convex(vertices: np.ndarray, normal: np.ndarray, tol: float = 1e-9) -> bool:
    n = len(vertices)
    for i in range(n):
        a, b, c = vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]
        if np.dot(np.cross(b - a, c - b), normal) < -tol:
            return False
    return True


@dataclass(frozen=True, eq=False)
class Surface:
    id: str
    vertices: np.ndarray
    material: str
    normal: np.ndarray = field(default=None)
    allow_outward: bool = False

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3 or len(verts) < 3:
            raise SceneError(f"surface {self.id!r}: need at least 3 xyz vertices")
        if not np.all(np.isfinite(verts)):
            raise SceneError(f"surface {self.id!r}: non-finite vertex")
        n = polygon_normal(verts)
        offsets = (verts - verts[0]) @ n
        if np.max(np.abs(offsets)) > PLANARITY_TOL:
            raise SceneError(f"surface {self.id!r}: vertices are not coplanar")
        if not is_convex(verts, n):
            raise SceneError(f"surface {self.id!r}: polygon is not convex")
        if self.normal is not None:
            given = unit(self.normal)
            if np.dot(given, n) < 1 - 1e-6:
                raise SceneError(f"surface {self.id!r}: normal disagrees with vertex winding")
        verts.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "normal", n)

    @property
    def offset(self) -> float:
        """Plane constant d in n . x = d."""
        return float(self.normal @ self.vertices[0])

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def signed_distance(self, p) -> float:
        return float(self.normal @ np.asarray(p, dtype=float)) - self.offset

    def contains(self, q, tol: float = EDGE_TOL) -> bool:
        """Closed point-in-polygon test for a point on the supporting plane."""
        v = self.vertices
        edges = np.roll(v, -1, axis=0) - v
        rel = np.asarray(q, dtype=float) - v
        side = np.cross(edges, rel) @ self.normal
        return bool(np.all(side >= -tol * np.linalg.norm(edges, axis=1)))

    def segment_hit(self, a, b) -> float | None:
        """Parameter t in [0, 1] where segment a->b crosses this polygon, else None."""
        a = np.asarray(a, dtype=float)
        d = np.asarray(b, dtype=float) - a
        denom = float(self.normal @ d)
        if abs(denom) < 1e-15:
            return None
        t = (self.offset - float(self.normal @ a)) / denom
        if t < 0.0 or t > 1.0:
            return None
        return t if self.contains(a + t * d) else None

    def to_json(self) -> dict:
        rec = {
            "id": self.id,
            "material": self.material,
            "vertices": [[float(c) for c in p] for p in self.vertices],
        }
        if self.allow_outward:
            rec["allow_outward"] = True
        return rec


class Bounds(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True, eq=False)
class Scene:
    surfaces: tuple[Surface, ...]
    name: str = ""

    def __post_init__(self):
        surfaces = tuple(self.surfaces)
        ids = [s.id for s in surfaces]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise SceneError(f"duplicate surface ids: {dupes}")
        object.__setattr__(self, "surfaces", surfaces)
        object.__setattr__(self, "_by_id", {s.id: s for s in surfaces})

    def __len__(self) -> int:
        return len(self.surfaces)

    def __iter__(self):
        return iter(self.surfaces)

    def surface(self, surface_id: str) -> Surface:
        try:
            return self._by_id[surface_id]
        except KeyError:
            raise KeyError(f"no surface {surface_id!r} in scene") from None

    @property
    def bounds(self) -> Bounds:
        if not self.surfaces:
            z = np.zeros(3)
            return Bounds(z, z)
        pts = np.vstack([s.vertices for s in self.surfaces])
        return Bounds(pts.min(axis=0), pts.max(axis=0))

    @property
    def materials(self) -> list[str]:
        return sorted({s.material for s in self.surfaces})

    def check_materials(self, materials: Mapping[str, Material] | Iterable[Material]) -> None:
        names = set(materials if isinstance(materials, Mapping) else (m.name for m in materials))
        for s in self.surfaces:
            if s.material not in names:
                raise UnknownMaterialError(f"surface {s.id!r}: unknown material {s.material!r}")

    def outward_surfaces(self) -> list[str]:
        """Ids of surfaces whose normal faces away from the scene centre."""
        if not self.surfaces:
            return []
        lo, hi = self.bounds
        centre = 0.5 * (lo + hi)
        return [
            s.id
            for s in self.surfaces
            if not s.allow_outward and float(s.normal @ (centre - s.centroid)) < -1e-9
        ]

    def to_json(self) -> dict:
        doc: dict = {}
        if self.name:
            doc["name"] = self.name
        doc["surfaces"] = [s.to_json() for s in self.surfaces]
        return doc


def scene_from_json(doc, source: str = "<scene>", materials=None) -> Scene:
    if not isinstance(doc, dict) or not isinstance(doc.get("surfaces"), list):
        raise SceneError(f"{source}: expected an object with a 'surfaces' list")
    surfaces = []
    for i, rec in enumerate(doc["surfaces"]):
        where = f"{source}: surfaces[{i}]"
        if not isinstance(rec, dict):
            raise SceneError(f"{where}: expected an object")
        for key in ("id", "material", "vertices"):
            if key not in rec:
                raise SceneError(f"{where}: missing field {key!r}")
        try:
            verts = np.asarray(rec["vertices"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise SceneError(f"{where}.vertices: {exc}") from exc
        try:
            surfaces.append(
                Surface(
                    str(rec["id"]),
                    verts,
                    str(rec["material"]),
                    rec.get("normal"),
                    bool(rec.get("allow_outward", False)),
                )
            )
        except SceneError as exc:
            raise SceneError(f"{where}: {exc}") from exc
    scene = Scene(tuple(surfaces), str(doc.get("name", "")))
    scene.check_materials(BUILTIN_MATERIALS if materials is None else materials)
    for sid in scene.outward_surfaces():
        logger.warning("%s: surface %r normal faces away from the scene centre", source, sid)
    return scene


def load_scene(path: str | Path, materials=None) -> Scene:
    """Load and validate a native JSON scene file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scene_from_json(doc, str(path), materials)


def save_scene(scene: Scene, path: str | Path) -> None:
    text = json.dumps(scene.to_json(), indent=2)
    # Keep each vertex on one line.
    text = re.sub(r"\[\s+([^\[\]]*?)\s+\]", lambda m: "[" + " ".join(m.group(1).split()) + "]", text)
    Path(path).write_text(text + "\n", encoding="utf-8")


class Hit(NamedTuple):
    surface_id: str
    point: np.ndarray
    distance: float


def ray_intersect(scene: Scene, origin, direction, exclude: str | None = None) -> Hit | None:
    """Nearest surface hit along a ray, ignoring hits closer than HIT_EPS."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    best: Hit | None = None
    for s in scene.surfaces:
        if s.id == exclude:
            continue
        denom = float(s.normal @ d)
        if abs(denom) < 1e-15:
            continue
        t = (s.offset - float(s.normal @ o)) / denom
        if t <= HIT_EPS or (best is not None and t >= best.distance):
            continue
        q = o + t * d
        if s.contains(q):
            best = Hit(s.id, q, t)
    return best


def ray_intersect_many(scene: Scene, origin, directions) -> list[Hit | None]:
    """Vectorised :func:`ray_intersect` for many rays from one origin."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(directions, dtype=float).reshape(-1, 3)
    best_t = np.full(len(d), np.inf)
    best_s = np.full(len(d), -1)
    for k, s in enumerate(scene.surfaces):
        denom = d @ s.normal
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = (s.offset - float(s.normal @ o)) / denom
        ok = (np.abs(denom) >= 1e-15) & (t > HIT_EPS) & (t < best_t)
        if not ok.any():
            continue
        q = o + t[ok, None] * d[ok]
        v = s.vertices
        edges = np.roll(v, -1, axis=0) - v
        side = np.cross(edges[None], q[:, None, :] - v[None]) @ s.normal
        inside = np.all(side >= -EDGE_TOL * np.linalg.norm(edges, axis=1), axis=1)
        idx = np.flatnonzero(ok)[inside]
        best_t[idx] = t[idx]
        best_s[idx] = k
    out: list[Hit | None] = []
    for t, k in zip(best_t, best_s):
        out.append(None if k < 0 else Hit(scene.surfaces[k].id, o + t * d[len(out)], float(t)))
    return out


def segment_blocked(
    scene: Scene, a, b, exclude: Sequence[str] = (), eps: float = HIT_EPS
) -> bool:
    """True if any surface (other than `exclude`) crosses a->b away from its endpoints."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length <= 2 * eps:
        return False
    lo, hi = eps / length, 1.0 - eps / length
    for s in scene.surfaces:
        if s.id in exclude:
            continue
        t = s.segment_hit(a, b)
        if t is not None and lo < t < hi:
            return True
    return False


def box_surfaces(
    lo, hi, materials: Mapping[str, str], prefix: str = "", inward: bool = True
) -> list[Surface]:
    """Six axis-aligned rectangles of a box.

    `materials` maps the face keys ``x0 x1 y0 y1 z0 z1`` to material names;
    faces without an entry are omitted.  With `inward` the normals point into
    the box (a room); otherwise out of it (an object).
    """
    x0, y0, z0 = map(float, lo)
    x1, y1, z1 = map(float, hi)
    faces = {
        "x0": ([(x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1)], (1, 0, 0)),
        "x1": ([(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)], (-1, 0, 0)),
        "y0": ([(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)], (0, 1, 0)),
        "y1": ([(x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1)], (0, -1, 0)),
        "z0": ([(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0)], (0, 0, 1)),
        "z1": ([(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)], (0, 0, -1)),
    }
    out = []
    for key, (corners, inward_normal) in faces.items():
        if key not in materials:
            continue
        verts = np.array(corners, dtype=float)
        want = np.array(inward_normal, dtype=float) * (1 if inward else -1)
        if polygon_normal(verts) @ want < 0:
            verts = verts[::-1]
        out.append(Surface(f"{prefix}{key}", verts, materials[key]))
    return out
