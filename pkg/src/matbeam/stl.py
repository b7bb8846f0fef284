"""STL ingestion with a material sidecar, plus a small STL writer.

ASCII files may hold several ``solid <name> ... endsolid`` blocks; each solid
name is looked up in the sidecar map.  Binary files carry one solid whose name
is read from the 80-byte header (``solid <name>``), falling back to
``"default"``.  The sidecar key ``"*"`` matches any solid not listed
explicitly, and ``"scale"`` multiplies every coordinate.
"""

from __future__ import annotations

import json
import struct
from collections import defaultdict
from pathlib import Path
from typing import Mapping

import numpy as np

from .scene import Scene, SceneError, Surface, is_convex, polygon_normal

_FACET = struct.Struct("<12fH")


class StlError(SceneError):
    """Malformed STL data or an unmapped solid."""


def _looks_ascii(data: bytes) -> bool:
    if not data.lstrip().startswith(b"solid"):
        return False
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            # Binary files are allowed to start their header with "solid".
            return False
    try:
        data.decode("ascii")
    except UnicodeDecodeError:
        return False
    return True


def parse_ascii_stl(text: str) -> list[tuple[str, np.ndarray]]:
    """Return ``(solid_name, 3x3 vertex array)`` per facet."""
    facets = []
    tokens = [(ln, line.split()) for ln, line in enumerate(text.splitlines(), 1)]
    tokens = [(ln, t) for ln, t in tokens if t]
    i = 0
    solid = None
    verts: list[list[float]] = []
    in_loop = False
    while i < len(tokens):
        ln, t = tokens[i]
        kw = t[0].lower()
        if kw == "solid":
            if solid is not None:
                raise StlError(f"line {ln}: nested 'solid'")
            solid = " ".join(t[1:]) or "default"
        elif kw == "endsolid":
            if solid is None or in_loop:
                raise StlError(f"line {ln}: unexpected 'endsolid'")
            solid = None
        elif kw == "facet":
            if solid is None:
                raise StlError(f"line {ln}: facet outside a solid")
        elif kw == "outer":
            in_loop, verts = True, []
        elif kw == "vertex":
            if not in_loop or len(t) != 4:
                raise StlError(f"line {ln}: malformed vertex record")
            try:
                verts.append([float(x) for x in t[1:]])
            except ValueError as exc:
                raise StlError(f"line {ln}: {exc}") from exc
        elif kw == "endloop":
            if len(verts) != 3:
                raise StlError(f"line {ln}: facet has {len(verts)} vertices, expected 3")
            facets.append((solid, np.array(verts)))
            in_loop = False
        elif kw == "endfacet":
            pass
        else:
            raise StlError(f"line {ln}: unknown keyword {t[0]!r}")
        i += 1
    if solid is not None or in_loop:
        raise StlError("truncated STL: missing 'endsolid'")
    return facets


def parse_binary_stl(data: bytes) -> list[tuple[str, np.ndarray]]:
    if len(data) < 84:
        raise StlError(f"binary STL shorter than its 84-byte header ({len(data)} bytes)")
    header = data[:80].split(b"\0", 1)[0].decode("ascii", "replace").strip()
    name = header[5:].strip() if header.startswith("solid") else ""
    name = name or "default"
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) < expected:
        raise StlError(f"truncated binary STL: header promises {count} facets")
    facets = []
    for k in range(count):
        rec = _FACET.unpack_from(data, 84 + 50 * k)
        facets.append((name, np.array(rec[3:12], dtype=float).reshape(3, 3)))
    return facets


def read_stl(path: str | Path) -> list[tuple[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if _looks_ascii(data):
        return parse_ascii_stl(data.decode("ascii"))
    return parse_binary_stl(data)


def _find_plane(planes: list, solid: str, material: str, normal, offset, tol=1e-5):
    for k, (s, m, n, d) in enumerate(planes):
        if s == solid and m == material and np.all(np.abs(n - normal) < tol) and abs(d - offset) < tol:
            return k
    planes.append((solid, material, normal, offset))
    return len(planes) - 1


def _merge_pair(a: list[int], b: list[int], pts: np.ndarray, normal: np.ndarray):
    """Union of two polygons (vertex-index loops) sharing one edge, if convex."""
    na, nb = len(a), len(b)
    for i in range(na):
        u, v = a[i], a[(i + 1) % na]
        for j in range(nb):
            if b[j] == v and b[(j + 1) % nb] == u:
                # walk a from v round to u, then b from u round to v (exclusive)
                merged = [a[(i + 1 + k) % na] for k in range(na)]
                merged += [b[(j + 2 + k) % nb] for k in range(nb - 2)]
                merged = _drop_collinear(merged, pts, normal)
                if len(set(merged)) == len(merged) and is_convex(pts[merged], normal):
                    return merged
                return None
    return None


def _drop_collinear(loop: list[int], pts: np.ndarray, normal: np.ndarray) -> list[int]:
    out = list(loop)
    changed = True
    while changed and len(out) > 3:
        changed = False
        for i in range(len(out)):
            a, b, c = pts[out[i - 1]], pts[out[i]], pts[out[(i + 1) % len(out)]]
            if abs(np.cross(b - a, c - b) @ normal) < 1e-12 and (b - a) @ (c - b) > 0:
                del out[i]
                changed = True
                break
    return out


def merge_coplanar(triangles: list[np.ndarray], normal: np.ndarray) -> list[np.ndarray]:
    """Greedily union edge-adjacent coplanar triangles into convex polygons."""
    pts: list[np.ndarray] = []
    index: dict[tuple, int] = {}

    def vid(p):
        key = tuple(np.round(p, 9) + 0.0)
        if key not in index:
            index[key] = len(pts)
            pts.append(np.asarray(p, dtype=float))
        return index[key]

    polys = [[vid(p) for p in tri] for tri in triangles]
    arr = np.array(pts)
    merged = True
    while merged:
        merged = False
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                m = _merge_pair(polys[i], polys[j], arr, normal)
                if m is not None:
                    polys[i] = m
                    del polys[j]
                    merged = True
                    break
            if merged:
                break
    return [arr[p] for p in polys]


def import_stl(
    path: str | Path,
    material_map: Mapping[str, object],
    merge: bool = True,
    scale: float | None = None,
) -> Scene:
    """Build a Scene from an STL mesh, assigning materials per solid name."""
    facets = read_stl(path)
    mapping = dict(material_map)
    if scale is None:
        scale = float(mapping.pop("scale", 1.0))
    else:
        mapping.pop("scale", None)
    planes: list = []
    groups: dict[int, list[np.ndarray]] = defaultdict(list)
    counters: dict[str, int] = defaultdict(int)
    surfaces: list[Surface] = []
    for n_facet, (solid, tri) in enumerate(facets):
        material = mapping.get(solid, mapping.get("*"))
        if material is None:
            raise StlError(f"solid {solid!r} has no entry in the material map")
        tri = tri * scale
        try:
            normal = polygon_normal(tri)
        except SceneError:
            continue  # zero-area facet
        if not merge:
            surfaces.append(Surface(f"{solid}#{n_facet}", tri, str(material)))
            continue
        k = _find_plane(planes, solid, str(material), normal, float(normal @ tri[0]))
        groups[k].append(tri)
    for k, (solid, material, normal, _) in enumerate(planes):
        tris = groups[k]
        for poly in merge_coplanar(tris, normal):
            counters[solid] += 1
            surfaces.append(Surface(f"{solid}#{counters[solid] - 1}", poly, material))
    return Scene(tuple(surfaces), Path(path).stem)


def load_sidecar(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise StlError(f"{path}: sidecar must be a JSON object")
    return doc


def _triangulate(scene: Scene):
    for s in scene.surfaces:
        v = s.vertices
        for k in range(1, len(v) - 1):
            yield s, np.array([v[0], v[k], v[k + 1]])


def write_ascii_stl(scene: Scene, path: str | Path, solid_of=lambda s: s.material) -> None:
    """Write one ASCII solid per group returned by `solid_of(surface)`."""
    by_solid: dict[str, list] = defaultdict(list)
    for s, tri in _triangulate(scene):
        by_solid[solid_of(s)].append((s.normal, tri))
    lines = []
    for name, tris in by_solid.items():
        lines.append(f"solid {name}")
        for n, tri in tris:
            lines.append("  facet normal {:.9e} {:.9e} {:.9e}".format(*n))
            lines.append("    outer loop")
            for p in tri:
                lines.append("      vertex {:.9e} {:.9e} {:.9e}".format(*p))
            lines.append("    endloop")
            lines.append("  endfacet")
        lines.append(f"endsolid {name}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_binary_stl(scene: Scene, path: str | Path, name: str = "default") -> None:
    tris = list(_triangulate(scene))
    header = f"solid {name}".encode("ascii").ljust(80, b"\0")[:80]
    out = bytearray(header)
    out += struct.pack("<I", len(tris))
    for s, tri in tris:
        out += _FACET.pack(*s.normal, *tri.reshape(-1), 0)
    Path(path).write_bytes(bytes(out))
