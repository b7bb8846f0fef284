import struct

import numpy as np
import pytest

from matbeam.scene import Scene, box_surfaces
from matbeam.stl import StlError, import_stl, load_sidecar, parse_ascii_stl, read_stl, write_ascii_stl, write_binary_stl

CUBE_FACES = dict.fromkeys(["x0", "x1", "y0", "y1", "z0", "z1"], "plywood")


def cube_scene():
    return Scene(tuple(box_surfaces((0, 0, 0), (1, 1, 1), CUBE_FACES, inward=False)))


def areas_by_material(scene):
    out = {}
    for s in scene.surfaces:
        out[s.material] = out.get(s.material, 0.0) + s.area
    return out


def test_ascii_cube(tmp_path):
    path = tmp_path / "cube.stl"
    write_ascii_stl(cube_scene(), path, solid_of=lambda s: "cube")
    merged = import_stl(path, {"cube": "plywood"})
    assert len(merged) == 6
    assert all(len(s.vertices) == 4 and s.material == "plywood" for s in merged)
    raw = import_stl(path, {"cube": "plywood"}, merge=False)
    assert len(raw) == 12
    assert areas_by_material(merged)["plywood"] == pytest.approx(6.0, rel=1e-6)
    assert areas_by_material(raw)["plywood"] == pytest.approx(6.0, rel=1e-6)


def test_binary_matches_ascii(tmp_path):
    a, b = tmp_path / "a.stl", tmp_path / "b.stl"
    write_ascii_stl(cube_scene(), a, solid_of=lambda s: "cube")
    write_binary_stl(cube_scene(), b, name="cube")
    sa = import_stl(a, {"cube": "plywood"}, merge=False)
    sb = import_stl(b, {"cube": "plywood"}, merge=False)
    assert len(sa) == len(sb) == 12
    for x, y in zip(sa, sb):
        np.testing.assert_allclose(x.vertices, y.vertices, atol=1e-6)


def test_binary_header_count(tmp_path):
    path = tmp_path / "b.stl"
    write_binary_stl(cube_scene(), path)
    data = path.read_bytes()
    (count,) = struct.unpack_from("<I", data, 80)
    assert count == 12
    assert len(read_stl(path)) == count
    assert import_stl(path, {"default": "glass"}, merge=False).surfaces[0].material == "glass"


def test_binary_truncated(tmp_path):
    path = tmp_path / "b.stl"
    write_binary_stl(cube_scene(), path)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(StlError, match="truncated"):
        read_stl(path)
    path.write_bytes(b"\0" * 20)
    with pytest.raises(StlError, match="header"):
        read_stl(path)


@pytest.mark.parametrize(
    "text, msg",
    [
        ("solid a\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nendloop\nendfacet\nendsolid a\n", "2 vertices"),
        ("solid a\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\n", "truncated"),
        ("solid a\nsolid b\n", "nested"),
        ("solid a\nouter loop\nvertex 0 0\n", "malformed vertex"),
        ("solid a\nbogus\nendsolid a\n", "unknown keyword"),
    ],
)
def test_ascii_diagnostics(text, msg):
    with pytest.raises(StlError, match=msg):
        parse_ascii_stl(text)


def test_unmapped_solid(tmp_path):
    path = tmp_path / "cube.stl"
    write_ascii_stl(cube_scene(), path, solid_of=lambda s: "cube")
    with pytest.raises(StlError, match="'cube'"):
        import_stl(path, {"other": "glass"})
    assert import_stl(path, {"*": "glass"}).surfaces[0].material == "glass"


def test_sidecar_scale(tmp_path):
    path = tmp_path / "cube.stl"
    write_ascii_stl(cube_scene(), path, solid_of=lambda s: "cube")
    side = tmp_path / "map.json"
    side.write_text('{"cube": "plywood", "scale": 0.001}')
    scene = import_stl(path, load_sidecar(side))
    assert areas_by_material(scene)["plywood"] == pytest.approx(6e-6, rel=1e-6)


def test_office_via_stl(tmp_path, office_scene):
    """Exporting the office to STL and re-importing keeps every surface and area."""
    path = tmp_path / "office.stl"
    write_ascii_stl(office_scene, path, solid_of=lambda s: s.id)
    mapping = {s.id: s.material for s in office_scene}
    scene = import_stl(path, mapping)
    ref = areas_by_material(office_scene)
    got = areas_by_material(scene)
    assert set(got) == set(ref)
    for m in ref:
        assert got[m] == pytest.approx(ref[m], rel=1e-6)
    assert len(scene) == len(office_scene)
    unmerged = import_stl(path, mapping, merge=False)
    for m in ref:
        assert areas_by_material(unmerged)[m] == pytest.approx(ref[m], rel=1e-6)


def test_merge_keeps_non_convex_unions_apart(tmp_path):
    # An L-shaped floor of three unit squares cannot become one convex polygon.
    squares = [((0, 0), (1, 1)), ((1, 0), (2, 1)), ((0, 1), (1, 2))]
    surfaces = []
    for k, ((x0, y0), (x1, y1)) in enumerate(squares):
        surfaces += box_surfaces((x0, y0, 0), (x1, y1, 0), {"z0": "plywood"}, prefix=f"s{k}")
    path = tmp_path / "l.stl"
    write_ascii_stl(Scene(tuple(surfaces)), path, solid_of=lambda s: "floor")
    scene = import_stl(path, {"floor": "plywood"})
    assert 1 < len(scene) < 6
    assert areas_by_material(scene)["plywood"] == pytest.approx(3.0, rel=1e-9)
