import cmath
import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from matbeam.materials import (
    TABLE_ANGLES_DEG,
    AngleOutOfRangeError,
    ComplexPermittivity,
    Material,
    RlDatabase,
    RlModel,
    UnknownMaterialError,
    build_rl_database,
    builtin_materials,
    complex_permittivity,
    fresnel_te,
    fresnel_tm,
    identify_material,
    load_materials,
    material_index,
    reflection_loss,
    rl_from_measurement,
    save_materials,
)
from matbeam.propagation import fspl

from .reference import RL_TABLE

MATS = material_index(builtin_materials())
ORDER = ["glass", "plaster", "plywood", "glass wool", "polystyrene"]


def test_builtin_materials():
    mats = builtin_materials()
    assert len(mats) == 5
    assert len({m.name for m in mats}) == 5
    assert MATS["glass"] == Material("glass", 6.31, 0.0036, 1.3394)
    assert MATS["polystyrene"] == Material("polystyrene", 1.05, 0.000008, 1.1)


@pytest.mark.parametrize("kwargs", [dict(eps_r=0.5, sigma_c=0, sigma_d=1), dict(eps_r=2, sigma_c=-1, sigma_d=1)])
def test_material_validation(kwargs):
    with pytest.raises(ValueError):
        Material("x", **kwargs)


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        material_index([MATS["glass"], MATS["glass"]])


def test_complex_permittivity_examples():
    glass = complex_permittivity(MATS["glass"], 100)
    assert glass.real_part == 6.31
    assert glass.imag_part == pytest.approx(17.98 * 0.0036 * 100**1.3394 / 100, rel=1e-12)
    # The quoted 0.3088 is truncated; the exact value is 0.30895.
    assert glass.imag_part == pytest.approx(0.3088, abs=2e-4)
    ply = complex_permittivity(MATS["plywood"], 100)
    assert ply.imag_part == pytest.approx(0.10788, abs=1e-12)
    lossless = complex_permittivity(Material("air-ish", 1.5, 0.0, 1.0), 37.0)
    assert lossless.value == complex(1.5, 0.0)


def test_complex_permittivity_rejects_bad_frequency():
    with pytest.raises(ValueError):
        complex_permittivity(MATS["glass"], 0)


def te_oracle(theta_deg, eta):
    th = math.radians(theta_deg)
    root = cmath.sqrt(eta - math.sin(th) ** 2)
    return (math.cos(th) - root) / (math.cos(th) + root)


def test_fresnel_te_normal_incidence():
    eta = complex(6.31, -0.309)
    r = fresnel_te(0.0, eta)
    assert abs(r) == pytest.approx(0.431, abs=5e-4)
    assert r == pytest.approx((1 - cmath.sqrt(eta)) / (1 + cmath.sqrt(eta)), abs=1e-12)


@given(st.floats(0, 89.99))
def test_fresnel_vanishes_without_contrast(theta):
    # cos(theta) - sqrt(cos^2) cancels to rounding noise near grazing.
    assert abs(fresnel_te(theta, 1 + 0j)) < 1e-9
    assert abs(fresnel_tm(theta, 1 + 0j)) < 1e-9


def test_fresnel_grazing_limit():
    for m in builtin_materials():
        eta = complex_permittivity(m, 100)
        r = fresnel_te(89.9999, eta)
        assert abs(r) > 0.999
        assert r.real < 0


@pytest.mark.parametrize("theta", [-1.0, 90.0, 120.0, float("nan")])
def test_fresnel_rejects_bad_angles(theta):
    with pytest.raises(ValueError):
        fresnel_te(theta, 2 + 0j)
    with pytest.raises(ValueError):
        reflection_loss(theta, MATS["glass"], 100)


@given(
    st.floats(0, 89.9),
    st.floats(1.0, 20.0),
    st.floats(0.0, 5.0),
)
def test_fresnel_passive_magnitude(theta, eps, loss):
    eta = complex(eps, -loss)
    r_te = fresnel_te(theta, eta)
    assert abs(r_te) <= 1 + 1e-12
    assert abs(fresnel_tm(theta, eta)) <= 1 + 1e-12
    assert r_te == pytest.approx(te_oracle(theta, eta), abs=1e-12)


def test_te_model_is_bare_te_expression():
    for m in builtin_materials():
        for a in (0.0, 33.3, 71.0):
            r = fresnel_te(a, complex_permittivity(m, 100))
            assert reflection_loss(a, m, 100, RlModel.te()) == pytest.approx(-20 * math.log10(abs(r)), abs=1e-12)


@pytest.mark.parametrize(
    "theta, name, expected", [(0, "glass", 7.59), (80, "polystyrene", 12.83), (50, "plaster", 11.07)]
)
def test_reflection_loss_examples(theta, name, expected):
    assert reflection_loss(theta, MATS[name], 100) == pytest.approx(expected, abs=0.5)


def test_reflection_loss_infinite_when_nothing_reflects():
    # Matched dielectric, TE only: r = 0.
    assert reflection_loss(20.0, Material("matched", 1.0, 0.0, 1.0), 100, RlModel.te()) == math.inf


def test_default_database_tracks_table_closely(table_db):
    for name, row in RL_TABLE.items():
        for angle, value in zip(TABLE_ANGLES_DEG, row):
            assert table_db.rl_at(name, angle) == pytest.approx(value, abs=0.01)


def test_database_is_per_angle_reflection_loss(table_db):
    for m in builtin_materials():
        for k, a in enumerate(TABLE_ANGLES_DEG):
            assert table_db.entries[m.name][k] == reflection_loss(a, m, 100)


def test_single_cell_database():
    db = build_rl_database([MATS["plywood"]], [37.0], 60.0)
    assert db.entries == {"plywood": (reflection_loss(37.0, MATS["plywood"], 60.0),)}


@pytest.mark.parametrize("model", [RlModel(), RlModel.te()])
def test_rows_monotone_and_ordered(model):
    db = build_rl_database(builtin_materials(), TABLE_ANGLES_DEG, 100, model)
    for name in ORDER:
        row = db.entries[name]
        assert all(b <= a for a, b in zip(row, row[1:])), name
        assert all(v >= 0 for v in row)
    for k in range(len(TABLE_ANGLES_DEG)):
        col = [db.entries[n][k] for n in ORDER]
        assert col == sorted(col)


@given(st.sampled_from(builtin_materials()), st.floats(0, 89.9))
def test_rl_non_negative_and_finite(m, theta):
    for model in (RlModel(), RlModel.te()):
        rl = reflection_loss(theta, m, 100, model)
        assert 0 <= rl < math.inf


def test_rl_vanishes_at_grazing():
    for m in builtin_materials():
        assert reflection_loss(89.999, m, 100) < 0.05


def test_database_validation():
    with pytest.raises(ValueError):
        RlDatabase(100.0, (10.0, 5.0), {})
    with pytest.raises(ValueError):
        RlDatabase(100.0, (0.0, 90.0), {})
    with pytest.raises(ValueError):
        RlDatabase(100.0, (0.0, 10.0), {"x": (1.0,)})
    with pytest.raises(ValueError):
        build_rl_database(builtin_materials(), [], 100)


def test_rl_at_interpolates_and_checks_range(table_db):
    mid = table_db.rl_at("glass", 55.0)
    assert mid == pytest.approx((table_db.rl_at("glass", 50) + table_db.rl_at("glass", 60)) / 2)
    with pytest.raises(AngleOutOfRangeError):
        table_db.rl_at("glass", 85.0)
    with pytest.raises(UnknownMaterialError):
        table_db.rl_at("granite", 10.0)


def test_identify_material_examples(table_db):
    ref = RlDatabase(100.0, TABLE_ANGLES_DEG, {k: v for k, v in RL_TABLE.items()})
    assert identify_material(7.11, 50, ref) == ("glass", 0.0)
    assert identify_material(26.31, 0, ref) == ("glass wool", 0.0)
    for name, angle, rl in table_db.rows():
        assert identify_material(rl, angle, table_db) == (name, 0.0)


def test_identify_material_tie_prefers_lower_rl():
    db = RlDatabase(100.0, (0.0,), {"a": (10.0,), "b": (12.0,)})
    assert identify_material(11.0, 0.0, db) == ("a", 1.0)
    db = RlDatabase(100.0, (0.0,), {"z": (10.0,), "y": (10.0,)})
    assert identify_material(10.0, 0.0, db)[0] == "y"


def test_identify_material_out_of_range(table_db):
    with pytest.raises(AngleOutOfRangeError):
        identify_material(5.0, 85.0, table_db)


def test_rl_from_measurement_examples():
    assert rl_from_measurement(30, -62.79, 4.6, 100).rl_db == pytest.approx(7.08, abs=0.01)
    assert rl_from_measurement(30, -71.56, 4.87, 100).rl_db == pytest.approx(15.36, abs=0.01)
    assert rl_from_measurement(10, 10 - fspl(100, 3.0), 3.0, 100).rl_db == pytest.approx(0.0, abs=1e-12)


def test_rl_from_measurement_flags_inconsistency():
    est = rl_from_measurement(30, 30 - fspl(100, 3.0) + 2.0, 3.0, 100)
    assert est.rl_db == pytest.approx(-2.0)
    assert not est.consistent


@given(st.floats(0, 50), st.floats(0.1, 100), st.floats(1, 300))
def test_rl_from_measurement_inverts_overall_pl(x, d, f):
    p_tx = 20.0
    assert rl_from_measurement(p_tx, p_tx - fspl(f, d) - x, d, f).rl_db == pytest.approx(x, abs=1e-9)


def test_material_file_roundtrip(tmp_path):
    path = tmp_path / "mats.csv"
    save_materials(builtin_materials(), path)
    assert load_materials(path) == builtin_materials()
    js = tmp_path / "mats.json"
    js.write_text('{"materials": [{"name": "brick", "eps_r": 3.75, "sigma_c": 0.038, "sigma_d": 0}]}')
    assert load_materials(js) == [Material("brick", 3.75, 0.038, 0.0)]


def test_material_file_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("name,eps_r,sigma_c,sigma_d\nglass,abc,0,1\n")
    with pytest.raises(ValueError, match="record 1"):
        load_materials(path)


def test_database_csv(table_db):
    buf = io.StringIO()
    table_db.to_csv(buf, precision=2)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "material,angle_deg,rl_db"
    assert lines[1] == "glass,0.00,7.59"
    assert len(lines) == 46
    ComplexPermittivity(1.0, 0.0)  # constructible value type
