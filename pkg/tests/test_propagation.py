import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from matbeam.materials import rl_from_measurement
from matbeam.propagation import LinkBudget, fspl, overall_pl, received_power

C = 299_792_458.0


def friis_db(f_ghz, d):
    # Independent form: 20 log10(4 pi d f / c).
    return 20 * math.log10(4 * math.pi * d * f_ghz * 1e9 / C)


@pytest.mark.parametrize("d, expected", [(4.6, 85.71), (4.87, 86.2)])
def test_fspl_table_values(d, expected):
    assert fspl(100, d) == pytest.approx(expected, abs=0.05)


def test_fspl_one_metre():
    # 72.44 is quoted from a rounded constant; the exact value is 72.448.
    assert fspl(100, 1.0) == pytest.approx(72.44, abs=0.01)
    assert fspl(100, 1.0) == pytest.approx(friis_db(100, 1.0), abs=1e-9)


@pytest.mark.parametrize("f, d", [(0, 1), (-1, 1), (100, 0), (100, -2)])
def test_fspl_rejects_non_positive(f, d):
    with pytest.raises(ValueError):
        fspl(f, d)


@pytest.mark.parametrize("f, r, total", [(85.71, 7.08, 92.79), (91.42, 7.54, 98.96), (80.0, 0.0, 80.0)])
def test_overall_pl(f, r, total):
    assert overall_pl(f, r) == pytest.approx(total, abs=1e-9)


def test_received_power():
    assert received_power(LinkBudget(30, 0, 0), 92.79) == pytest.approx(-62.79)
    assert received_power(LinkBudget(17.5, 0, 0), 0.0) == 17.5
    assert received_power(LinkBudget(30, 25, 0), 92.79) == pytest.approx(-37.79)


def test_budget_rejects_bad_frequency():
    with pytest.raises(ValueError):
        LinkBudget(f_c=0)


distances = st.floats(1e-3, 1e4)
freqs = st.floats(0.1, 1000)


@given(freqs, distances)
def test_distance_doubling_adds_6db(f, d):
    assert fspl(f, 2 * d) - fspl(f, d) == pytest.approx(20 * math.log10(2), abs=1e-9)


@given(freqs, distances)
def test_frequency_doubling_adds_6db(f, d):
    assert fspl(2 * f, d) - fspl(f, d) == pytest.approx(20 * math.log10(2), abs=1e-9)


@given(freqs, distances)
def test_fspl_matches_friis(f, d):
    assert fspl(f, d) == pytest.approx(friis_db(f, d), abs=1e-9)


@given(freqs, distances, st.floats(0, 60), st.floats(-30, 40))
def test_closed_loop_recovers_rl(f, d, rl, p_tx):
    p_rx = received_power(LinkBudget(p_tx, 0, 0, f), overall_pl(fspl(f, d), rl))
    est = rl_from_measurement(p_tx, p_rx, d, f)
    assert est.rl_db == pytest.approx(rl, abs=1e-9)
    assert est.consistent
