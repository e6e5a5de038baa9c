"""SNR -> AIR lookup table and the exact rate arithmetic around it."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from fsolink.airlut import (
    AirTable,
    MCConfig,
    RatePlan,
    air_for_rate,
    build_air_table,
    load_air_table,
    lookup_air,
    min_snr_for_air,
    net_bit_rate,
    save_air_table,
)
from fsolink.shaping import FrameConfig


def _table(snr, air, th=0.9):
    return AirTable(snr_db=np.asarray(snr, float), air=np.asarray(air, float),
                    ngmi_th=th, M=64, mc_symbols=1000, seed=0)


# --------------------------------------------------------------- rate plan

def test_rate_plan_product_is_exact():
    plan = RatePlan()
    assert plan.net_symbol_rate == Fraction(50_000_000_000)


def test_rate_plan_from_frame_config():
    plan = RatePlan.from_frame(FrameConfig())
    assert plan.gross_symbol_rate == 64_000_000_000
    assert plan.fec_rate == Fraction(5, 6)
    assert plan.pilot_rate == Fraction(15, 16)
    assert plan.net_symbol_rate == Fraction(50_000_000_000)


def test_net_bit_rate_values_exact():
    assert net_bit_rate(12.0) == 600e9
    assert net_bit_rate(8.0) == 400e9
    assert net_bit_rate(10.0) == 500e9
    assert net_bit_rate(0.0) == 0.0


def test_net_bit_rate_range_check():
    with pytest.raises(ValueError):
        net_bit_rate(12.5)
    with pytest.raises(ValueError):
        net_bit_rate(-0.1)


def test_air_for_rate_inverse_values():
    assert air_for_rate(400e9) == 8.0
    assert air_for_rate(500e9) == 10.0
    assert air_for_rate(600e9) == 12.0
    with pytest.raises(ValueError):
        air_for_rate(601e9)
    with pytest.raises(ValueError):
        air_for_rate(-1.0)


def test_rate_round_trip_is_exact():
    for a in np.linspace(0.0, 12.0, 25):
        assert air_for_rate(net_bit_rate(float(a))) == pytest.approx(float(a),
                                                                     abs=1e-12)


def test_rate_plan_validation():
    with pytest.raises(ValueError):
        RatePlan(fec_rate=Fraction(7, 6))


# ------------------------------------------------------------- table type

def test_table_validation():
    with pytest.raises(ValueError):
        _table([10.0], [4.0])  # single grid point
    with pytest.raises(ValueError):
        _table([10.0, 10.0], [4.0, 5.0])  # not strictly increasing
    with pytest.raises(ValueError):
        _table([10.0, 12.0], [5.0, 4.0])  # AIR decreasing
    with pytest.raises(ValueError):
        _table([10.0, 12.0], [4.0, 13.0])  # AIR above 2 log2 M
    with pytest.raises(ValueError):
        _table([10.0, 12.0], [4.0, 5.0], th=1.0)  # threshold out of range


def test_lookup_interpolation_rules():
    table = _table([10.0, 12.0, 14.0], [4.0, 6.0, 10.0])
    assert lookup_air(table, 12.0) == 6.0  # grid identity
    assert lookup_air(table, 11.0) == 5.0  # midpoint average
    assert lookup_air(table, 5.0) == 4.0  # clamp below
    assert lookup_air(table, 20.0) == 10.0  # clamp above


def test_min_snr_for_air():
    table = _table([0.0, 10.0, 20.0], [0.0, 6.0, 12.0])
    assert min_snr_for_air(table, 6.0) == 10.0
    assert min_snr_for_air(table, 9.0) == 15.0
    assert min_snr_for_air(table, 0.0) == 0.0
    assert min_snr_for_air(table, 12.5) == math.inf


def test_mc_config_validation():
    with pytest.raises(ValueError):
        MCConfig(mc_symbols=0)


# ------------------------------------------------------------ table build

def test_build_rejects_bad_grid():
    with pytest.raises(ValueError):
        build_air_table([10.0], MCConfig(mc_symbols=1000))
    with pytest.raises(ValueError):
        build_air_table([10.0, 9.0], MCConfig(mc_symbols=1000))
    with pytest.raises(ValueError):
        build_air_table([10.0, 11.0], MCConfig(mc_symbols=1000), ngmi_th=1.5)


def test_build_high_snr_saturates_and_low_snr_shuts_off():
    mc = MCConfig(mc_symbols=20_000, seed=5)
    top = build_air_table([29.0, 30.0], mc)
    assert top.air[-1] == 12.0
    bottom = build_air_table([-10.0, -9.0], mc)
    assert bottom.air[0] == 0.0


def test_build_monotone_and_bounded():
    mc = MCConfig(mc_symbols=4_000, seed=3)
    table = build_air_table(np.arange(4.0, 22.0, 3.0), mc)
    assert np.all(np.diff(table.air) >= 0)
    assert np.all((table.air >= 0) & (table.air <= 12.0))
    # Entropy bisection quantizes to 0.01-bit steps, doubled for two pols.
    steps = np.round(table.air / 0.02)
    np.testing.assert_allclose(table.air, steps * 0.02, atol=1e-12)


def test_build_deterministic_bit_identical():
    mc = MCConfig(mc_symbols=4_000, seed=3)
    grid = [10.0, 12.0, 14.0]
    a = build_air_table(grid, mc)
    b = build_air_table(grid, mc)
    assert np.array_equal(a.air, b.air)
    assert np.array_equal(a.snr_db, b.snr_db)


# ------------------------------------------------------------ persistence

def test_json_round_trip_and_schema(tmp_path):
    table = _table([10.0, 12.0, 14.0], [4.0, 6.0, 10.0])
    path = tmp_path / "lut.json"
    save_air_table(table, path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"ngmi_th", "M", "snr_db", "air", "mc_symbols", "seed"}
    assert doc["ngmi_th"] == 0.9
    assert doc["M"] == 64
    back = load_air_table(path)
    np.testing.assert_array_equal(back.snr_db, table.snr_db)
    np.testing.assert_array_equal(back.air, table.air)
    assert back.mc_symbols == table.mc_symbols
    assert back.seed == table.seed


def test_load_rejects_missing_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"ngmi_th": 0.9, "M": 64, "snr_db": [1, 2]}))
    with pytest.raises(ValueError, match="missing key"):
        load_air_table(path)
