import pytest
from hypothesis import given, strategies as st

from cryoloop.components import (
    CapacityCurve,
    CryocoolerModel,
    CryofanModel,
    HeatSinkModel,
    LineSegment,
    ReliefValveModel,
    ValveModel,
    cold_head_temperature_for_load,
    conduction_leak,
    cooling_power_at,
    fan_head,
    passive_leak,
)
from cryoloop.errors import DomainError
from cryoloop.presets import COOLER1_ANCHORS, COOLER2_ANCHORS, FAN


def test_capacity_curve_validation():
    with pytest.raises(DomainError):
        CapacityCurve(((20.0, 0.0),))
    with pytest.raises(DomainError):
        CapacityCurve(((20.0, 0.0), (20.0, 5.0)))
    with pytest.raises(DomainError):
        CapacityCurve(((20.0, 5.0), (30.0, 1.0)))


def test_combined_default_pair_rating():
    pair = CapacityCurve(COOLER1_ANCHORS), CapacityCurve(COOLER2_ANCHORS)
    total = sum(c.power_at(80.0) for c in pair)
    assert total == pytest.approx(396.0, rel=1e-12)


def test_power_at_base_temperature():
    for anchors in (COOLER1_ANCHORS, COOLER2_ANCHORS):
        curve = CapacityCurve(anchors)
        assert curve.power_at(20.0) == 0.0
        assert curve.power_at(10.0) == 0.0


def test_two_anchor_midpoint():
    curve = CapacityCurve(((20.0, 0.0), (80.0, 396.0)))
    assert curve.power_at(50.0) == pytest.approx(198.0, rel=1e-12)


def test_extrapolation_above_last_anchor():
    curve = CapacityCurve(((20.0, 0.0), (80.0, 396.0)))
    assert curve.power_at(110.0) == pytest.approx(396.0 + 6.6 * 30.0, rel=1e-12)


@given(st.floats(min_value=20.0, max_value=80.0))
def test_inverse_round_trip(temperature):
    model = CryocoolerModel(curve=CapacityCurve(COOLER1_ANCHORS))
    power = cooling_power_at(model, temperature)
    recovered = cold_head_temperature_for_load(model, power)
    assert cooling_power_at(model, recovered) == pytest.approx(power, rel=1e-9, abs=1e-9)


def test_zero_load_gives_base_temperature():
    model = CryocoolerModel(curve=CapacityCurve(COOLER2_ANCHORS))
    assert cold_head_temperature_for_load(model, 0.0) == 20.0
    with pytest.raises(DomainError):
        cold_head_temperature_for_load(model, -5.0)


def test_fan_reference_operating_point():
    assert fan_head(FAN, 21000.0, 0.40 / 3600.0) == pytest.approx(9.8e3, rel=1e-12)


def test_fan_affinity_derived_point():
    # same system curve scaled by the affinity laws: half speed, half flow
    assert fan_head(FAN, 10500.0, 0.20 / 3600.0) == pytest.approx(2.45e3, rel=1e-12)


@given(
    rpm=st.floats(min_value=6000.0, max_value=21000.0),
    flow=st.floats(min_value=0.0, max_value=2e-4),
)
def test_fan_affinity_property(rpm, flow):
    ref = 21000.0
    scaled = (rpm / ref) ** 2 * fan_head(FAN, ref, flow * ref / rpm)
    assert fan_head(FAN, rpm, flow) == pytest.approx(scaled, rel=1e-12, abs=1e-9)


def test_fan_cutoff_flow():
    cutoff = (FAN.shutoff_head / FAN.internal_loss_coefficient) ** 0.5
    assert fan_head(FAN, 21000.0, cutoff) == pytest.approx(0.0, abs=1e-6)


def test_fan_rpm_clamping():
    assert FAN.clamp_rpm(25000.0) == (21000.0, True)
    assert FAN.clamp_rpm(3000.0) == (6000.0, True)
    assert FAN.clamp_rpm(0.0) == (0.0, False)
    assert FAN.clamp_rpm(12000.0) == (12000.0, False)


@given(st.floats(min_value=0.05, max_value=1.0))
def test_valve_resistance_decreasing(opening):
    valve = ValveModel(opening=opening, full_open_resistance=1e11)
    tighter = ValveModel(opening=opening * 0.9, full_open_resistance=1e11)
    assert tighter.resistance > valve.resistance
    assert ValveModel(opening=1.0, full_open_resistance=1e11).resistance == 1e11


def test_closed_valve():
    valve = ValveModel(opening=0.0, full_open_resistance=1e11)
    assert valve.is_closed
    with pytest.raises(DomainError):
        _ = valve.resistance


def test_passive_leak_values():
    assert passive_leak(LineSegment(length=30.0)) == pytest.approx(6.0, rel=1e-12)
    assert passive_leak(LineSegment(length=0.0)) == 0.0
    assert passive_leak(
        LineSegment(length=10.0, passive_leak_per_meter=0.5)
    ) == pytest.approx(5.0, rel=1e-12)


def test_conduction_leak_values():
    expected = (295.0 - 70.0) / 146.0
    assert conduction_leak(146.0, 295.0, 70.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.54, abs=5e-3)
    assert conduction_leak(146.0, 60.0, 60.0) == 0.0
    assert conduction_leak(292.0, 295.0, 70.0) == pytest.approx(expected / 2.0, rel=1e-12)
    with pytest.raises(DomainError):
        conduction_leak(0.0, 295.0, 70.0)


def test_heat_sink_plate_temperature():
    sink = HeatSinkModel(contact_resistance_area=1.1, contact_area=18.0)
    assert sink.plate_temperature(62.0, 0.0) == 62.0
    assert sink.plate_temperature(62.0, 75.0) == pytest.approx(
        62.0 + 75.0 / (1.1 * 18.0), rel=1e-12
    )


def test_relief_valve_validation():
    with pytest.raises(DomainError):
        ReliefValveModel(set_pressure=23e5, reseat_pressure=24e5)
