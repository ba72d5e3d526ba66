import pytest

from cryoloop.errors import CapacityExceededError, ConvergenceError, DomainError
from cryoloop.gas import CP_HE
from cryoloop.network import build_node_graph
from cryoloop.presets import paper_topology
from cryoloop.steady import ambient_taper, solve_steady, two_experiment_validation

TABLE1 = {
    "T1": 51.0, "T2": 55.1, "T3": 53.0, "T4": 55.0, "T5": 79.5, "T9": 58.5,
    "T10": 82.5, "T11": 62.0, "T12": 79.0, "T7": 65.0, "T8": 70.5,
}


def test_scaled_configuration_sensor_table(table1_report):
    widened = {"T5", "T10"}  # merge-order ambiguity widens these two
    for sensor, expected in TABLE1.items():
        tol = 4.0 if sensor in widened else 3.0
        assert abs(table1_report.sensors[sensor] - expected) <= tol, sensor


def test_scaled_configuration_cooler_temperatures(table1_report):
    heads = table1_report.cooler_head_temperatures
    assert abs(heads["cooler0"] - 51.0) <= 2.0
    assert abs(heads["cooler1"] - 55.0) <= 2.0
    # the support-structure conduction adds ~6 W on top of the 291 W budget
    assert table1_report.total_cooler_w == pytest.approx(291.0, rel=0.025)


def test_scaled_configuration_sink_plates(table1_report):
    plates = table1_report.sink_plate_temperatures
    assert abs(plates["exp1"] - 65.5) <= 2.0
    assert abs(plates["exp2"] - 68.0) <= 2.0


def test_energy_closure(table1_report):
    r = table1_report
    closure = r.total_cooler_w - (r.total_active_w + r.total_passive_w)
    assert abs(closure) <= 1e-6 * r.total_load_w
    assert r.max_residual_w <= 1e-6 * r.total_load_w


def test_loop_balance_cross_check(table1_report):
    # transported power equals mdot * cp * (cryostat inlet - fan intake)
    r = table1_report
    mdot = r.flow.total_mass_flow
    transported = mdot * CP_HE * (r.sensors["T5"] - r.sensors["T3"])
    assert transported == pytest.approx(291.0, rel=0.025)


def test_advection_identity_on_every_edge(table1_report):
    # dT of each flowing non-cooler node equals its absorbed power / (mdot cp)
    r = table1_report
    topo = paper_topology(4)
    graph = build_node_graph(topo)
    temps = r.node_temperatures
    mdots = r.flow.mass_flows
    amb = topo.ambient_temperature
    for node in graph.nodes:
        if node.cooler_index >= 0:
            continue
        w_in = [(mdots[key] * CP_HE, temps[src]) for src, key in node.inflows]
        w = sum(x for x, _ in w_in)
        if w <= 0.0:
            continue
        t_mix = sum(x * t for x, t in w_in) / w
        q = node.passive_w * ambient_taper(temps[node.name], amb)
        q += node.ambient_conductance * (amb - temps[node.name])
        if node.heater:
            q += r.active_loads.get(node.branch, 0.0)
        assert temps[node.name] - t_mix == pytest.approx(q / w, rel=1e-9, abs=1e-9)


def test_zero_load_zero_passive_reaches_base():
    topo = paper_topology(2, cryostat_passive_w=0.0,
                          loop_passive_w={"exp1": 0.0, "exp2": 0.0},
                          include_support_conduction=False)
    report = solve_steady(topo, 21000.0, {}, 20e5)
    for sensor, value in report.sensors.items():
        assert value == pytest.approx(20.0, abs=1e-6), sensor


def test_monotonicity_in_active_load():
    topo = paper_topology(2)
    low = solve_steady(topo, 21000.0, {"exp1": 10.0}, 20e5)
    high = solve_steady(topo, 21000.0, {"exp1": 30.0}, 20e5)
    for name in low.node_temperatures:
        assert high.node_temperatures[name] >= low.node_temperatures[name] - 1e-9


def test_grid_independence():
    coarse = solve_steady(paper_topology(2), 21000.0, {"exp1": 25.0}, 20e5)
    fine = solve_steady(
        paper_topology(2, trunk_segments=4), 21000.0, {"exp1": 25.0}, 20e5
    )
    for sensor in coarse.sensors:
        assert fine.sensors[sensor] == pytest.approx(
            coarse.sensors[sensor], abs=1e-6
        ), sensor


def test_two_experiment_load_case():
    report = two_experiment_validation({"exp1": 40.0, "exp2": 80.0})
    assert report.sensors["T8"] < 100.0
    assert report.sink_plate_temperatures["exp2"] < 100.0


def test_two_experiment_no_load_plateau():
    report = two_experiment_validation({})
    assert abs(report.sink_plate_temperatures["exp1"] - 34.0) <= 3.0
    assert abs(report.sink_plate_temperatures["exp2"] - 34.0) <= 3.0


def test_single_experiment_no_load_plateau():
    topo = paper_topology(2)
    topo = topo.with_valve("exp2", "supply", 0.0).with_valve("exp2", "return", 0.0)
    report = solve_steady(topo, 21000.0, {}, 20e5)
    assert abs(report.sink_plate_temperatures["exp1"] - 32.0) <= 3.0
    # budgeted 86 W plus the support-structure conduction into the cold sink
    conduction = (295.0 - report.sensors["T12"]) / 146.0
    assert report.total_passive_w == pytest.approx(86.0 + conduction, rel=1e-6)


def test_heater_step_identity_at_pinned_reference():
    # conduction off so the heater step is the exact power step on the sink
    topo = paper_topology(2, include_support_conduction=False)
    baseline = solve_steady(topo, 21000.0, {"exp1": 20.0}, 20e5)
    ref = baseline.reference_state
    before = solve_steady(topo, 21000.0, {"exp1": 20.0}, 20e5, reference_state=ref)
    after = solve_steady(topo, 21000.0, {"exp1": 30.0}, 20e5, reference_state=ref)
    mdot_cp = before.flow.mass_flows["exp1"] * CP_HE
    rise_before = before.sensors["T12"] - before.sensors["T11"]
    rise_after = after.sensors["T12"] - after.sensors["T11"]
    assert rise_after - rise_before == pytest.approx(10.0 / mdot_cp, rel=1e-9)


def test_capacity_exceeded():
    topo = paper_topology(2, heater_max_power=6000.0)
    with pytest.raises(CapacityExceededError):
        solve_steady(topo, 21000.0, {"exp1": 5000.0}, 20e5)


def test_convergence_error_reports_residual():
    with pytest.raises(ConvergenceError):
        solve_steady(paper_topology(2), 21000.0, {"exp1": 20.0}, 20e5, max_sweeps=2)


def test_load_validation():
    topo = paper_topology(2)
    with pytest.raises(DomainError):
        solve_steady(topo, 21000.0, {"exp1": -1.0}, 20e5)
    with pytest.raises(DomainError):
        solve_steady(topo, 21000.0, {"exp1": 1000.0}, 20e5)  # above heater limit
    with pytest.raises(KeyError):
        solve_steady(topo, 21000.0, {"exp7": 10.0}, 20e5)
    closed = topo.with_valve("exp2", "supply", 0.0).with_valve("exp2", "return", 0.0)
    with pytest.raises(DomainError):
        solve_steady(closed, 21000.0, {"exp2": 10.0}, 20e5)
