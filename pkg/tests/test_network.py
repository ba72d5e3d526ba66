import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from cryoloop.errors import CircuitBlockedError, DomainError, UndefinedMixError
from cryoloop.gas import GasState
from cryoloop.network import build_node_graph, mix_streams, set_valve, solve_flow
from cryoloop.presets import paper_topology

STATE = GasState(20e5, 53.0)


def total_series_resistance(topology):
    ks = [s.flow_resistance_coefficient for s in topology.cooler_hx]
    pair = 1.0 / sum(1.0 / math.sqrt(k) for k in ks) ** 2
    return topology.series_resistance + pair


def test_two_experiment_calibrated_split():
    flow = solve_flow(paper_topology(2), 21000.0, STATE)
    assert flow.total_volume_flow * 3600.0 == pytest.approx(0.40, rel=1e-9)
    assert flow.volume_flows["exp1"] * 3600.0 == pytest.approx(0.24, rel=1e-9)
    assert flow.volume_flows["exp2"] * 3600.0 == pytest.approx(0.16, rel=1e-9)
    assert flow.residual_pa <= 1.0


def test_four_experiment_mass_split():
    flow = solve_flow(paper_topology(4), 21000.0, STATE)
    mdots = flow.mass_flows
    assert mdots["exp1"] / mdots["total"] == pytest.approx(0.81 / 2.01, rel=1e-9)
    # the three identical branches split exactly equally
    assert mdots["exp2"] == mdots["exp3"] == mdots["exp4"]


def test_junction_mass_conservation():
    flow = solve_flow(paper_topology(4), 21000.0, STATE)
    m = flow.mass_flows
    coolers = m["cooler0"] + m["cooler1"]
    branches = m["exp1"] + m["exp2"] + m["exp3"] + m["exp4"]
    assert abs(coolers - m["total"]) <= 1e-12 * m["total"]
    assert abs(branches - m["total"]) <= 1e-12 * m["total"]


def test_parallel_pressure_drop_equality():
    flow = solve_flow(paper_topology(4), 21000.0, STATE)
    drops = list(flow.branch_pressure_drops.values())
    assert max(drops) - min(drops) <= 1.0


def test_closed_branch_carries_zero_flow():
    topo = set_valve(paper_topology(2), "exp2", "supply", 0.0)
    flow = solve_flow(topo, 21000.0, STATE)
    assert flow.volume_flows["exp2"] == 0.0
    assert flow.volume_flows["exp1"] == flow.total_volume_flow


def test_single_branch_hand_solution():
    # independent oracle: fan curve vs series+single-branch resistance
    topo = set_valve(paper_topology(2), "exp2", "supply", 0.0)
    k_total = total_series_resistance(topo) + topo.branches[0].resistance
    fan = topo.fan
    expected = math.sqrt(fan.shutoff_head / (k_total + fan.internal_loss_coefficient))
    flow = solve_flow(topo, 21000.0, STATE)
    assert flow.total_volume_flow == pytest.approx(expected, rel=1e-12)
    both_open = solve_flow(paper_topology(2), 21000.0, STATE)
    assert flow.total_volume_flow < both_open.total_volume_flow


def test_all_branches_closed_is_blocked():
    topo = paper_topology(2)
    topo = set_valve(topo, "exp1", "supply", 0.0)
    topo = set_valve(topo, "exp2", "return", 0.0)
    with pytest.raises(CircuitBlockedError):
        solve_flow(topo, 21000.0, STATE)


def test_reducing_opening_reduces_branch_share():
    base = solve_flow(paper_topology(2), 21000.0, STATE)
    throttled = solve_flow(
        set_valve(paper_topology(2), "exp2", "supply", 0.5), 21000.0, STATE
    )
    assert throttled.volume_flows["exp2"] < base.volume_flows["exp2"]
    share_before = base.volume_flows["exp2"] / base.total_volume_flow
    share_after = throttled.volume_flows["exp2"] / throttled.total_volume_flow
    assert share_after < share_before


def test_unchanged_valve_gives_identical_solution():
    a = solve_flow(paper_topology(2), 21000.0, STATE)
    b = solve_flow(set_valve(paper_topology(2), "exp1", "supply", 1.0), 21000.0, STATE)
    assert a == b


def test_unknown_branch_rejected():
    with pytest.raises(KeyError):
        set_valve(paper_topology(2), "exp9", "supply", 0.5)
    with pytest.raises(DomainError):
        set_valve(paper_topology(2), "exp1", "sideways", 0.5)


def test_rpm_monotonicity():
    flows = [
        solve_flow(paper_topology(2), rpm, STATE).total_volume_flow
        for rpm in (8000.0, 12000.0, 16000.0, 21000.0)
    ]
    assert all(b > a for a, b in zip(flows, flows[1:]))


def test_rpm_clamp_flag_and_fan_off():
    clamped = solve_flow(paper_topology(2), 30000.0, STATE)
    assert clamped.rpm == 21000.0 and clamped.rpm_clamped
    off = solve_flow(paper_topology(2), 0.0, STATE)
    assert off.total_volume_flow == 0.0
    assert all(v == 0.0 for v in off.mass_flows.values())


def test_order_invariance_under_branch_renumbering():
    topo = paper_topology(2)
    flipped = replace(topo, branches=tuple(reversed(topo.branches)))
    a = solve_flow(topo, 21000.0, STATE)
    b = solve_flow(flipped, 21000.0, STATE)
    for key in ("total", "exp1", "exp2"):
        assert a.volume_flows[key] == pytest.approx(b.volume_flows[key], rel=1e-12)


def test_mix_streams_values():
    assert mix_streams([(1.0, 60.0), (1.0, 80.0)]) == pytest.approx(70.0, rel=1e-12)
    mixed = mix_streams([(0.81e-3, 82.0), (1.20e-3, 77.5)])
    expected = (0.81 * 82.0 + 1.20 * 77.5) / 2.01
    assert mixed == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(79.3, abs=0.05)
    assert mix_streams([(0.5, 66.0)]) == 66.0


def test_mix_streams_undefined():
    with pytest.raises(UndefinedMixError):
        mix_streams([(0.0, 50.0), (0.0, 80.0)])
    with pytest.raises(DomainError):
        mix_streams([(-1.0, 50.0)])


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=1e-6, max_value=1e-2),
            st.floats(min_value=10.0, max_value=300.0),
        ),
        min_size=1,
        max_size=5,
    )
)
def test_mix_streams_conserves_enthalpy_flow(streams):
    t_out = mix_streams(streams)
    lhs = sum(m * t for m, t in streams)
    rhs = sum(m for m, _ in streams) * t_out
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_node_graph_shape_and_sensors():
    graph = build_node_graph(paper_topology(2))
    assert graph.sensor_nodes["T3"] == "fan_intake"
    assert graph.sensor_nodes["T10"] == "exp1_return"
    assert graph.sensor_nodes["T8"] == "exp2_sink"
    # every node reachable: the march order touches each node once
    assert len({n.name for n in graph.nodes}) == len(graph.nodes)
