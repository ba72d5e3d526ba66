"""Closed-loop network topology, flow distribution and junction mixing.

The loop is: return plenum -> two cold-head branches in parallel -> fan
intake -> fan -> cryostat outlet -> supply trunk -> parallel experiment
branches -> return merge -> return plenum. Additional experiments attach in
parallel between the trunk end ("merge inlet") and the return merge.

Flow is solved incompressibly at a single reference gas state (the fan
intake); with quadratic resistances the series/parallel reduction is exact,
and the solution is verified against a 1 Pa residual. Branch volume flows
therefore share one reference density; mass flows are the conserved
quantities.
"""

import math
from dataclasses import dataclass, replace

from .components import (
    CryocoolerModel,
    CryofanModel,
    HeatSinkModel,
    LineSegment,
    ReliefValveModel,
    ValveModel,
)
from .errors import CircuitBlockedError, DomainError, UndefinedMixError
from .gas import GasState

FLOW_RESIDUAL_PA = 1.0


@dataclass(frozen=True)
class ExperimentBranch:
    """One experiment loop: supply valve/line, heat sink, return line/valve."""

    name: str
    supply_valve: ValveModel
    return_valve: ValveModel
    supply_line: LineSegment
    return_line: LineSegment
    heat_sink: HeatSinkModel
    relief_valve: ReliefValveModel

    @property
    def is_open(self) -> bool:
        return not (self.supply_valve.is_closed or self.return_valve.is_closed)

    @property
    def resistance(self) -> float:
        """Series flow resistance [Pa/(m^3/s)^2]; branch must be open."""
        return (
            self.supply_line.flow_resistance_coefficient
            + self.supply_valve.resistance
            + self.heat_sink.flow_resistance_coefficient
            + self.return_line.flow_resistance_coefficient
            + self.return_valve.resistance
        )


@dataclass(frozen=True)
class NetworkTopology:
    """Geometry, components and standing heat leaks of the closed loop."""

    fan: CryofanModel
    coolers: tuple  # (CryocoolerModel, ...)
    cooler_hx: tuple  # (LineSegment, ...) one per cooler: K, volume, capacity
    intake_plenum: LineSegment  # fan intake region (sensor T3)
    fan_section: LineSegment  # fan discharge + cryostat outlet (T6, T4)
    supply_trunk: tuple  # (LineSegment, ...) cryostat outlet -> merge inlet (T9)
    return_trunk: LineSegment  # merge point -> return run
    return_plenum: LineSegment  # cryostat inlet region (sensor T5)
    branches: tuple  # (ExperimentBranch, ...), first one carries T10/T11/T12
    main_relief_valve: ReliefValveModel = ReliefValveModel()
    ambient_temperature: float = 295.0  # K
    include_support_conduction: bool = True
    fill_node: str = "return_plenum"  # where top-up gas enters

    def __post_init__(self):
        if len(self.coolers) != len(self.cooler_hx):
            raise DomainError("need one heat-exchanger segment per cooler")
        if not self.coolers:
            raise DomainError("topology needs at least one cooler")
        if not self.branches:
            raise DomainError("topology needs at least one experiment branch")
        names = [b.name for b in self.branches]
        if len(set(names)) != len(names):
            raise DomainError("branch names must be unique")

    def branch(self, name: str):
        for b in self.branches:
            if b.name == name:
                return b
        raise KeyError(f"no branch named {name!r}")

    @property
    def series_resistance(self) -> float:
        """Resistance of everything outside the parallel groups."""
        k = (
            self.intake_plenum.flow_resistance_coefficient
            + self.fan_section.flow_resistance_coefficient
            + sum(s.flow_resistance_coefficient for s in self.supply_trunk)
            + self.return_trunk.flow_resistance_coefficient
            + self.return_plenum.flow_resistance_coefficient
        )
        return k

    def with_valve(self, branch_name: str, side: str, opening: float):
        """Return a copy with one valve opening changed."""
        if side not in ("supply", "return"):
            raise DomainError(f"valve side must be 'supply' or 'return', got {side!r}")
        target = self.branch(branch_name)  # raises KeyError if unknown
        new_branches = []
        for b in self.branches:
            if b.name != branch_name:
                new_branches.append(b)
                continue
            if side == "supply":
                b = replace(b, supply_valve=replace(b.supply_valve, opening=opening))
            else:
                b = replace(b, return_valve=replace(b.return_valve, opening=opening))
            new_branches.append(b)
        del target
        return replace(self, branches=tuple(new_branches))


def set_valve(topology: NetworkTopology, branch_id: str, side: str, opening: float):
    return topology.with_valve(branch_id, side, opening)


def _parallel_resistance(resistances) -> float:
    """Combined quadratic resistance of parallel members (exact)."""
    s = 0.0
    for k in resistances:
        if k <= 0.0:
            raise DomainError("parallel members must have positive resistance")
        s += 1.0 / math.sqrt(k)
    return 1.0 / s**2


def _split_fractions(resistances) -> list:
    inv = [1.0 / math.sqrt(k) for k in resistances]
    total = sum(inv)
    return [v / total for v in inv]


@dataclass(frozen=True)
class FlowSolution:
    """Flow distribution at one operating point.

    Volume flows are referenced to ``reference_state`` (fan intake); mass
    flows are the conserved per-edge quantities. Keys: "total", "cooler<i>"
    and the branch names.
    """

    rpm: float
    rpm_clamped: bool
    fan_head_pa: float
    reference_state: GasState
    volume_flows: dict  # key -> m^3/s
    mass_flows: dict  # key -> kg/s
    branch_pressure_drops: dict  # open branch name -> Pa
    residual_pa: float

    @property
    def total_volume_flow(self) -> float:
        return self.volume_flows["total"]

    @property
    def total_mass_flow(self) -> float:
        return self.mass_flows["total"]


def solve_flow(topology: NetworkTopology, rpm: float, gas: GasState) -> FlowSolution:
    """Solve the closed-loop flow distribution at one fan speed.

    Fan head equals the series + parallel-combined quadratic loop resistance;
    parallel members equalise their pressure drops exactly. Closed branches
    carry zero flow. rpm outside the fan band is clamped (flagged in the
    result); rpm == 0 means the fan is off and the loop is stagnant.
    """
    fan = topology.fan
    rpm_c, clamped = fan.clamp_rpm(rpm)
    open_branches = [b for b in topology.branches if b.is_open]
    if not open_branches:
        raise CircuitBlockedError(
            "all experiment branches are closed; the circulation loop is blocked"
        )

    zero = {b.name: 0.0 for b in topology.branches}
    if rpm_c == 0.0:
        flows = {"total": 0.0}
        flows.update({f"cooler{i}": 0.0 for i in range(len(topology.coolers))})
        flows.update(zero)
        return FlowSolution(
            rpm=0.0,
            rpm_clamped=clamped,
            fan_head_pa=0.0,
            reference_state=gas,
            volume_flows=flows,
            mass_flows=dict(flows),
            branch_pressure_drops={b.name: 0.0 for b in open_branches},
            residual_pa=0.0,
        )

    cooler_ks = [s.flow_resistance_coefficient for s in topology.cooler_hx]
    branch_ks = [b.resistance for b in open_branches]
    k_total = (
        topology.series_resistance
        + _parallel_resistance(cooler_ks)
        + _parallel_resistance(branch_ks)
    )

    ratio = rpm_c / fan.reference_rpm
    shutoff = fan.shutoff_head * ratio**2
    k_int = fan.internal_loss_coefficient
    v_total = math.sqrt(shutoff / (k_total + k_int))
    residual = abs(fan.head(rpm_c, v_total) - k_total * v_total**2)
    if residual > FLOW_RESIDUAL_PA:
        v_total = _bisect_operating_point(fan, rpm_c, k_total)
        residual = abs(fan.head(rpm_c, v_total) - k_total * v_total**2)

    head = fan.head(rpm_c, v_total)

    cooler_fracs = _split_fractions(cooler_ks)
    branch_fracs = _split_fractions(branch_ks)

    volume_flows = {"total": v_total}
    for i, f in enumerate(cooler_fracs):
        volume_flows[f"cooler{i}"] = v_total * f
    branch_iter = iter(zip(open_branches, branch_fracs))
    open_map = {b.name: f for b, f in branch_iter}
    for b in topology.branches:
        volume_flows[b.name] = v_total * open_map.get(b.name, 0.0)

    rho = gas.density
    mass_flows = {k: v * rho for k, v in volume_flows.items()}
    drops = {
        b.name: k * (v_total * open_map[b.name]) ** 2
        for b, k in zip(open_branches, branch_ks)
    }
    return FlowSolution(
        rpm=rpm_c,
        rpm_clamped=clamped,
        fan_head_pa=head,
        reference_state=gas,
        volume_flows=volume_flows,
        mass_flows=mass_flows,
        branch_pressure_drops=drops,
        residual_pa=residual,
    )


def _bisect_operating_point(fan, rpm, k_total, tol=1e-12):
    """Scalar fallback for the fan-curve / system-curve intersection."""
    lo, hi = 0.0, fan.reference_flow * 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fan.head(rpm, mid) - k_total * mid**2 > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def mix_streams(streams) -> float:
    """Mass-flow-weighted mixing temperature of (mass_flow, temperature) pairs.

    Constant cp makes the weighted mean conserve enthalpy flow exactly.
    """
    total = 0.0
    weighted = 0.0
    for mdot, temp in streams:
        if mdot < 0.0:
            raise DomainError(f"mass flow must be >= 0, got {mdot}")
        total += mdot
        weighted += mdot * temp
    if total <= 0.0:
        raise UndefinedMixError("cannot mix streams with zero total mass flow")
    return weighted / total


# --------------------------------------------------------------------------
# Node graph: the lumped-node view shared by the steady and transient solvers.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    """One lumped temperature node of the loop."""

    name: str
    flow_key: str  # which FlowSolution edge carries this node's throughflow
    inflows: tuple  # ((source node name, edge flow key), ...)
    capacity: float  # J/K at 300 K
    volume: float  # m^3
    passive_w: float  # standing leak, tapered off near ambient
    cooler_index: int = -1  # >= 0 for cold-head nodes
    branch: str = ""  # experiment name for branch nodes
    heater: bool = False  # accepts active heater power
    ambient_conductance: float = 0.0  # W/K to ambient
    sensor: str = ""  # "T1".."T12" if instrumented


SENSOR_LABELS = [f"T{i}" for i in range(1, 13)]

# Sensor labels for the first two experiment branches (per the plant's
# fixed instrumentation); further branches are uninstrumented.
_BRANCH_SENSORS = {
    0: {"supply": "T11", "sink": "T12", "return": "T10"},
    1: {"supply": "T7", "sink": "T8", "return": ""},
}


@dataclass(frozen=True)
class NodeGraph:
    """Ordered lumped nodes plus sensor and zone bookkeeping."""

    nodes: tuple  # (NodeSpec, ...) in loop-march order starting at return plenum
    index: dict  # name -> position
    sensor_nodes: dict  # "T1".."T12" -> node name

    def node(self, name: str) -> NodeSpec:
        return self.nodes[self.index[name]]

    def branch_nodes(self, branch_name: str):
        return [n for n in self.nodes if n.branch == branch_name]


def build_node_graph(topology: NetworkTopology) -> NodeGraph:
    """Lay out the lumped nodes of the builtin loop shape.

    March order: return plenum, cold-head branches, fan intake, fan discharge,
    cryostat outlet, supply trunk, then per-branch supply leg / sink / return
    leg, and finally the return merge. The merge node takes the first branch's
    return downstream of its T10 sensor, so additional experiments join after
    that sensor (see README on sensor placement).
    """
    nodes = []

    def seg_node(name, seg, flow_key, inflows, sensor="", passive=None, branch=""):
        nodes.append(
            NodeSpec(
                name=name,
                flow_key=flow_key,
                inflows=tuple(inflows),
                capacity=seg.thermal_capacity,
                volume=seg.internal_volume,
                passive_w=seg.passive_w if passive is None else passive,
                sensor=sensor,
                branch=branch,
            )
        )

    n_cool = len(topology.coolers)
    cooler_names = [f"cooler{i}" for i in range(n_cool)]

    seg_node(
        "return_plenum",
        topology.return_plenum,
        "total",
        [("return_trunk", "total")],
        sensor="T5",
    )
    for i, (cooler, hx) in enumerate(zip(topology.coolers, topology.cooler_hx)):
        nodes.append(
            NodeSpec(
                name=cooler_names[i],
                flow_key=f"cooler{i}",
                inflows=(("return_plenum", f"cooler{i}"),),
                capacity=hx.thermal_capacity,
                volume=hx.internal_volume,
                passive_w=hx.passive_w,
                cooler_index=i,
                sensor=f"T{i + 1}" if i < 2 else "",
            )
        )
    seg_node(
        "fan_intake",
        topology.intake_plenum,
        "total",
        [(cooler_names[i], f"cooler{i}") for i in range(n_cool)],
        sensor="T3",
    )
    # The fan section (fan work + cryostat shell pickup) is split evenly over
    # the discharge and outlet nodes.
    half = replace(
        topology.fan_section,
        length=topology.fan_section.length / 2.0,
        extra_passive_w=topology.fan_section.extra_passive_w / 2.0,
        internal_volume=topology.fan_section.internal_volume / 2.0,
        thermal_capacity=topology.fan_section.thermal_capacity / 2.0,
    )
    seg_node("fan_discharge", half, "total", [("fan_intake", "total")], sensor="T6")
    seg_node("cryostat_outlet", half, "total", [("fan_discharge", "total")], sensor="T4")

    prev = "cryostat_outlet"
    n_trunk = len(topology.supply_trunk)
    for j, seg in enumerate(topology.supply_trunk):
        name = f"supply_trunk{j}"
        sensor = "T9" if j == n_trunk - 1 else ""
        seg_node(name, seg, "total", [(prev, "total")], sensor=sensor)
        prev = name
    trunk_end = prev

    merge_inflows = []
    for bi, br in enumerate(topology.branches):
        labels = _BRANCH_SENSORS.get(bi, {"supply": "", "sink": "", "return": ""})
        seg_node(
            f"{br.name}_supply",
            br.supply_line,
            br.name,
            [(trunk_end, br.name)],
            sensor=labels["supply"],
            branch=br.name,
        )
        sink = br.heat_sink
        amb_g = (
            1.0 / sink.support_resistance_to_ambient
            if topology.include_support_conduction
            else 0.0
        )
        nodes.append(
            NodeSpec(
                name=f"{br.name}_sink",
                flow_key=br.name,
                inflows=((f"{br.name}_supply", br.name),),
                capacity=sink.thermal_capacity,
                volume=sink.internal_volume,
                passive_w=0.0,
                branch=br.name,
                heater=True,
                ambient_conductance=amb_g,
                sensor=labels["sink"],
            )
        )
        seg_node(
            f"{br.name}_return",
            br.return_line,
            br.name,
            [(f"{br.name}_sink", br.name)],
            sensor=labels["return"],
            branch=br.name,
        )
        merge_inflows.append((f"{br.name}_return", br.name))

    seg_node("return_trunk", topology.return_trunk, "total", merge_inflows)

    index = {n.name: i for i, n in enumerate(nodes)}
    sensors = {}
    for n in nodes:
        if n.sensor:
            sensors[n.sensor] = n.name
    return NodeGraph(nodes=tuple(nodes), index=index, sensor_nodes=sensors)
