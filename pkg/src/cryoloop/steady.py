"""Steady-state temperature field of the whole plant.

Each flowing node obeys the advective balance mdot*cp*(T_up - T) + Q = 0,
cold heads sit where their capacity curve absorbs exactly what the gas
delivers, and junctions mix by mass-flow-weighted temperature. The solver
iterates the temperature sweep against the flow solution (the reference
density lives at the fan intake) until nothing moves.

Standing leaks taper to zero over the last TAPER_WIDTH_K below ambient so a
stagnant branch cannot be driven above room temperature; at cryogenic
temperatures the taper factor is exactly 1 and the configured leak applies
unchanged.
"""

from dataclasses import dataclass

from .errors import CapacityExceededError, ConvergenceError, DomainError
from .gas import CP_HE, GasState
from .network import FlowSolution, NetworkTopology, build_node_graph, solve_flow

TAPER_WIDTH_K = 10.0
SWEEP_TOL_K = 1e-9
MAX_SWEEPS = 500
CAPACITY_CAP_K = 300.0


def ambient_taper(temperature: float, ambient: float) -> float:
    """Standing-leak taper factor: 1 cold, linearly to 0 at ambient."""
    x = (ambient - temperature) / TAPER_WIDTH_K
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class SteadyStateReport:
    """Converged plant state plus the bookkeeping the analyses need."""

    sensors: dict  # "T1".."T12" -> K
    node_temperatures: dict  # node name -> K
    cooler_loads: dict  # cooler node name -> W absorbed
    cooler_head_temperatures: dict  # cooler node name -> cold-finger K
    sink_plate_temperatures: dict  # branch -> lumped plate K
    sink_gas_temperatures: dict  # branch -> (inlet K, outlet K)
    active_loads: dict  # branch -> W
    total_active_w: float
    total_passive_w: float
    flow: FlowSolution
    residuals: dict  # node name -> W imbalance
    pressure_setpoint: float
    reference_state: GasState

    @property
    def total_load_w(self) -> float:
        return self.total_active_w + self.total_passive_w

    @property
    def total_cooler_w(self) -> float:
        return sum(self.cooler_loads.values())

    @property
    def max_residual_w(self) -> float:
        return max(abs(r) for r in self.residuals.values())


def _cooler_balance(cooler, mcp: float, t_in: float) -> tuple:
    """Solve mdot*cp*(t_in - T) == curve(T - Q*R_hx) for the gas outlet T.

    Returns (gas outlet temperature, absorbed power). The left side falls and
    the right side rises with T, so the root is unique; bisection on
    [base, t_in] is robust for any piecewise-linear curve.
    """
    base = cooler.base_temperature
    if t_in <= base or mcp <= 0.0:
        return (t_in if mcp > 0.0 else base), 0.0

    r_hx = cooler.heat_exchanger_resistance

    def imbalance(t_gas):
        q = mcp * (t_in - t_gas)
        return q - cooler.curve.power_at(t_gas - q * r_hx)

    lo, hi = base, t_in
    # imbalance(lo) >= 0, imbalance(hi) <= 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if imbalance(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    t_gas = 0.5 * (lo + hi)
    return t_gas, mcp * (t_in - t_gas)


def solve_steady(
    topology: NetworkTopology,
    rpm: float,
    active_loads: dict,
    pressure_setpoint: float,
    *,
    reference_state: GasState = None,
    cancel_check=None,
    max_sweeps: int = MAX_SWEEPS,
) -> SteadyStateReport:
    """Find the steady temperature field under the given loads.

    ``active_loads`` maps experiment names to heater powers [W]. When
    ``reference_state`` is given the flow solution is pinned to it instead of
    being iterated against the fan-intake temperature; this freezes the mass
    flows between related solves (heater-step synthesis, replay checks).
    """
    graph = build_node_graph(topology)
    amb = topology.ambient_temperature

    loads = {b.name: 0.0 for b in topology.branches}
    for name, power in active_loads.items():
        branch = topology.branch(name)  # KeyError for unknown experiments
        if power < 0.0:
            raise DomainError(f"active load for {name} must be >= 0, got {power}")
        if power > branch.heat_sink.heater_max_power:
            raise DomainError(
                f"{name}: heater power {power} W exceeds the "
                f"{branch.heat_sink.heater_max_power} W heater limit"
            )
        if power > 0.0 and not branch.is_open:
            raise DomainError(
                f"{name}: cannot hold a steady state with {power} W on a closed branch"
            )
        loads[name] = float(power)

    total_active = sum(loads.values())
    capacity_cap = sum(
        c.curve.power_at(CAPACITY_CAP_K) for c in topology.coolers
    )

    temps = {n.name: 60.0 for n in graph.nodes}
    flow = None
    converged = False
    worst = None
    t_ref = 60.0
    for sweep in range(max_sweeps):
        if cancel_check is not None:
            cancel_check()
        if reference_state is not None:
            ref = reference_state
        else:
            ref = GasState(pressure_setpoint, max(t_ref, 1.0))
        flow = solve_flow(topology, rpm, ref)

        new = _sweep(topology, graph, flow, temps, loads, amb)
        delta = max(abs(new[k] - temps[k]) for k in new)
        temps = new
        # Under-relax the density feedback: the flow reference trails the
        # fan-intake temperature, which keeps high-load solves stable.
        ref_gap = temps["fan_intake"] - t_ref
        t_ref += 0.5 * ref_gap
        if delta < SWEEP_TOL_K and abs(ref_gap) < SWEEP_TOL_K and sweep > 0:
            converged = True
            break
        worst = delta
    if not converged:
        raise ConvergenceError(
            f"steady solve did not converge in {max_sweeps} sweeps "
            f"(last temperature move {worst:.3g} K)",
            worst_residual=worst,
        )

    report = _build_report(
        topology, graph, flow, temps, loads, total_active, pressure_setpoint, amb
    )
    if report.total_load_w > capacity_cap:
        raise CapacityExceededError(
            f"total load {report.total_load_w:.1f} W exceeds the "
            f"{capacity_cap:.1f} W cooler capacity at {CAPACITY_CAP_K:.0f} K"
        )
    return report


def _sweep(topology, graph, flow, temps, loads, amb):
    """One ordered march around the loop; returns updated temperatures."""
    new = dict(temps)
    mdots = flow.mass_flows
    for node in graph.nodes:
        w_in = [
            (mdots[key] * CP_HE, new.get(src, temps[src])) for src, key in node.inflows
        ]
        w_total = sum(w for w, _ in w_in)
        q = node.passive_w * ambient_taper(temps[node.name], amb)
        if node.heater:
            q += loads.get(node.branch, 0.0)
        g = node.ambient_conductance

        if w_total <= 0.0:
            # Stagnant node: leaks taper out at ambient; conduction pins it.
            new[node.name] = amb if g <= 0.0 else amb + q / g
            continue

        t_mix = sum(w * t for w, t in w_in) / w_total
        if node.cooler_index >= 0:
            cooler = topology.coolers[node.cooler_index]
            # Fold the node's own pickup into an effective inlet temperature.
            t_gas, _ = _cooler_balance(cooler, w_total, t_mix + q / w_total)
            new[node.name] = t_gas
        else:
            new[node.name] = (w_total * t_mix + g * amb + q) / (w_total + g)
    return new


def _build_report(
    topology, graph, flow, temps, loads, total_active, pressure_setpoint, amb
):
    mdots = flow.mass_flows
    cooler_loads = {}
    cooler_heads = {}
    total_passive = 0.0
    residuals = {}
    for node in graph.nodes:
        t_node = temps[node.name]
        w_in = [(mdots[key] * CP_HE, temps[src]) for src, key in node.inflows]
        w_total = sum(w for w, _ in w_in)
        q_passive = node.passive_w * ambient_taper(t_node, amb)
        q = q_passive
        if node.heater:
            q += loads.get(node.branch, 0.0)
        if node.ambient_conductance > 0.0:
            q_cond = node.ambient_conductance * (amb - t_node)
            q += q_cond
            q_passive += q_cond
        if w_total > 0.0:
            total_passive += q_passive
        q_cool = 0.0
        if node.cooler_index >= 0 and w_total > 0.0:
            t_mix = sum(w * t for w, t in w_in) / w_total
            q_cool = w_total * (t_mix - t_node) + q
            cooler_loads[node.name] = q_cool
            r_hx = topology.coolers[node.cooler_index].heat_exchanger_resistance
            cooler_heads[node.name] = t_node - q_cool * r_hx
        if w_total > 0.0:
            advect = sum(w * t for w, t in w_in) - w_total * t_node
            residuals[node.name] = advect + q - q_cool
        else:
            residuals[node.name] = 0.0

    sink_plates = {}
    sink_gas = {}
    for branch in topology.branches:
        t_in = temps[f"{branch.name}_supply"]
        t_out = temps[f"{branch.name}_sink"]
        sink_gas[branch.name] = (t_in, t_out)
        sink_plates[branch.name] = branch.heat_sink.plate_temperature(
            t_in, loads.get(branch.name, 0.0)
        )

    sensors = {
        label: temps[node] for label, node in graph.sensor_nodes.items()
    }
    for name, head in cooler_heads.items():
        spec = graph.node(name)
        if spec.sensor:
            sensors[spec.sensor] = head

    return SteadyStateReport(
        sensors=sensors,
        node_temperatures=dict(temps),
        cooler_loads=cooler_loads,
        cooler_head_temperatures=cooler_heads,
        sink_plate_temperatures=sink_plates,
        sink_gas_temperatures=sink_gas,
        active_loads=dict(loads),
        total_active_w=total_active,
        total_passive_w=total_passive,
        flow=flow,
        residuals=residuals,
        pressure_setpoint=pressure_setpoint,
        reference_state=flow.reference_state,
    )


def two_experiment_validation(
    heater_powers: dict,
    *,
    topology: NetworkTopology = None,
    pressure: float = 23e5,
    rpm: float = 21000.0,
) -> SteadyStateReport:
    """Steady report for the two-loop laboratory configuration (23 bar)."""
    from .presets import paper_topology

    if topology is None:
        topology = paper_topology(2)
    return solve_steady(topology, rpm, heater_powers, pressure)
