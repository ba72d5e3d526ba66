"""Inference utilities: flow estimation from heater steps, passive-load
decomposition, total-flow and total-load estimates, and the ion-heating
temperature factor.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OffsetDominatedError, UnidentifiableError
from .gas import CP_HE, GasState, density


@dataclass(frozen=True)
class HeatingRateParams:
    """Temperature scaling of the ion motional heating rate."""

    activation_temperature: float  # K, typically 10-75
    exponent: float  # dimensionless, typically 1.5-4.1

    def __post_init__(self):
        if self.activation_temperature <= 0.0:
            raise DomainError("activation temperature must be > 0")
        if self.exponent <= 0.0:
            raise DomainError("exponent must be > 0")


def heating_rate_factor(params: HeatingRateParams, temperature: float) -> float:
    """Relative heating-rate factor 1 + (T/T0)^beta."""
    if temperature < 0.0:
        raise DomainError(f"temperature must be >= 0, got {temperature}")
    return 1.0 + (temperature / params.activation_temperature) ** params.exponent


def total_volume_flow(q_total: float, gas: GasState, delta_t: float) -> float:
    """Loop volume flow [m^3/s] from total power and loop temperature rise."""
    if delta_t <= 0.0:
        raise DomainError(f"temperature difference must be > 0, got {delta_t}")
    return q_total / (CP_HE * gas.density * delta_t)


@dataclass(frozen=True)
class HeaterStepRecord:
    """Two consecutive steady operating points around a heater step.

    ``gas`` is the state whose density converts the inferred mass flow into a
    volume flow: model-synthesised records carry the flow solver's reference
    state so the estimate lands on the solver's flow basis; records built
    from raw telemetry evaluate it at the experiment (mean of the four
    steady sensor readings, see ``from_telemetry``).
    """

    power_before: float  # W
    power_after: float  # W
    inlet_before: float  # K
    inlet_after: float  # K
    outlet_before: float  # K
    outlet_after: float  # K
    gas: GasState

    def __post_init__(self):
        if self.power_after == self.power_before:
            raise DomainError("heater step needs two distinct powers")

    @classmethod
    def from_telemetry(cls, power_before, power_after, inlet_before, inlet_after,
                       outlet_before, outlet_after, pressure):
        """Build a record from raw sensor data; density at the experiment."""
        t_mean = (inlet_before + inlet_after + outlet_before + outlet_after) / 4.0
        return cls(
            power_before=power_before,
            power_after=power_after,
            inlet_before=inlet_before,
            inlet_after=inlet_after,
            outlet_before=outlet_before,
            outlet_after=outlet_after,
            gas=GasState(pressure, t_mean),
        )


def experiment_volume_flow(record: HeaterStepRecord) -> float:
    """Branch volume flow [m^3/s] from the differential heater-step response.

    Sensor offsets cancel in the inlet/outlet differences; a response where
    the outlet shifted no more than the inlet carries no flow information and
    raises OffsetDominatedError.
    """
    d_power = record.power_after - record.power_before
    d_out = record.outlet_after - record.outlet_before
    d_in = record.inlet_after - record.inlet_before
    denom = d_out - d_in
    if denom == 0.0:
        raise OffsetDominatedError(
            "inlet and outlet shifted equally; the step response is offset-dominated"
        )
    return d_power / (CP_HE * record.gas.density * denom)


def decompose_passive_loads(measurements: dict) -> tuple:
    """Split measured passive totals into cryostat plus per-loop leaks.

    ``measurements`` maps a configuration (iterable of experiment names that
    were connected) to the total passive load [W] seen in that configuration:
    total(S) = cryostat + sum(loop_e for e in S). Solved by least squares so
    over-determined sets are accepted; exact (zero residual) when the system
    is square and consistent.

    Returns (cryostat_w, {experiment: loop_w}, residual_norm).
    """
    configs = [(frozenset(k), float(v)) for k, v in measurements.items()]
    if not configs:
        raise UnidentifiableError("no measurements given", unknowns=("cryostat",))
    loops = sorted({name for cfg, _ in configs for name in cfg})
    unknowns = ["cryostat"] + loops
    a = np.zeros((len(configs), len(unknowns)))
    b = np.zeros(len(configs))
    for i, (cfg, total) in enumerate(configs):
        a[i, 0] = 1.0
        for name in cfg:
            a[i, unknowns.index(name)] = 1.0
        b[i] = total
    rank = np.linalg.matrix_rank(a)
    if rank < len(unknowns):
        pinned = set()
        raise UnidentifiableError(
            f"measurement configurations span rank {rank} < {len(unknowns)} unknowns",
            unknowns=[u for u in unknowns if u not in pinned],
        )
    solution, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ solution - b))
    cryostat = float(solution[0])
    per_loop = {name: float(solution[1 + i]) for i, name in enumerate(loops)}
    return cryostat, per_loop, residual


def infer_total_load_from_cooler_temps(models, temperatures) -> float:
    """Total absorbed load [W] implied by the cold-head temperatures."""
    if len(models) != len(temperatures):
        raise DomainError("need one temperature per cooler model")
    return sum(m.curve.power_at(t) for m, t in zip(models, temperatures))


def synthesize_heater_step(
    topology,
    experiment: str,
    power_before: float,
    power_after: float,
    *,
    rpm: float = 21000.0,
    pressure: float = 20e5,
    background_loads: dict = None,
) -> tuple:
    """Run the steady solver at two heater settings and build a step record.

    Both solves are pinned to one flow reference state (the converged
    baseline's fan-intake state), mirroring the measurement assumption that
    the loop flow does not change between consecutive settings; the record
    carries that same reference state so the estimator's volume flow lands on
    the flow solution's basis.

    Returns (record, reference FlowSolution).
    """
    from .steady import solve_steady

    loads = dict(background_loads or {})
    loads[experiment] = power_before
    baseline = solve_steady(topology, rpm, loads, pressure)
    ref = baseline.reference_state
    before = solve_steady(topology, rpm, loads, pressure, reference_state=ref)
    loads[experiment] = power_after
    after = solve_steady(topology, rpm, loads, pressure, reference_state=ref)

    t_in_b, t_out_b = before.sink_gas_temperatures[experiment]
    t_in_a, t_out_a = after.sink_gas_temperatures[experiment]
    record = HeaterStepRecord(
        power_before=power_before,
        power_after=power_after,
        inlet_before=t_in_b,
        inlet_after=t_in_a,
        outlet_before=t_out_b,
        outlet_after=t_out_a,
        gas=ref,
    )
    return record, after.flow
