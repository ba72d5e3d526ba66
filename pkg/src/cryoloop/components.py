"""Parameterised models for the plant elements of the cooling loop.

All component models are immutable values; evaluation is pure. Flow
resistance coefficients are quadratic (dP = K * Vdot^2, K in Pa/(m^3/s)^2),
which is the standard lumped idealisation for turbulent fittings and valves.
"""

from dataclasses import dataclass, field

from .errors import DomainError

RPM_MIN = 6000.0
RPM_MAX = 21000.0


@dataclass(frozen=True)
class CapacityCurve:
    """Cooling power vs cold-head temperature as piecewise-linear anchors.

    Evaluation is 0 at or below the first anchor, linear between anchors and
    linearly extrapolated above the last one.
    """

    anchors: tuple  # ((T [K], W), ...) strictly increasing in T, W non-decreasing

    def __post_init__(self):
        if len(self.anchors) < 2:
            raise DomainError("capacity curve needs at least two anchors")
        temps = [t for t, _ in self.anchors]
        powers = [w for _, w in self.anchors]
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise DomainError("capacity curve temperatures must be strictly increasing")
        if any(b < a for a, b in zip(powers, powers[1:])):
            raise DomainError("capacity curve powers must be non-decreasing")
        if powers[0] < 0.0:
            raise DomainError("capacity curve powers must be non-negative")

    @property
    def base_temperature(self) -> float:
        return self.anchors[0][0]

    def power_at(self, temperature: float) -> float:
        """Cooling power [W] available at a cold-head temperature."""
        pts = self.anchors
        if temperature <= pts[0][0]:
            return 0.0 if temperature < pts[0][0] else pts[0][1]
        if temperature >= pts[-1][0]:
            t0, w0 = pts[-2]
            t1, w1 = pts[-1]
            return w1 + (w1 - w0) / (t1 - t0) * (temperature - t1)
        for (t0, w0), (t1, w1) in zip(pts, pts[1:]):
            if temperature <= t1:
                return w0 + (w1 - w0) / (t1 - t0) * (temperature - t0)
        raise AssertionError("unreachable")

    def temperature_for(self, power: float) -> float:
        """Inverse of :meth:`power_at` (load -> operating temperature)."""
        if power < 0.0:
            raise DomainError(f"load must be >= 0, got {power}")
        pts = self.anchors
        if power <= pts[0][1]:
            return pts[0][0]
        if power >= pts[-1][1]:
            t0, w0 = pts[-2]
            t1, w1 = pts[-1]
            slope = (w1 - w0) / (t1 - t0)
            if slope <= 0.0:
                raise DomainError(f"load {power} W is beyond a flat capacity curve")
            return t1 + (power - w1) / slope
        for (t0, w0), (t1, w1) in zip(pts, pts[1:]):
            if power <= w1:
                if w1 == w0:  # flat piece: return its cold end
                    return t0
                return t0 + (t1 - t0) / (w1 - w0) * (power - w0)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class CryocoolerModel:
    """Single-stage cryocooler cold head behind a gas heat exchanger."""

    curve: CapacityCurve
    heat_exchanger_resistance: float = 0.0  # K/W between gas outlet and head

    def __post_init__(self):
        if self.heat_exchanger_resistance < 0.0:
            raise DomainError("heat exchanger resistance must be >= 0")

    @property
    def base_temperature(self) -> float:
        return self.curve.base_temperature


def cooling_power_at(model: CryocoolerModel, cold_head_temperature: float) -> float:
    if cold_head_temperature <= 0.0:
        raise DomainError(f"temperature must be > 0, got {cold_head_temperature}")
    return model.curve.power_at(cold_head_temperature)


def cold_head_temperature_for_load(model: CryocoolerModel, load: float) -> float:
    return model.curve.temperature_for(load)


@dataclass(frozen=True)
class CryofanModel:
    """Centrifugal circulator with quadratic head-flow curve and affinity scaling.

    The only published operating point is (reference_rpm, reference_flow,
    reference_head). The shutoff head at reference rpm is taken as
    shutoff_ratio * reference_head, which fixes the internal loss coefficient;
    the affinity behaviour is independent of that choice.
    """

    reference_rpm: float = RPM_MAX
    reference_head: float = 9.8e3  # Pa at the reference operating point
    reference_flow: float = 0.40 / 3600.0  # m^3/s at the reference operating point
    shutoff_ratio: float = 1.5
    rpm_limits: tuple = (RPM_MIN, RPM_MAX)

    def __post_init__(self):
        if self.shutoff_ratio <= 1.0:
            raise DomainError("shutoff_ratio must exceed 1")
        if self.reference_head <= 0.0 or self.reference_flow <= 0.0:
            raise DomainError("reference head and flow must be positive")

    @property
    def shutoff_head(self) -> float:
        return self.shutoff_ratio * self.reference_head

    @property
    def internal_loss_coefficient(self) -> float:
        # Fixed by the reference operating point: head(ref_rpm, ref_flow) == ref_head.
        return (self.shutoff_head - self.reference_head) / self.reference_flow**2

    def clamp_rpm(self, rpm: float) -> tuple:
        """Clamp rpm into the operating band. rpm == 0 means fan off (no clamp)."""
        if rpm == 0.0:
            return 0.0, False
        lo, hi = self.rpm_limits
        if rpm < lo:
            return lo, True
        if rpm > hi:
            return hi, True
        return rpm, False

    def head(self, rpm: float, volume_flow: float) -> float:
        """Fan head [Pa] at a (possibly clamped) rpm and volume flow [m^3/s]."""
        rpm, _ = self.clamp_rpm(rpm)
        if rpm == 0.0:
            return 0.0
        ratio = rpm / self.reference_rpm
        return self.shutoff_head * ratio**2 - self.internal_loss_coefficient * volume_flow**2


def fan_head(model: CryofanModel, rpm: float, volume_flow: float) -> float:
    return model.head(rpm, volume_flow)


@dataclass(frozen=True)
class LineSegment:
    """Lumped transfer-line (or plenum) section.

    ``extra_passive_w`` carries the leak that is not proportional to length
    (bayonets, feedthroughs, enclosure radiation); the total passive pickup of
    the segment is length*leak_per_meter + extra_passive_w.
    """

    length: float = 0.0  # m
    passive_leak_per_meter: float = 0.2  # W/m
    flow_resistance_coefficient: float = 0.0  # Pa/(m^3/s)^2
    internal_volume: float = 0.0  # m^3
    thermal_capacity: float = 0.0  # J/K at 300 K
    extra_passive_w: float = 0.0  # W

    def __post_init__(self):
        for name in (
            "length",
            "passive_leak_per_meter",
            "flow_resistance_coefficient",
            "internal_volume",
            "thermal_capacity",
            "extra_passive_w",
        ):
            if getattr(self, name) < 0.0:
                raise DomainError(f"LineSegment.{name} must be >= 0")

    @property
    def passive_w(self) -> float:
        return self.length * self.passive_leak_per_meter + self.extra_passive_w


def passive_leak(segment: LineSegment) -> float:
    """Length-proportional standing heat leak of a line segment [W]."""
    return segment.length * segment.passive_leak_per_meter


def conduction_leak(resistance: float, hot: float, cold: float) -> float:
    """Conductive heat flow [W] through a lumped thermal resistance [K/W]."""
    if resistance <= 0.0:
        raise DomainError(f"thermal resistance must be > 0, got {resistance}")
    return (hot - cold) / resistance


@dataclass(frozen=True)
class ValveModel:
    """Manual cryogenic valve with inverse-quadratic opening characteristic."""

    opening: float = 1.0  # fraction, 0 closed .. 1 full open
    full_open_resistance: float = 0.0  # Pa/(m^3/s)^2

    def __post_init__(self):
        if not 0.0 <= self.opening <= 1.0:
            raise DomainError(f"valve opening must be in [0, 1], got {self.opening}")
        if self.full_open_resistance < 0.0:
            raise DomainError("full_open_resistance must be >= 0")

    @property
    def is_closed(self) -> bool:
        return self.opening == 0.0

    @property
    def resistance(self) -> float:
        if self.is_closed:
            raise DomainError("closed valve has no finite resistance")
        return self.full_open_resistance / self.opening**2


@dataclass(frozen=True)
class HeatSinkModel:
    """Jet-impingement experiment heat sink.

    The copper plate couples to the incoming gas jet through a lumped
    contact/film conductance contact_resistance_area * contact_area; the plate
    temperature is reported relative to the jet (inlet) temperature.
    """

    contact_resistance_area: float = 1.1  # W/(K·cm^2)
    contact_area: float = 4.0  # cm^2
    heater_max_power: float = 50.0  # W continuous
    support_resistance_to_ambient: float = 146.0  # K/W
    thermal_capacity: float = 400.0  # J/K at 300 K
    internal_volume: float = 2e-4  # m^3
    flow_resistance_coefficient: float = 0.0  # Pa/(m^3/s)^2, jet design keeps this small

    def __post_init__(self):
        for name in (
            "contact_resistance_area",
            "contact_area",
            "heater_max_power",
            "support_resistance_to_ambient",
            "thermal_capacity",
            "internal_volume",
        ):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"HeatSinkModel.{name} must be > 0")

    @property
    def contact_conductance(self) -> float:
        """Plate-to-jet conductance [W/K]."""
        return self.contact_resistance_area * self.contact_area

    def plate_temperature(self, inlet_gas_temperature: float, active_power: float) -> float:
        """Lumped plate temperature given the jet temperature and applied power."""
        return inlet_gas_temperature + active_power / self.contact_conductance


@dataclass(frozen=True)
class ReliefValveModel:
    """Pressure relief valve.

    Modelled as modulating: venting caps the zone pressure at set_pressure;
    the valve is reported closed again once pressure falls below
    reseat_pressure.
    """

    set_pressure: float = 23e5  # Pa
    reseat_pressure: float = 22.5e5  # Pa

    def __post_init__(self):
        if not 0.0 < self.reseat_pressure < self.set_pressure:
            raise DomainError("need 0 < reseat_pressure < set_pressure")
