"""Analytical energy and battery-lifetime model for the radar pair.

Energy over a horizon of ``t`` seconds is

    (n_platforms * P_platform + P_tx + P_rx) * t + (E_preproc + E_model) * floor(t / 30)

where the processing terms run once per 30 s window. Measured ("practical")
profiles come from the development kits; the theoretical profiles are built
from the transceiver's per-state currents during one propagation.

Units: milliseconds, milliamps and volts give millijoules; powers are watts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

from .config import ConfigError, coerce, parse_kv

WINDOW_S = 30.0
TRANSCEIVER_V = 3.0
SLEEP_MA = 0.00026


@dataclass(frozen=True)
class EnergyState:
    name: str
    duration_ms: float
    current_ma: float
    voltage_v: float = TRANSCEIVER_V

    def __post_init__(self):
        if self.duration_ms < 0 or self.current_ma < 0:
            raise ValueError(f"{self.name}: duration and current must be non-negative")
        if self.voltage_v <= 0:
            raise ValueError(f"{self.name}: voltage must be positive")

    @property
    def energy_mj(self) -> float:
        return self.voltage_v * self.current_ma * self.duration_ms / 1000.0


@dataclass(frozen=True)
class ComponentPower:
    name: str
    voltage_v: float
    power_w: float
    active_s: float | None = None  # None: draws continuously; else once per 30 s window

    def __post_init__(self):
        if self.power_w < 0:
            raise ValueError(f"{self.name}: power must be non-negative")
        if self.active_s is not None and self.active_s < 0:
            raise ValueError(f"{self.name}: active duration must be non-negative")

    @property
    def continuous(self) -> bool:
        return self.active_s is None

    @property
    def window_energy_j(self) -> float:
        """Energy of one activation of an intermittent component."""
        if self.continuous:
            raise ValueError(f"{self.name} draws continuously")
        return self.power_w * self.active_s


@dataclass(frozen=True)
class BatterySpec:
    energy_j: float | None = None
    capacity_mah: float | None = None
    nominal_voltage_v: float | None = None

    def __post_init__(self):
        if self.energy_j is None and (self.capacity_mah is None or self.nominal_voltage_v is None):
            raise ValueError("give either energy_j or capacity_mah with nominal_voltage_v")
        if self.total_j <= 0:
            raise ValueError("battery energy must be positive")

    @property
    def total_j(self) -> float:
        if self.energy_j is not None:
            return float(self.energy_j)
        return self.capacity_mah * 3.6 * self.nominal_voltage_v


AAA_BATTERY = BatterySpec(energy_j=5400.0)
# the nominal 3.7 V is an assumption: it is the Li-ion cell voltage that turns
# 20 000 mAh into 266 400 J, which reproduces the quoted lifetime in days
POWER_BANK = BatterySpec(capacity_mah=20_000.0, nominal_voltage_v=3.7)


# measured component profiles at 5 V (watts; intermittent ones once per window)
PLATFORM = ComponentPower("platform", 5.0, 0.00923)
PREPROCESSING = ComponentPower("preprocessing", 5.0, 0.01016, 0.110)
MODEL_F32 = ComponentPower("model", 5.0, 0.02287, 0.523)
MODEL_Q8 = ComponentPower("quantized model", 5.0, 0.02146, 0.199)
PRACTICAL_TX = {20.0: ComponentPower("tx", 5.0, 0.04474), 4.0: ComponentPower("tx", 5.0, 0.04357)}
PRACTICAL_RX = {20.0: ComponentPower("rx", 5.0, 0.06373), 4.0: ComponentPower("rx", 5.0, 0.05468)}

# active transceiver states of one propagation (ms, mA at 3 V)
TX_ACTIVE = (
    EnergyState("PLL lock", 0.020, 18.0),
    EnergyState("TX SHR", 0.270, 48.0),
    EnergyState("TX PHR/PSDU", 0.016, 40.0),
)
RX_ACTIVE = (
    EnergyState("PLL lock", 0.020, 18.0),
    EnergyState("PR_HUNT", 0.000, 70.0),
    EnergyState("RX SHR", 0.24, 78.0),
    EnergyState("RX PHR/PSDU", 0.016, 70.0),
    EnergyState("PLL lock", 0.02, 18.0),
    EnergyState("IDLE RC", 0.036, 8.0),
)

SLEEP_MODES = ("physical", "per-second")


def state_sequence_energy(states) -> float:
    """Total energy of a state sequence in millijoules."""
    return float(sum(s.energy_mj for s in states))


def propagation_states(active, rate_hz: float, sleep_mode: str = "physical") -> tuple[EnergyState, ...]:
    """Active states followed by sleep for the rest of the sampling period.

    ``per-second`` sleeps for a full second, which is what the published
    per-state energy column lists (0.00078 mJ at every rate). ``physical`` sleeps
    for the remainder of the period.
    """
    if rate_hz <= 0:
        raise ValueError("sampling rate must be positive")
    period_ms = 1000.0 / rate_hz
    active_ms = sum(s.duration_ms for s in active)
    if sleep_mode == "physical":
        sleep_ms = period_ms - active_ms
        if sleep_ms < 0:
            raise ValueError(f"active states ({active_ms} ms) exceed the {period_ms} ms period")
    elif sleep_mode == "per-second":
        sleep_ms = 1000.0
    else:
        raise ValueError(f"unknown sleep mode {sleep_mode!r}; choose from {', '.join(SLEEP_MODES)}")
    return tuple(active) + (EnergyState("SLEEP", sleep_ms, SLEEP_MA),)


def per_second_power(propagation_mj: float, rate_hz: float) -> float:
    if rate_hz <= 0:
        raise ValueError("sampling rate must be positive")
    return propagation_mj * rate_hz / 1000.0


def theoretical_transceiver(active, name: str, rate_hz: float, sleep_mode: str = "physical"):
    e = state_sequence_energy(propagation_states(active, rate_hz, sleep_mode))
    return ComponentPower(name, TRANSCEIVER_V, per_second_power(e, rate_hz))


@dataclass(frozen=True)
class SystemScenario:
    name: str
    platform_count: int
    tx: ComponentPower
    rx: ComponentPower
    processing: tuple[ComponentPower, ...] = field(default=(PREPROCESSING, MODEL_Q8))
    platform: ComponentPower = PLATFORM
    sampling_rate_hz: float = 20.0

    def __post_init__(self):
        if self.platform_count not in (1, 2):
            raise ValueError("platform_count must be 1 (single board) or 2 (separate TX and RX boards)")
        for comp in (self.platform, self.tx, self.rx):
            if not comp.continuous:
                raise ValueError(f"{comp.name} must draw continuously")
        for comp in self.processing:
            if comp.continuous:
                raise ValueError(f"{comp.name} must have an active duration")

    @property
    def continuous_power_w(self) -> float:
        return self.platform_count * self.platform.power_w + self.tx.power_w + self.rx.power_w


def system_energy(scenario: SystemScenario, horizon_s: float) -> float:
    """Joules used over ``horizon_s`` seconds."""
    if horizon_s < 0:
        raise ValueError("horizon must be non-negative")
    windows = math.floor(horizon_s / WINDOW_S + 1e-9)
    per_window = sum(c.window_energy_j for c in scenario.processing)
    return scenario.continuous_power_w * horizon_s + per_window * windows


def energy_per_30s(scenario: SystemScenario) -> float:
    return system_energy(scenario, WINDOW_S)


def average_power(scenario: SystemScenario) -> float:
    return energy_per_30s(scenario) / WINDOW_S


def battery_lifetime(scenario: SystemScenario, battery: BatterySpec) -> float:
    """Hours of operation on one charge."""
    return battery.total_j / average_power(scenario) / 3600.0


def practical(rate_hz: float, quantized: bool = True) -> SystemScenario:
    if rate_hz not in PRACTICAL_TX:
        raise ValueError(f"measured profiles exist for {sorted(PRACTICAL_TX)} Hz only")
    model = MODEL_Q8 if quantized else MODEL_F32
    return SystemScenario(
        f"practical_{rate_hz:g}hz",
        2,
        PRACTICAL_TX[rate_hz],
        PRACTICAL_RX[rate_hz],
        (PREPROCESSING, model),
        sampling_rate_hz=rate_hz,
    )


def theoretical(rate_hz: float, sleep_mode: str = "physical", quantized: bool = True) -> SystemScenario:
    model = MODEL_Q8 if quantized else MODEL_F32
    return SystemScenario(
        f"theoretical_{rate_hz:g}hz",
        1,
        theoretical_transceiver(TX_ACTIVE, "tx", rate_hz, sleep_mode),
        theoretical_transceiver(RX_ACTIVE, "rx", rate_hz, sleep_mode),
        (PREPROCESSING, model),
        sampling_rate_hz=rate_hz,
    )


PRESETS = {
    "practical_20hz": lambda: practical(20.0),
    "practical_4hz": lambda: practical(4.0),
    "theoretical_20hz": lambda: theoretical(20.0),
    "theoretical_4hz": lambda: theoretical(4.0),
}


def preset(name: str) -> SystemScenario:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(PRESETS)}") from None


_SCENARIO_KEYS = {
    "preset": str,
    "mode": str,
    "sampling_rate_hz": float,
    "platform_count": int,
    "sleep_mode": str,
    "quantized": bool,
    "platform_w": float,
    "tx_w": float,
    "rx_w": float,
    "preproc_w": float,
    "preproc_s": float,
    "model_w": float,
    "model_s": float,
}


def scenario_from_config(values: dict[str, str]) -> SystemScenario:
    """Build a scenario from ``key = value`` settings.

    Either start from ``preset`` or from ``mode`` (practical | theoretical)
    plus ``sampling_rate_hz``; any power or duration key then overrides the
    corresponding component.
    """
    unknown = set(values) - set(_SCENARIO_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown scenario keys {sorted(unknown)}; known keys: {', '.join(sorted(_SCENARIO_KEYS))}"
        )
    v = {k: coerce(raw, _SCENARIO_KEYS[k], k) for k, raw in values.items()}
    try:
        if "preset" in v:
            sc = preset(v["preset"])
        else:
            mode = v.get("mode", "theoretical")
            rate = v.get("sampling_rate_hz", 20.0)
            q = v.get("quantized", True)
            if mode == "practical":
                sc = practical(rate, q)
            elif mode == "theoretical":
                sc = theoretical(rate, v.get("sleep_mode", "physical"), q)
            else:
                raise ConfigError(f"mode must be practical or theoretical, got {mode!r}")
        pre, model = sc.processing
        sc = replace(
            sc,
            platform_count=v.get("platform_count", sc.platform_count),
            platform=replace(sc.platform, power_w=v.get("platform_w", sc.platform.power_w)),
            tx=replace(sc.tx, power_w=v.get("tx_w", sc.tx.power_w)),
            rx=replace(sc.rx, power_w=v.get("rx_w", sc.rx.power_w)),
            processing=(
                replace(pre, power_w=v.get("preproc_w", pre.power_w), active_s=v.get("preproc_s", pre.active_s)),
                replace(model, power_w=v.get("model_w", model.power_w), active_s=v.get("model_s", model.active_s)),
            ),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return sc


def load_scenario(text: str, source: str = "<scenario>") -> SystemScenario:
    return scenario_from_config(parse_kv(text, source))


def report(scenario: SystemScenario, batteries=None) -> dict:
    """Per-component breakdown, energy per window, average power and lifetimes."""
    batteries = batteries or {"aaa_5400j": AAA_BATTERY, "power_bank_20000mah": POWER_BANK}
    out = {
        "scenario": scenario.name,
        "sampling_rate_hz": scenario.sampling_rate_hz,
        "platform_count": scenario.platform_count,
        "components": [asdict(c) for c in (scenario.platform, scenario.tx, scenario.rx, *scenario.processing)],
        "energy_per_30s_j": energy_per_30s(scenario),
        "average_power_w": average_power(scenario),
        "lifetime_h": {k: battery_lifetime(scenario, b) for k, b in batteries.items()},
    }
    if scenario.name.startswith("theoretical"):
        rate = scenario.sampling_rate_hz
        out["propagation_mj"] = {
            "tx": state_sequence_energy(propagation_states(TX_ACTIVE, rate)),
            "rx": state_sequence_energy(propagation_states(RX_ACTIVE, rate)),
        }
    return out


def report_json(scenario: SystemScenario, batteries=None) -> str:
    return json.dumps(report(scenario, batteries), indent=2, sort_keys=True)
