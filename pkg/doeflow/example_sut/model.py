"""
A desk-scale fault ride-through analog: one synchronous machine feeding a load, in parallel with
a converter-interfaced wind plant that injects additional reactive current during a voltage sag
and ramps its active current back up after the fault clears.

The machine's speed deviation follows the swing equation

    M * d(dw)/dt = P_m - P_e(t) - D * dw

where `P_e = P_load * V^2 - V * i_d` is the share of the (voltage dependent) load the machine
has to carry, and `P_m = P_load - i_d0` balances it before the fault. During the fault the grid
voltage drops to the retained voltage and the plant's reactive current lifts the coupling-point
voltage by `x * i_q`. After clearance the voltage is nominal again and `i_d` ramps from zero
toward its pre-fault value at the rate `R_p`.
"""
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple, Union

from allennlp.common import Params
from allennlp.common.checks import ConfigurationError

from doeflow.common.util import numpy_generator

logger = logging.getLogger(__name__)

FACTOR_NAMES = ("K_aRCI", "limit_priority", "R_p")
METRIC_NAMES = ("peak_speed_dev", "voltage_nadir", "recovery_time")
# Share of the pre-fault active power that counts as recovered.
RECOVERY_SHARE = 0.95
# Speed deviation (pu) beyond which the integration is abandoned.
DIVERGENCE_LIMIT = 1.0
MAX_GAIN = 10.0
MAX_RAMP_RATE = 100.0
MAX_VOLTAGE = 1.1


class LimitPriority(str, Enum):
    D = "d"
    Q = "q"

    @classmethod
    def parse(cls, value: Any) -> "LimitPriority":
        """Accepts `"d"`, `"q"`, `"d_priority"` and `"q_priority"`."""
        if isinstance(value, str):
            text = value.strip().lower()
            if text.endswith("_priority"):
                text = text[: -len("_priority")]
            for member in cls:
                if member.value == text:
                    return member
        raise ValueError(f"limit_priority must be one of d, q, got {value!r}")


@dataclass(frozen=True)
class SutConfig:
    """Model constants, all per unit on the plant rating unless stated otherwise.

    # Parameters

    inertia : `float`, optional (default = `10.0`)
        `M` in seconds.
    damping : `float`, optional (default = `10.0`)
    reactance : `float`, optional (default = `0.2`)
        Grid reactance `x` seen from the coupling point.
    fault_on : `float`, optional (default = `0.1`)
        Fault start in seconds.
    fault_off : `float`, optional (default = `0.25`)
    retained_voltage : `float`, optional (default = `0.5`)
        Grid voltage during the fault; `1.0` means no fault.
    rating : `float`, optional (default = `1.0`)
        Converter rating, the base of every current.
    deadband : `float`, optional (default = `0.9`)
        Voltage below which reactive current is injected.
    current_limit : `float`, optional (default = `1.0`)
    noise_sd : `float`, optional (default = `0.0`)
        Standard deviation of the Gaussian noise added to every reported metric.
    step : `float`, optional (default = `0.001`)
        Fixed integration step in seconds.
    load : `float`, optional (default = `5.0`)
    pre_fault_current : `float`, optional (default = `1.0`)
        Active current `i_d0` before the fault.
    settle_time : `float`, optional (default = `10.0`)
        Simulated time after clearance; a plant that has not recovered by then is reported with
        this recovery time.
    """

    inertia: float = 10.0
    damping: float = 10.0
    reactance: float = 0.2
    fault_on: float = 0.1
    fault_off: float = 0.25
    retained_voltage: float = 0.5
    rating: float = 1.0
    deadband: float = 0.9
    current_limit: float = 1.0
    noise_sd: float = 0.0
    step: float = 0.001
    load: float = 5.0
    pre_fault_current: float = 1.0
    settle_time: float = 10.0

    def __post_init__(self) -> None:
        problems = []
        if not 0 <= self.fault_on < self.fault_off:
            problems.append(
                f"need 0 <= fault_on < fault_off, got {self.fault_on}, {self.fault_off}"
            )
        if not 0 < self.retained_voltage <= 1:
            problems.append(f"retained_voltage must lie in (0, 1], got {self.retained_voltage}")
        if not 0 < self.deadband <= 1:
            problems.append(f"deadband must lie in (0, 1], got {self.deadband}")
        if self.step <= 0:
            problems.append(f"step must be positive, got {self.step}")
        if self.noise_sd < 0:
            problems.append(f"noise_sd must not be negative, got {self.noise_sd}")
        for name in ("inertia", "rating", "current_limit", "settle_time", "load"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.damping < 0 or self.reactance < 0:
            problems.append("damping and reactance must not be negative")
        if not 0 < self.pre_fault_current <= self.current_limit:
            problems.append(
                f"pre_fault_current must lie in (0, current_limit], got {self.pre_fault_current}"
            )
        if problems:
            raise ConfigurationError("Invalid SutConfig: " + "; ".join(problems))

    @property
    def has_fault(self) -> bool:
        return self.retained_voltage < 1.0

    @property
    def mechanical_power(self) -> float:
        return self.load - self.pre_fault_current

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_params(cls, params: Params) -> "SutConfig":
        """Every field is optional; unknown keys raise a `ConfigurationError`."""
        values = {}
        for name, default in asdict(cls()).items():
            values[name] = params.pop_float(name, default)
        params.assert_empty(cls.__name__)
        return cls(**values)

    @classmethod
    def load_file(cls, path: Union[str, Path]) -> "SutConfig":
        return cls.from_params(Params.from_file(str(path)))


@dataclass(frozen=True)
class SutTreatment:
    k_arci: float
    limit_priority: LimitPriority
    ramp_rate: float

    @classmethod
    def from_values(cls, values: Mapping[str, Any]) -> "SutTreatment":
        """Reads a run's treatment.

        # Raises

        `ValueError` naming the factor if one is missing or outside its domain.
        """
        missing = [name for name in FACTOR_NAMES if name not in values]
        if missing:
            raise ValueError(f"treatment lacks factors {missing}")
        gain = _real(values["K_aRCI"], "K_aRCI")
        if not 0 <= gain <= MAX_GAIN:
            raise ValueError(f"K_aRCI must lie in [0, {MAX_GAIN}], got {gain}")
        ramp_rate = _real(values["R_p"], "R_p")
        if not 0 < ramp_rate <= MAX_RAMP_RATE:
            raise ValueError(f"R_p must lie in (0, {MAX_RAMP_RATE}] pu/s, got {ramp_rate}")
        return cls(gain, LimitPriority.parse(values["limit_priority"]), ramp_rate)


def _real(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class SutMetrics:
    peak_speed_dev: float
    voltage_nadir: float
    recovery_time: float
    recovered: bool = True

    def responses(self) -> Dict[str, float]:
        return {
            "peak_speed_dev": self.peak_speed_dev,
            "voltage_nadir": self.voltage_nadir,
            "recovery_time": self.recovery_time,
        }


def fault_currents(config: SutConfig, treatment: SutTreatment) -> Tuple[float, float]:
    """`(i_d, i_q)` of the plant while the fault is on.

    The reactive reference `K * max(0, V_db - V)` with `V = V_ret + x * i_q` is solved in closed
    form, then the current limit is applied: the prioritized axis keeps its reference (up to the
    limit) and the other axis gets what is left of the limit circle.
    """
    limit = config.current_limit
    depth = max(0.0, config.deadband - config.retained_voltage)
    reference_q = treatment.k_arci * depth / (1.0 + treatment.k_arci * config.reactance)
    if treatment.limit_priority == LimitPriority.Q:
        i_q = min(reference_q, limit)
        i_d = min(config.pre_fault_current, math.sqrt(max(0.0, limit ** 2 - i_q ** 2)))
    else:
        i_d = min(config.pre_fault_current, limit)
        i_q = min(reference_q, math.sqrt(max(0.0, limit ** 2 - i_d ** 2)))
    return i_d, i_q


def simulate(config: SutConfig, treatment: SutTreatment, seed: int) -> SutMetrics:
    """Integrates the swing equation with a fixed-step fourth-order Runge-Kutta scheme and
    reports the peak speed deviation, the coupling-point voltage nadir and the time from fault
    clearance until the plant's active power is back at 95% of its pre-fault value.

    Which phase (before, during or after the fault) a step belongs to is decided by its index,
    so the electrical demand is constant within every pre-fault and fault step. A run whose
    speed deviation exceeds 1 pu, or that does not recover within `settle_time`, is reported with
    `recovery_time = settle_time` and `recovered = False`.

    Identical `(config, treatment, seed)` give bit-identical metrics; `seed` only drives the
    metric noise.
    """
    h = config.step
    n_on = int(round(config.fault_on / h))
    n_off = int(round(config.fault_off / h))
    n_end = n_off + int(round(config.settle_time / h))
    t_clear = n_off * h
    i_d0 = config.pre_fault_current
    p_m = config.mechanical_power
    fault_i_d, fault_i_q = fault_currents(config, treatment)
    fault_voltage = config.retained_voltage + config.reactance * fault_i_q
    faulted = config.has_fault and n_off > n_on

    def post_fault_current(t: float) -> float:
        if not faulted:
            return i_d0
        return min(i_d0, treatment.ramp_rate * max(0.0, t - t_clear))

    def demand(n: int, t: float) -> float:
        if faulted and n_on <= n < n_off:
            return config.load * fault_voltage ** 2 - fault_voltage * fault_i_d
        i_d = i_d0 if n < n_off else post_fault_current(t)
        return config.load - i_d

    def derivative(n: int, t: float, w: float) -> float:
        return (p_m - demand(n, t) - config.damping * w) / config.inertia

    w = 0.0
    peak = 0.0
    diverged = False
    recovery_time = None if faulted else 0.0
    threshold = RECOVERY_SHARE * i_d0
    previous_power = post_fault_current(t_clear)
    for n in range(n_end):
        t = n * h
        k1 = derivative(n, t, w)
        k2 = derivative(n, t + h / 2, w + h * k1 / 2)
        k3 = derivative(n, t + h / 2, w + h * k2 / 2)
        k4 = derivative(n, t + h, w + h * k3)
        w = w + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        peak = max(peak, abs(w))
        if not math.isfinite(w) or abs(w) > DIVERGENCE_LIMIT:
            diverged = True
            break
        if recovery_time is None and n + 1 > n_off:
            power = post_fault_current((n + 1) * h)
            if power >= threshold:
                fraction = (threshold - previous_power) / (power - previous_power)
                recovery_time = (n - n_off + fraction) * h
            previous_power = power

    recovered = not diverged and recovery_time is not None
    if recovery_time is None or not recovered:
        logger.warning(
            "Treatment %s did not recover within %s s%s",
            treatment,
            config.settle_time,
            " (speed deviation diverged)" if diverged else "",
        )
        recovery_time = config.settle_time
    nadir = min(1.0, fault_voltage) if faulted else 1.0

    metrics = [peak, nadir, recovery_time]
    if config.noise_sd > 0:
        noise = numpy_generator(seed).normal(0.0, config.noise_sd, len(metrics))
        metrics = [value + float(delta) for value, delta in zip(metrics, noise)]
    return SutMetrics(
        peak_speed_dev=max(0.0, metrics[0]),
        voltage_nadir=min(MAX_VOLTAGE, max(0.0, metrics[1])),
        recovery_time=max(0.0, metrics[2]),
        recovered=recovered,
    )


def describe() -> Dict[str, List[Dict[str, Any]]]:
    """The factors the model accepts and the metrics it reports."""
    return {
        "factors": [
            {"name": "K_aRCI", "domain": {"low": 0.0, "high": MAX_GAIN}, "unit": "pu/pu"},
            {"name": "limit_priority", "domain": {"labels": ["d", "q"]}},
            {"name": "R_p", "domain": {"low": 0.0, "high": MAX_RAMP_RATE}, "unit": "pu/s"},
        ],
        "metrics": [
            {"name": "peak_speed_dev", "unit": "pu"},
            {"name": "voltage_nadir", "unit": "pu"},
            {"name": "recovery_time", "unit": "s"},
        ],
    }
