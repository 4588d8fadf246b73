import itertools
import json
import math

import pytest
from allennlp.common import Params
from allennlp.common.checks import ConfigurationError

from doeflow.example_sut.model import (
    METRIC_NAMES,
    LimitPriority,
    SutConfig,
    SutTreatment,
    fault_currents,
    simulate,
)


def _treatment(k: float = 2.0, priority: str = "q", ramp_rate: float = 5.0) -> SutTreatment:
    return SutTreatment.from_values({"K_aRCI": k, "limit_priority": priority, "R_p": ramp_rate})


class TestTreatment:
    def test_from_values(self) -> None:
        treatment = _treatment(1.5, "d_priority", 2.0)
        assert treatment == SutTreatment(1.5, LimitPriority.D, 2.0)

    @pytest.mark.parametrize(
        "values, name",
        [
            ({"K_aRCI": 1.0, "limit_priority": "q"}, "R_p"),
            ({"K_aRCI": 11.0, "limit_priority": "q", "R_p": 1.0}, "K_aRCI"),
            ({"K_aRCI": 1.0, "limit_priority": "q", "R_p": 0.0}, "R_p"),
            ({"K_aRCI": True, "limit_priority": "q", "R_p": 1.0}, "K_aRCI"),
            ({"K_aRCI": 1.0, "limit_priority": "x", "R_p": 1.0}, "limit_priority"),
            ({"K_aRCI": math.nan, "limit_priority": "q", "R_p": 1.0}, "K_aRCI"),
        ],
    )
    def test_invalid(self, values, name: str) -> None:
        with pytest.raises(ValueError, match=name):
            SutTreatment.from_values(values)

    def test_priority_spellings(self) -> None:
        assert LimitPriority.parse(" Q_priority ") == LimitPriority.Q
        assert LimitPriority.parse("d") == LimitPriority.D


class TestConfig:
    def test_from_params(self) -> None:
        config = SutConfig.from_params(Params({"noise_sd": 0.1, "retained_voltage": 0.3}))
        assert config.noise_sd == 0.1
        assert config.retained_voltage == 0.3
        assert config.inertia == SutConfig().inertia

    def test_unknown_key(self) -> None:
        with pytest.raises(ConfigurationError):
            SutConfig.from_params(Params({"inertial": 3.0}))

    def test_invalid_values(self) -> None:
        with pytest.raises(ConfigurationError, match="fault_on < fault_off"):
            SutConfig(fault_on=0.3, fault_off=0.2)
        with pytest.raises(ConfigurationError, match="retained_voltage"):
            SutConfig(retained_voltage=0.0)

    def test_load_file(self, tmp_path) -> None:
        path = tmp_path / "sut.json"
        path.write_text(json.dumps({"damping": 4.0}))
        assert SutConfig.load_file(path).damping == 4.0


class TestFaultCurrents:
    def test_q_priority_serves_the_reactive_reference(self) -> None:
        i_d, i_q = fault_currents(SutConfig(), _treatment(2.0, "q"))
        assert i_q == pytest.approx(0.8 / 1.4)
        assert i_d == pytest.approx(math.sqrt(1.0 - i_q ** 2))

    def test_d_priority_keeps_active_current(self) -> None:
        assert fault_currents(SutConfig(), _treatment(2.0, "d")) == (1.0, 0.0)

    def test_no_gain_no_reactive_current(self) -> None:
        assert fault_currents(SutConfig(), _treatment(0.0, "q")) == (1.0, 0.0)

    def test_current_limit(self) -> None:
        i_d, i_q = fault_currents(SutConfig(), _treatment(10.0, "q"))
        assert math.hypot(i_d, i_q) <= 1.0 + 1e-12


class TestSimulate:
    def test_no_fault_no_disturbance(self) -> None:
        metrics = simulate(SutConfig(retained_voltage=1.0), _treatment(), 0)
        assert metrics.peak_speed_dev < 1e-6
        assert metrics.recovery_time == 0.0
        assert metrics.voltage_nadir == 1.0
        assert metrics.recovered

    def test_reactive_support_lowers_the_peak(self) -> None:
        config = SutConfig()
        supported = simulate(config, _treatment(2.0, "q"), 0)
        unsupported = simulate(config, _treatment(0.0, "q"), 0)
        assert supported.peak_speed_dev < unsupported.peak_speed_dev
        assert supported.voltage_nadir > unsupported.voltage_nadir

    def test_q_priority_beats_d_priority(self) -> None:
        config = SutConfig()
        q = simulate(config, _treatment(1.0, "q"), 0)
        d = simulate(config, _treatment(1.0, "d"), 0)
        assert q.peak_speed_dev < d.peak_speed_dev

    @pytest.mark.parametrize("ramp_rate", [1.0, 5.0, 10.0])
    def test_recovery_follows_the_ramp(self, ramp_rate: float) -> None:
        metrics = simulate(SutConfig(), _treatment(ramp_rate=ramp_rate), 0)
        assert metrics.recovery_time == pytest.approx(0.95 / ramp_rate, abs=2e-3)

    def test_halving_the_step_converges(self) -> None:
        coarse = SutConfig()
        fine = SutConfig(step=coarse.step / 2)
        for k, ramp_rate in itertools.product((0.0, 1.0, 2.0), (1.0, 5.0, 10.0)):
            treatment = _treatment(k, "q", ramp_rate)
            expected = simulate(coarse, treatment, 0).responses()
            actual = simulate(fine, treatment, 0).responses()
            for name in METRIC_NAMES:
                assert actual[name] == pytest.approx(expected[name], rel=1e-4), (k, ramp_rate)

    def test_nadir_is_at_least_the_retained_voltage(self) -> None:
        config = SutConfig(retained_voltage=0.3)
        for k in (0.0, 1.0, 4.0):
            assert simulate(config, _treatment(k), 0).voltage_nadir >= 0.3

    def test_slow_ramp_does_not_recover(self) -> None:
        config = SutConfig(settle_time=1.0)
        metrics = simulate(config, _treatment(ramp_rate=0.01), 0)
        assert not metrics.recovered
        assert metrics.recovery_time == 1.0

    def test_divergence_is_flagged(self) -> None:
        config = SutConfig(inertia=0.1, damping=0.0, fault_off=2.0, settle_time=1.0)
        metrics = simulate(config, _treatment(0.0), 0)
        assert not metrics.recovered
        assert metrics.recovery_time == 1.0
        assert metrics.peak_speed_dev > 1.0

    def test_deterministic(self) -> None:
        config = SutConfig(noise_sd=0.05)
        first = simulate(config, _treatment(), 11)
        assert simulate(config, _treatment(), 11) == first
        assert simulate(config, _treatment(), 12) != first
        assert simulate(SutConfig(), _treatment(), 11) == simulate(SutConfig(), _treatment(), 12)
