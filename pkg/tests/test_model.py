import math

import numpy as np
import pytest

from ou_phase_tracking.model import (
    DUAL,
    LINEARIZED,
    RTS,
    KALMAN,
    EstimateSeries,
    MeasurementRecord,
    ModelParams,
    ParameterError,
    Trajectory,
    noise_power,
    validate_params,
)


class Test_validate_params:
    def test_accepts_unit(self, unit_params):
        assert validate_params(unit_params) is unit_params

    @pytest.mark.parametrize(
        "changes, message",
        [
            ({"kappa": -1.0}, "kappa must be > 0"),
            ({"mu": 1.0}, "mu must satisfy 0 ≤ mu < 1"),
            ({"mu": -0.1}, "mu must satisfy 0 ≤ mu < 1"),
            ({"delta": 1.5}, "delta must satisfy |delta| ≤ 1"),
            ({"alpha": 0.0}, "alpha must be > 0"),
            ({"lam": -0.5}, "lam must be >= 0"),
            ({"chi": 0.0}, "chi must be > 0"),
            ({"dt": 0.0}, "dt must be > 0"),
            ({"horizon": 5e-3}, "horizon must be >= 10 * dt"),
            ({"kappa": math.nan}, "kappa must be finite"),
            ({"seed": -3}, "seed must be a non-negative integer"),
        ],
    )
    def test_field_named_errors(self, unit_params, changes, message):
        with pytest.raises(ParameterError) as excinfo:
            validate_params(unit_params.replace(**changes))
        assert message in excinfo.value.errors

    def test_collects_every_violation(self, unit_params):
        with pytest.raises(ParameterError) as excinfo:
            validate_params(unit_params.replace(kappa=-1.0, mu=2.0, delta=-3.0))
        assert len(excinfo.value.errors) == 3
        assert "kappa" in str(excinfo.value)

    def test_lambda_zero_is_valid(self, unit_params):
        validate_params(unit_params.replace(lam=0.0))


class Test_ModelParams:
    def test_lam_true(self):
        p = ModelParams(lam=2.0, mu=0.5, delta=0.4)
        assert p.lam_true == pytest.approx(1.6)

    def test_n_samples_does_not_lose_the_last_step(self):
        assert ModelParams(horizon=100.0, dt=1e-3).n_samples == 100_001

    def test_stationary_variance_needs_positive_lambda(self):
        assert ModelParams(lam=2.0, kappa=1.0).stationary_variance == pytest.approx(0.25)
        with pytest.raises(ParameterError, match="lam must be > 0"):
            ModelParams(lam=0.0).stationary_variance


def test_noise_power_conventions():
    assert noise_power(LINEARIZED, 2.0) == pytest.approx(1.0 / 16.0)
    assert noise_power(DUAL, 2.0) == pytest.approx(1.0 / 8.0)
    with pytest.raises(ParameterError):
        noise_power("heterodyne", 1.0)


class Test_series:
    def test_trajectory_rejects_non_finite(self):
        with pytest.raises(ParameterError, match="finite"):
            Trajectory(0.0, 0.1, np.array([0.0, np.inf]))

    def test_trajectory_is_read_only(self):
        traj = Trajectory(0.0, 0.5, np.zeros(4))
        np.testing.assert_allclose(traj.times, [0.0, 0.5, 1.0, 1.5])
        with pytest.raises(ValueError):
            traj.values[0] = 1.0

    def test_measurement_record_convention(self):
        with pytest.raises(ParameterError, match="noise_convention"):
            MeasurementRecord(0.1, np.zeros(3), "heterodyne")
        record = MeasurementRecord(0.1, np.arange(3.0))
        np.testing.assert_array_equal(record.reversed().values, [2.0, 1.0, 0.0])

    def test_interior_window_filters_drop_the_head_only(self):
        series = EstimateSeries(KALMAN, 0.1, np.arange(10.0), burn_in=3)
        np.testing.assert_array_equal(series.interior(), np.arange(3.0, 10.0))

    def test_interior_window_smoothers_drop_both_ends(self):
        series = EstimateSeries(RTS, 0.1, np.arange(10.0), burn_in=3)
        np.testing.assert_array_equal(series.interior(), np.arange(3.0, 7.0))

    def test_interior_window_must_be_non_empty(self):
        with pytest.raises(ParameterError, match="no interior"):
            EstimateSeries(RTS, 0.1, np.arange(6.0), burn_in=3).interior_slice()
