import numpy as np
import pytest

from ou_phase_tracking import analytic
from ou_phase_tracking.estimators import (
    EstimatorConfig,
    euler_lag,
    run_info_backward,
    run_kalman,
    run_robust,
    run_rts,
    run_scheme,
    run_tw_forward,
    run_tw_smoother,
    run_two_filter,
)
from ou_phase_tracking.model import (
    AS_PRINTED,
    DUAL,
    DUAL_NONLINEAR,
    FLIPPED,
    KALMAN,
    LINEARIZED,
    ROBUST,
    RTS,
    SCHEMES,
    TW_FILTER,
    TW_SMOOTHER,
    TWO_FILTER,
    MeasurementRecord,
    ModelParams,
    ParameterError,
    StabilityGuardError,
)
from ou_phase_tracking.simulate import RngStream, simulate_measurements, simulate_ou


def simulate(p, index=0):
    rng = RngStream(p.seed, index)
    traj = simulate_ou(p, rng)
    return traj, simulate_measurements(traj, p, LINEARIZED, rng)


def interior_rms(a, b, burn):
    return np.sqrt(np.mean((a[burn:-burn] - b[burn:-burn]) ** 2))


class Test_euler_lag:
    def test_forward_recursion(self):
        u = np.random.default_rng(0).normal(size=50)
        rate, gain, dt = 3.0, 2.0, 0.01
        expected = np.empty_like(u)
        expected[0] = 0.7
        for k in range(len(u) - 1):
            expected[k + 1] = expected[k] + dt * (-rate * expected[k] + gain * u[k])
        np.testing.assert_allclose(euler_lag(u, rate, gain, dt, initial=0.7), expected, rtol=1e-12)

    def test_reverse_recursion_uses_destination_sample(self):
        u = np.random.default_rng(1).normal(size=50)
        rate, gain, dt = 3.0, 2.0, 0.01
        expected = np.empty_like(u)
        expected[-1] = -0.2
        for k in range(len(u) - 2, -1, -1):
            expected[k] = expected[k + 1] + dt * (-rate * expected[k + 1] + gain * u[k])
        np.testing.assert_allclose(euler_lag(u, rate, gain, dt, initial=-0.2, reverse=True), expected, rtol=1e-12)

    def test_dc_gain(self):
        y = euler_lag(np.full(5000, 2.0), rate=4.0, gain=1.0, dt=0.01, initial=0.0)
        assert y[-1] == pytest.approx(0.5, rel=1e-10)


class Test_EstimatorConfig:
    def test_build_matches_design(self, unit_params):
        cfg = EstimatorConfig.build(RTS, unit_params)
        assert cfg.smoother_gain == pytest.approx(analytic.rts_cov_gain(unit_params).gain)
        assert cfg.burn_in == analytic.default_burn_in(unit_params)

    def test_rejects_foreign_gains(self, unit_params):
        design = analytic.scheme_design(KALMAN, unit_params.replace(lam=2.0))
        with pytest.raises(ParameterError, match="do not match"):
            EstimatorConfig(KALMAN, unit_params, design)

    def test_rejects_foreign_smoother_gain(self, unit_params):
        design = analytic.scheme_design(RTS, unit_params)
        F = analytic.rts_cov_gain(unit_params).gain
        with pytest.raises(ParameterError, match="smoother gain F does not match"):
            EstimatorConfig(RTS, unit_params, design, smoother_gain=1.5 * F)

    def test_smoother_gain_is_rts_only(self, unit_params):
        design = analytic.scheme_design(KALMAN, unit_params)
        with pytest.raises(ParameterError, match="only applies to rts"):
            EstimatorConfig(KALMAN, unit_params, design, smoother_gain=3.0)

    def test_smoother_gain_derived(self, unit_params):
        cfg = EstimatorConfig(RTS, unit_params, analytic.scheme_design(RTS, unit_params))
        assert cfg.smoother_gain == pytest.approx(analytic.rts_cov_gain(unit_params).gain, rel=1e-14)

    def test_unknown_scheme(self, unit_params):
        with pytest.raises(ParameterError, match="scheme must be one of"):
            EstimatorConfig.build("particle", unit_params)


class Test_channels:
    def test_reference_filter_accepts_dual_records(self, unit_params):
        p = unit_params.replace(horizon=5.0)
        meas = MeasurementRecord(p.dt, np.zeros(p.n_samples), DUAL)
        series = run_tw_forward(meas, EstimatorConfig.build(TW_FILTER, p, burn_in=0))
        assert series.scheme == TW_FILTER

    @pytest.mark.parametrize("runner, scheme", [(run_kalman, KALMAN), (run_tw_smoother, TW_SMOOTHER), (run_robust, ROBUST)])
    def test_other_schemes_need_linearised_records(self, unit_params, runner, scheme):
        p = unit_params.replace(horizon=5.0)
        meas = MeasurementRecord(p.dt, np.zeros(p.n_samples), DUAL_NONLINEAR)
        with pytest.raises(ParameterError, match="linearized-homodyne"):
            runner(meas, EstimatorConfig.build(scheme, p, burn_in=0))


def test_stability_guard():
    p = ModelParams(alpha=10.0, horizon=10.0, dt=0.05)
    _, meas = simulate(p)
    with pytest.raises(StabilityGuardError, match="reduce dt"):
        run_kalman(meas, EstimatorConfig.build(KALMAN, p))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_noiseless_tracking(scheme):
    p = ModelParams(kappa=1e-12, alpha=1e6, horizon=30.0, dt=1e-3)
    traj, meas = simulate(p)
    series = run_scheme(meas, EstimatorConfig.build(scheme, p))
    assert len(series) == len(traj)
    error = (traj.values - series.values)[series.interior_slice()]
    assert np.mean(error**2) < 1e-8


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("scale", [-2.5, 1e-3, 7.0])
def test_linear_in_the_record(unit_params, scheme, scale):
    p = unit_params.replace(horizon=20.0, dt=1e-3)
    _, meas = simulate(p)
    cfg = EstimatorConfig.build(scheme, p)
    base = run_scheme(meas, cfg).values
    scaled = run_scheme(MeasurementRecord(meas.dt, scale * meas.values, meas.noise_convention), cfg).values
    np.testing.assert_allclose(scaled, scale * base, rtol=1e-9, atol=1e-12 * abs(scale) * np.max(np.abs(base)))


def test_kalman_error_near_riccati(unit_params):
    p = unit_params.replace(horizon=500.0, dt=2e-3)
    traj, meas = simulate(p)
    series = run_kalman(meas, EstimatorConfig.build(KALMAN, p))
    error = (traj.values - series.values)[series.interior_slice()]
    assert np.mean(error**2) == pytest.approx(analytic.kalman_cov_gain(p).cov, rel=0.1)


def test_forward_and_backward_filters_are_uncorrelated(unit_params):
    p = unit_params.replace(horizon=1000.0, dt=2e-3)
    traj, meas = simulate(p)
    forward = run_kalman(meas, EstimatorConfig.build(KALMAN, p))
    backward = run_info_backward(meas, EstimatorConfig.build(KALMAN, p))
    burn = forward.burn_in
    e_f = (traj.values - forward.values)[burn:-burn]
    e_b = (traj.values - backward.values)[burn:-burn]
    assert abs(np.mean(e_f * e_b)) < 0.05 * np.sqrt(np.mean(e_f**2) * np.mean(e_b**2))


class Test_smoother_equivalence:
    def test_rts_and_two_filter_converge_with_dt(self, unit_params):
        rms = []
        for dt in (2e-3, 1e-3):
            p = unit_params.replace(horizon=200.0, dt=dt)
            _, meas = simulate(p)
            cfg = EstimatorConfig.build(RTS, p)
            rts = run_rts(meas, cfg).values
            two = run_two_filter(meas, EstimatorConfig.build(TWO_FILTER, p)).values
            rms.append(interior_rms(rts, two, cfg.burn_in))
        assert rms[0] / rms[1] == pytest.approx(2.0, rel=0.2)

    def test_rts_from_foreign_config(self, unit_params):
        p = unit_params.replace(horizon=20.0, dt=1e-3)
        _, meas = simulate(p)
        own = run_rts(meas, EstimatorConfig.build(RTS, p)).values
        borrowed = run_rts(meas, EstimatorConfig.build(TWO_FILTER, p)).values
        np.testing.assert_array_equal(own, borrowed)

    def test_robust_at_zero_mu_is_two_filter(self, unit_params):
        p = unit_params.replace(horizon=40.0, dt=1e-4)
        _, meas = simulate(p)
        # eta and xi start from zero while the Kalman pair starts at theta (std 1/(2|alpha| sqrt(dt)) = 50);
        # that seed gap decays at L = sqrt(5) and is below 1e-7 only after ~8 time units
        burn_in = int(10.0 / p.dt)
        robust = run_robust(meas, EstimatorConfig.build(ROBUST, p, burn_in=burn_in))
        two = run_two_filter(meas, EstimatorConfig.build(TWO_FILTER, p, burn_in=burn_in))
        window = robust.interior_slice()
        assert window == two.interior_slice() == slice(burn_in, p.n_samples - burn_in)
        assert np.sqrt(np.mean((robust.values[window] - two.values[window]) ** 2)) < 1e-6

    def test_robust_seed_gap_decays_from_record_ends(self, unit_params):
        p = unit_params.replace(horizon=40.0, dt=1e-4)
        _, meas = simulate(p)
        robust = run_robust(meas, EstimatorConfig.build(ROBUST, p))
        two = run_two_filter(meas, EstimatorConfig.build(TWO_FILTER, p))
        gap = np.abs(robust.values - two.values)
        assert gap[robust.burn_in] > gap[p.n_samples // 2]
        assert gap[p.n_samples // 2] < 1e-9


class Test_robust_sign_convention:
    def test_dc_gain(self):
        p = ModelParams(lam=0.0, horizon=40.0, dt=1e-3)
        meas = MeasurementRecord(p.dt, np.full(p.n_samples, 0.3), LINEARIZED)
        window = slice(int(15.0 / p.dt), int(25.0 / p.dt))
        flipped = run_robust(meas, EstimatorConfig.build(ROBUST, p, sign_convention=FLIPPED)).values
        printed = run_robust(meas, EstimatorConfig.build(ROBUST, p, sign_convention=AS_PRINTED)).values
        np.testing.assert_allclose(flipped[window], 0.3, rtol=1e-6)
        np.testing.assert_allclose(printed[window], 0.0, atol=1e-6)
