"""
Trajectory-level estimators: the reference low-pass filter and smoother, the
steady-state Kalman filter, the backward (information) filter, the RTS and
two-filter smoothers, and the robust fixed-interval smoother.

Every estimator is a chain of first-order lags integrated with forward Euler.
Forward passes are strictly causal,
    y_{k+1} = y_k + dt (-a y_k + g u_k),
reverse-time passes use the sample at the step's destination,
    y_k = y_{k+1} + dt (-a y_{k+1} + g u_k),
so in a two-pass smoother each measurement sample enters exactly one pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import analytic
from .model import (
    DUAL,
    FLIPPED,
    INFO_BACKWARD,
    KALMAN,
    LINEARIZED,
    ROBUST,
    RTS,
    SCHEMES,
    SIGN_CONVENTIONS,
    TW_BACKWARD,
    TW_FILTER,
    TW_SMOOTHER,
    TWO_FILTER,
    EstimateSeries,
    MeasurementRecord,
    ModelParams,
    ParameterError,
    StabilityGuardError,
    validate_params,
)

logger = logging.getLogger(__name__)

MAX_RATE_DT = 0.5
GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    scheme: str
    params: ModelParams
    design: analytic.SchemeDesign
    smoother_gain: float | None = None  # F, RTS only
    sign_convention: str = FLIPPED
    burn_in: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ParameterError(f"sign_convention must be one of {', '.join(SIGN_CONVENTIONS)}")
        # gains must be the ones the nominal parameters imply
        expected = analytic.scheme_design(self.scheme, self.params, self.sign_convention)
        got = np.array(_flatten(self.design), dtype=float)
        want = np.array(_flatten(expected), dtype=float)
        if self.design.scheme != self.scheme or not np.allclose(got, want, rtol=GAIN_RTOL, atol=0.0, equal_nan=True):
            raise ParameterError(f"design gains for {self.scheme!r} do not match the nominal parameters")

        # F belongs to RTS alone; it is derived when not given
        if self.scheme == RTS:
            F = analytic.rts_cov_gain(self.params).gain
            if self.smoother_gain is None:
                object.__setattr__(self, "smoother_gain", F)
            elif not math.isclose(self.smoother_gain, F, rel_tol=GAIN_RTOL, abs_tol=0.0):
                raise ParameterError("smoother gain F does not match the nominal parameters")
        elif self.smoother_gain is not None:
            raise ParameterError(f"smoother gain F only applies to rts, not {self.scheme!r}")

    @classmethod
    def build(
        cls,
        scheme: str,
        params: ModelParams,
        sign_convention: str = FLIPPED,
        burn_in: int | None = None,
    ) -> EstimatorConfig:
        validate_params(params)
        design = analytic.scheme_design(scheme, params, sign_convention)
        smoother_gain = analytic.rts_cov_gain(params).gain if scheme == RTS else None
        burn_in = analytic.default_burn_in(params) if burn_in is None else burn_in
        return cls(scheme, params, design, smoother_gain, sign_convention, burn_in)


def _flatten(design: analytic.SchemeDesign) -> list[float]:
    nan2 = [math.nan, math.nan]
    forward = list(design.forward) if design.forward is not None else nan2
    backward = list(design.backward) if design.backward is not None else nan2
    return [*forward, *backward, design.w_f, design.w_b]


# ==========================================
# 1. LAG KERNEL
# ==========================================
def _guard(rate: float, dt: float, what: str) -> None:
    if rate * dt >= MAX_RATE_DT:
        raise StabilityGuardError(f"{what}: rate*dt = {rate * dt:.3g} >= {MAX_RATE_DT}; reduce dt")


def euler_lag(u: np.ndarray, rate: float, gain: float, dt: float, initial: float, reverse: bool = False) -> np.ndarray:
    """
    Forward-Euler first-order lag over the sample sequence `u`.

    reverse=False: y_0 = initial, y_{k+1} = c y_k + g dt u_k
    reverse=True:  y_{n-1} = initial, y_k = c y_{k+1} + g dt u_k
    with c = 1 - rate dt.
    """
    u = np.asarray(u, dtype=float)
    c = 1.0 - rate * dt
    if reverse:
        drive = u[::-1][1:]
    else:
        drive = u[:-1]
    y = np.empty(u.size)
    y[0] = initial
    if drive.size:
        y[1:], _ = lfilter([gain * dt], [1.0, -c], drive, zi=[c * initial])
    return y[::-1] if reverse else y


def _require(meas: MeasurementRecord, allowed: tuple[str, ...], scheme: str) -> None:
    if meas.noise_convention not in allowed:
        raise ParameterError(
            f"{scheme} needs a {' or '.join(allowed)} record, got {meas.noise_convention!r}"
        )


def _forward_pass(meas: MeasurementRecord, lag: analytic.LagFilter, what: str) -> np.ndarray:
    _guard(lag.rate, meas.dt, what)
    return euler_lag(meas.values, lag.rate, lag.gain, meas.dt, initial=meas.values[0])


def _backward_pass(meas: MeasurementRecord, lag: analytic.LagFilter, what: str) -> np.ndarray:
    _guard(lag.rate, meas.dt, what)
    return euler_lag(meas.values, lag.rate, lag.gain, meas.dt, initial=meas.values[-1], reverse=True)


def _design(cfg: EstimatorConfig, scheme: str) -> analytic.SchemeDesign:
    """Design of `scheme` derived from cfg's nominal parameters (cfg may describe a composite scheme)."""
    if cfg.scheme == scheme:
        return cfg.design
    return analytic.scheme_design(scheme, cfg.params, cfg.sign_convention)


# ==========================================
# 2. REFERENCE LOW-PASS FILTER AND SMOOTHER
# ==========================================
def run_tw_forward(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    """Theta_- ' = -chi (Theta_- - theta), from Theta_-(0) = theta_0."""
    _require(meas, (LINEARIZED, DUAL), "tw-filter")
    lag = _design(cfg, TW_FILTER).forward
    values = _forward_pass(meas, lag, "tw-filter")
    return EstimateSeries(TW_FILTER, meas.dt, values, cfg.burn_in)


def run_tw_backward(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    """The same lag run over the reversed record, output reversed back."""
    _require(meas, (LINEARIZED,), "tw-backward")
    lag = _design(cfg, TW_BACKWARD).backward
    values = _backward_pass(meas, lag, "tw-backward")
    return EstimateSeries(TW_BACKWARD, meas.dt, values, cfg.burn_in)


def run_tw_smoother(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    _require(meas, (LINEARIZED,), "tw-smoother")
    design = _design(cfg, TW_SMOOTHER)
    forward = _forward_pass(meas, design.forward, "tw-smoother forward")
    backward = _backward_pass(meas, design.backward, "tw-smoother backward")
    return EstimateSeries(TW_SMOOTHER, meas.dt, design.w_f * forward + design.w_b * backward, cfg.burn_in)


# ==========================================
# 3. KALMAN, BACKWARD FILTER, RTS, TWO-FILTER
# ==========================================
def run_kalman(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    """phi_f' = -(lam + K_f) phi_f + K_f theta."""
    _require(meas, (LINEARIZED,), "kalman")
    values = _forward_pass(meas, _design(cfg, KALMAN).forward, "kalman")
    return EstimateSeries(KALMAN, meas.dt, values, cfg.burn_in)


def run_info_backward(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    """In reverse time: phi_b' = (lam - K_b) phi_b + K_b theta, from phi_b(T) = theta_T."""
    _require(meas, (LINEARIZED,), "info-backward")
    values = _backward_pass(meas, _design(cfg, INFO_BACKWARD).backward, "info-backward")
    return EstimateSeries(INFO_BACKWARD, meas.dt, values, cfg.burn_in)


def run_rts(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    """
    Backward sweep over the Kalman output. In reverse time
        phi' = (lam - F) phi + F phi_f,   phi(T) = phi_f(T),
    stable because F > lam.
    """
    _require(meas, (LINEARIZED,), "rts")
    p = cfg.params
    F = cfg.smoother_gain if cfg.scheme == RTS else analytic.rts_cov_gain(p).gain
    filtered = run_kalman(meas, cfg).values
    rate = F - p.lam
    _guard(rate, meas.dt, "rts")
    values = euler_lag(filtered, rate, F, meas.dt, initial=filtered[-1], reverse=True)
    return EstimateSeries(RTS, meas.dt, values, cfg.burn_in)


def run_two_filter(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    _require(meas, (LINEARIZED,), "two-filter")
    design = _design(cfg, TWO_FILTER)
    forward = run_kalman(meas, cfg).values
    backward = run_info_backward(meas, cfg).values
    return EstimateSeries(TWO_FILTER, meas.dt, design.w_f * forward + design.w_b * backward, cfg.burn_in)


# ==========================================
# 4. ROBUST SMOOTHER
# ==========================================
def run_robust(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    """
    eta' = -L eta + 4|alpha|^2 theta forward from eta(0) = 0, xi the reverse-time
    analogue from xi(T) = 0, and phi = (eta - xi) / (X + Y).

    sign_convention "as-printed" drives xi with +4|alpha|^2 theta, "flipped" with
    -4|alpha|^2 theta.
    """
    _require(meas, (LINEARIZED,), "robust")
    p = cfg.params
    sol = analytic.robust_riccati(p)
    _guard(sol.L, meas.dt, "robust")
    drive = 4.0 * p.alpha**2
    eta = euler_lag(meas.values, sol.L, drive, meas.dt, initial=0.0)
    sign = -1.0 if cfg.sign_convention == FLIPPED else 1.0
    xi = euler_lag(meas.values, sol.L, sign * drive, meas.dt, initial=0.0, reverse=True)
    return EstimateSeries(ROBUST, meas.dt, (eta - xi) / (sol.X + sol.Y), cfg.burn_in)


RUNNERS = {
    TW_FILTER: run_tw_forward,
    TW_BACKWARD: run_tw_backward,
    TW_SMOOTHER: run_tw_smoother,
    KALMAN: run_kalman,
    INFO_BACKWARD: run_info_backward,
    RTS: run_rts,
    TWO_FILTER: run_two_filter,
    ROBUST: run_robust,
}


def run_scheme(meas: MeasurementRecord, cfg: EstimatorConfig) -> EstimateSeries:
    logger.debug("%s over %d samples (burn_in=%d)", cfg.scheme, len(meas), cfg.burn_in)
    return RUNNERS[cfg.scheme](meas, cfg)
