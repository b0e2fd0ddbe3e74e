"""
Ground-truth phase paths and the measurement records the estimators consume.

White noise of unit amplitude is put on the sample grid with per-sample variance
1/dt, so a channel with noise power R gets per-sample variance R/dt.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .model import (
    CONVENTIONS,
    DUAL,
    DUAL_NONLINEAR,
    LINEARIZED,
    MeasurementRecord,
    ModelParams,
    ParameterError,
    Trajectory,
    noise_power,
    validate_params,
)

logger = logging.getLogger(__name__)

# sub-streams, one per noise source
TRUTH = 0
MEASUREMENT = 1
DUAL_HOMODYNE = 2


@dataclass(frozen=True)
class RngStream:
    """
    Independent, reproducible Gaussian source for one trial.

    seed is the master seed, index the trial id and counter the noise source
    within the trial; each (seed, index, counter) is its own SeedSequence child.
    """

    seed: int
    index: int = 0
    counter: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.index, self.counter)))

    def substream(self, counter: int) -> RngStream:
        return RngStream(self.seed, self.index, counter)


# ==========================================
# 1. TRUE PHASE
# ==========================================
def simulate_ou(p: ModelParams, rng: RngStream) -> Trajectory:
    """
    Exact discretisation of d phi = -lam phi dt + sqrt(kappa) dW at lam = lam_true:
        phi_{k+1} = e^{-lam dt} phi_k + s xi_k,  s^2 = kappa (1 - e^{-2 lam dt}) / (2 lam)
    (s^2 = kappa dt for lam = 0). Starts from the stationary law when lam > 0.
    """
    validate_params(p)
    lam, n = p.lam_true, p.n_samples
    gen = rng.substream(TRUTH).generator()

    if lam > 0:
        decay = math.exp(-lam * p.dt)
        # -expm1 keeps 1 - e^{-2 lam dt} accurate for small lam dt
        step_sd = math.sqrt(p.kappa * -math.expm1(-2.0 * lam * p.dt) / (2.0 * lam))
        phi0 = gen.normal(0.0, math.sqrt(p.kappa / (2.0 * lam)))
    else:
        decay = 1.0
        step_sd = math.sqrt(p.kappa * p.dt)
        phi0 = 0.0

    shocks = np.empty(n)
    shocks[0] = phi0
    shocks[1:] = step_sd * gen.standard_normal(n - 1)
    # AR(1) recursion phi_k = decay * phi_{k-1} + shock_k
    phi = lfilter([1.0], [1.0, -decay], shocks)
    return Trajectory(t0=0.0, dt=p.dt, values=phi)


# ==========================================
# 2. LINEAR CHANNELS
# ==========================================
def simulate_measurements(
    traj: Trajectory, p: ModelParams, convention: str = LINEARIZED, rng: RngStream | None = None
) -> MeasurementRecord:
    """theta_k = phi_k + n_k with n_k ~ N(0, R/dt)."""
    if convention not in (LINEARIZED, DUAL):
        raise ParameterError(
            f"convention must be {LINEARIZED!r} or {DUAL!r}, got {convention!r}"
            + (" (use simulate_dual_homodyne_nonlinear)" if convention in CONVENTIONS else "")
        )
    rng = RngStream(p.seed) if rng is None else rng
    gen = rng.substream(MEASUREMENT).generator()
    sd = math.sqrt(noise_power(convention, p.alpha) / traj.dt)
    theta = traj.values + sd * gen.standard_normal(len(traj))
    return MeasurementRecord(dt=traj.dt, values=theta, noise_convention=convention)


# ==========================================
# 3. NONLINEAR DUAL-HOMODYNE CHANNEL
# ==========================================
def dual_homodyne_angle(phi, alpha: float, n1, n2, n3, n4) -> np.ndarray:
    """
    arctan of the two detector currents
        I1 = (2|alpha| sin phi + n1 + n2) / sqrt(2)
        I2 = (2|alpha| cos phi + n3 - n4) / sqrt(2)
    taken on the full circle and wrapped to (-pi, pi].
    """
    i1 = (2.0 * alpha * np.sin(phi) + n1 + n2) / math.sqrt(2.0)
    i2 = (2.0 * alpha * np.cos(phi) + n3 - n4) / math.sqrt(2.0)
    angle = np.arctan2(i1, i2)
    return np.where(angle <= -np.pi, angle + 2.0 * np.pi, angle)


def simulate_dual_homodyne_pair(
    traj: Trajectory, p: ModelParams, rng: RngStream
) -> tuple[MeasurementRecord, MeasurementRecord]:
    """
    The nonlinear record and its first-order expansion phi + (n1 + n2)/(2|alpha|),
    both built from the same four N(0, 1/dt) noises.
    """
    # a denominator within three noise deviations of zero wraps the angle
    if 2.0 * p.alpha < 3.0 * math.sqrt(2.0 / traj.dt):
        logger.warning(
            "dual-homodyne amplitude |alpha|=%g is small against the per-sample noise at dt=%g; "
            "the arctan output will wrap often",
            p.alpha,
            traj.dt,
        )
    gen = rng.substream(DUAL_HOMODYNE).generator()
    n1, n2, n3, n4 = gen.standard_normal((4, len(traj))) / math.sqrt(traj.dt)
    phi = traj.values
    nonlinear = dual_homodyne_angle(phi, p.alpha, n1, n2, n3, n4)
    linear = phi + (n1 + n2) / (2.0 * p.alpha)
    return (
        MeasurementRecord(dt=traj.dt, values=nonlinear, noise_convention=DUAL_NONLINEAR),
        MeasurementRecord(dt=traj.dt, values=linear, noise_convention=DUAL),
    )


def simulate_dual_homodyne_nonlinear(traj: Trajectory, p: ModelParams, rng: RngStream) -> MeasurementRecord:
    return simulate_dual_homodyne_pair(traj, p, rng)[0]
