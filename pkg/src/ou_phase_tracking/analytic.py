"""
Closed-form steady-state errors of every estimator, each also computed through
`solvers` so the two routes can be checked against each other.

Two measurement-noise conventions coexist and every function says which one it
uses:
    dual-homodyne       R = 1/(2|alpha|^2)  (SQL and the reference filter on the
                                             heterodyne-equivalent channel)
    linearized-homodyne R = 1/(4|alpha|^2)  (adaptive homodyne, everything else)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

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
    CovarianceReport,
    ModelParams,
    NonstationaryError,
    NumericalError,
    ParameterError,
    noise_power,
)
from .solvers import LyapunovProblem, ScalarQuadratic, solve_lyapunov, stabilizing_root

logger = logging.getLogger(__name__)


class CovGain(NamedTuple):
    cov: float
    gain: float


class Combination(NamedTuple):
    k1: float
    k2: float
    mse: float


class LagFilter(NamedTuple):
    """First-order estimator dy = (-rate * y + gain * theta) dt, in its own time direction."""

    rate: float
    gain: float


@dataclass(frozen=True)
class RobustSolution:
    X: float
    Y: float
    L: float
    uncertainty_gain: float  # K in z = K phi
    B1: float


@dataclass(frozen=True)
class SchemeDesign:
    """
    A scheme as a forward lag, a reverse-time lag and the weights that combine
    them: estimate = w_f * forward + w_b * backward.
    """

    scheme: str
    forward: LagFilter | None
    backward: LagFilter | None
    w_f: float
    w_b: float


def _sqrt_kalman(p: ModelParams) -> float:
    return math.sqrt(4.0 * p.kappa * p.alpha**2 + p.lam**2)


def _require_positive_lam(p: ModelParams, route: str) -> None:
    if p.lam <= 0:
        raise ParameterError(f"lam must be > 0 for the {route} route (stationary variance kappa/(2 lam))")


# ==========================================
# 1. REFERENCE LOW-PASS FILTER
# ==========================================
def chi_opt(p: ModelParams) -> float:
    """Reference-filter bandwidth that is optimal for Wiener phase noise (lam -> 0)."""
    return 2.0 * p.alpha * math.sqrt(p.kappa)


def resolve_chi(p: ModelParams) -> float:
    return chi_opt(p) if p.chi is None else float(p.chi)


def tw_filter_cov(p: ModelParams, chi: float | None = None) -> float:
    """Dual-homodyne convention: sigma^2 = kappa/(2(lam+chi)) + chi/(4|alpha|^2)."""
    chi = resolve_chi(p) if chi is None else chi
    return p.kappa / (2.0 * (p.lam + chi)) + chi / (4.0 * p.alpha**2)


def tw_lag_cov(p: ModelParams, chi: float | None = None, convention: str = LINEARIZED) -> float:
    """Reference filter of any bandwidth on either channel: kappa/(2(lam+chi)) + chi R / 2."""
    chi = resolve_chi(p) if chi is None else chi
    return p.kappa / (2.0 * (p.lam + chi)) + 0.5 * chi * noise_power(convention, p.alpha)


def tw_lyapunov_entries(p: ModelParams, chi: float | None = None) -> tuple[float, float, float]:
    """Printed P1, P2, P3 of the dual-homodyne (phi, estimate) covariance."""
    _require_positive_lam(p, "Lyapunov")
    chi = resolve_chi(p) if chi is None else chi
    lam, kappa = p.lam, p.kappa
    P1 = kappa / (2.0 * lam)
    P2 = chi * kappa / (2.0 * lam * (lam + chi))
    P3 = 0.5 * chi * (kappa / (lam * (lam + chi)) + 1.0 / (2.0 * p.alpha**2))
    return P1, P2, P3


def lag_lyapunov(lam_true: float, kappa: float, R: float, lag: LagFilter) -> tuple[float, float, float]:
    """
    (Sigma, M, N) = (E[phi^2], E[phi y], E[y^2]) for a lag y driven by
    theta = phi + sqrt(R) w, phi an OU process with rate lam_true.

    A reverse-time lag sees the time-reversed phase, which for a stationary OU
    process has the same generator, so one template serves both directions.
    """
    if lam_true <= 0:
        raise NonstationaryError(f"true process nonstationary: lam_true = {lam_true:.6g} <= 0")
    A = np.array([[-lam_true, 0.0], [lag.gain, -lag.rate]])
    B = np.array([[math.sqrt(kappa), 0.0], [0.0, lag.gain * math.sqrt(R)]])
    P = solve_lyapunov(LyapunovProblem.from_noise(A, B))
    return float(P[0, 0]), float(P[0, 1]), float(P[1, 1])


def _error_variance(sigma: float, m: float, n: float) -> float:
    # [1 -1] P [1 -1]^T
    return sigma - 2.0 * m + n


def assemble_cross_cov(sigma: float, m_f: float, m_b: float) -> float:
    """E[(phi - f)(phi - b)] for a causal f and an anti-causal b: Sigma - M_f - M_b + M_f Sigma^-1 M_b."""
    return sigma - m_f - m_b + m_f * m_b / sigma


def tw_filter_cov_lyapunov(p: ModelParams, chi: float | None = None) -> float:
    _require_positive_lam(p, "Lyapunov")
    chi = resolve_chi(p) if chi is None else chi
    return _error_variance(*lag_lyapunov(p.lam, p.kappa, noise_power(DUAL, p.alpha), LagFilter(chi, chi)))


def tw_optimal_chi(p: ModelParams) -> float:
    """
    Bandwidth minimising the dual-homodyne sigma^2: chi* = |alpha| sqrt(2 kappa) - lam.

    When lam >= |alpha| sqrt(2 kappa) the error decreases all the way to chi -> 0
    and there is no interior optimum.
    """
    chi = p.alpha * math.sqrt(2.0 * p.kappa) - p.lam
    if chi <= 0:
        raise NumericalError(f"no interior optimum: lam = {p.lam:.6g} >= |alpha| sqrt(2 kappa)")
    return chi


# ==========================================
# 2. STANDARD QUANTUM LIMIT
# ==========================================
def sql_ou(p: ModelParams) -> float:
    """Dual-homodyne Kalman error: (-lam + sqrt(lam^2 + 2 kappa |alpha|^2)) / (2|alpha|^2)."""
    # kappa / (lam + sqrt(...)) is the same root without the cancellation at large lam
    return p.kappa / (p.lam + math.sqrt(p.lam**2 + 2.0 * p.kappa * p.alpha**2))


def sql_ou_riccati(p: ModelParams) -> float:
    a2 = 2.0 * p.alpha**2
    return stabilizing_root(ScalarQuadratic(a=-a2, b=-2.0 * p.lam, c=p.kappa, closed_loop=(-p.lam, -a2)))


# ==========================================
# 3. FORWARD / BACKWARD REFERENCE FILTERS AND THEIR COMBINATION
# ==========================================
def tw_pair_entries(p: ModelParams) -> tuple[float, float, float]:
    """Printed Sigma, M_f, N_f at chi_opt (linearised channel); M_b, N_b are identical."""
    _require_positive_lam(p, "Lyapunov")
    chi, lam, kappa, a2 = chi_opt(p), p.lam, p.kappa, p.alpha**2
    sigma = kappa / (2.0 * lam)
    m = chi * kappa / (2.0 * lam * (lam + chi))
    n = (4.0 * chi * a2 * kappa + chi * lam**2 + chi**2 * lam) / (8.0 * a2 * lam * (lam + chi))
    return sigma, m, n


def tw_forward_cov(p: ModelParams) -> float:
    """sigma_f^2 at chi_opt, linearised channel."""
    sk, a = math.sqrt(p.kappa), p.alpha
    return sk * (p.lam + 4.0 * a * sk) / (4.0 * a * (p.lam + 2.0 * a * sk))


def tw_backward_cov(p: ModelParams) -> float:
    """sigma_b^2 at chi_opt; the reversed stationary process has the forward statistics."""
    sk, a = math.sqrt(p.kappa), p.alpha
    return sk * (p.lam + 4.0 * a * sk) / (4.0 * a * (p.lam + 2.0 * a * sk))


def tw_forward_cov_lyapunov(p: ModelParams) -> float:
    _require_positive_lam(p, "Lyapunov")
    chi = chi_opt(p)
    return _error_variance(*lag_lyapunov(p.lam, p.kappa, noise_power(LINEARIZED, p.alpha), LagFilter(chi, chi)))


def tw_backward_cov_lyapunov(p: ModelParams) -> float:
    return tw_forward_cov_lyapunov(p)


def tw_cross_cov(p: ModelParams, chi: float | None = None) -> float:
    """E[(phi - Theta_-)(phi - Theta_+)] = kappa lam / (2 (lam + chi)^2), chi_opt by default."""
    chi = chi_opt(p) if chi is None else chi
    return p.kappa * p.lam / (2.0 * (p.lam + chi) ** 2)


def tw_cross_cov_lyapunov(p: ModelParams) -> float:
    _require_positive_lam(p, "Lyapunov")
    chi = chi_opt(p)
    sigma, m_f, _ = lag_lyapunov(p.lam, p.kappa, noise_power(LINEARIZED, p.alpha), LagFilter(chi, chi))
    # the backward lag sees the reversed process; same generator, same entries
    m_b = m_f
    return assemble_cross_cov(sigma, m_f, m_b)


def combine_unbiased(e1: float, e2: float, e12: float) -> Combination:
    """
    Minimum-variance combination k1 x1 + (1 - k1) x2 of two unbiased estimates
    with error variances e1, e2 and error cross-covariance e12.
    """
    denom = e1 + e2 - 2.0 * e12
    if denom <= 1e-14 * max(abs(e1) + abs(e2), 1e-300):
        raise NumericalError("estimates perfectly correlated: e1 + e2 - 2 e12 <= 0")
    k1 = (e2 - e12) / denom
    return Combination(k1, 1.0 - k1, (e1 * e2 - e12**2) / denom)


def tw_smoothed_cov(p: ModelParams) -> float:
    sk, a, lam = math.sqrt(p.kappa), p.alpha, p.lam
    return sk * (lam**2 + 8.0 * a * lam * sk + 8.0 * a**2 * p.kappa) / (8.0 * a * (lam + 2.0 * a * sk) ** 2)


# ==========================================
# 4. KALMAN, RTS AND BACKWARD FILTER (linearised channel)
# ==========================================
def kalman_cov_gain(p: ModelParams) -> CovGain:
    root = _sqrt_kalman(p)
    # -lam + root, written without cancellation
    gain = 4.0 * p.alpha**2 * p.kappa / (p.lam + root)
    return CovGain(gain / (4.0 * p.alpha**2), gain)


def kalman_cov_riccati(p: ModelParams) -> float:
    a4 = 4.0 * p.alpha**2
    return stabilizing_root(ScalarQuadratic(a=-a4, b=-2.0 * p.lam, c=p.kappa, closed_loop=(-p.lam, -a4)))


def backward_cov_gain(p: ModelParams) -> CovGain:
    root = _sqrt_kalman(p)
    return CovGain((p.lam + root) / (4.0 * p.alpha**2), p.lam + root)


def backward_cov_riccati(p: ModelParams) -> float:
    # reverse-time closed loop lam - 4|alpha|^2 P_b
    a4 = 4.0 * p.alpha**2
    return stabilizing_root(ScalarQuadratic(a=-a4, b=2.0 * p.lam, c=p.kappa, closed_loop=(p.lam, -a4)))


def rts_cov_gain(p: ModelParams) -> CovGain:
    root = _sqrt_kalman(p)
    return CovGain(p.kappa / (2.0 * root), p.lam + root)


def rts_cov_riccati(p: ModelParams) -> float:
    """The smoother Riccati is linear in P: (-2 lam + 2 kappa / P_f) P - kappa = 0."""
    p_f = kalman_cov_riccati(p)
    return p.kappa / (2.0 * p.kappa / p_f - 2.0 * p.lam)


def kalman_cov_lyapunov(p: ModelParams) -> float:
    _require_positive_lam(p, "Lyapunov")
    design = scheme_design(KALMAN, p)
    return _error_variance(*lag_lyapunov(p.lam, p.kappa, noise_power(LINEARIZED, p.alpha), design.forward))


def backward_cov_lyapunov(p: ModelParams) -> float:
    _require_positive_lam(p, "Lyapunov")
    design = scheme_design(INFO_BACKWARD, p)
    return _error_variance(*lag_lyapunov(p.lam, p.kappa, noise_power(LINEARIZED, p.alpha), design.backward))


def kalman_backward_cross_cov(p: ModelParams) -> float:
    """E[(phi - phi_f)(phi - phi_b)] through the Lyapunov assembly; zero for the optimal pair."""
    _require_positive_lam(p, "Lyapunov")
    return mismatch_terms(TWO_FILTER, p, delta=0.0).e12


# ==========================================
# 5. ROBUST SMOOTHER
# ==========================================
def robust_riccati(p: ModelParams) -> RobustSolution:
    """
    Stabilising X (forward) and Y (backward) of the robust Riccati pair, with
    L = sqrt(lam^2 - mu^2 lam^2 + 4|alpha|^2 kappa).
    """
    L = math.sqrt(p.lam**2 - p.mu**2 * p.lam**2 + 4.0 * p.alpha**2 * p.kappa)
    sk = math.sqrt(p.kappa)
    return RobustSolution(
        X=(p.lam + L) / p.kappa,
        Y=(4.0 * p.alpha**2 * p.kappa - p.mu**2 * p.lam**2) / (p.kappa * (p.lam + L)),
        L=L,
        uncertainty_gain=p.mu * p.lam / sk,
        B1=sk,
    )


def robust_riccati_roots(p: ModelParams) -> tuple[float, float]:
    offset = p.mu**2 * p.lam**2 / p.kappa - 4.0 * p.alpha**2
    # eta decays at lam - kappa X, xi at -lam - kappa Y
    X = stabilizing_root(ScalarQuadratic(a=p.kappa, b=-2.0 * p.lam, c=offset, closed_loop=(p.lam, -p.kappa)))
    Y = stabilizing_root(ScalarQuadratic(a=-p.kappa, b=-2.0 * p.lam, c=-offset, closed_loop=(-p.lam, -p.kappa)))
    return X, Y


# ==========================================
# 6. SCHEME DESIGNS
# ==========================================
def scheme_design(scheme: str, p: ModelParams, sign_convention: str = FLIPPED) -> SchemeDesign:
    """Gains and combination weights of a scheme designed at the nominal parameters of `p`."""
    if sign_convention not in SIGN_CONVENTIONS:
        raise ParameterError(f"sign_convention must be one of {', '.join(SIGN_CONVENTIONS)}")

    if scheme in (TW_FILTER, TW_BACKWARD, TW_SMOOTHER):
        chi = resolve_chi(p)
        lag = LagFilter(chi, chi)
        if scheme == TW_FILTER:
            return SchemeDesign(scheme, lag, None, 1.0, 0.0)
        if scheme == TW_BACKWARD:
            return SchemeDesign(scheme, None, lag, 0.0, 1.0)
        var = tw_lag_cov(p, chi, LINEARIZED)
        k1, k2, _ = combine_unbiased(var, var, tw_cross_cov(p, chi))
        return SchemeDesign(scheme, lag, lag, k1, k2)

    if scheme in (KALMAN, INFO_BACKWARD, RTS, TWO_FILTER):
        p_f, k_f = kalman_cov_gain(p)
        p_b, k_b = backward_cov_gain(p)
        forward = LagFilter(p.lam + k_f, k_f)
        backward = LagFilter(k_b - p.lam, k_b)
        if scheme == KALMAN:
            return SchemeDesign(scheme, forward, None, 1.0, 0.0)
        if scheme == INFO_BACKWARD:
            return SchemeDesign(scheme, None, backward, 0.0, 1.0)
        # independent pair: combine_unbiased with e12 = 0
        k1, k2, _ = combine_unbiased(p_f, p_b, 0.0)
        return SchemeDesign(scheme, forward, backward, k1, k2)

    if scheme == ROBUST:
        sol = robust_riccati(p)
        a4 = 4.0 * p.alpha**2
        total = sol.X + sol.Y
        # (eta - xi)/(X + Y): as printed xi = Y phi_b, flipped xi = -Y phi_b
        w_b = sol.Y / total if sign_convention == FLIPPED else -sol.Y / total
        return SchemeDesign(scheme, LagFilter(sol.L, a4 / sol.X), LagFilter(sol.L, a4 / sol.Y), sol.X / total, w_b)

    raise ParameterError(f"scheme must be one of {', '.join(SCHEMES)}, got {scheme!r}")


def default_burn_in(p: ModelParams) -> int:
    """Ten time constants of the slowest estimator decay (lam + K_f, chi, L), in samples."""
    rates = [p.lam + kalman_cov_gain(p).gain, resolve_chi(p), robust_riccati(p).L]
    slowest = min(r for r in rates if r > 0)
    return int(math.ceil(10.0 / slowest / p.dt))


# ==========================================
# 7. MISMATCH
# ==========================================
@dataclass(frozen=True)
class MismatchTerms:
    lam_true: float
    sigma: float
    e1: float | None
    e2: float | None
    e12: float | None
    w_f: float
    w_b: float
    mse: float


def mismatch_terms(
    scheme: str, p: ModelParams, delta: float | None = None, sign_convention: str = FLIPPED
) -> MismatchTerms:
    """
    Steady error of a scheme designed at the nominal lam while the phase evolves
    with lam_true = lam (1 - mu delta).

    With f, b the forward and backward lags and weights w_f, w_b:
        E[(phi - w_f f - w_b b)^2] = Sigma - 2 (w_f M_f + w_b M_b)
                                     + w_f^2 N_f + w_b^2 N_b + 2 w_f w_b M_f M_b / Sigma
    which for w_f + w_b = 1 is k1^2 E[e1^2] + k2^2 E[e2^2] + 2 k1 k2 E[e1 e2].
    """
    delta = p.delta if delta is None else delta
    lam_true = p.lam * (1.0 - p.mu * delta)
    if lam_true <= 0:
        raise NonstationaryError(f"true process nonstationary: lam_true = {lam_true:.6g} <= 0")

    design = scheme_design(scheme, p, sign_convention)
    R = noise_power(LINEARIZED, p.alpha)
    sigma = p.kappa / (2.0 * lam_true)

    m_f = n_f = m_b = n_b = 0.0
    e1 = e2 = e12 = None
    if design.forward is not None:
        sigma, m_f, n_f = lag_lyapunov(lam_true, p.kappa, R, design.forward)
        e1 = _error_variance(sigma, m_f, n_f)
    if design.backward is not None:
        sigma, m_b, n_b = lag_lyapunov(lam_true, p.kappa, R, design.backward)
        e2 = _error_variance(sigma, m_b, n_b)
    if e1 is not None and e2 is not None:
        e12 = assemble_cross_cov(sigma, m_f, m_b)

    w_f, w_b = design.w_f, design.w_b
    mse = (
        sigma
        - 2.0 * (w_f * m_f + w_b * m_b)
        + w_f**2 * n_f
        + w_b**2 * n_b
        + 2.0 * w_f * w_b * m_f * m_b / sigma
    )
    return MismatchTerms(lam_true, sigma, e1, e2, e12, w_f, w_b, mse)


def mismatch_mse(scheme: str, p: ModelParams, delta: float | None = None, sign_convention: str = FLIPPED) -> float:
    return mismatch_terms(scheme, p, delta, sign_convention).mse


def nominal_cov(scheme: str, p: ModelParams, sign_convention: str = FLIPPED) -> float:
    """Closed-form steady error of a scheme when the model is exact."""
    if scheme in (TW_FILTER, TW_BACKWARD):
        return tw_lag_cov(p, resolve_chi(p), LINEARIZED)
    if scheme == TW_SMOOTHER:
        chi = resolve_chi(p)
        var = tw_lag_cov(p, chi, LINEARIZED)
        return combine_unbiased(var, var, tw_cross_cov(p, chi)).mse
    if scheme == KALMAN:
        return kalman_cov_gain(p).cov
    if scheme == INFO_BACKWARD:
        return backward_cov_gain(p).cov
    if scheme in (RTS, TWO_FILTER):
        return rts_cov_gain(p).cov
    if scheme == ROBUST:
        if p.mu * p.lam == 0 and sign_convention == FLIPPED:
            # the robust design collapses onto the two-filter smoother
            return rts_cov_gain(p).cov
        return mismatch_mse(ROBUST, p, delta=0.0, sign_convention=sign_convention)
    raise ParameterError(f"scheme must be one of {', '.join(SCHEMES)}, got {scheme!r}")


def expected_mse(scheme: str, p: ModelParams, sign_convention: str = FLIPPED) -> float:
    """The steady error a simulation of `scheme` under `p` should reproduce."""
    if p.mu * p.delta == 0:
        return nominal_cov(scheme, p, sign_convention)
    return mismatch_mse(scheme, p, sign_convention=sign_convention)


# ==========================================
# 8. REPORT
# ==========================================
def covariance_report(p: ModelParams, sign_convention: str = FLIPPED) -> CovarianceReport:
    covariances = {
        "sql": sql_ou(p),
        "tw-filter-dual": tw_filter_cov(p),
    }
    for scheme in SCHEMES:
        covariances[scheme] = nominal_cov(scheme, p, sign_convention)

    p_f, k_f = kalman_cov_gain(p)
    p_b, k_b = backward_cov_gain(p)
    P, F = rts_cov_gain(p)
    robust = robust_riccati(p)
    tw_weights = scheme_design(TW_SMOOTHER, p)
    auxiliary = {
        "chi_opt": chi_opt(p),
        "chi": resolve_chi(p),
        "P_f": p_f,
        "K_f": k_f,
        "P_b": p_b,
        "K_b": k_b,
        "P": P,
        "F": F,
        "X": robust.X,
        "Y": robust.Y,
        "L": robust.L,
        "z_gain": robust.uncertainty_gain,
        "k1": tw_weights.w_f,
        "k2": tw_weights.w_b,
        "sigma_fb": tw_cross_cov(p),
    }
    if p.lam > 0:
        P1, P2, P3 = tw_lyapunov_entries(p)
        sigma, m_f, n_f = tw_pair_entries(p)
        auxiliary.update(
            {"Sigma": sigma, "M_f": m_f, "N_f": n_f, "M_b": m_f, "N_b": n_f, "P1": P1, "P2": P2, "P3": P3}
        )
    logger.debug("covariance report for %s", p)
    return CovarianceReport(params=p, covariances=covariances, auxiliary=auxiliary)
