"""
Parameter and series types shared by every other module.

Terms:
lam   = mean-reversion rate of the phase (1/time)
kappa = inverse coherence time, the power of the noise driving the phase (1/time)
alpha = field amplitude |alpha| (photon-flux amplitude)
chi   = bandwidth of the reference low-pass filter (None -> chi_opt)
mu    = uncertainty level on lam, 0 <= mu < 1
delta = realised uncertainty, |delta| <= 1; the true rate is lam * (1 - mu * delta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

# ==========================================
# 1. NAMES
# ==========================================
LINEARIZED = "linearized-homodyne"
DUAL = "dual-homodyne"
DUAL_NONLINEAR = "dual-homodyne-nonlinear"
CONVENTIONS = (LINEARIZED, DUAL, DUAL_NONLINEAR)

TW_FILTER = "tw-filter"
TW_BACKWARD = "tw-backward"
TW_SMOOTHER = "tw-smoother"
KALMAN = "kalman"
INFO_BACKWARD = "info-backward"
RTS = "rts"
TWO_FILTER = "two-filter"
ROBUST = "robust"
SCHEMES = (TW_FILTER, TW_BACKWARD, TW_SMOOTHER, KALMAN, INFO_BACKWARD, RTS, TWO_FILTER, ROBUST)

# Schemes with a reverse-time pass carry a terminal transient as well.
REVERSE_PASS_SCHEMES = frozenset(SCHEMES) - {TW_FILTER, KALMAN}

AS_PRINTED = "as-printed"
FLIPPED = "flipped"
SIGN_CONVENTIONS = (AS_PRINTED, FLIPPED)


# ==========================================
# 2. ERRORS
# ==========================================
class ParameterError(ValueError):
    """One or more field-named bound violations."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalError(RuntimeError):
    pass


class UnstableDynamicsError(NumericalError):
    pass


class NonstationaryError(NumericalError):
    pass


class StabilityGuardError(NumericalError):
    pass


class TrialError(NumericalError):
    def __init__(self, trial, cause):
        self.trial = trial
        self.cause = cause
        super().__init__(f"trial {trial}: {cause}")

    def __reduce__(self):
        return TrialError, (self.trial, self.cause)


def noise_power(convention: str, alpha: float) -> float:
    """
    Spectral density R of the measurement noise on the phase channel.

    The adaptive (linearised) homodyne channel has R = 1/(4|alpha|^2); the
    dual-homodyne channel pays twice that, R = 1/(2|alpha|^2).
    """
    if convention == LINEARIZED:
        return 1.0 / (4.0 * alpha**2)
    if convention in (DUAL, DUAL_NONLINEAR):
        return 1.0 / (2.0 * alpha**2)
    raise ParameterError(f"noise_convention must be one of {', '.join(CONVENTIONS)}, got {convention!r}")


# ==========================================
# 3. PARAMETERS
# ==========================================
@dataclass(frozen=True)
class ModelParams:
    lam: float = 1.0
    kappa: float = 1.0
    alpha: float = 1.0
    chi: float | None = None
    mu: float = 0.0
    delta: float = 0.0
    horizon: float = 100.0
    dt: float = 1e-3
    seed: int = 42

    @property
    def lam_true(self) -> float:
        """Mean-reversion rate of the process that actually generates the phase."""
        return self.lam * (1.0 - self.mu * self.delta)

    @property
    def n_samples(self) -> int:
        # the small slack keeps e.g. 100 / 1e-3 from flooring to 99999
        return int(math.floor(self.horizon / self.dt + 1e-9)) + 1

    @property
    def stationary_variance(self) -> float:
        if self.lam <= 0:
            raise ParameterError("lam must be > 0 for the stationary variance kappa/(2 lam)")
        return self.kappa / (2.0 * self.lam)

    def replace(self, **changes) -> ModelParams:
        return replace(self, **changes)


def validate_params(raw: ModelParams) -> ModelParams:
    """Return `raw` unchanged if every bound holds, else raise ParameterError listing all violations."""
    errors = []
    numeric = {
        "lam": raw.lam, "kappa": raw.kappa, "alpha": raw.alpha, "mu": raw.mu,
        "delta": raw.delta, "horizon": raw.horizon, "dt": raw.dt,
    }
    if raw.chi is not None:
        numeric["chi"] = raw.chi
    finite = {}
    for name, value in numeric.items():
        try:
            value = float(value)
        except (TypeError, ValueError):
            errors.append(f"{name} must be a real number")
            continue
        if not math.isfinite(value):
            errors.append(f"{name} must be finite")
            continue
        finite[name] = value

    if "lam" in finite and finite["lam"] < 0:
        errors.append("lam must be >= 0")
    if "kappa" in finite and finite["kappa"] <= 0:
        errors.append("kappa must be > 0")
    if "alpha" in finite and finite["alpha"] <= 0:
        errors.append("alpha must be > 0")
    if "chi" in finite and finite["chi"] <= 0:
        errors.append("chi must be > 0")
    if "mu" in finite and not 0 <= finite["mu"] < 1:
        errors.append("mu must satisfy 0 ≤ mu < 1")
    if "delta" in finite and abs(finite["delta"]) > 1:
        errors.append("delta must satisfy |delta| ≤ 1")
    if "dt" in finite and finite["dt"] <= 0:
        errors.append("dt must be > 0")
    elif "dt" in finite and "horizon" in finite and finite["horizon"] < 10 * finite["dt"]:
        errors.append("horizon must be >= 10 * dt")
    if not isinstance(raw.seed, (int, np.integer)) or isinstance(raw.seed, bool) or raw.seed < 0:
        errors.append("seed must be a non-negative integer")

    if errors:
        raise ParameterError(errors)
    return raw


# ==========================================
# 4. SERIES
# ==========================================
def _as_finite_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ParameterError(f"{name} must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled true phase, radians."""

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _as_finite_array(self.values, "values"))

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)


@dataclass(frozen=True)
class MeasurementRecord:
    dt: float
    values: np.ndarray = field(repr=False)
    noise_convention: str = LINEARIZED

    def __post_init__(self):
        if self.noise_convention not in CONVENTIONS:
            raise ParameterError(f"noise_convention must be one of {', '.join(CONVENTIONS)}")
        object.__setattr__(self, "values", _as_finite_array(self.values, "values"))

    def __len__(self) -> int:
        return self.values.size

    def reversed(self) -> MeasurementRecord:
        return MeasurementRecord(self.dt, self.values[::-1].copy(), self.noise_convention)


@dataclass(frozen=True)
class EstimateSeries:
    scheme: str
    dt: float
    values: np.ndarray = field(repr=False)
    burn_in: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if self.burn_in < 0:
            raise ParameterError("burn_in must be >= 0")
        object.__setattr__(self, "values", _as_finite_array(self.values, "values"))

    def __len__(self) -> int:
        return self.values.size

    def interior_slice(self) -> slice:
        """Steady-state window: head burn-in always, tail burn-in for reverse-time schemes."""
        n = self.values.size
        stop = n - self.burn_in if self.scheme in REVERSE_PASS_SCHEMES else n
        if stop <= self.burn_in:
            raise ParameterError(f"burn_in {self.burn_in} leaves no interior samples out of {n}")
        return slice(self.burn_in, stop)

    def interior(self) -> np.ndarray:
        return self.values[self.interior_slice()]


@dataclass(frozen=True)
class CovarianceReport:
    """Analytic steady-state covariances per scheme plus the auxiliary roots, gains and weights."""

    params: ModelParams
    covariances: dict[str, float]
    auxiliary: dict[str, float]

    def __post_init__(self):
        negative = [k for k, v in self.covariances.items() if not v >= 0]
        if negative:
            raise NumericalError(f"negative covariance for {', '.join(negative)}")
