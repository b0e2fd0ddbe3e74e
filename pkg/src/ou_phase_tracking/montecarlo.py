"""
Ensemble experiments: many independent trials per parameter set, interior-window
MSE per scheme with between-trial standard errors, and parameter sweeps.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import analytic
from .estimators import EstimatorConfig, run_scheme
from .model import (
    AS_PRINTED,
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
    ModelParams,
    NumericalError,
    ParameterError,
    TrialError,
    validate_params,
)
from .simulate import RngStream, simulate_measurements, simulate_ou

logger = logging.getLogger(__name__)

AXES = {"lambda": "lam", "delta": "delta", "mu": "mu", "chi": "chi"}

# sweep column -> scheme whose simulation fills the empirical counterpart (None: analytic only)
COMPARE_COLUMNS = {"sql": None, "tw_filter": TW_FILTER, "tw_smoother": TW_SMOOTHER, "kalman": KALMAN, "rts": RTS}
MISMATCH_COLUMNS = {"rts_mse": RTS, "robust_mse": ROBUST}


@dataclass(frozen=True)
class EnsembleConfig:
    params: ModelParams
    schemes: tuple[str, ...] = SCHEMES
    trials: int = 200
    burn_in: int | None = None
    jobs: int = 1
    sign_convention: str = FLIPPED

    def __post_init__(self):
        errors = []
        if self.trials < 2:
            errors.append("trials must be >= 2")
        if not self.schemes:
            errors.append("schemes must be non-empty")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            errors.append(f"unknown scheme(s): {', '.join(unknown)}")
        if self.burn_in is not None and self.burn_in < 0:
            errors.append("burn_in must be >= 0")
        if self.jobs == 0:
            errors.append("jobs must be non-zero")
        if self.sign_convention not in SIGN_CONVENTIONS:
            errors.append(f"sign_convention must be one of {', '.join(SIGN_CONVENTIONS)}")
        if errors:
            raise ParameterError(errors)
        object.__setattr__(self, "schemes", tuple(self.schemes))

    def resolved_burn_in(self) -> int:
        return analytic.default_burn_in(self.params) if self.burn_in is None else self.burn_in


# ==========================================
# 1. SINGLE TRIAL
# ==========================================
class TrialResult(NamedTuple):
    index: int
    sq: dict[str, float]  # interior mean of e^2
    mean: dict[str, float]  # interior mean of e
    count: dict[str, int]
    cross: dict[tuple[str, str], float]  # mean of e_a e_b on the both-ends window


def _run_trial(cfg: EnsembleConfig, configs: dict[str, EstimatorConfig], index: int) -> TrialResult:
    p = cfg.params
    rng = RngStream(p.seed, index)
    try:
        traj = simulate_ou(p, rng)
        meas = simulate_measurements(traj, p, LINEARIZED, rng)
        sq, mean, count, errors = {}, {}, {}, {}
        for scheme in cfg.schemes:
            series = run_scheme(meas, configs[scheme])
            error = traj.values - series.values
            interior = error[series.interior_slice()]
            sq[scheme] = float(np.mean(interior**2))
            mean[scheme] = float(np.mean(interior))
            count[scheme] = interior.size
            errors[scheme] = error
    except NumericalError as exc:
        raise TrialError(index, exc) from exc

    burn = configs[cfg.schemes[0]].burn_in
    window = slice(burn, len(traj) - burn)
    cross = {
        (a, b): float(np.mean(errors[a][window] * errors[b][window]))
        for a, b in itertools.combinations(cfg.schemes, 2)
    }
    return TrialResult(index, sq, mean, count, cross)


# ==========================================
# 2. ENSEMBLE
# ==========================================
@dataclass(frozen=True)
class SchemeStats:
    scheme: str
    mse: float
    se: float
    bias: float
    bias_se: float
    n_trials: int
    n_interior: int
    analytic: float
    z: float


@dataclass(frozen=True)
class PairStats:
    schemes: tuple[str, str]
    cross_cov: float
    se: float
    analytic: float


@dataclass(frozen=True)
class MseReport:
    params: ModelParams
    rows: dict[str, SchemeStats]
    pairs: dict[tuple[str, str], PairStats] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "scheme": r.scheme,
                    "analytic": r.analytic,
                    "empirical": r.mse,
                    "se": r.se,
                    "z": r.z,
                    "n_trials": r.n_trials,
                }
                for r in self.rows.values()
            ],
            columns=["scheme", "analytic", "empirical", "se", "z", "n_trials"],
        )


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    # per-trial means are i.i.d.; within-trial samples are not
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(samples.size))


def _z(value: float, target: float, se: float) -> float:
    if math.isnan(target):
        return math.nan
    if se > 0:
        return (value - target) / se
    return 0.0 if value == target else math.copysign(math.inf, value - target)


def _analytic_or_nan(scheme: str, p: ModelParams, sign_convention: str) -> float:
    try:
        return analytic.expected_mse(scheme, p, sign_convention)
    except (NumericalError, ParameterError) as exc:
        logger.debug("no analytic value for %s: %s", scheme, exc)
        return math.nan


def _pair_analytic(pair: tuple[str, str], p: ModelParams) -> float:
    """Known error cross-covariances of forward/backward pairs at the nominal model."""
    if p.mu * p.delta != 0 or p.lam <= 0:
        return math.nan
    if set(pair) == {KALMAN, INFO_BACKWARD}:
        return 0.0
    if set(pair) == {TW_FILTER, TW_BACKWARD} and p.chi is None:
        return analytic.tw_cross_cov(p)
    return math.nan


def run_ensemble(cfg: EnsembleConfig) -> MseReport:
    """
    Runs cfg.trials independent trials (trial i uses RngStream(seed, i)) and
    aggregates in trial order, so the report does not depend on cfg.jobs.
    """
    p = validate_params(cfg.params)
    burn_in = cfg.resolved_burn_in()
    configs = {
        scheme: EstimatorConfig.build(scheme, p, sign_convention=cfg.sign_convention, burn_in=burn_in)
        for scheme in cfg.schemes
    }
    logger.info(
        "ensemble: schemes=%s trials=%d samples=%d burn_in=%d jobs=%d",
        ",".join(cfg.schemes), cfg.trials, p.n_samples, burn_in, cfg.jobs,
    )

    results = Parallel(n_jobs=cfg.jobs)(delayed(_run_trial)(cfg, configs, i) for i in range(cfg.trials))
    results = sorted(results, key=lambda r: r.index)

    rows = {}
    for scheme in cfg.schemes:
        mse, se = _mean_se(np.array([r.sq[scheme] for r in results]))
        bias, bias_se = _mean_se(np.array([r.mean[scheme] for r in results]))
        target = _analytic_or_nan(scheme, p, cfg.sign_convention)
        rows[scheme] = SchemeStats(
            scheme=scheme,
            mse=mse,
            se=se,
            bias=bias,
            bias_se=bias_se,
            n_trials=len(results),
            n_interior=results[0].count[scheme],
            analytic=target,
            z=_z(mse, target, se),
        )

    pairs = {}
    for pair in itertools.combinations(cfg.schemes, 2):
        value, se = _mean_se(np.array([r.cross[pair] for r in results]))
        pairs[pair] = PairStats(pair, value, se, _pair_analytic(pair, p))

    return MseReport(params=p, rows=rows, pairs=pairs)


# ==========================================
# 3. ROBUST SIGN CONVENTION
# ==========================================
@dataclass(frozen=True)
class SignConventionCheck:
    selected: str
    target: float
    z: dict[str, float]
    bias_z: dict[str, float]


def resolve_robust_sign_convention(params: ModelParams, trials: int = 20, jobs: int = 1) -> SignConventionCheck:
    """
    Runs the robust smoother at mu = 0 under both xi sign conventions and keeps
    the one whose ensemble MSE matches the two-filter covariance it must reduce to.
    """
    p = params.replace(mu=0.0, delta=0.0)
    target = analytic.rts_cov_gain(p).cov
    z, bias_z = {}, {}
    for convention in (AS_PRINTED, FLIPPED):
        report = run_ensemble(EnsembleConfig(p, (ROBUST,), trials=trials, jobs=jobs, sign_convention=convention))
        row = report.rows[ROBUST]
        z[convention] = _z(row.mse, target, row.se)
        bias_z[convention] = _z(row.bias, 0.0, row.bias_se)
    passing = [c for c in z if abs(z[c]) < 4.0]
    if len(passing) != 1:
        raise NumericalError(f"robust sign convention unresolved: z = {z}")
    logger.info("robust sign convention: %s passes (z = %s)", passing[0], z)
    return SignConventionCheck(passing[0], target, z, bias_z)


# ==========================================
# 4. SWEEPS
# ==========================================
@dataclass(frozen=True)
class SweepRow:
    value: float
    analytic: dict[str, float]
    empirical: MseReport | None = None
    error: str | None = None


@dataclass(frozen=True)
class SweepReport:
    axis: str
    grid: np.ndarray
    columns: tuple[str, ...]
    rows: list[SweepRow]

    def __post_init__(self):
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ParameterError("grid must be strictly increasing")

    def to_frame(self) -> pd.DataFrame:
        column_schemes = {**COMPARE_COLUMNS, **MISMATCH_COLUMNS}
        empirical = any(row.empirical is not None for row in self.rows)
        records = []
        for row in self.rows:
            record = {self.axis: row.value}
            for column in self.columns:
                record[column] = row.analytic.get(column, math.nan)
            if empirical:
                for column in self.columns:
                    scheme = column_schemes[column]
                    stats = row.empirical.rows.get(scheme) if (row.empirical and scheme) else None
                    record[f"{column}_mc"] = stats.mse if stats else math.nan
                    record[f"{column}_se"] = stats.se if stats else math.nan
            if any(r.error for r in self.rows):
                record["error"] = row.error or ""
            records.append(record)
        return pd.DataFrame.from_records(records)


def parse_grid(text: str) -> np.ndarray:
    """'start:stop:steps' (inclusive linspace) or an explicit comma list."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, steps = text.split(":")
            grid = np.linspace(float(start), float(stop), int(steps))
        else:
            grid = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ParameterError(f"grid {text!r} is not 'start:stop:steps' or a comma list") from exc
    if grid.size == 0:
        raise ParameterError("grid must not be empty")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ParameterError("grid must be strictly increasing")
    return grid


def analytic_columns(axis: str, p: ModelParams, sign_convention: str = FLIPPED) -> dict[str, float]:
    if axis in ("delta", "mu"):
        return {
            "rts_mse": analytic.mismatch_mse(RTS, p),
            "robust_mse": analytic.mismatch_mse(ROBUST, p, sign_convention=sign_convention),
        }
    return {
        "sql": analytic.sql_ou(p),
        "tw_filter": analytic.nominal_cov(TW_FILTER, p),
        "tw_smoother": analytic.nominal_cov(TW_SMOOTHER, p),
        "kalman": analytic.kalman_cov_gain(p).cov,
        "rts": analytic.rts_cov_gain(p).cov,
    }


def sweep(axis: str, grid, cfg: EnsembleConfig, empirical: bool = False) -> SweepReport:
    """
    Analytic columns at every grid point and, with empirical=True, an ensemble
    per point. Delta and mu sweeps use mismatch semantics: the phase evolves at
    lam (1 - mu delta) while every estimator keeps its nominal design.
    """
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {', '.join(AXES)}, got {axis!r}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("grid must be a non-empty 1-d sequence")
    columns = MISMATCH_COLUMNS if axis in ("delta", "mu") else COMPARE_COLUMNS
    schemes = tuple(s for s in columns.values() if s is not None)

    rows = []
    for value in grid:
        point = cfg.params.replace(**{AXES[axis]: float(value)})
        try:
            validate_params(point)
            values = analytic_columns(axis, point, cfg.sign_convention)
            report = None
            if empirical:
                report = run_ensemble(replace(cfg, params=point, schemes=schemes))
            rows.append(SweepRow(float(value), values, report))
            logger.info("%s=%g: %s", axis, value, ", ".join(f"{k}={v:.6g}" for k, v in values.items()))
        except (ParameterError, NumericalError) as exc:
            logger.warning("%s=%g: row skipped (%s)", axis, value, exc)
            rows.append(SweepRow(float(value), {}, None, str(exc)))
    return SweepReport(axis=axis, grid=grid, columns=tuple(columns), rows=rows)
