"""
Command-line front end.

    python -m ou_phase_tracking analytic --lambda 0
    python -m ou_phase_tracking compare --grid 0:5:51 --trials 200 --out compare.csv
    python -m ou_phase_tracking robust --grid -1:1:41 --out robust.csv
    python -m ou_phase_tracking ensemble --schemes rts,two-filter --trials 200

Settings resolve as defaults < --config file (key=value lines, '#' comments) < flags.
Exit codes: 0 ok, 2 bad input, 3 numerical failure, 4 |z| > 5 in an ensemble.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import pandas as pd

from . import __version__, analytic
from .model import FLIPPED, SCHEMES, SIGN_CONVENTIONS, ModelParams, NumericalError, ParameterError, validate_params
from .montecarlo import AXES, EnsembleConfig, parse_grid, run_ensemble, sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_TRIPWIRE = 4
Z_TRIPWIRE = 5.0

FLOAT_FORMAT = "%.12g"
ROBUST_MU_VALUES = (0.5, 0.8, 0.9)

# command -> (default axis, default grid, default trials)
COMMAND_DEFAULTS = {
    "analytic": (None, None, 0),
    "compare": ("lambda", "0:5:51", 0),
    "robust": ("delta", "-1:1:41", 0),
    "ensemble": (None, None, 200),
}

# flag name -> (ModelParams field or None, parser)
KEYS = {
    "lambda": ("lam", float),
    "kappa": ("kappa", float),
    "alpha": ("alpha", float),
    "chi": ("chi", float),
    "mu": ("mu", float),
    "delta": ("delta", float),
    "dt": ("dt", float),
    "horizon": ("horizon", float),
    "seed": ("seed", int),
    "trials": (None, int),
    "jobs": (None, int),
    "burn_in": (None, int),
    "grid": (None, str),
    "axis": (None, str),
    "out": (None, str),
    "format": (None, str),
    "schemes": (None, str),
    "sign_convention": (None, str),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams
    axis: str | None = None
    grid: str | None = None
    trials: int = 0
    jobs: int = 1
    burn_in: int | None = None
    schemes: tuple[str, ...] = SCHEMES
    sign_convention: str = FLIPPED
    mu_values: tuple[float, ...] = ROBUST_MU_VALUES
    out: str | None = None
    fmt: str = "csv"

    def header(self) -> dict[str, str]:
        """Everything that determines the output; --jobs is left out because it does not."""
        header = {"version": __version__, "command": self.command}
        header.update({f.name: _fmt(getattr(self.params, f.name)) for f in fields(self.params)})
        header.update(
            {
                "axis": str(self.axis),
                "grid": str(self.grid),
                "trials": str(self.trials),
                "burn_in": str(self.burn_in),
                "schemes": ",".join(self.schemes),
                "sign_convention": self.sign_convention,
            }
        )
        if self.command == "robust":
            header["mu_values"] = ",".join(_fmt(m) for m in self.mu_values)
        return header


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


# ==========================================
# 1. CONFIGURATION
# ==========================================
def read_config_file(path: str | Path) -> dict[str, str]:
    settings = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"config: cannot read {path}: {exc.strerror}") from exc
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in KEYS:
            raise ParameterError(f"config line {number}: unknown key {key!r}")
        settings[key] = value
    return settings


def _convert(key: str, value) -> object:
    if value is None or not isinstance(value, str):
        return value
    kind = KEYS[key][1]
    try:
        return kind(value)
    except ValueError as exc:
        raise ParameterError(f"{key} must be {kind.__name__}, got {value!r}") from exc


def build_config(args: argparse.Namespace) -> RunConfig:
    settings = read_config_file(args.config) if args.config else {}
    for key in KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    values = {key: _convert(key, value) for key, value in settings.items()}

    params = validate_params(
        ModelParams(**{KEYS[key][0]: value for key, value in values.items() if KEYS[key][0] is not None})
    )

    command = args.command
    axis, grid, trials = COMMAND_DEFAULTS[command]
    axis = values.get("axis", axis)
    if command in ("compare", "robust") and axis not in AXES:
        raise ParameterError(f"axis must be one of {', '.join(AXES)}, got {axis!r}")

    schemes = SCHEMES
    if "schemes" in values:
        schemes = tuple(s.strip() for s in values["schemes"].split(",") if s.strip())
        unknown = [s for s in schemes if s not in SCHEMES]
        if unknown or not schemes:
            raise ParameterError(f"unknown scheme(s): {', '.join(unknown) or '(none)'}; choose from {', '.join(SCHEMES)}")

    fmt = values.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ParameterError(f"format must be csv or json, got {fmt!r}")
    sign_convention = values.get("sign_convention", FLIPPED)
    if sign_convention not in SIGN_CONVENTIONS:
        raise ParameterError(f"sign_convention must be one of {', '.join(SIGN_CONVENTIONS)}")
    jobs = values.get("jobs", 1)
    if jobs == 0:
        raise ParameterError("jobs must be non-zero")
    trials = values.get("trials", trials)
    if trials < 0:
        raise ParameterError("trials must be >= 0")

    mu_values = (params.mu,) if "mu" in values else ROBUST_MU_VALUES
    return RunConfig(
        command=command,
        params=params,
        axis=axis,
        grid=values.get("grid", grid),
        trials=trials,
        jobs=jobs,
        burn_in=values.get("burn_in"),
        schemes=schemes,
        sign_convention=sign_convention,
        mu_values=mu_values,
        out=values.get("out"),
        fmt=fmt,
    )


# ==========================================
# 2. OUTPUT
# ==========================================
def _json_value(value):
    if isinstance(value, float):
        return float(f"{value:.12g}") if math.isfinite(value) else None
    if hasattr(value, "item"):
        return _json_value(value.item())
    return value


def write_frame(frame: pd.DataFrame, cfg: RunConfig, out: str | None, extra: dict[str, str] | None = None) -> None:
    header = cfg.header()
    header.update(extra or {})
    if cfg.fmt == "json":
        rows = [{k: _json_value(v) for k, v in row.items()} for row in frame.to_dict(orient="records")]
        text = json.dumps({"header": header, "columns": list(frame.columns), "rows": rows}, indent=2) + "\n"
    else:
        lines = [f"# {key} = {value}" for key, value in header.items()]
        body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="nan")
        text = "\n".join(lines) + "\n" + body

    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise ParameterError(f"out: cannot write {out}: {exc.strerror}") from exc
    logger.info("wrote %s (%d rows)", out, len(frame))


def _with_suffix(out: str | None, label: str) -> str | None:
    if out is None:
        return None
    path = Path(out)
    return str(path.with_name(f"{path.stem}_{label}{path.suffix}"))


# ==========================================
# 3. COMMANDS
# ==========================================
def _report_values(p: ModelParams, sign_convention: str) -> dict[str, tuple[str, float]]:
    report = analytic.covariance_report(p, sign_convention)
    values = {key: ("covariance", value) for key, value in report.covariances.items()}
    values.update({key: ("auxiliary", value) for key, value in report.auxiliary.items()})
    return values


def cmd_analytic(cfg: RunConfig) -> int:
    values = _report_values(cfg.params, cfg.sign_convention)
    try:
        limits = _report_values(cfg.params.replace(lam=0.0), cfg.sign_convention)
    except (NumericalError, ParameterError) as exc:
        logger.warning("no lambda -> 0 limits: %s", exc)
        limits = {}
    frame = pd.DataFrame(
        [
            {
                "quantity": key,
                "kind": kind,
                "value": value,
                "lambda0_limit": limits.get(key, (kind, math.nan))[1],
            }
            for key, (kind, value) in values.items()
        ],
        columns=["quantity", "kind", "value", "lambda0_limit"],
    )
    write_frame(frame, cfg, cfg.out)
    return EXIT_OK


def _ensemble_config(cfg: RunConfig, params: ModelParams, schemes: tuple[str, ...] | None = None) -> EnsembleConfig:
    return EnsembleConfig(
        params=params,
        schemes=schemes or cfg.schemes,
        trials=max(cfg.trials, 2),
        burn_in=cfg.burn_in,
        jobs=cfg.jobs,
        sign_convention=cfg.sign_convention,
    )


def cmd_compare(cfg: RunConfig) -> int:
    grid = parse_grid(cfg.grid)
    if cfg.trials == 1:
        raise ParameterError("trials must be 0 (analytic only) or >= 2")
    report = sweep(cfg.axis, grid, _ensemble_config(cfg, cfg.params), empirical=cfg.trials > 0)
    write_frame(report.to_frame(), cfg, cfg.out)
    return EXIT_OK


def cmd_robust(cfg: RunConfig) -> int:
    grid = parse_grid(cfg.grid)
    if cfg.trials == 1:
        raise ParameterError("trials must be 0 (analytic only) or >= 2")
    for mu in cfg.mu_values:
        params = validate_params(cfg.params.replace(mu=mu))
        report = sweep(cfg.axis, grid, _ensemble_config(cfg, params), empirical=cfg.trials > 0)
        out = cfg.out if len(cfg.mu_values) == 1 else _with_suffix(cfg.out, f"mu{mu:g}")
        write_frame(report.to_frame(), cfg, out, extra={"mu": _fmt(mu)})
    return EXIT_OK


def cmd_ensemble(cfg: RunConfig) -> int:
    if cfg.trials < 2:
        raise ParameterError("trials must be >= 2")
    report = run_ensemble(_ensemble_config(cfg, cfg.params))
    write_frame(report.to_frame(), cfg, cfg.out)
    tripped = [r.scheme for r in report.rows.values() if abs(r.z) > Z_TRIPWIRE]
    if tripped:
        logger.error("|z| > %g for %s", Z_TRIPWIRE, ", ".join(tripped))
        return EXIT_TRIPWIRE
    return EXIT_OK


COMMANDS = {
    "analytic": cmd_analytic,
    "compare": cmd_compare,
    "robust": cmd_robust,
    "ensemble": cmd_ensemble,
}


# ==========================================
# 4. ENTRY POINT
# ==========================================
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lambda", dest="lambda", type=float, help="mean-reversion rate (1/time)")
    common.add_argument("--kappa", type=float, help="inverse coherence time (1/time)")
    common.add_argument("--alpha", type=float, help="field amplitude |alpha|")
    common.add_argument("--chi", type=float, help="reference filter bandwidth (default: chi_opt)")
    common.add_argument("--mu", type=float, help="uncertainty level, 0 <= mu < 1")
    common.add_argument("--delta", type=float, help="uncertainty realisation, |delta| <= 1")
    common.add_argument("--dt", type=float, help="integration step")
    common.add_argument("--horizon", type=float, help="simulated time T per trial")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int, help="Monte Carlo trials (0: analytic only)")
    common.add_argument("--jobs", type=int, help="worker processes (-1: all cores)")
    common.add_argument("--burn-in", dest="burn_in", type=int, help="samples dropped at each open end")
    common.add_argument("--grid", help="start:stop:steps or a comma list")
    common.add_argument("--axis", choices=list(AXES), help="swept parameter")
    common.add_argument("--schemes", help=f"comma list from {','.join(SCHEMES)}")
    common.add_argument("--sign-convention", dest="sign_convention", choices=SIGN_CONVENTIONS)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--config", help="key=value settings file")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO")

    parser = argparse.ArgumentParser(
        prog="ou_phase_tracking",
        description="Phase tracking under OU phase noise: analytic covariances, sweeps and Monte Carlo checks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analytic", parents=[common], help="steady-state covariances, gains and lambda -> 0 limits")
    sub.add_parser("compare", parents=[common], help="lambda sweep of sql, reference filter/smoother, kalman, rts")
    sub.add_parser("robust", parents=[common], help="delta sweep of rts vs robust smoother under mismatch")
    sub.add_parser("ensemble", parents=[common], help="Monte Carlo MSE per scheme against its analytic value")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except ParameterError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        logger.debug("numerical failure", exc_info=True)
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
