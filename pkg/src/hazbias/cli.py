"""Command-line interface: ``hazbias <command> ...``."""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import aalen, closedform
from .config import ConfigError, load_config, parse_distribution
from .simulator import (
    RiskSetError,
    StepCurve,
    integrated_ohd_curve,
    sample_population,
    simulate_rct,
    survival_curves,
)
from .stochastics import RngStream
from .tables import DataError, format_curve_table, format_trial_data, read_trial_data

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_TRUNCATED = 5


class TruncationError(RuntimeError):
    """A curve was cut short and strict mode is on."""


def _grid(cfg):
    k = int(np.floor((cfg.grid_end - cfg.grid_start) / cfg.grid_step + 1e-9))
    return cfg.grid_start + cfg.grid_step * np.arange(k + 1)


def _emit(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _suffixed(path, tag: str) -> Path:
    p = Path(path)
    tag = re.sub(r"[^A-Za-z0-9._=-]+", "_", tag)
    return p.with_name(f"{p.stem}_{tag}{p.suffix}")


def _report_truncation(label, t, warnings):
    msg = f"series {label}: risk set below floor, curve truncated at t={t:g}"
    print(f"hazbias: {msg}", file=sys.stderr)
    warnings.append(msg)


def cmd_curves_closed(cfg):
    """Closed-form ``B(t)`` per modifier plus the reference lines ``t * E[U1]``."""
    if not cfg.modifiers:
        raise ConfigError("curves-closed needs at least one [modifier] section")
    grid = _grid(cfg)
    curves = []
    for label, dist in cfg.modifiers:
        curves.append((label, StepCurve(grid, closedform.integrated_mchd(dist, grid))))
        curves.append((f"g:{label}", StepCurve(grid, closedform.reference_line(dist, grid))))
    return format_curve_table(curves)


def cmd_simulate_copula(cfg, strict=False):
    """Monte Carlo ``B(t)`` and survival curves, one series per copula correlation.

    Each correlation uses its own substream of the scenario seed.
    Returns ``(b_table, survival_table, warnings)``.
    """
    if cfg.n < 100:
        raise ConfigError("simulate-copula needs n >= 100")
    seed = cfg.resolve_seed()
    dist = cfg.modifier
    b_curves, s_curves, warnings = [], [], []
    for idx, (label, rho) in enumerate(cfg.rhos):
        scm = cfg.scm(rho)
        pop = sample_population(scm, cfg.n, RngStream(seed, idx))
        try:
            curve = integrated_ohd_curve(pop, cfg.grid_end, cfg.grid_step, cfg.min_at_risk)
        except RiskSetError as exc:
            raise DataError(f"series {label}: {exc}") from None
        if curve.truncated_at is not None:
            _report_truncation(label, curve.truncated_at, warnings)
        keep = curve.grid >= cfg.grid_start - 1e-12
        b_curves.append((label, StepCurve(curve.grid[keep], curve.values[keep],
                                          curve.lower[keep], curve.upper[keep])))
        s1, s0 = survival_curves(pop, _grid(cfg))
        s_curves.append((f"{label}/world=1", s1))
        s_curves.append((f"{label}/world=0", s0))
    grid = _grid(cfg)
    b_curves.append(("g", StepCurve(grid, closedform.reference_line(dist, grid))))
    if strict and warnings:
        raise TruncationError("; ".join(warnings))
    return format_curve_table(b_curves), format_curve_table(s_curves), warnings


def cmd_fit(data_path, strata=None, overlay=None):
    """Aalen fit of a trial data file.

    Returns ``{stratum_or_None: table_text}``.  Single-arm data yield the
    intercept (Nelson-Aalen) curve; otherwise the treatment curve.
    """
    data = read_trial_data(data_path, strata)
    dist = parse_distribution(overlay) if overlay else None
    if strata:
        fits = aalen.fit_stratified(data, strata)
    else:
        fits = {None: aalen.fit(data)}
    out = {}
    for key, f in fits.items():
        cov = "treatment" if "treatment" in f.covariates else "intercept"
        curves = [(cov, f.curve(cov))]
        if dist is not None:
            curves.append(("overlay", aalen.overlay_expected_curve(f, dist)))
        if f.truncation_time is not None:
            print(f"hazbias: {'stratum ' + key + ': ' if key else ''}"
                  f"design singular from t={f.truncation_time:g}; estimate truncated",
                  file=sys.stderr)
        out[key] = format_curve_table(curves)
    return out


def cmd_generate(cfg):
    """Simulated trial records in the input data format."""
    data = simulate_rct(
        cfg.scm(), cfg.n, cfg.treat_prob, cfg.censoring, RngStream(cfg.resolve_seed())
    )
    return format_trial_data(data)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hazbias",
        description="Selection bias of hazard differences under effect heterogeneity.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("curves-closed", help="closed-form integrated hazard difference B(t)")
    c.add_argument("config")
    c.add_argument("-o", "--out", help="output table (default: [output] path or stdout)")

    s = sub.add_parser("simulate-copula", help="Monte Carlo B(t) under a Gaussian copula")
    s.add_argument("config")
    s.add_argument("-o", "--out", help="B(t) table (default: [output] path or stdout)")
    s.add_argument("--survival-out", help="survival table (default: <out>_survival.csv)")
    s.add_argument("--strict", action="store_true", help="treat curve truncation as an error")

    f = sub.add_parser("fit", help="Aalen additive hazard fit of a trial data file")
    f.add_argument("data")
    f.add_argument("--strata", metavar="COL", help="fit separately per value of column COL")
    f.add_argument("--overlay", metavar="DIST",
                   help="add closed-form B(t), e.g. bhn:0.5,-0.1,0.5,0.4")
    f.add_argument("-o", "--out", help="output table; with --strata, one file per stratum")

    g = sub.add_parser("generate", help="simulate a randomized trial data file")
    g.add_argument("config")
    g.add_argument("out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "curves-closed":
            cfg = load_config(args.config)
            _emit(cmd_curves_closed(cfg), args.out or cfg.output)
        elif args.command == "simulate-copula":
            cfg = load_config(args.config)
            b_text, s_text, _ = cmd_simulate_copula(cfg, strict=args.strict)
            out = args.out or cfg.output
            _emit(b_text, out)
            surv = args.survival_out or (_suffixed(out, "survival") if out and out != "-" else None)
            if surv is not None:
                _emit(s_text, surv)
        elif args.command == "fit":
            tables = cmd_fit(args.data, args.strata, args.overlay)
            for key, text in tables.items():
                if key is None:
                    _emit(text, args.out)
                elif args.out and args.out != "-":
                    _emit(text, _suffixed(args.out, key))
                else:
                    sys.stdout.write(f"# stratum: {key}\n{text}")
        elif args.command == "generate":
            cfg = load_config(args.config)
            _emit(cmd_generate(cfg), args.out)
    except ConfigError as exc:
        print(f"hazbias: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, aalen.AalenError) as exc:
        print(f"hazbias: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TruncationError as exc:
        print(f"hazbias: truncated: {exc}", file=sys.stderr)
        return EXIT_TRUNCATED
    except OSError as exc:
        print(f"hazbias: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
