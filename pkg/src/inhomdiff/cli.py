"""
Command-line entry point.

    inhomdiff solve      S(t) and raw moments for one parameter set
    inhomdiff portrait   critical initial gap over an (alpha, k) grid
    inhomdiff smax-curve S_Max against the initial gap
    inhomdiff oracle     Monte Carlo moments compared against the PDE
    inhomdiff figures    run the bundled per-figure recipes

Every config field can be overridden with ``--<field-name>``. Failures print one
JSON line ``{"error": ..., "reason": ...}`` on stderr; exit codes are 2 for invalid
configuration, 3 for solver failure and 4 for a failed oracle comparison.
"""
from __future__ import annotations

import argparse
import datetime
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from . import io
from .config import RunConfig, field_index, load_config
from .criticality import s_max_curve, slope_critical_epsilon, sweep_portrait
from .exceptions import ConfigError, InhomDiffError, ScheduleMismatch, SeriesTooShort, SolveFailure
from .model import drift_at
from .observables import (
    ObservableSeries,
    classify_relaxation,
    initial_slope,
    moment_series,
    s_of_t,
)
from .pde import evolve
from .sde import compare_with_pde, restrict_to, simulate_ensemble

logger = logging.getLogger("inhomdiff")

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ORACLE = 4


class CommandFailed(Exception):
    def __init__(self, code: int, kind: str, reason: str):
        super().__init__(reason)
        self.code, self.kind, self.reason = code, kind, reason


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


# --- commands -------------------------------------------------------------

def run_solve(cfg: RunConfig, out: Path) -> dict:
    cfg.validate()
    packet, profile, potential = cfg.packet(), cfg.profile(), cfg.potential()
    try:
        evo = evolve(packet, profile, potential, cfg.grid_1d(), cfg.solver_config())
    except SolveFailure as exc:
        raise CommandFailed(EXIT_SOLVER, "solver", str(exc)) from None

    s = s_of_t(evo, packet)
    moments = {n: moment_series(evo, n) for n in cfg.analysis.moment_orders}
    try:
        c = classify_relaxation(s, cfg.analysis.delta, cfg.fit_window())
        classification = {"label": c.label.value, "s_max": c.s_max, "t_max": c.t_max, "rate": c.rate}
    except SeriesTooShort as exc:
        classification = {"label": None, "reason": str(exc), "s_max": float(s.values.max())}

    io.write_series(out / "s_of_t.csv", s)
    io.write_moments(out / "moments.csv", moments)
    meta = {
        "command": "solve",
        "created": _timestamp(),
        "config": cfg.to_dict(),
        "mass": {
            "tol_mass": cfg.solver.tol_mass,
            "max_abs_drift": evo.max_mass_drift,
            "mass_leak": evo.mass_leak,
            "drift": [[float(t), float(d)] for t, d in zip(evo.times, evo.mass_drift)],
        },
        "classification": classification,
        "initial_slope": initial_slope(profile, potential, packet),
        "files": ["s_of_t.csv", "moments.csv"],
    }
    io.write_json(out / "solve.json", meta)
    return meta


def run_portrait(cfg: RunConfig, out: Path, workers: int = 1) -> dict:
    cfg.validate()
    cfg.validate_sweep()
    alphas, ks = cfg.sweep_alphas(), cfg.sweep_ks()
    portrait = sweep_portrait(alphas, ks, cfg.search_settings(), workers=workers)
    failed = [s for s in portrait.status.ravel() if s not in ("ok", "saturated")]
    io.write_portrait(out / "portrait.csv", portrait)
    slope = [[slope_critical_epsilon(a, k, cfg.physics.d0, cfg.physics.sigma) for a in alphas] for k in ks]
    meta = {
        "command": "portrait",
        "created": _timestamp(),
        "config": cfg.to_dict(),
        "alphas": alphas,
        "ks": ks,
        "critical": portrait.critical,
        "status": portrait.status.tolist(),
        "slope_criterion_critical": slope,
        "failed_cells": len(failed),
        "files": ["portrait.csv"],
    }
    io.write_json(out / "portrait.json", meta)
    if len(failed) == portrait.status.size:
        raise CommandFailed(EXIT_SOLVER, "solver", "every sweep cell failed")
    return meta


def _curve(args):
    alpha, k, eps, settings = args
    return s_max_curve(alpha, k, eps, settings)


def run_smax_curve(cfg: RunConfig, out: Path, workers: int = 1) -> dict:
    cfg.validate()
    cfg.validate_sweep()
    eps = cfg.sweep.epsilon0s
    if not eps or any(not 0 < e <= 2 for e in eps):
        raise ConfigError("epsilon0s must be a non-empty list inside (0, 2]")
    settings = cfg.search_settings()
    tasks = [(float(a), float(k), eps, settings) for k in cfg.sweep_ks() for a in cfg.sweep_alphas()]
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                curves = list(pool.map(_curve, tasks))
        else:
            curves = [_curve(t) for t in tasks]
    except (SolveFailure, SeriesTooShort) as exc:
        raise CommandFailed(EXIT_SOLVER, "solver", str(exc)) from None
    io.write_smax_curves(out / "smax_curve.csv", curves)
    meta = {
        "command": "smax-curve",
        "created": _timestamp(),
        "config": cfg.to_dict(),
        "files": ["smax_curve.csv"],
    }
    io.write_json(out / "smax_curve.json", meta)
    return meta


def _negated_drift(profile, potential, x):
    return -drift_at(profile, potential, x)


def run_oracle(cfg: RunConfig, out: Path, workers: int = 1, compare: Path | None = None,
               negate_drift: bool = False) -> dict:
    cfg.validate()
    profile, potential, packet = cfg.profile(), cfg.potential(), cfg.packet()
    ens = cfg.ensemble_config()
    drift = partial(_negated_drift, profile, potential) if negate_drift else None
    mc = simulate_ensemble(profile, potential, packet, ens, workers=workers, drift=drift)
    io.write_estimates(out / "oracle.csv", mc)

    if compare is not None:
        try:
            table = io.read_moments(Path(compare) / "moments.csv")
            pde = {n: ObservableSeries(*table[n], kind=n) for n in (1, 2)}
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read PDE moments from {compare}: {exc}") from None
    else:
        try:
            evo = evolve(packet, profile, potential, cfg.grid_1d(), cfg.solver_config())
        except SolveFailure as exc:
            raise CommandFailed(EXIT_SOLVER, "solver", str(exc)) from None
        pde = {n: moment_series(evo, n) for n in (1, 2)}
    try:
        pde = {n: restrict_to(s, mc.times) for n, s in pde.items()}
        report = compare_with_pde(pde, mc)
    except ScheduleMismatch as exc:
        raise CommandFailed(EXIT_CONFIG, "schedule", str(exc)) from None

    meta = {
        "command": "oracle",
        "created": _timestamp(),
        "config": cfg.to_dict(),
        "comparison": report.summary(),
        "max_tail_mass": float(mc.tail_mass.max()),
        "negated_drift": negate_drift,
        "files": ["oracle.csv"],
    }
    io.write_json(out / "oracle_comparison.json", meta)
    if not report.passed:
        raise CommandFailed(EXIT_ORACLE, "oracle", f"z-score criterion failed: {json.dumps(report.summary())}")
    return meta


# --- figure recipes ---------------------------------------------------------

def recipe_names() -> list:
    files = resources.files("inhomdiff") / "recipes"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def load_recipe(name: str):
    """Return ``(command, scan, RunConfig)`` for a bundled figure recipe."""
    path = resources.files("inhomdiff") / "recipes" / f"{name}.toml"
    data = tomli.loads(path.read_text())
    fig = data.pop("figure")
    return fig["command"], fig.get("scan", {}), RunConfig.from_dict(data)


def _scan_overrides(scan: dict):
    index = field_index()
    names = list(scan)
    for combo in itertools.product(*(scan[n] for n in names)):
        label = "_".join(f"{n}={v:g}" for n, v in zip(names, combo))
        yield label, {f"{index[n][0]}.{n}": v for n, v in zip(names, combo)}


def run_figures(out: Path, only=None, workers: int = 1, overrides=None) -> dict:
    names = recipe_names() if not only else list(only)
    unknown = set(names) - set(recipe_names())
    if unknown:
        raise ConfigError(f"unknown figure recipe(s): {', '.join(sorted(unknown))}")
    done = {}
    for name in names:
        command, scan, cfg = load_recipe(name)
        if overrides:
            cfg = cfg.with_overrides(overrides)
        logger.info("figure %s (%s)", name, command)
        runs = list(_scan_overrides(scan)) if scan else [("", {})]
        for label, ov in runs:
            target = out / name / label if label else out / name
            c = cfg.with_overrides(ov)
            if command == "solve":
                run_solve(c, target)
            elif command == "portrait":
                run_portrait(c, target, workers)
            elif command == "smax-curve":
                run_smax_curve(c, target, workers)
            elif command == "oracle":
                run_oracle(c, target, workers)
            else:
                raise ConfigError(f"recipe {name}: unknown command {command}")
        done[name] = [r[0] for r in runs]
    return done


# --- argument parsing ----------------------------------------------------------

def _parse_override(f, text: str):
    try:
        if isinstance(f.default, tuple):
            kind = int if f.name == "moment_orders" else float
            return [kind(v) for v in text.split(",") if v.strip()]
        return type(f.default)(text)
    except ValueError:
        raise ConfigError(f"cannot parse --{f.name.replace('_', '-')}={text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("-v", "--verbose", action="store_true")
    group = common.add_argument_group("config overrides")
    for name, (section, f) in field_index().items():
        group.add_argument(
            f"--{name.replace('_', '-')}", dest=f"set_{name}", metavar="VALUE",
            help=f"[{section}] {name} (default {f.default!r})",
        )

    parser = argparse.ArgumentParser(prog="inhomdiff", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="S(t) and moments for one parameter set")
    sub.add_parser("portrait", parents=[common], help="critical-gap phase portrait")
    sub.add_parser("smax-curve", parents=[common], help="S_Max against initial gap")
    p = sub.add_parser("oracle", parents=[common], help="Monte Carlo cross-check")
    p.add_argument("--compare", type=Path, help="directory of a prior solve run")
    p.add_argument("--negate-drift", action="store_true", help=argparse.SUPPRESS)
    p = sub.add_parser("figures", parents=[common], help="run bundled figure recipes")
    p.add_argument("--only", help="comma-separated recipe names (default: all)")
    p.add_argument("--list", action="store_true", help="list recipes and exit")
    return parser


def _overrides(args) -> dict:
    out = {}
    for name, (section, f) in field_index().items():
        text = getattr(args, f"set_{name}")
        if text is not None:
            out[f"{section}.{name}"] = _parse_override(f, text)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _overrides(args)
        workers = max(1, args.workers)
        if args.command == "figures":
            if args.list:
                print("\n".join(recipe_names()))
                return 0
            only = args.only.split(",") if args.only else None
            run_figures(args.out, only, workers, overrides)
            return 0
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(overrides)
        if args.command == "solve":
            run_solve(cfg, args.out)
        elif args.command == "portrait":
            run_portrait(cfg, args.out, workers)
        elif args.command == "smax-curve":
            run_smax_curve(cfg, args.out, workers)
        elif args.command == "oracle":
            run_oracle(cfg, args.out, workers, args.compare, args.negate_drift)
    except CommandFailed as exc:
        _fail(exc.kind, exc.reason)
        return exc.code
    except ConfigError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    except InhomDiffError as exc:
        _fail("solver", f"{type(exc).__name__}: {exc}")
        return EXIT_SOLVER
    return 0


def _fail(kind: str, reason: str) -> None:
    print(json.dumps({"error": kind, "reason": reason}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
