"""Command-line entry points: solve, check, sweep.

Exit codes: 0 = all checks pass, 1 = inequality violation, 2 = blow-up,
3 = usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .budgets import check_h1_inequality, check_l2_inequality, l4_h1_diagnostic
from .config import parse_config_file
from .errors import ConfigError, NSDampError
from .io import (
    RunManifest,
    checkpoint_load,
    checkpoint_save,
    max_threads,
    read_budget_csv,
    run_lock,
    write_budget_csv,
)
from .stepping import run

EXIT_PASS = 0
EXIT_VIOLATION = 1
EXIT_BLOWUP = 2
EXIT_USAGE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsdamp",
        description="Pseudo-spectral Navier-Stokes solver with nonlinear "
        "damping and energy-budget diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run a simulation from a TOML config")
    p_solve.add_argument("--config", required=True, help="path to TOML config")
    p_solve.add_argument("--output", default="nsdamp_out", help="output directory")
    p_solve.add_argument(
        "--strict-deterministic",
        action="store_true",
        help="fixed reduction order for bit-exact reruns (computations are "
        "already sequential; this records the contract in the manifest)",
    )
    p_solve.add_argument("--resume", default=None, help="checkpoint to resume from")

    p_check = sub.add_parser("check", help="re-run inequality checks on a budget CSV")
    p_check.add_argument("--budget", required=True, help="budget CSV path")
    p_check.add_argument("--mode", choices=("l2", "h1", "both"), default="both")
    p_check.add_argument("--tol", type=float, default=None)

    p_sweep = sub.add_parser("sweep", help="parameter sweep, one subdirectory each")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument(
        "--vary", required=True, help="e.g. alpha=0.1:0.5:0.05 (start:stop:step)"
    )
    p_sweep.add_argument("--output", default="nsdamp_sweep")
    return parser


def _solve_into(config, outdir: str, resume_path=None) -> int:
    os.makedirs(outdir, exist_ok=True)
    started = time.time()
    with run_lock(outdir):
        resume_state = None
        if resume_path is not None:
            resume_state = checkpoint_load(resume_path, grid=config.grid())
        result = run(config, resume_state=resume_state)

        budget_path = os.path.join(outdir, "budget.csv")
        with open(budget_path, "w", encoding="utf-8", newline="\n") as fh:
            write_budget_csv(result.series, fh)
        ckpt_path = os.path.join(outdir, "checkpoint_final.ckpt")
        checkpoint_save(result.state, ckpt_path)

        reports = []
        code = EXIT_PASS
        if result.blown_up:
            code = EXIT_BLOWUP
            print(f"[BLOWUP] {result.blowup_message}")
        else:
            for check in (check_l2_inequality, check_h1_inequality):
                rep = check(result.series, tol=config.tol_budget)
                reports.append(rep)
                print(rep.summary())
                if not rep.passed:
                    code = max(code, EXIT_VIOLATION)
            print(f"l4_h1_integral = {l4_h1_diagnostic(result.series):.12e}")

        report_path = os.path.join(outdir, "report.json")
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "blown_up": result.blown_up,
                    "blowup_message": result.blowup_message,
                    "checks": [r.to_dict() for r in reports],
                    "exit_code": code,
                },
                fh,
                indent=2,
            )
            fh.write("\n")

        manifest = RunManifest(
            config_echo=result.series.config_echo,
            code_version=__version__,
            started_at=started,
            finished_at=time.time(),
            blown_up=result.blown_up,
            outputs=[budget_path, ckpt_path, report_path],
            ns_threads=max_threads(),
        )
        manifest.write(os.path.join(outdir, "manifest.json"))
    return code


def _cmd_solve(args) -> int:
    config = parse_config_file(args.config)
    if args.strict_deterministic:
        config.strict_deterministic = True
    return _solve_into(config, args.output, resume_path=args.resume)


def _cmd_check(args) -> int:
    with open(args.budget, "r", encoding="utf-8") as fh:
        series = read_budget_csv(fh)
    if any(row.blowup for row in series.rows):
        print("[BLOWUP] budget series carries a blow-up marker row")
        return EXIT_BLOWUP
    checks = []
    if args.mode in ("l2", "both"):
        checks.append(check_l2_inequality(series, tol=args.tol))
    if args.mode in ("h1", "both"):
        checks.append(check_h1_inequality(series, tol=args.tol))
    code = EXIT_PASS
    for rep in checks:
        print(rep.summary())
        if not rep.passed:
            code = EXIT_VIOLATION
    return code


def _parse_vary(text: str):
    try:
        name, _, rng = text.partition("=")
        start_s, stop_s, step_s = rng.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError as exc:
        raise ConfigError(f"bad --vary spec {text!r}: {exc}") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"bad --vary range in {text!r}")
    values = np.arange(start, stop + 0.5 * step, step)
    return name.strip(), [float(v) for v in values]


def _cmd_sweep(args) -> int:
    name, values = _parse_vary(args.vary)
    worst = EXIT_PASS
    for value in values:
        config = parse_config_file(args.config)
        if name == "alpha":
            config.damping = dataclasses.replace(config.damping, alpha=value)
        elif name == "beta":
            config.damping = dataclasses.replace(config.damping, beta=value)
        elif name in ("t_max", "dt", "dt_max", "cfl", "friedrichs_radius"):
            setattr(config, name, value)
        else:
            raise ConfigError(f"--vary does not support parameter {name!r}")
        subdir = os.path.join(args.output, f"{name}_{value:g}")
        print(f"--- sweep point {name} = {value:g} -> {subdir}")
        worst = max(worst, _solve_into(config, subdir))
    return worst


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NSDampError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
