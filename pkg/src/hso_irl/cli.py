"""Command-line entry point: ``hso-irl run | check-informativity | synth-lqr``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .control import lqr_gain
from .errors import HsoIrlError
from .observer import certify_equivalence
from .report import RunSummary, write_final_solution, write_svgs, write_timeseries
from .simulation import SimulationLog, SimulationResult, simulate_expert
from .stack import informativity_report

logger = logging.getLogger("hso_irl")

EXIT_OK, EXIT_ERROR, EXIT_NOT_EQUIVALENT = 0, 1, 2


def summarize(result: SimulationResult, cfg: RunConfig, wall_clock: float) -> tuple[RunSummary, object]:
    """Final metrics plus the equivalence report on the active stack."""
    K = result.expert.K
    k_norm = float(np.linalg.norm(K))
    varpi = cfg.varpi_rel * k_norm
    stack = result.stacks.h1 if len(result.stacks.h1) else result.stacks.h2
    final_delta = float(np.linalg.norm(result.update.delta(result.w))) if result.stacks.active else float("nan")
    if len(stack):
        report = certify_equivalence(result.weights(), stack, result.scenario.sys, K, varpi, cfg.hjb_tol)
        fi_ok = informativity_report(stack, cfg.fi_tol).fi_ok
    else:
        report, fi_ok = None, False
    gain_error = result.log.column("gain_error_fro")[-1] if result.log.rows else float("nan")
    summary = RunSummary(
        final_delta=final_delta,
        gain_error=float(gain_error),
        gain_error_rel=float(gain_error) / k_norm if k_norm > 0 else float("nan"),
        equivalent=bool(report is not None and report.equivalent),
        wall_clock=wall_clock,
        swap_count=result.stacks.swap_count,
        fi_ok=bool(fi_ok),
    )
    return summary, report


def cmd_run(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else cfg.output_dir
    emit_svg = args.emit_svg or cfg.emit_svg
    scn = cfg.scenario
    log = SimulationLog(scn.sys.n, scn.sys.m)
    t0 = time.perf_counter()
    try:
        result = simulate_expert(scn, T=cfg.T, h=cfg.h, log_every=cfg.log_every, fi_tol=cfg.fi_tol, log=log)
    except BaseException:
        if log.rows:
            path = write_timeseries(log, out / "timeseries.csv")
            print(f"partial time series written to {path}", file=sys.stderr)
        raise
    wall = time.perf_counter() - t0
    write_timeseries(result.log, out / "timeseries.csv")
    write_final_solution(result, out / "final_solution.csv")
    if emit_svg:
        write_svgs(result.log, out)
    summary, report = summarize(result, cfg, wall)
    print(summary.line())
    if report is not None and report.note:
        print(f"certification: {report.note}")
    if args.require_equivalence and not summary.equivalent:
        print("certification failed: estimate is not an equivalent solution", file=sys.stderr)
        return EXIT_NOT_EQUIVALENT
    return EXIT_OK


def cmd_check_informativity(args, cfg: RunConfig) -> int:
    result = simulate_expert(cfg.scenario, T=cfg.T, h=cfg.h, fi_tol=cfg.fi_tol, track_informativity=True,
                             log_every=max(1, int(round(cfg.T / cfg.h))))
    first = result.fi_first_time
    print(f"first FI time: {'never' if first is None else f'{first:.6g} s'}")
    for label, stack in (("H1", result.stacks.h1), ("H2", result.stacks.h2)):
        if len(stack) == 0:
            print(f"{label}: empty")
            continue
        rep = informativity_report(stack, cfg.fi_tol)
        print(f"{label}: samples={len(stack)} span_rank={rep.span_rank} span_ok={str(rep.span_ok).lower()} "
              f"sigma_u_residual={rep.sigma_u_residual:.6g} fi_ok={str(rep.fi_ok).lower()}")
    print(f"swaps: {result.stacks.swap_count}")
    return EXIT_OK


def cmd_synth_lqr(args, cfg: RunConfig) -> int:
    scn = cfg.scenario
    pol = lqr_gain(scn.sys.A, scn.sys.B, scn.Q, scn.R)
    with np.printoptions(precision=9, suppress=False, linewidth=160):
        print("K_EP =")
        print(pol.K)
        print("S =")
        print(pol.S)
    print(f"riccati residual = {pol.care.residual_norm:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hso-irl", description="Online inverse RL for linear-quadratic experts.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--scenario", choices=("academic", "quadcopter", "custom"),
                       help="override scenario.name from the config")

    p = sub.add_parser("run", help="simulate and learn; write CSV (and SVG) output")
    common(p)
    p.add_argument("--out", help="output directory (default: run.output_dir, then $HSO_IRL_OUTPUT_DIR)")
    p.add_argument("--emit-svg", action="store_true", help="also write one SVG chart per metric")
    p.add_argument("--require-equivalence", action="store_true",
                   help="exit with status 2 if the final estimate is not certified equivalent")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-informativity", help="report when the recorded data becomes finitely informative")
    common(p)
    p.set_defaults(func=cmd_check_informativity)

    p = sub.add_parser("synth-lqr", help="print the expert gain, Riccati solution and residual")
    common(p)
    p.set_defaults(func=cmd_synth_lqr)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, scenario=args.scenario)
        return args.func(args, cfg)
    except (HsoIrlError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
