"""Command-line runner: integrate a scenario, write CSVs, check invariants.

Exit codes: 0 when every checked invariant holds, 2 when a run completes (or
aborts) with a violated invariant, 1 for usage, scenario, or file errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .integrator import SimplexDriftError, simulate
from .model import CollisionError, Ensemble, ModelParams
from .reporting import (
    evaluate_run,
    write_decay_csv,
    write_diagnostics_csv,
    write_report_text,
    write_trajectory_csv,
)
from .scenario import (
    ScenarioError,
    build_initial,
    load_scenario,
    preset_scenario,
    with_overrides,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; route through our own codes.
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sirflock", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="integrate a scenario and write outputs")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", help="bundled scenario name (fig1..fig4)")
    source.add_argument("--scenario", help="scenario file to load")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--dt", type=float, help="override step size")
    run.add_argument("--t-end", type=float, dest="t_end", help="override final time")
    run.add_argument(
        "--record-stride", type=int, dest="record_stride", help="override snapshot stride"
    )
    run.add_argument("--seed", type=int, help="override generator seed")
    run.add_argument("--kappa2", type=float, help="override attraction strength")
    run.add_argument(
        "--kappa3",
        help="override repulsion strength; a comma list runs a sweep "
        "(one subdirectory per value, plus a summary table)",
    )
    run.add_argument(
        "--workers",
        type=int,
        default=1,
        help="concurrent sweep processes (default 1)",
    )
    return parser


def _run_task(task: tuple[Ensemble, ModelParams, object, str]) -> dict:
    initial, params, sim, out_dir = task
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        traj = simulate(initial, params, sim)
    except (CollisionError, SimplexDriftError) as exc:
        return {
            "ok": False,
            "aborted": str(exc),
            "peak_mean_infected": math.nan,
            "failed_flags": [],
            "out": str(out),
        }
    report = evaluate_run(traj)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_diagnostics_csv(traj, out / "diagnostics.csv")
    write_decay_csv(traj, out / "decay.csv")
    write_report_text(report, out / "report.txt")
    return {
        "ok": report.all_ok,
        "aborted": None,
        "peak_mean_infected": report.summary["peak_mean_infected"],
        "failed_flags": [k for k, v in report.pass_flags.items() if not v],
        "out": str(out),
    }


def _parse_kappa3(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ScenarioError(f"--kappa3: cannot parse {text!r}") from exc
    if not values:
        raise ScenarioError("--kappa3: empty list")
    return values


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.preset:
            spec = preset_scenario(args.preset)
        else:
            spec = load_scenario(args.scenario)
        spec = with_overrides(
            spec,
            dt=args.dt,
            t_end=args.t_end,
            record_stride=args.record_stride,
            seed=args.seed,
            kappa2=args.kappa2,
        )
        kappa3_values = _parse_kappa3(args.kappa3) if args.kappa3 else None

        out = Path(args.out)
        if kappa3_values is None or len(kappa3_values) == 1:
            if kappa3_values:
                spec = with_overrides(spec, kappa3=kappa3_values[0])
            tasks = [(build_initial(spec), spec.params, spec.sim, str(out))]
            sweep = None
        else:
            sweep = []
            tasks = []
            for value in kappa3_values:
                variant = with_overrides(spec, kappa3=value)
                sub = out / f"k3_{value:g}"
                tasks.append((build_initial(variant), variant.params, variant.sim, str(sub)))
                sweep.append(value)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if len(tasks) > 1 and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(task) for task in tasks]

    for result in results:
        if result["aborted"]:
            print(f"{result['out']}: aborted: {result['aborted']}")
        else:
            verdict = "ok" if result["ok"] else (
                "FAILED: " + ", ".join(result["failed_flags"])
            )
            print(f"{result['out']}: {verdict}")

    if sweep is not None:
        kappa2 = spec.params.kappa2
        print()
        print(f"{'kappa3':>10}  {'kappa3/kappa2':>14}  {'peak_mean_I':>12}  ok")
        summary_path = out / "sweep_summary.csv"
        out.mkdir(parents=True, exist_ok=True)
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write("kappa3,kappa2,ratio,peak_mean_I,ok\n")
            for value, result in zip(sweep, results):
                peak = result["peak_mean_infected"]
                ratio = value / kappa2 if kappa2 != 0 else math.inf
                print(f"{value:>10g}  {ratio:>14g}  {peak:>12.6g}  {'yes' if result['ok'] else 'NO'}")
                fh.write(
                    f"{value!r},{kappa2!r},{ratio!r},{peak!r},{result['ok']}\n"
                )
        print(f"\nwrote {summary_path}")

    return EXIT_OK if all(r["ok"] for r in results) else EXIT_FAILED


def main(argv=None) -> int:
    return run_command(argv)
