"""Post-run evaluation and file output.

evaluate_run turns a trajectory into a RunReport: the closed-form bounds for
its parameter set, a tail decay fit when one makes sense, empirical extremes,
and one pass/fail flag per conserved or bounded quantity.  The writers emit
CSVs with repr-precision floats so files round-trip losslessly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .analysis import (
    BoundReport,
    DecayFit,
    bound_report,
    fit_total_infected_decay,
)
from .integrator import Trajectory, _step_plan

# Allowed S increase / R decrease per integrator step (pure roundoff).
MONOTONE_TOL_PER_STEP = 1e-10
# Center-of-mass drift allowance: base * (1 + |com(0)|) * sqrt(steps).
COM_DRIFT_BASE = 1e-6
DIAMETER_FLOOR_SLACK = 1e-9
DIAMETER_CEILING_SLACK = 1e-6


@dataclass
class RunReport:
    bounds: BoundReport
    decay_fit: DecayFit | None
    summary: dict[str, float]
    pass_flags: dict[str, bool]

    @property
    def all_ok(self) -> bool:
        return all(self.pass_flags.values())


def evaluate_run(traj: Trajectory) -> RunReport:
    """Check every invariant the recorded snapshots can witness."""
    params, config = traj.params, traj.config
    times = traj.times
    states = traj.states_array()
    diag = traj.diagnostics
    bounds = bound_report(params, traj.snapshots[0])
    flags: dict[str, bool] = {}

    drift = float(np.abs(states.sum(axis=2) - 1.0).max())
    coord_min = float(states.min())
    flags["simplex_sum"] = drift <= config.drift_tol
    flags["state_nonnegative"] = coord_min >= -config.drift_tol

    com = np.array([row.com for row in diag])
    com_drift = float(np.linalg.norm(com - com[0], axis=1).max())
    n_full, dt_last = _step_plan(config.t_end, config.dt)
    steps = n_full + (1 if dt_last > 0 else 0)
    com_allow = COM_DRIFT_BASE * (1.0 + float(np.linalg.norm(com[0]))) * math.sqrt(
        max(steps, 1)
    )
    flags["com_conserved"] = com_drift <= com_allow

    if len(traj) > 1:
        steps_between = np.maximum(
            1.0, np.rint((times[1:] - times[:-1]) / config.dt)
        )
        allow = MONOTONE_TOL_PER_STEP * steps_between
        s_rise = (states[1:, :, 0] - states[:-1, :, 0]).max(axis=1)
        r_fall = (states[1:, :, 2] - states[:-1, :, 2]).min(axis=1)
        flags["s_monotone"] = bool(np.all(s_rise <= allow))
        flags["r_monotone"] = bool(np.all(r_fall >= -allow))
    else:
        flags["s_monotone"] = True
        flags["r_monotone"] = True

    d_min_run = min(row.d_min for row in diag)
    d_max_run = max(row.d_max for row in diag)
    flags["collision_free"] = d_min_run > 0.0

    total = traj.total_infected()
    if bounds.decay_rate is not None:
        envelope = params.n * np.exp(-bounds.decay_rate * times)
        flags["decay_bound"] = bool(np.all(total <= envelope))
    if bounds.diameter_floor is not None:
        flags["diameter_floor"] = bool(
            min(row.d_max for row in diag) >= bounds.diameter_floor - DIAMETER_FLOOR_SLACK
        )
    if bounds.gate_ok_literal and bounds.diameter_ceiling is not None:
        flags["diameter_ceiling"] = bool(
            d_max_run <= bounds.diameter_ceiling + DIAMETER_CEILING_SLACK
        )

    decay_fit = None
    try:
        decay_fit = fit_total_infected_decay(traj)
    except ValueError:
        pass  # nothing infectious on the window, or too few snapshots

    summary = {
        "snapshots": float(len(traj)),
        "steps": float(steps),
        "t_end": float(times[-1]),
        "simplex_drift_max": drift,
        "state_coord_min": coord_min,
        "com_drift_max": com_drift,
        "d_min_run": float(d_min_run),
        "d_max_run": float(d_max_run),
        "total_infected_final": float(total[-1]),
        "max_speed_final": float(diag[-1].max_speed),
        "peak_mean_infected": float(max(row.mean_infected for row in diag)),
    }
    return RunReport(bounds=bounds, decay_fit=decay_fit, summary=summary, pass_flags=flags)


# ---------------------------------------------------------------------------
# writers


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per (snapshot, particle): t,particle,S,I,R,x1..xd."""
    d = traj.params.d
    header = ["t", "particle", "S", "I", "R"] + [f"x{k + 1}" for k in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, snap in zip(traj.times, traj.snapshots):
            for i in range(snap.n):
                s, inf, rec = snap.states[i]
                writer.writerow(
                    [_fmt(t), i, _fmt(s), _fmt(inf), _fmt(rec)]
                    + [_fmt(x) for x in snap.positions[i]]
                )


def write_diagnostics_csv(traj: Trajectory, path) -> None:
    """One row per snapshot: t,d_min,d_max,total_I,mean_I,com_1..com_d,max_speed."""
    d = traj.params.d
    header = ["t", "d_min", "d_max", "total_I", "mean_I"] + [
        f"com_{k + 1}" for k in range(d)
    ] + ["max_speed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, row in zip(traj.times, traj.diagnostics):
            writer.writerow(
                [_fmt(t), _fmt(row.d_min), _fmt(row.d_max), _fmt(row.total_infected),
                 _fmt(row.mean_infected)]
                + [_fmt(c) for c in row.com]
                + [_fmt(row.max_speed)]
            )


def write_decay_csv(traj: Trajectory, path) -> None:
    """Per snapshot: t, log_total_I, and (when a decay rate is guaranteed)
    the reference envelope log(n) - rate*t for overplotting."""
    from .analysis import epidemic_decay_rate

    rate = epidemic_decay_rate(traj.params)
    total = traj.total_infected()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "log_total_I", "log_decay_bound"])
        for t, v in zip(traj.times, total):
            log_v = math.log(v) if v > 0 else -math.inf
            ref = "" if rate is None else _fmt(math.log(traj.params.n) - rate * t)
            writer.writerow([_fmt(t), _fmt(log_v), ref])


def write_report_text(report: RunReport, path) -> None:
    """Flat key = value text: bounds, fit, summary, flags, overall verdict."""
    lines = ["[bounds]"]
    for key, value in report.bounds.as_dict().items():
        lines.append(f"{key} = {value!r}")
    lines.append("")
    lines.append("[decay_fit]")
    if report.decay_fit is None:
        lines.append("fitted = False")
    else:
        fit = report.decay_fit
        lines.append("fitted = True")
        lines.append(f"rate = {fit.rate!r}")
        lines.append(f"log_amplitude = {fit.log_amplitude!r}")
        lines.append(f"residual_rms = {fit.residual_rms!r}")
        lines.append(f"window = {fit.window!r}")
        lines.append(f"n_points = {fit.n_points}")
    lines.append("")
    lines.append("[summary]")
    for key, value in report.summary.items():
        lines.append(f"{key} = {value!r}")
    lines.append("")
    lines.append("[pass_flags]")
    for key, value in report.pass_flags.items():
        lines.append(f"{key} = {value}")
    lines.append("")
    lines.append(f"all_ok = {report.all_ok}")
    lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
