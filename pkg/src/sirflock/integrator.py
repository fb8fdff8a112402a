"""Fixed-step RK4 integration of the coupled epidemic-flocking system.

The stepper is deliberately plain: classical RK4, fixed dt, no adaptivity,
no renormalization of the epidemic states.  Simplex drift is measured, not
hidden; a run aborts if any particle's (S, I, R) stops summing to 1 within
``drift_tol`` or develops a coordinate below ``-drift_tol``.  The singular
force kernel is guarded by a minimum-distance check at all four RK4 stage
points of every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import (
    DEFAULT_COLLISION_TOL,
    CollisionError,
    Ensemble,
    ModelParams,
    _kernel_args,
    _require_match,
    _rhs_kernel,
)

# A run aborts once |S+I+R-1| exceeds this (or a coordinate goes below its
# negative); drift is a symptom of a broken setup, not something to clamp.
DEFAULT_DRIFT_TOL = 1e-7


class SimplexDriftError(RuntimeError):
    """Epidemic states left the unit simplex by more than the drift tolerance."""

    def __init__(self, time: float, particle: int, value: float, kind: str):
        self.time = float(time)
        self.particle = int(particle)
        self.value = float(value)
        self.kind = kind
        if kind == "sum":
            what = f"|S+I+R-1| = {value:.3e}"
        else:
            what = f"coordinate {value:.3e} below 0"
        super().__init__(f"particle {particle} drifted off the simplex at t={time:.9g}: {what}")


@dataclass(frozen=True)
class SimulationConfig:
    """Fixed-step run settings.

    dt: step size, > 0.
    t_end: final time, >= 0 (0 yields just the initial snapshot).  The last
        step is shortened so the run lands on t_end exactly.
    record_stride: snapshot every this many steps (initial and final states
        are always recorded).
    collision_tol: minimum allowed pairwise distance at RK4 stage points.
    drift_tol: simplex-drift abort threshold.
    """

    dt: float = 1e-3
    t_end: float = 30.0
    record_stride: int = 10
    collision_tol: float = DEFAULT_COLLISION_TOL
    drift_tol: float = DEFAULT_DRIFT_TOL

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if self.t_end > 0 and self.dt > self.t_end * (1.0 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        if self.collision_tol < 0:
            raise ValueError(f"collision_tol must be >= 0, got {self.collision_tol}")
        if self.drift_tol < 0:
            raise ValueError(f"drift_tol must be >= 0, got {self.drift_tol}")


@dataclass(frozen=True)
class DiagnosticsRow:
    """Per-snapshot summary scalars."""

    d_min: float
    d_max: float
    total_infected: float
    mean_infected: float
    com: tuple[float, ...]
    max_speed: float


@dataclass
class Trajectory:
    """Recorded run: times, snapshots, per-snapshot diagnostics, provenance."""

    times: np.ndarray
    snapshots: list[Ensemble]
    diagnostics: list[DiagnosticsRow]
    params: ModelParams
    config: SimulationConfig

    def __len__(self) -> int:
        return len(self.snapshots)

    def states_array(self) -> np.ndarray:
        return np.stack([e.states for e in self.snapshots])

    def positions_array(self) -> np.ndarray:
        return np.stack([e.positions for e in self.snapshots])

    def total_infected(self) -> np.ndarray:
        return np.array([row.total_infected for row in self.diagnostics])


def rk4_update(f, t, y, dt):
    """One classical RK4 step for dy/dt = f(t, y); y may be scalar or array."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (((k1 + 2.0 * k2) + 2.0 * k3) + k4)


@njit(cache=True)
def _rk4_step_kernel(
    states,
    positions,
    dt,
    kappa1,
    kappa2,
    kappa3,
    alpha,
    beta,
    gamma_exp,
    l_offset,
    eps_a,
    eps_r,
    recovery,
    collision_tol,
    out_states,
    out_positions,
):
    # Returns (status, d_min, pair_i, pair_j, drift, drift_particle,
    #          coord_min, coord_particle); status 1 means a stage point came
    # closer than collision_tol and the outputs are not valid.
    n, d = positions.shape
    ks = np.empty((n, 3))
    kv = np.empty((n, d))
    trans = np.empty(n)
    ts = np.empty((n, 3))
    tp = np.empty((n, d))
    acc_s = np.empty((n, 3))
    acc_p = np.empty((n, d))
    half = 0.5 * dt

    d_min, pi, pj = _rhs_kernel(
        states, positions, kappa1, kappa2, kappa3, alpha, beta, gamma_exp,
        l_offset, eps_a, eps_r, recovery, ks, kv, trans,
    )
    if d_min < collision_tol:
        return 1, d_min, pi, pj, 0.0, -1, 0.0, -1
    for i in range(n):
        for c in range(3):
            acc_s[i, c] = ks[i, c]
            ts[i, c] = states[i, c] + half * ks[i, c]
        for k in range(d):
            acc_p[i, k] = kv[i, k]
            tp[i, k] = positions[i, k] + half * kv[i, k]

    d_stage, si, sj = _rhs_kernel(
        ts, tp, kappa1, kappa2, kappa3, alpha, beta, gamma_exp,
        l_offset, eps_a, eps_r, recovery, ks, kv, trans,
    )
    if d_stage < collision_tol:
        return 1, d_stage, si, sj, 0.0, -1, 0.0, -1
    if d_stage < d_min:
        d_min, pi, pj = d_stage, si, sj
    for i in range(n):
        for c in range(3):
            acc_s[i, c] += 2.0 * ks[i, c]
            ts[i, c] = states[i, c] + half * ks[i, c]
        for k in range(d):
            acc_p[i, k] += 2.0 * kv[i, k]
            tp[i, k] = positions[i, k] + half * kv[i, k]

    d_stage, si, sj = _rhs_kernel(
        ts, tp, kappa1, kappa2, kappa3, alpha, beta, gamma_exp,
        l_offset, eps_a, eps_r, recovery, ks, kv, trans,
    )
    if d_stage < collision_tol:
        return 1, d_stage, si, sj, 0.0, -1, 0.0, -1
    if d_stage < d_min:
        d_min, pi, pj = d_stage, si, sj
    for i in range(n):
        for c in range(3):
            acc_s[i, c] += 2.0 * ks[i, c]
            ts[i, c] = states[i, c] + dt * ks[i, c]
        for k in range(d):
            acc_p[i, k] += 2.0 * kv[i, k]
            tp[i, k] = positions[i, k] + dt * kv[i, k]

    d_stage, si, sj = _rhs_kernel(
        ts, tp, kappa1, kappa2, kappa3, alpha, beta, gamma_exp,
        l_offset, eps_a, eps_r, recovery, ks, kv, trans,
    )
    if d_stage < collision_tol:
        return 1, d_stage, si, sj, 0.0, -1, 0.0, -1
    if d_stage < d_min:
        d_min, pi, pj = d_stage, si, sj

    sixth = dt / 6.0
    drift = 0.0
    drift_particle = -1
    coord_min = np.inf
    coord_particle = -1
    for i in range(n):
        for c in range(3):
            out_states[i, c] = states[i, c] + sixth * (acc_s[i, c] + ks[i, c])
            if out_states[i, c] < coord_min:
                coord_min = out_states[i, c]
                coord_particle = i
        for k in range(d):
            out_positions[i, k] = positions[i, k] + sixth * (acc_p[i, k] + kv[i, k])
        dev = abs((out_states[i, 0] + out_states[i, 1] + out_states[i, 2]) - 1.0)
        if dev > drift:
            drift = dev
            drift_particle = i
    return 0, d_min, pi, pj, drift, drift_particle, coord_min, coord_particle


def rk4_step(
    ensemble: Ensemble,
    params: ModelParams,
    dt: float,
    collision_tol: float = DEFAULT_COLLISION_TOL,
) -> Ensemble:
    """Advance the ensemble by one RK4 step of size dt.

    The minimum pairwise distance is checked at all four stage points;
    crossing ``collision_tol`` raises CollisionError.
    """
    _require_match(ensemble, params)
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    out_s = np.empty_like(ensemble.states)
    out_p = np.empty_like(ensemble.positions)
    status, d_min, pi, pj, *_ = _rk4_step_kernel(
        ensemble.states, ensemble.positions, dt, *_kernel_args(params),
        collision_tol, out_s, out_p,
    )
    if status == 1:
        raise CollisionError(pi, pj, d_min)
    return Ensemble(out_s, out_p)


def _step_plan(t_end: float, dt: float) -> tuple[int, float]:
    """Number of full dt steps plus the (possibly zero) final short step."""
    if t_end == 0.0:
        return 0, 0.0
    ratio = t_end / dt
    n_full = int(math.floor(ratio + 1e-9 * max(1.0, ratio)))
    remainder = t_end - n_full * dt
    if remainder <= 1e-12 * max(1.0, t_end):
        remainder = 0.0
    return n_full, remainder


def _snapshot(
    states: np.ndarray,
    positions: np.ndarray,
    args: tuple,
    collision_tol: float,
    t: float,
) -> tuple[Ensemble, DiagnosticsRow]:
    n, d = positions.shape
    if n > 1:
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        iu = np.triu_indices(n, 1)
        d_min = float(dist[iu].min())
        d_max = float(dist[iu].max())
    else:
        d_min, d_max = math.inf, 0.0
    dstates = np.empty((n, 3))
    vel = np.empty((n, d))
    trans = np.empty(n)
    k_min, pi, pj = _rhs_kernel(states, positions, *args, dstates, vel, trans)
    if k_min < collision_tol:
        raise CollisionError(pi, pj, k_min, time=t)
    total = float(states[:, 1].sum())
    row = DiagnosticsRow(
        d_min=d_min,
        d_max=d_max,
        total_infected=total,
        mean_infected=total / n,
        com=tuple(float(c) for c in positions.mean(axis=0)),
        max_speed=float(np.sqrt((vel * vel).sum(axis=1)).max()),
    )
    return Ensemble(states.copy(), positions.copy()), row


def simulate(
    initial: Ensemble, params: ModelParams, config: SimulationConfig
) -> Trajectory:
    """Integrate from the initial ensemble to config.t_end.

    Records a snapshot (with diagnostics) every ``record_stride`` steps plus
    the initial and final states.  Aborts with CollisionError if any RK4
    stage point brings a pair within ``collision_tol`` and with
    SimplexDriftError if epidemic states drift off the simplex by more than
    ``drift_tol``.  Reruns with identical inputs are bit-identical: the
    summation order is fixed and nothing is threaded.
    """
    _require_match(initial, params)
    initial.validate()

    args = _kernel_args(params)
    states = initial.states.copy()
    positions = initial.positions.copy()
    out_s = np.empty_like(states)
    out_p = np.empty_like(positions)

    times: list[float] = [0.0]
    snap, diag = _snapshot(states, positions, args, config.collision_tol, 0.0)
    snapshots = [snap]
    diagnostics = [diag]

    n_full, dt_last = _step_plan(config.t_end, config.dt)
    total_steps = n_full + (1 if dt_last > 0.0 else 0)

    def advance(step_dt: float, t_start: float, t_done: float) -> None:
        nonlocal states, positions, out_s, out_p
        status, d_min, pi, pj, drift, dp, cmin, cp = _rk4_step_kernel(
            states, positions, step_dt, *args, config.collision_tol, out_s, out_p
        )
        if status == 1:
            raise CollisionError(pi, pj, d_min, time=t_start)
        if drift > config.drift_tol:
            raise SimplexDriftError(t_done, dp, drift, "sum")
        if cmin < -config.drift_tol:
            raise SimplexDriftError(t_done, cp, cmin, "coord")
        states, out_s = out_s, states
        positions, out_p = out_p, positions

    for step in range(1, n_full + 1):
        advance(config.dt, (step - 1) * config.dt, step * config.dt)
        if step % config.record_stride == 0 and step != total_steps:
            t = step * config.dt
            snap, diag = _snapshot(states, positions, args, config.collision_tol, t)
            times.append(t)
            snapshots.append(snap)
            diagnostics.append(diag)
    if dt_last > 0.0:
        advance(dt_last, n_full * config.dt, config.t_end)
    if total_steps > 0:
        snap, diag = _snapshot(
            states, positions, args, config.collision_tol, config.t_end
        )
        times.append(config.t_end)
        snapshots.append(snap)
        diagnostics.append(diag)

    return Trajectory(
        times=np.array(times),
        snapshots=snapshots,
        diagnostics=diagnostics,
        params=params,
        config=config,
    )


def confirmed_set(ensemble: Ensemble, params: ModelParams) -> set[int]:
    """Indices whose visible infection s_i * I_i reaches the confirm threshold."""
    _require_match(ensemble, params)
    visible = params.symptom_array() * ensemble.states[:, 1]
    return {int(i) for i in np.nonzero(visible >= params.confirm_threshold)[0]}
