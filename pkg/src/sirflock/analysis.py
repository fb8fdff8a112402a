"""Closed-form bounds, checks, and fits for simulation output.

Everything here is cheap and deterministic: decay-rate constants, diameter
floors/ceilings with their hypothesis gates, the gradient-flow decomposition
of the velocity field, a classical 3-state SIR reference solver, and
log-linear rate fitting.  The simulation layer never calls into this module;
analysis consumes trajectories after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .integrator import Trajectory, _step_plan, rk4_update
from .model import Ensemble, ModelParams

GATE_EXPONENT_CONVENTIONS = ("literal", "reciprocal")


# ---------------------------------------------------------------------------
# epidemic decay


def epidemic_decay_rate(params: ModelParams) -> float | None:
    """Guaranteed exponential decay rate of total infection, if positive.

    min_i b_i - kappa1 * (n - 1) / l_offset**gamma_exp.  When positive, the
    total infection obeys total_I(t) <= n * exp(-rate * t) regardless of the
    initial condition; when the margin is not positive no rate is claimed and
    None is returned.
    """
    rate = min(params.recovery) - params.kappa1 * (params.n - 1) * params.adjacency_cap
    return rate if rate > 0 else None


def relaxed_decay_threshold(params: ModelParams, initial: Ensemble) -> float:
    """Initial-condition-aware recovery threshold for guaranteed decay.

    kappa1 / L**gamma_exp times the largest sum of everyone else's initial
    susceptibility, max_i sum_{j != i} S_j(0) = total_S(0) - min_i S_i(0).
    Sharper than the worst-case rate whenever initial susceptibles are few.
    """
    s0 = initial.states[:, 0]
    return params.kappa1 * params.adjacency_cap * float(s0.sum() - s0.min())


def relaxed_decay_ok(params: ModelParams, initial: Ensemble) -> bool:
    """True when min_i b_i clears the initial-condition-aware threshold."""
    return min(params.recovery) > relaxed_decay_threshold(params, initial)


# ---------------------------------------------------------------------------
# diameter bounds


def _balance_separation(params: ModelParams) -> float:
    # Distance where floor-strength repulsion balances cap-strength attraction.
    if params.kappa2 == 0:
        raise ValueError("kappa2 must be > 0: pure repulsion has no balance point")
    ratio = (params.kappa3 * params.repulse_min) / (params.kappa2 * params.attract_max)
    return ratio ** (1.0 / (params.beta - params.alpha))


def diameter_floor(params: ModelParams, initial_diameter: float) -> float:
    """Lower bound on the ensemble diameter for all time.

    min{ D(0), (kappa3 * eps_r / (kappa2 * (1 + eps_a)))**(1/(beta-alpha)) }:
    the diameter never drops below its initial value or the separation where
    the weakest repulsion already beats the strongest attraction.
    """
    if initial_diameter <= 0:
        raise ValueError(f"initial diameter must be > 0, got {initial_diameter}")
    return min(initial_diameter, _balance_separation(params))


def ode_sup_bound(a: float, b: float, p: float, q: float, y0: float) -> float:
    """Sup bound max{y0, (b/a)**(1/(q-p))} for dy/dt <= -a*y**-p + b*y**-q.

    The right side is positive only below the crossing point
    y* = (b/a)**(1/(q-p)), so y can never climb past max{y0, y*}.
    Requires a > 0, b > 0, 0 <= p < q, y0 > 0.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"coefficients must be > 0, got a={a}, b={b}")
    if not 0 <= p < q:
        raise ValueError(f"exponents must satisfy 0 <= p < q, got p={p}, q={q}")
    if y0 <= 0:
        raise ValueError(f"y0 must be > 0, got {y0}")
    return max(y0, (b / a) ** (1.0 / (q - p)))


def diameter_ceiling(params: ModelParams, initial_diameter: float) -> float:
    """Upper bound on the ensemble diameter, conditional on the gate below.

    The diameter obeys dD/dt <= -kappa2*eps_a*D**(1-alpha)
    + kappa3*(1+eps_r)*D**(1-beta) once every pair stays far enough apart,
    so the scalar sup bound applies with p = alpha - 1, q = beta - 1.
    """
    if initial_diameter <= 0:
        raise ValueError(f"initial diameter must be > 0, got {initial_diameter}")
    return ode_sup_bound(
        params.kappa2 * params.attract_min,
        params.kappa3 * params.repulse_max,
        params.alpha - 1.0,
        params.beta - 1.0,
        initial_diameter,
    )


def diameter_gate_log(params: ModelParams, initial_diameter: float) -> float:
    """log of the pair-separation persistence constant for the ceiling gate.

    Assembled in log space; for more than a handful of particles the constant
    itself underflows double precision (it carries an exponent of
    Q = n(n-1)/2).
    """
    if initial_diameter <= 0:
        raise ValueError(f"initial diameter must be > 0, got {initial_diameter}")
    n = params.n
    q_pairs = n * (n - 1) // 2
    m_r, cap_a, cap_r = params.repulse_min, params.attract_max, params.repulse_max
    half_balance = (m_r / (2.0 * cap_a)) ** (1.0 / (params.beta - params.alpha))
    per_pair = (
        math.log(0.5)
        + math.log(max(initial_diameter, 1.0))
        + math.log(max(half_balance, 1.0))
    )
    tail = math.log(m_r / (2.0 * n * (cap_a + cap_r))) / (params.beta - 1.0)
    return q_pairs * (per_pair + tail)


def diameter_gate_constant(params: ModelParams, initial_diameter: float) -> float:
    """exp of diameter_gate_log; underflows to 0.0 for large ensembles."""
    return math.exp(diameter_gate_log(params, initial_diameter))


def diameter_gate_threshold_log(params: ModelParams, exponent: str = "literal") -> float:
    """log of the gate threshold (kappa3*(1+eps_r)/(kappa2*eps_a))**e.

    The exponent e is stated as beta - alpha ("literal"); the dimensional
    reading of the underlying distance threshold gives 1/(beta - alpha)
    ("reciprocal").  Both are available; reports carry both verdicts.
    """
    if exponent not in GATE_EXPONENT_CONVENTIONS:
        raise ValueError(f"exponent must be one of {GATE_EXPONENT_CONVENTIONS}")
    if params.kappa2 == 0 or params.kappa3 == 0:
        raise ValueError("gate threshold needs kappa2 > 0 and kappa3 > 0")
    base = math.log(
        (params.kappa3 * params.repulse_max) / (params.kappa2 * params.attract_min)
    )
    span = params.beta - params.alpha
    return base * span if exponent == "literal" else base / span


def diameter_gate_ok(
    params: ModelParams, initial_diameter: float, exponent: str = "literal"
) -> bool:
    """True when the persistence constant clears the ceiling hypothesis."""
    return diameter_gate_log(params, initial_diameter) > diameter_gate_threshold_log(
        params, exponent
    )


# ---------------------------------------------------------------------------
# gradient-flow decomposition of the velocity field


def _distance_matrix(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    if not dist.min() > 0.0:
        raise ValueError("coincident positions")
    return dist


def _power_antiderivative(dist: np.ndarray, p: float) -> np.ndarray:
    # antiderivative of r**(1-p): r**(2-p)/(2-p), except ln r when p == 2
    if p == 2.0:
        return np.log(dist)
    return dist ** (2.0 - p) / (2.0 - p)


def potential_value(positions, params: ModelParams) -> float:
    """Interaction potential whose negative gradient is the disease-free
    velocity field.

    V = (1/n) * sum over unordered pairs of
        kappa2*(1+eps_a)*phi_alpha(d) - kappa3*eps_r*phi_beta(d),
    with phi_p(d) = d**(2-p)/(2-p) for p != 2 and ln d for p = 2 (the
    attraction term goes logarithmic at alpha = 2, the repulsion term at
    beta = 2).  Attraction enters at its cap and repulsion at its floor;
    everything the epidemic does to the weights lives in forcing_term.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    iu = np.triu_indices(n, 1)
    dist = np.linalg.norm(pos[iu[0]] - pos[iu[1]], axis=1)
    if dist.size and not dist.min() > 0.0:
        raise ValueError("coincident positions")
    attract = params.kappa2 * params.attract_max * _power_antiderivative(dist, params.alpha)
    repulse = params.kappa3 * params.repulse_min * _power_antiderivative(dist, params.beta)
    return float((attract - repulse).sum() / n)


def potential_gradient(positions, params: ModelParams) -> np.ndarray:
    """Analytic gradient of potential_value, shape (n, d).

    grad_i = (1/n) * sum_{j != i}
        (kappa2*(1+eps_a)*d**-alpha - kappa3*eps_r*d**-beta) * (x_i - x_j);
    the same power law in every exponent case, since d/dr of both branches of
    phi_p is r**(1-p).
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    dist = _distance_matrix(pos)
    coeff = (
        params.kappa2 * params.attract_max * dist**-params.alpha
        - params.kappa3 * params.repulse_min * dist**-params.beta
    ) / n
    diff = pos[:, None, :] - pos[None, :, :]  # x_i - x_j
    return np.einsum("ij,ijk->ik", coeff, diff)


def forcing_term(ensemble: Ensemble, params: ModelParams) -> np.ndarray:
    """Epidemic forcing: the velocity field minus its gradient-flow part.

    Uses the weight deviations from the disease-free values,
    attraction: eps_a + G - (1 + eps_a) = G - 1 <= 0,
    repulsion:  1 + eps_r - G - eps_r = 1 - G >= 0,
    both vanishing wherever infection does.  position_rhs(e) equals
    -potential_gradient(e.positions) + forcing_term(e) identically.
    """
    pos = ensemble.positions
    n = ensemble.n
    dist = _distance_matrix(pos)
    infected = ensemble.states[:, 1]
    healthy = 1.0 - infected
    g = np.outer(healthy, healthy) + np.outer(infected, infected)
    dev_attract = g - 1.0
    dev_repulse = 1.0 - g
    coeff = (
        params.kappa2 * dev_attract * dist**-params.alpha
        - params.kappa3 * dev_repulse * dist**-params.beta
    ) / n
    diff = pos[None, :, :] - pos[:, None, :]  # x_j - x_i
    return np.einsum("ij,ijk->ik", coeff, diff)


# ---------------------------------------------------------------------------
# classical SIR reference


def classical_sir_rhs(a: float, b: float, w: np.ndarray) -> np.ndarray:
    """Right side of the well-mixed 3-state SIR system."""
    flow = a * w[0] * w[1]
    rec = b * w[1]
    return np.array([-flow, flow - rec, rec])


def classical_sir_step(a: float, b: float, w: np.ndarray, dt: float) -> np.ndarray:
    return rk4_update(lambda _t, y: classical_sir_rhs(a, b, y), 0.0, w, dt)


def classical_sir_solve(
    a: float, b: float, w0, dt: float, t_end: float
) -> tuple[np.ndarray, np.ndarray]:
    """RK4-integrate the classical SIR system, recording every step.

    Returns (times, states) with states of shape (steps + 1, 3).  This is an
    independent scalar code path, not the particle kernel; the two are
    compared against each other when the particle model is configured to
    collapse to the classical one.
    """
    if a < 0 or b < 0:
        raise ValueError(f"rates must be >= 0, got a={a}, b={b}")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")
    w = np.asarray(w0, dtype=float)
    if w.shape != (3,):
        raise ValueError(f"w0 must be a 3-vector, got shape {w.shape}")
    if abs(w.sum() - 1.0) > 1e-9 or w.min() < -1e-12:
        raise ValueError(f"w0 must lie on the unit simplex, got {w}")
    n_full, dt_last = _step_plan(t_end, dt)
    times = [0.0]
    states = [w.copy()]
    for step in range(1, n_full + 1):
        w = classical_sir_step(a, b, w, dt)
        times.append(step * dt)
        states.append(w)
    if dt_last > 0.0:
        w = classical_sir_step(a, b, w, dt_last)
        times.append(t_end)
        states.append(w)
    return np.array(times), np.stack(states)


# ---------------------------------------------------------------------------
# two-particle facts


def two_particle_equilibrium(params: ModelParams) -> float:
    """Limiting separation of an isolated pair.

    (kappa3 * eps_r / (kappa2 * (1 + eps_a)))**(1/(beta - alpha)): where
    attraction at its cap balances repulsion at its floor, which is exactly
    the weight combination a disease-free pair settles into.
    """
    return _balance_separation(params)


def two_particle_decay_threshold(params: ModelParams) -> float:
    """Recovery rate needed for pair infection to decay at rate b/2:
    2*kappa1/(x_inf + L)**gamma_exp with x_inf the limiting separation."""
    x_inf = two_particle_equilibrium(params)
    return 2.0 * params.kappa1 / (x_inf + params.l_offset) ** params.gamma_exp


def two_particle_decay_ok(params: ModelParams) -> bool:
    return min(params.recovery) > two_particle_decay_threshold(params)


# ---------------------------------------------------------------------------
# trajectory statistics


def ordered_distances(positions) -> np.ndarray:
    """All n(n-1)/2 pairwise distances, ascending."""
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    iu = np.triu_indices(n, 1)
    return np.sort(np.linalg.norm(pos[iu[0]] - pos[iu[1]], axis=1))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log(values) = rate * t + log_amplitude."""

    rate: float
    log_amplitude: float
    residual_rms: float
    window: tuple[float, float]
    n_points: int


def fit_exponential_rate(times, values, window: tuple[float, float] | None = None) -> DecayFit:
    """Fit an exponential rate to positive samples on a time window.

    Args:
        times: sample times, ascending.
        values: positive samples (log is taken).
        window: (t_lo, t_hi) to fit on; defaults to the last 60% of the time
            range, skipping the transient.

    Raises:
        ValueError: fewer than 3 samples in the window, or non-positive
            values inside it.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError(f"times {t.shape} and values {v.shape} must be equal 1-d shapes")
    if window is None:
        window = (t[-1] - 0.6 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    slack = 1e-12 * max(1.0, abs(hi))
    mask = (t >= lo - slack) & (t <= hi + slack)
    if mask.sum() < 3:
        raise ValueError(f"need at least 3 samples in window {window}, found {int(mask.sum())}")
    if v[mask].min() <= 0.0:
        raise ValueError("values must be positive on the fit window")
    tw = t[mask]
    logs = np.log(v[mask])
    rate, amplitude = np.polyfit(tw, logs, 1)
    resid = logs - (rate * tw + amplitude)
    return DecayFit(
        rate=float(rate),
        log_amplitude=float(amplitude),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        window=(float(lo), float(hi)),
        n_points=int(mask.sum()),
    )


def fit_total_infected_decay(traj: Trajectory, window=None) -> DecayFit:
    return fit_exponential_rate(traj.times, traj.total_infected(), window)


# ---------------------------------------------------------------------------
# bound report


@dataclass(frozen=True)
class BoundReport:
    """Every closed-form quantity the checks rely on, None where undefined."""

    decay_rate: float | None
    relaxed_threshold: float
    relaxed_ok: bool
    initial_diameter: float | None
    diameter_floor: float | None
    diameter_ceiling: float | None
    gate_log: float | None
    gate_threshold_log_literal: float | None
    gate_threshold_log_reciprocal: float | None
    gate_ok_literal: bool | None
    gate_ok_reciprocal: bool | None
    equilibrium_separation: float | None
    equilibrium_decay_ok: bool | None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def bound_report(params: ModelParams, initial: Ensemble) -> BoundReport:
    """Evaluate every applicable bound for this parameter set and initial
    ensemble; fields whose hypotheses cannot be formed stay None."""
    if initial.n > 1:
        d0 = float(ordered_distances(initial.positions)[-1])
    else:
        d0 = None

    def guarded(fn, *args):
        try:
            return fn(*args)
        except ValueError:
            return None

    floor = guarded(diameter_floor, params, d0) if d0 else None
    ceiling = guarded(diameter_ceiling, params, d0) if d0 else None
    gate_log = guarded(diameter_gate_log, params, d0) if d0 else None
    thr_lit = guarded(diameter_gate_threshold_log, params, "literal")
    thr_rec = guarded(diameter_gate_threshold_log, params, "reciprocal")
    pair_sep = guarded(two_particle_equilibrium, params) if params.n == 2 else None
    return BoundReport(
        decay_rate=epidemic_decay_rate(params),
        relaxed_threshold=relaxed_decay_threshold(params, initial),
        relaxed_ok=relaxed_decay_ok(params, initial),
        initial_diameter=d0,
        diameter_floor=floor,
        diameter_ceiling=ceiling,
        gate_log=gate_log,
        gate_threshold_log_literal=thr_lit,
        gate_threshold_log_reciprocal=thr_rec,
        gate_ok_literal=None if gate_log is None or thr_lit is None else gate_log > thr_lit,
        gate_ok_reciprocal=None if gate_log is None or thr_rec is None else gate_log > thr_rec,
        equilibrium_separation=pair_sep,
        equilibrium_decay_ok=two_particle_decay_ok(params)
        if pair_sep is not None
        else None,
    )
