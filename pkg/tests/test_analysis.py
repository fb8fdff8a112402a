"""Closed-form bounds, the gradient-flow decomposition, and rate fitting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import euler_sup, make_params, random_ensemble
from sirflock import (
    Ensemble,
    SimulationConfig,
    bound_report,
    classical_sir_rhs,
    classical_sir_solve,
    diameter_ceiling,
    diameter_floor,
    diameter_gate_constant,
    diameter_gate_log,
    diameter_gate_ok,
    diameter_gate_threshold_log,
    epidemic_decay_rate,
    fit_exponential_rate,
    fit_total_infected_decay,
    forcing_term,
    ode_sup_bound,
    ordered_distances,
    position_rhs,
    potential_gradient,
    potential_value,
    relaxed_decay_ok,
    relaxed_decay_threshold,
    simulate,
    two_particle_decay_ok,
    two_particle_decay_threshold,
    two_particle_equilibrium,
)


def spread_ensemble(n: int, states=None) -> Ensemble:
    """n particles on a line, unit spacing, optional shared state row."""
    if states is None:
        states = [[1.0, 0.0, 0.0]] * n
    return Ensemble.from_rows(states, [[float(k), 0.0] for k in range(n)])


# ---------------------------------------------------------------------------
# epidemic decay constants


def test_decay_rate_damped_contact():
    # b=1, kappa1=1, n=20, gamma=3, L=3: 1 - 19/27 = 8/27
    params = make_params(n=20, recovery=1.0, gamma_exp=3.0, l_offset=3.0)
    assert epidemic_decay_rate(params) == pytest.approx(8.0 / 27.0, rel=1e-13)


def test_decay_rate_none_when_margin_vanishes():
    # b=0.4 against kappa1*(n-1)/L = 19: no guarantee
    params = make_params(n=20, recovery=0.4)
    assert epidemic_decay_rate(params) is None


def test_decay_rate_single_particle_is_recovery():
    params = make_params(n=1, recovery=0.4)
    assert epidemic_decay_rate(params) == 0.4


def test_relaxed_threshold_concentrated_infection():
    # 16 particles at S=1 plus 4 at S=0.1: sum - min = 16.3, over L^gamma = 27
    params = make_params(n=20, recovery=1.0, gamma_exp=3.0, l_offset=3.0)
    states = [[1.0, 0.0, 0.0]] * 16 + [[0.1, 0.9, 0.0]] * 4
    ens = spread_ensemble(20, states)
    assert relaxed_decay_threshold(params, ens) == pytest.approx(16.3 / 27.0, rel=1e-12)
    assert relaxed_decay_ok(params, ens)


def test_relaxed_threshold_sharper_than_worst_case():
    # b = 0.65 sits between 16.3/27 and 19/27: the initial-condition-aware
    # threshold certifies decay where the worst case cannot
    params = make_params(n=20, recovery=0.65, gamma_exp=3.0, l_offset=3.0)
    states = [[1.0, 0.0, 0.0]] * 16 + [[0.1, 0.9, 0.0]] * 4
    ens = spread_ensemble(20, states)
    assert epidemic_decay_rate(params) is None
    assert relaxed_decay_ok(params, ens)


def test_worst_case_rate_implies_relaxed_ok():
    # sum_j!=i S_j(0) <= n - 1, so a positive worst-case margin always clears
    # the relaxed threshold
    rng = np.random.default_rng(2)
    params = make_params(n=8, recovery=8.0, gamma_exp=1.0, l_offset=1.0)
    assert epidemic_decay_rate(params) is not None
    for _ in range(25):
        ens = random_ensemble(rng, n=8)
        assert relaxed_decay_ok(params, ens)


# ---------------------------------------------------------------------------
# diameter floor / ceiling


def test_diameter_floor_frozen():
    # kappa3*eps_r/(kappa2*(1+eps_a)) = 1/1.2 * ... = 5/6 for kappa3=5
    params = make_params(n=20)
    assert diameter_floor(params, 3.0) == pytest.approx(5.0 / 6.0, rel=1e-13)
    assert diameter_floor(params, 0.5) == 0.5  # initial diameter already lower


def test_diameter_floor_validation():
    with pytest.raises(ValueError, match="kappa2"):
        diameter_floor(make_params(kappa2=0.0), 1.0)
    with pytest.raises(ValueError, match="diameter"):
        diameter_floor(make_params(), 0.0)


def test_ode_sup_bound_frozen():
    # crossing point (b/a)**(1/(q-p)) = 4; sup is y0 above it, 4 below it
    assert ode_sup_bound(1.0, 16.0, 0.0, 2.0, 5.0) == 5.0
    assert ode_sup_bound(1.0, 16.0, 0.0, 2.0, 1.0) == 4.0


def test_ode_sup_bound_validation():
    with pytest.raises(ValueError, match="coefficients"):
        ode_sup_bound(0.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="exponents"):
        ode_sup_bound(1.0, 1.0, 2.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="exponents"):
        ode_sup_bound(1.0, 1.0, -0.5, 1.0, 1.0)
    with pytest.raises(ValueError, match="y0"):
        ode_sup_bound(1.0, 1.0, 0.0, 1.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(min_value=0.5, max_value=2.0),
    ratio=st.floats(min_value=0.3, max_value=3.0),
    p=st.floats(min_value=0.0, max_value=1.5),
    dq=st.floats(min_value=0.5, max_value=2.0),
    y0=st.floats(min_value=0.2, max_value=4.0),
)
def test_ode_sup_bound_dominates_euler(a, ratio, p, dq, y0):
    # forward-Euler trajectories of the worst-case scalar law stay under the
    # closed-form sup (loose tolerance here; the tight check runs elsewhere
    # with a much smaller step)
    q = p + dq
    y_star = ratio  # choose b so the crossing point lands at `ratio`
    b = a * y_star ** (q - p)
    bound = ode_sup_bound(a, b, p, q, y0)
    assert euler_sup(a, b, p, q, y0, dt=1e-3, t_end=10.0) <= bound + 1e-2


def test_diameter_ceiling_frozen():
    # a = kappa2*eps_a = 0.2, b = kappa3*(1+eps_r) = 6, p=0, q=1: y* = 30
    params = make_params(n=20)
    assert diameter_ceiling(params, 3.0) == pytest.approx(30.0, rel=1e-13)
    assert diameter_ceiling(params, 40.0) == 40.0


# ---------------------------------------------------------------------------
# ceiling gate


def pair_params(**overrides):
    base = dict(n=2, kappa2=1.0, kappa3=1.0)
    base.update(overrides)
    return make_params(**base)


def test_gate_constant_frozen_unit_pair():
    # Q=1, D(0)=1: 1/2 * max(1,1) * max((0.2/2.4), 1 -> 1) times the tail
    # 0.2/(2*2*2.4) = 1/48, so the constant is 1/96
    assert diameter_gate_constant(pair_params(), 1.0) == pytest.approx(1.0 / 96.0, rel=1e-12)


def test_gate_constant_frozen_wide_pair():
    # D(0)=8 scales the per-pair factor to 4: 4/48 = 1/12
    params = pair_params(kappa3=0.01)
    assert diameter_gate_constant(params, 8.0) == pytest.approx(1.0 / 12.0, rel=1e-12)


def test_gate_threshold_frozen():
    # (kappa3*(1+eps_r)/(kappa2*eps_a))**(beta-alpha) = (0.012/0.2)**1
    params = pair_params(kappa3=0.01)
    assert math.exp(diameter_gate_threshold_log(params, "literal")) == pytest.approx(
        0.06, rel=1e-12
    )


def test_gate_passes_for_wide_weak_repulsion_pair():
    params = pair_params(kappa3=0.01)
    assert diameter_gate_ok(params, 8.0, "literal")  # 1/12 > 0.06
    assert not diameter_gate_ok(pair_params(), 1.0, "literal")  # 1/96 < 6


def test_gate_exponent_conventions_can_disagree():
    # base ratio 0.1 with span 2: literal threshold 0.01, reciprocal 0.316;
    # the gate constant 0.0722 sits between them
    params = make_params(n=2, kappa2=60.0, kappa3=1.0, alpha=1.0, beta=3.0)
    log_gate = diameter_gate_log(params, 1.0)
    assert math.exp(log_gate) == pytest.approx(0.5 / math.sqrt(48.0), rel=1e-12)
    assert diameter_gate_ok(params, 1.0, "literal")
    assert not diameter_gate_ok(params, 1.0, "reciprocal")


def test_gate_log_stays_finite_for_large_ensembles():
    # the constant itself underflows (exponent scales with n(n-1)/2) but the
    # log-space form stays usable
    params = make_params(n=100)
    log_gate = diameter_gate_log(params, 3.0)
    assert math.isfinite(log_gate)
    assert diameter_gate_constant(params, 3.0) == 0.0  # underflow, by design


def test_gate_validation():
    with pytest.raises(ValueError, match="exponent"):
        diameter_gate_threshold_log(pair_params(), "squared")
    with pytest.raises(ValueError, match="kappa"):
        diameter_gate_threshold_log(pair_params(kappa3=0.0), "literal")
    with pytest.raises(ValueError, match="diameter"):
        diameter_gate_log(pair_params(), 0.0)


# ---------------------------------------------------------------------------
# potential and forcing


def test_potential_value_frozen_generic_exponents():
    # pair at r=2, alpha=1, beta=3, kappa2=kappa3=2:
    # (1/2) [2*1.2*(2) - 2*0.2*(2**-1 / -1)] = (1/2)(4.8 + 0.2) = 2.5
    params = make_params(n=2, kappa2=2.0, kappa3=2.0, alpha=1.0, beta=3.0)
    v = potential_value([[0.0, 0.0], [2.0, 0.0]], params)
    assert v == pytest.approx(2.5, rel=1e-13)


def test_potential_value_frozen_log_attraction():
    # alpha=2 switches the attraction antiderivative to ln: at r=e the pair
    # contributes (1/2)(1.2*1 + 0.2/e)
    params = make_params(n=2, kappa2=1.0, kappa3=1.0, alpha=2.0, beta=3.0)
    v = potential_value([[0.0, 0.0], [math.e, 0.0]], params)
    assert v == pytest.approx(0.6 + 0.1 / math.e, rel=1e-13)


def test_potential_value_frozen_log_repulsion():
    # beta=2 at r=1: ln 1 kills the repulsion term, leaving (1/2)*1.2*1
    params = make_params(n=2, kappa2=1.0, kappa3=1.0, alpha=1.0, beta=2.0)
    v = potential_value([[0.0, 0.0], [1.0, 0.0]], params)
    assert v == pytest.approx(0.6, rel=1e-13)


def test_potential_gradient_zero_at_balance():
    # 1.2/r = 0.2/r^3 at r = 1/sqrt(6)
    params = make_params(n=2, kappa2=1.0, kappa3=1.0, alpha=1.0, beta=3.0)
    positions = [[0.0, 0.0], [1.0 / math.sqrt(6.0), 0.0]]
    assert np.abs(potential_gradient(positions, params)).max() < 1e-13


@pytest.mark.parametrize("alpha,beta", [(1.5, 3.5), (2.0, 5.0), (1.5, 2.0)])
def test_potential_gradient_matches_central_differences(alpha, beta):
    rng = np.random.default_rng(int(10 * (alpha + beta)))
    params = make_params(n=5, kappa2=1.3, kappa3=2.1, alpha=alpha, beta=beta)
    h = 1e-5
    for _ in range(3):
        pos = random_ensemble(rng, n=5).positions
        grad = potential_gradient(pos, params)
        for i in range(5):
            for k in range(2):
                bumped = pos.copy()
                bumped[i, k] += h
                v_plus = potential_value(bumped, params)
                bumped[i, k] -= 2 * h
                v_minus = potential_value(bumped, params)
                fd = (v_plus - v_minus) / (2 * h)
                assert grad[i, k] == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("alpha,beta", [(1.0, 2.0), (1.5, 3.5), (2.0, 5.0), (1.5, 2.0)])
def test_velocity_decomposes_into_gradient_flow_plus_forcing(alpha, beta):
    rng = np.random.default_rng(int(100 * alpha + beta))
    params = make_params(n=6, kappa2=1.7, kappa3=0.9, alpha=alpha, beta=beta)
    for _ in range(10):
        ens = random_ensemble(rng, n=6)
        vel = position_rhs(ens, params)
        grad = potential_gradient(ens.positions, params)
        force = forcing_term(ens, params)
        scale = max(1.0, np.abs(vel).max(), np.abs(grad).max(), np.abs(force).max())
        assert np.abs(vel - (-grad + force)).max() <= 1e-12 * scale


def test_forcing_vanishes_without_infection():
    rng = np.random.default_rng(51)
    params = make_params(n=5)
    ens = random_ensemble(rng, n=5)
    ens.states[:] = [1.0, 0.0, 0.0]
    assert np.all(forcing_term(ens, params) == 0.0)
    # and the velocity field is then exactly the gradient flow
    vel = position_rhs(ens, params)
    grad = potential_gradient(ens.positions, params)
    assert vel == pytest.approx(-grad, rel=1e-12, abs=1e-14)


def test_forcing_bounded_by_total_infection():
    # per pair, |weight deviation| <= I_i + I_j and the kernel factor is
    # maximized at the minimum separation
    rng = np.random.default_rng(53)
    params = make_params(n=6, alpha=1.5, beta=3.0)
    for _ in range(10):
        ens = random_ensemble(rng, n=6)
        force = forcing_term(ens, params)
        d_min = ordered_distances(ens.positions)[0]
        kernel_cap = (
            params.kappa2 * d_min ** (1.0 - params.alpha)
            + params.kappa3 * d_min ** (1.0 - params.beta)
        )
        total_i = ens.states[:, 1].sum()
        cap = kernel_cap * 2.0 * (ens.n - 1) / ens.n * total_i
        assert np.linalg.norm(force, axis=1).sum() <= cap * (1.0 + 1e-12)


def test_forcing_decays_with_infection_along_run():
    # damped-contact decay regime: forcing magnitude should fall at least as
    # fast as the guaranteed envelope rate
    params = make_params(
        n=10, recovery=1.0, gamma_exp=3.0, l_offset=3.0, kappa2=1.0, kappa3=5.0
    )
    states = [[1.0, 0.0, 0.0]] * 8 + [[0.1, 0.9, 0.0]] * 2
    rng = np.random.default_rng(7)
    positions = rng.uniform(0.0, 3.0, (10, 2))
    ens = Ensemble.from_rows(states, positions)
    traj = simulate(ens, params, SimulationConfig(dt=1e-3, t_end=15.0, record_stride=50))
    norms = [
        float(np.linalg.norm(forcing_term(snap, params)))
        for snap in traj.snapshots
    ]
    fit = fit_exponential_rate(traj.times, norms)
    rate = epidemic_decay_rate(params)
    assert rate is not None
    assert fit.rate <= -0.9 * rate


def test_potential_single_particle_is_trivial():
    params = make_params(n=1)
    assert potential_value([[0.0, 0.0]], params) == 0.0
    assert np.all(potential_gradient([[0.0, 0.0]], params) == 0.0)


def test_potential_rejects_coincident_positions():
    params = make_params(n=2)
    with pytest.raises(ValueError, match="coincident"):
        potential_value([[1.0, 1.0], [1.0, 1.0]], params)
    with pytest.raises(ValueError, match="coincident"):
        potential_gradient([[1.0, 1.0], [1.0, 1.0]], params)


# ---------------------------------------------------------------------------
# classical reference solver


def test_classical_sir_rhs_frozen():
    d = classical_sir_rhs(2.0, 0.5, np.array([0.6, 0.3, 0.1]))
    assert d == pytest.approx([-0.36, 0.21, 0.15], rel=1e-14)


def test_classical_sir_conservation_and_monotonicity():
    times, states = classical_sir_solve(1.0, 0.4, (0.99, 0.01, 0.0), 1e-3, 20.0)
    assert np.abs(states.sum(axis=1) - 1.0).max() < 1e-12
    assert np.all(np.diff(states[:, 0]) <= 1e-15)
    assert np.all(np.diff(states[:, 2]) >= -1e-15)


def test_classical_sir_phase_invariant():
    # dS/dR = -(a/b) S makes S * exp((a/b) R) a conserved quantity
    a, b = 1.0, 0.4
    _, states = classical_sir_solve(a, b, (0.99, 0.01, 0.0), 1e-3, 20.0)
    invariant = states[:, 0] * np.exp((a / b) * states[:, 2])
    assert invariant == pytest.approx(invariant[0], rel=1e-10)


def test_classical_sir_peak_at_threshold_susceptibility():
    # dI/dt = 0 exactly when S = b/a
    a, b = 2.5, 0.5
    _, states = classical_sir_solve(a, b, (0.99, 0.01, 0.0), 1e-3, 20.0)
    peak = int(np.argmax(states[:, 1]))
    assert 0 < peak < len(states) - 1  # the peak is interior
    assert states[peak, 0] == pytest.approx(b / a, abs=1e-3)


def test_classical_sir_validation():
    with pytest.raises(ValueError, match="rates"):
        classical_sir_solve(-1.0, 0.4, (1.0, 0.0, 0.0), 1e-3, 1.0)
    with pytest.raises(ValueError, match="dt"):
        classical_sir_solve(1.0, 0.4, (1.0, 0.0, 0.0), 0.0, 1.0)
    with pytest.raises(ValueError, match="3-vector"):
        classical_sir_solve(1.0, 0.4, (1.0, 0.0), 1e-3, 1.0)
    with pytest.raises(ValueError, match="simplex"):
        classical_sir_solve(1.0, 0.4, (0.8, 0.0, 0.0), 1e-3, 1.0)


# ---------------------------------------------------------------------------
# two-particle facts


def test_two_particle_equilibrium_frozen():
    # (eps_r / (1 + eps_a))**(1/(beta-alpha)) with kappa2 = kappa3
    assert two_particle_equilibrium(pair_params()) == pytest.approx(1.0 / 6.0, rel=1e-13)
    wide = pair_params(beta=3.0)
    assert two_particle_equilibrium(wide) == pytest.approx(1.0 / math.sqrt(6.0), rel=1e-13)


def test_two_particle_decay_threshold_frozen():
    # 2*kappa1/(1/6 + 1) = 12/7
    params = pair_params()
    assert two_particle_decay_threshold(params) == pytest.approx(12.0 / 7.0, rel=1e-13)
    assert two_particle_decay_ok(pair_params(recovery=2.0))
    assert not two_particle_decay_ok(pair_params(recovery=1.7))


def test_two_particle_equilibrium_needs_attraction():
    with pytest.raises(ValueError, match="kappa2"):
        two_particle_equilibrium(make_params(n=2, kappa2=0.0))


# ---------------------------------------------------------------------------
# distances and rate fitting


def test_ordered_distances_triangle_and_square():
    triangle = [[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]]
    assert ordered_distances(triangle) == pytest.approx([1.0, 1.0, 1.0], rel=1e-14)
    square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    expected = [1.0, 1.0, 1.0, 1.0, math.sqrt(2.0), math.sqrt(2.0)]
    assert ordered_distances(square) == pytest.approx(expected, rel=1e-14)


def test_fit_exponential_rate_recovers_synthetic_decay():
    t = np.linspace(0.0, 10.0, 51)
    fit = fit_exponential_rate(t, 3.0 * np.exp(-0.7 * t))
    assert fit.rate == pytest.approx(-0.7, rel=1e-10)
    assert fit.log_amplitude == pytest.approx(math.log(3.0), rel=1e-10)
    assert fit.residual_rms < 1e-12
    # default window: last 60% of the range
    assert fit.window == pytest.approx((4.0, 10.0))
    assert fit.n_points == 31


def test_fit_exponential_rate_custom_window():
    t = np.linspace(0.0, 10.0, 51)
    v = np.exp(-0.5 * t)
    v[:5] = 17.0  # garbage transient outside the window
    fit = fit_exponential_rate(t, v, window=(2.0, 8.0))
    assert fit.rate == pytest.approx(-0.5, rel=1e-10)
    assert fit.n_points == 31


def test_fit_exponential_rate_validation():
    t = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError, match="at least 3"):
        fit_exponential_rate(t, np.ones(11), window=(0.0, 0.1))
    with pytest.raises(ValueError, match="positive"):
        fit_exponential_rate(t, np.zeros(11))
    with pytest.raises(ValueError, match="shapes"):
        fit_exponential_rate(t, np.ones(5))


def test_fit_total_infected_decay_runs_on_trajectory():
    params = make_params(n=2, kappa2=1.0, kappa3=1.0, recovery=2.0)
    ens = Ensemble.from_rows(
        [[0.2, 0.8, 0.0], [0.9, 0.1, 0.0]], [[0.0, 0.0], [1.0, 0.0]]
    )
    traj = simulate(ens, params, SimulationConfig(dt=1e-3, t_end=5.0, record_stride=100))
    fit = fit_total_infected_decay(traj)
    assert fit.rate < -0.5  # fast recovery dominates weak coupling


# ---------------------------------------------------------------------------
# bound report


def test_bound_report_wide_ensemble():
    params = make_params(n=20, recovery=1.0, gamma_exp=3.0, l_offset=3.0)
    states = [[1.0, 0.0, 0.0]] * 16 + [[0.1, 0.9, 0.0]] * 4
    ens = spread_ensemble(20, states)
    report = bound_report(params, ens)
    assert report.decay_rate == pytest.approx(8.0 / 27.0, rel=1e-13)
    assert report.relaxed_ok
    assert report.initial_diameter == 19.0
    assert report.diameter_floor == pytest.approx(5.0 / 6.0, rel=1e-13)
    assert report.diameter_ceiling is not None
    assert report.gate_log is not None
    assert report.gate_ok_literal is not None
    assert report.equilibrium_separation is None  # only defined for a pair
    assert "decay_rate" in report.as_dict()


def test_bound_report_pair():
    params = pair_params(recovery=2.0)
    ens = spread_ensemble(2, [[1.0, 0.0, 0.0], [0.1, 0.9, 0.0]])
    report = bound_report(params, ens)
    assert report.equilibrium_separation == pytest.approx(1.0 / 6.0, rel=1e-13)
    assert report.equilibrium_decay_ok


def test_bound_report_single_particle():
    params = make_params(n=1)
    ens = Ensemble.from_rows([[1.0, 0.0, 0.0]], [[0.0, 0.0]])
    report = bound_report(params, ens)
    assert report.initial_diameter is None
    assert report.diameter_floor is None
    assert report.diameter_ceiling is None
    assert report.decay_rate == 0.4  # no neighbors to infect
