"""Epidemic-coupled flocking: simulation, bounds, and verification tools."""

from .analysis import (
    BoundReport,
    DecayFit,
    bound_report,
    classical_sir_rhs,
    classical_sir_solve,
    classical_sir_step,
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
    potential_gradient,
    potential_value,
    relaxed_decay_ok,
    relaxed_decay_threshold,
    two_particle_decay_ok,
    two_particle_decay_threshold,
    two_particle_equilibrium,
)
from .integrator import (
    DEFAULT_DRIFT_TOL,
    DiagnosticsRow,
    SimplexDriftError,
    SimulationConfig,
    Trajectory,
    confirmed_set,
    rk4_step,
    rk4_update,
    simulate,
)
from .model import (
    DEFAULT_COLLISION_TOL,
    CollisionError,
    Ensemble,
    EpidemicState,
    ModelParams,
    SpatialPosition,
    adjacency,
    attraction_weight,
    epidemic_rhs,
    full_rhs,
    position_rhs,
    repulsion_weight,
    similarity,
)
from .reporting import (
    RunReport,
    evaluate_run,
    write_decay_csv,
    write_diagnostics_csv,
    write_report_text,
    write_trajectory_csv,
)
from .scenario import (
    ExplicitInit,
    GeneratorInit,
    ScenarioError,
    ScenarioSpec,
    build_initial,
    generate_initial,
    load_scenario,
    preset_names,
    preset_scenario,
    with_overrides,
    write_scenario,
)

__version__ = "0.1.0"
