"""Scenario files, bundled presets, and initial-ensemble generation.

A scenario file is INI-style key/value text with four sections::

    [scenario]
    format_version = 1

    [params]      # ModelParams fields
    n = 20
    ...

    [sim]         # SimulationConfig fields, all optional
    dt = 0.001
    ...

    [init]
    kind = generator | explicit
    ...

Generator init draws positions uniformly from [0, box_side]^d with a seeded
PCG64 stream; explicit init lists state_<i> / position_<i> rows.  Floats are
written with repr so load(write(spec)) == spec exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass

import numpy as np

from .integrator import SimulationConfig
from .model import DEFAULT_COLLISION_TOL, Ensemble, EpidemicState, ModelParams

FORMAT_VERSION = 1

# Every preset uses the same documented stream so reruns are reproducible.
PRESET_SEED = 7


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario input."""


@dataclass(frozen=True)
class GeneratorInit:
    """Random layout: two state blocks, uniform positions in a box."""

    n_uninfected: int
    n_infected: int
    uninfected_state: tuple[float, float, float]
    infected_state: tuple[float, float, float]
    box_side: float
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "uninfected_state", tuple(float(v) for v in self.uninfected_state)
        )
        object.__setattr__(
            self, "infected_state", tuple(float(v) for v in self.infected_state)
        )
        if self.n_uninfected < 0 or self.n_infected < 0:
            raise ScenarioError("group sizes must be >= 0")
        if self.n_uninfected + self.n_infected < 1:
            raise ScenarioError("generator needs at least one particle")
        if not self.box_side > 0:
            raise ScenarioError(f"box_side must be > 0, got {self.box_side}")
        EpidemicState(*self.uninfected_state).validate()
        EpidemicState(*self.infected_state).validate()


@dataclass(frozen=True)
class ExplicitInit:
    """Fully spelled-out initial ensemble."""

    states: tuple[tuple[float, float, float], ...]
    positions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "states", tuple(tuple(float(v) for v in row) for row in self.states)
        )
        object.__setattr__(
            self,
            "positions",
            tuple(tuple(float(v) for v in row) for row in self.positions),
        )
        if len(self.states) != len(self.positions):
            raise ScenarioError(
                f"{len(self.states)} states vs {len(self.positions)} positions"
            )
        if len(self.states) < 1:
            raise ScenarioError("explicit init needs at least one particle")


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reproduce a run."""

    params: ModelParams
    sim: SimulationConfig
    init: GeneratorInit | ExplicitInit
    format_version: int = FORMAT_VERSION


# ---------------------------------------------------------------------------
# initial ensembles


def generate_initial(
    init: GeneratorInit,
    params: ModelParams,
    collision_tol: float = DEFAULT_COLLISION_TOL,
) -> Ensemble:
    """Draw the generator layout: uninfected block first, then infected.

    Positions are sampled uniformly on [0, box_side]^d; a draw landing within
    collision_tol of an already placed particle is rejected and redrawn.
    After 10 * n rejections total, generation fails (the box is too crowded
    for the tolerance).
    """
    n = init.n_uninfected + init.n_infected
    if n != params.n:
        raise ScenarioError(f"generator places {n} particles, params say {params.n}")
    rng = np.random.default_rng(init.seed)
    positions = np.empty((n, params.d))
    rejections = 0
    for i in range(n):
        while True:
            draw = rng.uniform(0.0, init.box_side, params.d)
            if i == 0 or np.linalg.norm(positions[:i] - draw, axis=1).min() >= collision_tol:
                positions[i] = draw
                break
            rejections += 1
            if rejections > 10 * n:
                raise ScenarioError(
                    f"placement failed after {rejections} rejections: "
                    f"box_side={init.box_side} too crowded for tolerance {collision_tol}"
                )
    states = np.empty((n, 3))
    states[: init.n_uninfected] = init.uninfected_state
    states[init.n_uninfected :] = init.infected_state
    return Ensemble(states, positions)


def build_initial(spec: ScenarioSpec) -> Ensemble:
    """Materialize the initial ensemble of a scenario."""
    if isinstance(spec.init, GeneratorInit):
        return generate_initial(spec.init, spec.params, spec.sim.collision_tol)
    ensemble = Ensemble.from_rows(spec.init.states, spec.init.positions)
    if ensemble.n != spec.params.n or ensemble.d != spec.params.d:
        raise ScenarioError(
            f"explicit init is {ensemble.n} particles in {ensemble.d}-d, "
            f"params say {spec.params.n} in {spec.params.d}-d"
        )
    ensemble.validate()
    return ensemble


# ---------------------------------------------------------------------------
# presets

_PRESET_NOTES = {
    "fig1": "mild recovery, strong short-range contact (b=0.4, gamma=1, L=1)",
    "fig2": "mild recovery, steep kernels (alpha=2, beta=5, kappa2=10)",
    "fig3": "fast recovery, damped contact (b=1, gamma=3, L=3)",
    "fig4": "fast recovery, steep kernels (alpha=2, beta=5, kappa2=10)",
}


def preset_names() -> tuple[str, ...]:
    return tuple(_PRESET_NOTES)


def preset_scenario(name: str) -> ScenarioSpec:
    """One of the bundled 20-particle reference scenarios."""
    kernels = {
        "fig1": dict(alpha=1.0, beta=2.0, kappa2=1.0, kappa3=5.0),
        "fig2": dict(alpha=2.0, beta=5.0, kappa2=10.0, kappa3=1.0),
        "fig3": dict(alpha=1.0, beta=2.0, kappa2=1.0, kappa3=5.0),
        "fig4": dict(alpha=2.0, beta=5.0, kappa2=10.0, kappa3=1.0),
    }
    contact = {
        "fig1": dict(recovery=0.4, gamma_exp=1.0, l_offset=1.0),
        "fig2": dict(recovery=0.4, gamma_exp=1.0, l_offset=1.0),
        "fig3": dict(recovery=1.0, gamma_exp=3.0, l_offset=3.0),
        "fig4": dict(recovery=1.0, gamma_exp=3.0, l_offset=3.0),
    }
    if name not in kernels:
        raise ScenarioError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    params = ModelParams(
        n=20,
        d=2,
        kappa1=1.0,
        eps_a=0.2,
        eps_r=0.2,
        symptom=(1.0,),
        confirm_threshold=0.5,
        **kernels[name],
        **contact[name],
    )
    init = GeneratorInit(
        n_uninfected=16,
        n_infected=4,
        uninfected_state=(1.0, 0.0, 0.0),
        infected_state=(0.1, 0.9, 0.0),
        box_side=3.0,
        seed=PRESET_SEED,
    )
    return ScenarioSpec(params=params, sim=SimulationConfig(), init=init)


# ---------------------------------------------------------------------------
# file format

_SECTIONS = {"scenario", "params", "sim", "init"}
_PARAM_KEYS = {
    "n", "d", "kappa1", "kappa2", "kappa3", "alpha", "beta",
    "gamma_exp", "l_offset", "eps_a", "eps_r", "recovery", "symptom",
    "confirm_threshold",
}
_SIM_KEYS = {"dt", "t_end", "record_stride", "collision_tol", "drift_tol"}
_GENERATOR_KEYS = {
    "kind", "n_uninfected", "n_infected", "uninfected_state",
    "infected_state", "box_side", "seed",
}


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_tuple(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def _parse_floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise ScenarioError(f"{key}: cannot parse {text!r} as floats") from exc


def _take(section, key: str, convert, where: str):
    if key not in section:
        raise ScenarioError(f"missing key {key!r} in [{where}]")
    try:
        return convert(section[key])
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"[{where}] {key}: {exc}") from exc


def _check_keys(section, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def load_scenario(path) -> ScenarioSpec:
    """Parse a scenario file; see the module docstring for the grammar.

    Raises ScenarioError for structural problems (with line numbers, via the
    underlying parser) and ValueError naming the violated invariant for
    semantically bad values.
    """
    cp = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",)
    )
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc

    _check_keys(set(cp.sections()), _SECTIONS, "file")
    for required in ("scenario", "params", "init"):
        if required not in cp:
            raise ScenarioError(f"missing [{required}] section")

    meta = cp["scenario"]
    _check_keys(meta, {"format_version"}, "scenario")
    version = _take(meta, "format_version", int, "scenario")
    if version != FORMAT_VERSION:
        raise ScenarioError(
            f"unsupported format_version {version}, expected {FORMAT_VERSION}"
        )

    psec = cp["params"]
    _check_keys(psec, _PARAM_KEYS, "params")
    params = ModelParams(
        n=_take(psec, "n", int, "params"),
        d=_take(psec, "d", int, "params"),
        kappa1=_take(psec, "kappa1", float, "params"),
        kappa2=_take(psec, "kappa2", float, "params"),
        kappa3=_take(psec, "kappa3", float, "params"),
        alpha=_take(psec, "alpha", float, "params"),
        beta=_take(psec, "beta", float, "params"),
        gamma_exp=_take(psec, "gamma_exp", float, "params"),
        l_offset=_take(psec, "l_offset", float, "params"),
        eps_a=_take(psec, "eps_a", float, "params"),
        eps_r=_take(psec, "eps_r", float, "params"),
        recovery=_take(psec, "recovery", lambda v: _parse_floats(v, "recovery"), "params"),
        symptom=_parse_floats(psec.get("symptom", "1.0"), "symptom"),
        confirm_threshold=float(psec.get("confirm_threshold", "0.5")),
    )

    defaults = SimulationConfig()
    if "sim" in cp:
        ssec = cp["sim"]
        _check_keys(ssec, _SIM_KEYS, "sim")
        sim = SimulationConfig(
            dt=float(ssec.get("dt", defaults.dt)),
            t_end=float(ssec.get("t_end", defaults.t_end)),
            record_stride=int(ssec.get("record_stride", defaults.record_stride)),
            collision_tol=float(ssec.get("collision_tol", defaults.collision_tol)),
            drift_tol=float(ssec.get("drift_tol", defaults.drift_tol)),
        )
    else:
        sim = defaults

    isec = cp["init"]
    kind = _take(isec, "kind", str, "init")
    if kind == "generator":
        _check_keys(isec, _GENERATOR_KEYS, "init")
        init: GeneratorInit | ExplicitInit = GeneratorInit(
            n_uninfected=_take(isec, "n_uninfected", int, "init"),
            n_infected=_take(isec, "n_infected", int, "init"),
            uninfected_state=_parse_floats(
                _take(isec, "uninfected_state", str, "init"), "uninfected_state"
            ),
            infected_state=_parse_floats(
                _take(isec, "infected_state", str, "init"), "infected_state"
            ),
            box_side=_take(isec, "box_side", float, "init"),
            seed=_take(isec, "seed", int, "init"),
        )
    elif kind == "explicit":
        n = params.n
        allowed = {"kind"} | {f"state_{i}" for i in range(n)} | {
            f"position_{i}" for i in range(n)
        }
        _check_keys(isec, allowed, "init")
        init = ExplicitInit(
            states=tuple(
                _parse_floats(_take(isec, f"state_{i}", str, "init"), f"state_{i}")
                for i in range(n)
            ),
            positions=tuple(
                _parse_floats(
                    _take(isec, f"position_{i}", str, "init"), f"position_{i}"
                )
                for i in range(n)
            ),
        )
    else:
        raise ScenarioError(f"init kind must be 'generator' or 'explicit', got {kind!r}")

    return ScenarioSpec(params=params, sim=sim, init=init, format_version=version)


def _collapse(values: tuple[float, ...]) -> str:
    if len(set(values)) == 1:
        return _fmt(values[0])
    return _fmt_tuple(values)


def write_scenario(spec: ScenarioSpec, path) -> None:
    """Write a scenario file that loads back equal to spec."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"format_version": str(spec.format_version)}
    p = spec.params
    cp["params"] = {
        "n": str(p.n),
        "d": str(p.d),
        "kappa1": _fmt(p.kappa1),
        "kappa2": _fmt(p.kappa2),
        "kappa3": _fmt(p.kappa3),
        "alpha": _fmt(p.alpha),
        "beta": _fmt(p.beta),
        "gamma_exp": _fmt(p.gamma_exp),
        "l_offset": _fmt(p.l_offset),
        "eps_a": _fmt(p.eps_a),
        "eps_r": _fmt(p.eps_r),
        "recovery": _collapse(p.recovery),
        "symptom": _collapse(p.symptom),
        "confirm_threshold": _fmt(p.confirm_threshold),
    }
    s = spec.sim
    cp["sim"] = {
        "dt": _fmt(s.dt),
        "t_end": _fmt(s.t_end),
        "record_stride": str(s.record_stride),
        "collision_tol": _fmt(s.collision_tol),
        "drift_tol": _fmt(s.drift_tol),
    }
    if isinstance(spec.init, GeneratorInit):
        g = spec.init
        cp["init"] = {
            "kind": "generator",
            "n_uninfected": str(g.n_uninfected),
            "n_infected": str(g.n_infected),
            "uninfected_state": _fmt_tuple(g.uninfected_state),
            "infected_state": _fmt_tuple(g.infected_state),
            "box_side": _fmt(g.box_side),
            "seed": str(g.seed),
        }
    else:
        rows = {"kind": "explicit"}
        for i, state in enumerate(spec.init.states):
            rows[f"state_{i}"] = _fmt_tuple(state)
        for i, position in enumerate(spec.init.positions):
            rows[f"position_{i}"] = _fmt_tuple(position)
        cp["init"] = rows
    buf = io.StringIO()
    cp.write(buf)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def with_overrides(
    spec: ScenarioSpec,
    dt: float | None = None,
    t_end: float | None = None,
    record_stride: int | None = None,
    seed: int | None = None,
    kappa2: float | None = None,
    kappa3: float | None = None,
) -> ScenarioSpec:
    """Copy of spec with selected knobs replaced (used by the CLI)."""
    sim_changes = {}
    if dt is not None:
        sim_changes["dt"] = dt
    if t_end is not None:
        sim_changes["t_end"] = t_end
    if record_stride is not None:
        sim_changes["record_stride"] = record_stride
    param_changes = {}
    if kappa2 is not None:
        param_changes["kappa2"] = kappa2
    if kappa3 is not None:
        param_changes["kappa3"] = kappa3
    sim = dataclasses.replace(spec.sim, **sim_changes) if sim_changes else spec.sim
    params = (
        dataclasses.replace(spec.params, **param_changes) if param_changes else spec.params
    )
    init = spec.init
    if seed is not None:
        if not isinstance(init, GeneratorInit):
            raise ScenarioError("--seed only applies to generator scenarios")
        init = dataclasses.replace(init, seed=seed)
    return ScenarioSpec(params=params, sim=sim, init=init, format_version=spec.format_version)
