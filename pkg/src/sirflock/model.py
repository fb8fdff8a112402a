"""Core types and right-hand sides for the epidemic-flocking particle model.

Each of the N particles carries

* an epidemic state W_i = (S_i, I_i, R_i) on the unit simplex
  (susceptible / infected / recovered probabilities), and
* a position x_i in R^d.

The two layers are coupled both ways:

* infection pressure on particle i is kappa1 * S_i * sum_j a_ij * I_j, where
  the contact weight a_ij = 1 / (|x_i - x_j| + l_offset)**gamma_exp decays
  with distance (and is capped at l_offset**-gamma_exp);
* pairwise motion is attraction/repulsion weighted by how similar two
  epidemic states are.  The similarity G = (1-I_i)(1-I_j) + I_i*I_j is 1 for
  two healthy or two fully infected particles and small for mixed pairs, so
  alike particles pull together and unlike ones push apart.

Velocities are

    dx_i/dt = kappa2/N * sum_{j!=i} (eps_a + G_ij) (x_j - x_i) / |x_j - x_i|**alpha
            + kappa3/N * sum_{j!=i} (1 + eps_r - G_ij) (x_i - x_j) / |x_i - x_j|**beta

with 1 <= alpha < beta, so repulsion dominates at short range and the kernel
is singular at contact; evaluation refuses pairs closer than a collision
tolerance rather than returning garbage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

# Pairs closer than this (length units) abort force evaluation; overridable
# per call / per simulation config.
DEFAULT_COLLISION_TOL = 1e-8

# Input-validation tolerances for epidemic states: coordinates may stray this
# far outside [0, 1], the three coordinates must sum to 1 this tightly.
STATE_COORD_TOL = 1e-12
STATE_SUM_TOL = 1e-9


class CollisionError(RuntimeError):
    """Two particles came closer than the collision tolerance."""

    def __init__(self, i: int, j: int, distance: float, time: float | None = None):
        self.i = int(i)
        self.j = int(j)
        self.distance = float(distance)
        self.time = None if time is None else float(time)
        where = "" if time is None else f" during the step starting at t={time:.9g}"
        super().__init__(
            f"particles {self.i} and {self.j} at distance {distance:.6e}{where}"
        )


@dataclass(frozen=True)
class EpidemicState:
    """Single-particle (S, I, R) probability triple."""

    s: float
    i: float
    r: float

    def validate(self) -> None:
        for name, v in (("s", self.s), ("i", self.i), ("r", self.r)):
            if not (-STATE_COORD_TOL <= v <= 1.0 + STATE_COORD_TOL):
                raise ValueError(f"state coordinate {name}={v} outside [0, 1]")
        total = self.s + self.i + self.r
        if abs(total - 1.0) > STATE_SUM_TOL:
            raise ValueError(f"state coordinates sum to {total}, expected 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.i, self.r], dtype=float)

    @classmethod
    def from_array(cls, w) -> "EpidemicState":
        s, i, r = (float(v) for v in w)
        return cls(s, i, r)


@dataclass(frozen=True)
class SpatialPosition:
    """Position in R^d, d >= 1."""

    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        if len(self.coords) < 1:
            raise ValueError("position needs at least one coordinate")
        if not all(math.isfinite(c) for c in self.coords):
            raise ValueError(f"non-finite position {self.coords}")

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)


def _coords(x) -> np.ndarray:
    if isinstance(x, SpatialPosition):
        return x.as_array()
    return np.asarray(x, dtype=float)


def _broadcast(value, n: int, name: str) -> tuple[float, ...]:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size == 1:
        arr = np.full(n, arr[0])
    if arr.size != n:
        raise ValueError(f"{name} needs 1 or {n} entries, got {arr.size}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ModelParams:
    """Model constants shared by every particle.

    Args:
        n: particle count, >= 1.
        d: spatial dimension, >= 1.
        kappa1: transmission rate, >= 0.
        kappa2: attraction strength, >= 0.
        kappa3: repulsion strength, >= 0.
        alpha: attraction kernel exponent, >= 1.
        beta: repulsion kernel exponent, > alpha.
        gamma_exp: contact-damping exponent, >= 0 (0 turns distance off).
        l_offset: contact-damping offset L > 0; caps a_ij at L**-gamma_exp.
        eps_a: attraction weight floor, > 0.
        eps_r: repulsion weight floor, > 0.
        recovery: per-particle recovery rate(s) b_i > 0; scalar broadcasts.
        symptom: per-particle symptom visibility in [0, 1]; scalar broadcasts.
        confirm_threshold: confirmed-case cutoff in [0, 1].
    """

    n: int
    d: int
    kappa1: float
    kappa2: float
    kappa3: float
    alpha: float
    beta: float
    gamma_exp: float
    l_offset: float
    eps_a: float
    eps_r: float
    recovery: tuple[float, ...]
    symptom: tuple[float, ...] = (1.0,)
    confirm_threshold: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        for name in ("kappa1", "kappa2", "kappa3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not self.alpha >= 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not self.beta > self.alpha:
            raise ValueError(
                f"beta must exceed alpha, got alpha={self.alpha}, beta={self.beta}"
            )
        if self.gamma_exp < 0:
            raise ValueError(f"gamma_exp must be >= 0, got {self.gamma_exp}")
        if not self.l_offset > 0:
            raise ValueError(f"l_offset must be > 0, got {self.l_offset}")
        if not self.eps_a > 0:
            raise ValueError(f"eps_a must be > 0, got {self.eps_a}")
        if not self.eps_r > 0:
            raise ValueError(f"eps_r must be > 0, got {self.eps_r}")
        object.__setattr__(self, "recovery", _broadcast(self.recovery, self.n, "recovery"))
        object.__setattr__(self, "symptom", _broadcast(self.symptom, self.n, "symptom"))
        if min(self.recovery) <= 0:
            raise ValueError("recovery rates must be > 0")
        if min(self.symptom) < 0 or max(self.symptom) > 1:
            raise ValueError("symptom values must lie in [0, 1]")
        if not 0.0 <= self.confirm_threshold <= 1.0:
            raise ValueError(
                f"confirm_threshold must lie in [0, 1], got {self.confirm_threshold}"
            )

    # Weight ranges implied by G in [0, 1].
    @property
    def attract_min(self) -> float:
        return self.eps_a

    @property
    def attract_max(self) -> float:
        return 1.0 + self.eps_a

    @property
    def repulse_min(self) -> float:
        return self.eps_r

    @property
    def repulse_max(self) -> float:
        return 1.0 + self.eps_r

    @property
    def adjacency_cap(self) -> float:
        return self.l_offset ** -self.gamma_exp

    def recovery_array(self) -> np.ndarray:
        return np.asarray(self.recovery, dtype=float)

    def symptom_array(self) -> np.ndarray:
        return np.asarray(self.symptom, dtype=float)


@dataclass
class Ensemble:
    """States (n, 3) and positions (n, d) for all particles."""

    states: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=float)
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 3:
            raise ValueError(f"states must have shape (n, 3), got {self.states.shape}")
        if self.positions.ndim != 2:
            raise ValueError(
                f"positions must have shape (n, d), got {self.positions.shape}"
            )
        if self.states.shape[0] != self.positions.shape[0]:
            raise ValueError(
                f"{self.states.shape[0]} states vs {self.positions.shape[0]} positions"
            )

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def state(self, i: int) -> EpidemicState:
        return EpidemicState.from_array(self.states[i])

    def position(self, i: int) -> SpatialPosition:
        return SpatialPosition(tuple(self.positions[i]))

    def copy(self) -> "Ensemble":
        return Ensemble(self.states.copy(), self.positions.copy())

    def validate(self, require_distinct: bool = True) -> None:
        """Check simplex membership of every state and, optionally, that all
        positions are pairwise distinct (the force kernel's hypothesis)."""
        if not np.all(np.isfinite(self.states)):
            raise ValueError("non-finite state coordinates")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite positions")
        lo = self.states.min()
        hi = self.states.max()
        if lo < -STATE_COORD_TOL or hi > 1.0 + STATE_COORD_TOL:
            raise ValueError(f"state coordinates outside [0, 1]: min={lo}, max={hi}")
        worst = np.abs(self.states.sum(axis=1) - 1.0).max()
        if worst > STATE_SUM_TOL:
            raise ValueError(f"state rows sum to 1 within {worst}, expected {STATE_SUM_TOL}")
        if require_distinct and self.n > 1:
            diff = self.positions[:, None, :] - self.positions[None, :, :]
            dist2 = np.einsum("ijk,ijk->ij", diff, diff)
            np.fill_diagonal(dist2, np.inf)
            if dist2.min() == 0.0:
                i, j = np.unravel_index(np.argmin(dist2), dist2.shape)
                raise ValueError(f"particles {i} and {j} share a position")

    @classmethod
    def from_rows(cls, states, positions) -> "Ensemble":
        return cls(np.array(states, dtype=float), np.array(positions, dtype=float))


# ---------------------------------------------------------------------------
# pairwise quantities


def similarity(wi: EpidemicState, wj: EpidemicState) -> float:
    """Epidemic-state similarity G = (1 - I_i)(1 - I_j) + I_i * I_j in [0, 1]."""
    return (1.0 - wi.i) * (1.0 - wj.i) + wi.i * wj.i


def attraction_weight(wi: EpidemicState, wj: EpidemicState, params: ModelParams) -> float:
    """eps_a + G: alike pairs attract hardest, floor eps_a, cap 1 + eps_a."""
    return params.eps_a + similarity(wi, wj)


def repulsion_weight(wi: EpidemicState, wj: EpidemicState, params: ModelParams) -> float:
    """1 + eps_r - G: unlike pairs repel hardest, floor eps_r, cap 1 + eps_r."""
    return 1.0 + params.eps_r - similarity(wi, wj)


def adjacency(xi, xj, i: int, j: int, params: ModelParams) -> float:
    """Contact weight a_ij = 1/(|x_i - x_j| + L)**gamma_exp, zero on the diagonal."""
    if i == j:
        return 0.0
    dist = float(np.linalg.norm(_coords(xi) - _coords(xj)))
    return (dist + params.l_offset) ** -params.gamma_exp


# ---------------------------------------------------------------------------
# right-hand sides

# The kernel walks each unordered pair exactly once.  Force contributions are
# applied equal-and-opposite from the same product, so pair momentum cancels
# structurally (floating subtraction is antisymmetric), and the transmission
# sums for both endpoints share the same a_ij.
@njit(cache=True)
def _rhs_kernel(
    states,
    positions,
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
    out_dstates,
    out_vel,
    trans,
):
    n, d = positions.shape
    c2 = kappa2 / n
    c3 = kappa3 / n
    d_min = np.inf
    p_min_i = -1
    p_min_j = -1
    for i in range(n):
        trans[i] = 0.0
        for k in range(d):
            out_vel[i, k] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = positions[j, k] - positions[i, k]
                acc += diff * diff
            dist = math.sqrt(acc)
            if dist < d_min:
                d_min = dist
                p_min_i = i
                p_min_j = j
            a = (dist + l_offset) ** -gamma_exp
            trans[i] += a * states[j, 1]
            trans[j] += a * states[i, 1]
            gi = states[i, 1]
            gj = states[j, 1]
            g = (1.0 - gi) * (1.0 - gj) + gi * gj
            coeff = (
                c2 * (eps_a + g) * dist**-alpha
                - c3 * (1.0 + eps_r - g) * dist**-beta
            )
            for k in range(d):
                contrib = coeff * (positions[j, k] - positions[i, k])
                out_vel[i, k] += contrib
                out_vel[j, k] -= contrib
    for i in range(n):
        # One shared transmission accumulator per particle: dS and dI reuse
        # the identical `flow` value, so dS + dR = -dI bit-exactly.
        flow = kappa1 * states[i, 0] * trans[i]
        w = recovery[i] * states[i, 1]
        out_dstates[i, 0] = -flow
        out_dstates[i, 1] = flow - w
        out_dstates[i, 2] = w
    return d_min, p_min_i, p_min_j


def _kernel_args(params: ModelParams) -> tuple:
    return (
        params.kappa1,
        params.kappa2,
        params.kappa3,
        params.alpha,
        params.beta,
        params.gamma_exp,
        params.l_offset,
        params.eps_a,
        params.eps_r,
        params.recovery_array(),
    )


def _require_match(ensemble: Ensemble, params: ModelParams) -> None:
    if ensemble.n != params.n:
        raise ValueError(f"ensemble has {ensemble.n} particles, params say {params.n}")
    if ensemble.d != params.d:
        raise ValueError(f"ensemble is {ensemble.d}-dimensional, params say {params.d}")


def _eval_rhs(ensemble: Ensemble, params: ModelParams):
    _require_match(ensemble, params)
    n, d = ensemble.n, ensemble.d
    dstates = np.empty((n, 3))
    vel = np.empty((n, d))
    trans = np.empty(n)
    d_min, i, j = _rhs_kernel(
        ensemble.states, ensemble.positions, *_kernel_args(params), dstates, vel, trans
    )
    return dstates, vel, d_min, i, j


def epidemic_rhs(ensemble: Ensemble, params: ModelParams) -> np.ndarray:
    """Time derivatives of every (S, I, R) triple, shape (n, 3).

    dS_i = -kappa1 * S_i * sum_j a_ij * I_j, recovery moves I to R at rate
    b_i.  Rows sum to zero by construction.  Coincident positions are
    rejected: the contact weight itself would stay finite, but they violate
    the model hypothesis and make the force field meaningless.
    """
    dstates, _, d_min, i, j = _eval_rhs(ensemble, params)
    if d_min <= 0.0:
        raise CollisionError(i, j, d_min)
    return dstates


def position_rhs(
    ensemble: Ensemble,
    params: ModelParams,
    collision_tol: float = DEFAULT_COLLISION_TOL,
) -> np.ndarray:
    """Velocities of all particles, shape (n, d).

    Raises CollisionError if any pair sits closer than collision_tol; the
    kernel is singular at contact.
    """
    _, vel, d_min, i, j = _eval_rhs(ensemble, params)
    if d_min < collision_tol:
        raise CollisionError(i, j, d_min)
    return vel


def full_rhs(
    ensemble: Ensemble,
    params: ModelParams,
    collision_tol: float = DEFAULT_COLLISION_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """(state derivatives, velocities) for the coupled system in one pass."""
    dstates, vel, d_min, i, j = _eval_rhs(ensemble, params)
    if d_min < collision_tol:
        raise CollisionError(i, j, d_min)
    return dstates, vel
