"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from sirflock import Ensemble, ModelParams


def make_params(n=4, d=2, **overrides) -> ModelParams:
    base = dict(
        n=n,
        d=d,
        kappa1=1.0,
        kappa2=1.0,
        kappa3=5.0,
        alpha=1.0,
        beta=2.0,
        gamma_exp=1.0,
        l_offset=1.0,
        eps_a=0.2,
        eps_r=0.2,
        recovery=0.4,
    )
    base.update(overrides)
    return ModelParams(**base)


def random_ensemble(rng, n=4, d=2, min_separation=0.3, box=4.0) -> Ensemble:
    """Random simplex states and well-separated positions in a box."""
    while True:
        positions = rng.uniform(0.0, box, (n, d))
        if n == 1:
            break
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= min_separation:
            break
    states = rng.dirichlet((1.0, 1.0, 1.0), size=n)
    return Ensemble(states, positions)


def euler_sup(a, b, p, q, y0, dt=1e-4, t_end=30.0) -> float:
    """Brute-force forward-Euler sup of dy/dt = -a*y**-p + b*y**-q."""
    y = float(y0)
    sup = y
    steps = int(round(t_end / dt))
    for _ in range(steps):
        y = y + dt * (-a * y**-p + b * y**-q)
        if y > sup:
            sup = y
    return sup
