"""Empirical propagation of chaos by synchronous coupling.

The N-particle system is coupled with N independent copies that feel the
mean field of a large reference ensemble instead of their own empirical
moment.  Both start from the same initial states, so the averaged squared
phase gap measures how far finite-N interaction is from the mean-field limit.
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .errors import InvalidConfig, NonFiniteState
from .product import Ensemble, is_finite, phase_distance_sq
from .rng import RngStream


@dataclass(frozen=True)
class ChaosConfig:
    n_list: tuple = (8, 16, 32, 64, 128)
    n_ref: int = 1024
    t_end: float = 2.0
    h_ode: float = 0.01
    n_seeds: int = 8
    eps: float = 1.0
    gamma: float = 1.0
    position_scale: float = None  # default 1/sqrt(cols) per block
    momentum_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if not self.n_list or min(self.n_list) < 1:
            raise InvalidConfig("n_list must hold positive particle counts")
        if self.n_ref < 8 * max(self.n_list):
            raise InvalidConfig(f"n_ref={self.n_ref} must be >= 8 * max(n_list)")
        if self.t_end < 0 or self.h_ode <= 0 or self.n_seeds < 1:
            raise InvalidConfig("need t_end >= 0, h_ode > 0 and n_seeds >= 1")
        if self.eps <= 0 or self.gamma <= 0:
            raise InvalidConfig("eps and gamma must be positive")

    @property
    def n_steps(self):
        return dynamics.n_steps_for(self.t_end, self.h_ode)


def initial_states(shape, n, seed, position_scale=None, momentum_scale=0.5):
    """``n`` i.i.d. phase states drawn particle by particle.

    Particle ``i`` is drawn from its own substream, so the first ``k`` states
    are identical for every ``n >= k``.
    """
    root = RngStream(seed).child("chaos_initial")
    theta = [np.empty((n,) + b) for b in shape]
    p = [np.empty((n,) + b) for b in shape]
    for i in range(n):
        rng = root.child(i)
        for b, (rows, cols) in enumerate(shape):
            s = position_scale if position_scale is not None else 1.0 / np.sqrt(cols)
            theta[b][i] = s * rng.normal((rows, cols))
        for b, (rows, cols) in enumerate(shape):
            p[b][i] = momentum_scale * rng.normal((rows, cols)) / np.sqrt(cols)
    return Ensemble(tuple(theta), tuple(p))


@dataclass
class Reference:
    """Initial ensemble and RK4 stage moments of the reference system."""

    init: Ensemble
    moments: list  # moments[k][stage]


def reference_run(obj, cfg, seed):
    ens = initial_states(obj.shape, cfg.n_ref, seed, cfg.position_scale, cfg.momentum_scale)
    rule = dynamics.RegularizedMuon(cfg.eps)
    moments = []
    stage_m = [None] * 4

    def field(theta, p, stage):
        m = obj.moment(theta)
        stage_m[stage] = m
        forces = obj.forces_from_moment(theta, m)
        g = rule.direction(p)
        return tuple(-x for x in g), tuple(cfg.gamma * (a - q) for a, q in zip(forces, p))

    theta, p = ens.theta, ens.p
    for k in range(cfg.n_steps):
        theta, p = dynamics.rk4_step(theta, p, field, cfg.h_ode)
        moments.append(tuple(stage_m))
        if not (is_finite(theta) and is_finite(p)):
            raise NonFiniteState(f"reference run diverged at step {k + 1}", step=k)
    return Reference(ens, moments)


def coupled_error(obj, cfg, N, seed, reference=None):
    """Sup over RK4 steps of the mean squared phase gap per particle.

    The mean-field copies replay the reference system's exact RK4 stage
    moments, so with ``N = n_ref`` the two systems coincide.
    """
    if not 1 <= N <= cfg.n_ref:
        raise InvalidConfig(f"N={N} must lie in [1, n_ref]")
    if reference is None:
        reference = reference_run(obj, cfg, seed)
    start = reference.init.head(N)
    copies0 = reference.init.head(N)
    if start.digest() != copies0.digest():
        raise InvalidConfig("coupled systems do not share initial states")
    rule = dynamics.RegularizedMuon(cfg.eps)
    interacting = dynamics.particle_field(obj, cfg.gamma, rule)
    step_m = [None]

    def frozen(theta, p, stage):
        forces = obj.forces_from_moment(theta, step_m[0][stage])
        g = rule.direction(p)
        return tuple(-x for x in g), tuple(cfg.gamma * (a - q) for a, q in zip(forces, p))

    xa, pa = start.theta, start.p
    xb, pb = copies0.theta, copies0.p
    worst = 0.0
    for k in range(cfg.n_steps):
        xa, pa = dynamics.rk4_step(xa, pa, interacting, cfg.h_ode)
        step_m[0] = reference.moments[k]
        xb, pb = dynamics.rk4_step(xb, pb, frozen, cfg.h_ode)
        gap = float(np.mean(phase_distance_sq(Ensemble(xa, pa), Ensemble(xb, pb))))
        if not np.isfinite(gap):
            raise NonFiniteState(f"coupled run diverged at step {k + 1}", step=k)
        worst = max(worst, gap)
    return worst


@dataclass
class ChaosResult:
    slope: float
    intercept: float
    errors: dict  # N -> seed-averaged sup error
    per_seed: dict  # N -> list of per-seed errors
    c_poc: float  # max over N of N * error


def chaos_rate(obj, cfg, seeds=None):
    """Fit ``log(error) ~ slope * log(N) + intercept`` over ``cfg.n_list``."""
    seeds = list(range(cfg.n_seeds)) if seeds is None else list(seeds)
    per_seed = {n: [] for n in cfg.n_list}
    for seed in seeds:
        ref = reference_run(obj, cfg, seed)
        for n in cfg.n_list:
            per_seed[n].append(coupled_error(obj, cfg, n, seed, ref))
    errors = {n: float(np.mean(v)) for n, v in per_seed.items()}
    slope, intercept = fit_rate(list(errors), list(errors.values()))
    c_poc = max(n * e for n, e in errors.items())
    return ChaosResult(slope, intercept, errors, per_seed, c_poc)


def fit_rate(n_list, errors):
    if len(n_list) < 2:
        raise InvalidConfig("need at least two particle counts to fit a rate")
    return dynamics.loglog_slope(n_list, errors)
