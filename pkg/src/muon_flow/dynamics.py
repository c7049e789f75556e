"""Particle dynamics for regularized Muon and its comparators.

The discrete scheme updates momentum first from forces at the current
positions, then moves positions along ``G(P_{k+1})`` where ``G`` is the
update rule's momentum-to-velocity map.  Under the inertial scaling
``eta = h, beta = 1 - gamma h`` it is the semi-implicit Euler discretization
of ``theta' = -G(P), P' = gamma (a(theta) - P)``.
"""

from dataclasses import dataclass

import numpy as np

from . import spectral
from .diagnostics import make_record
from .errors import InvalidInput, InvalidScaling, NonFiniteState
from .product import Ensemble, avg_distance, is_finite, particle_norms


@dataclass(frozen=True)
class RegularizedMuon:
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "eps", spectral.check_eps(self.eps))

    smooth = True

    @property
    def label(self):
        return f"regularized_eps{self.eps:.0e}"

    def direction(self, p):
        return tuple(spectral.orth_eps(b, self.eps) for b in p)

    def direction_and_kinetic(self, p):
        """Velocity plus per-particle kinetic energy and dissipation, one SVD per block."""
        out, kin, dis = [], 0.0, 0.0
        for b in p:
            u, s, v = spectral.thin_svd(b)
            out.append(spectral._assemble(u, s / np.hypot(s, self.eps), v))
            kin = kin + spectral.psi_from_sv(s, self.eps)
            dis = dis + spectral.dissipation_from_sv(s, self.eps)
        return tuple(out), kin, dis

    def kinetic(self, p):
        return self.direction_and_kinetic(p)[1:]


@dataclass(frozen=True)
class HardMuon:
    smooth = False
    label = "hard"

    def direction(self, p):
        return tuple(spectral.orth_hard(b) for b in p)

    def direction_and_kinetic(self, p):
        # kinetic potential of the hard map is the nuclear norm
        out, nuc = [], 0.0
        for b in p:
            u, s, v = spectral.thin_svd(b)
            out.append(spectral._assemble(u, (s > 0.0).astype(np.float64), v))
            nuc = nuc + np.sum(s, axis=-1)
        return tuple(out), nuc, nuc

    def kinetic(self, p):
        nuc = sum(np.sum(spectral.singular_values(b), axis=-1) for b in p)
        return nuc, nuc


@dataclass(frozen=True)
class NewtonSchulzMuon:
    iters: int = 5

    def __post_init__(self):
        if int(self.iters) < 1:
            raise InvalidInput("Newton-Schulz needs at least one iteration")

    smooth = False
    label = "newton_schulz"

    def direction(self, p):
        return tuple(spectral.newton_schulz5(b, self.iters) for b in p)

    def direction_and_kinetic(self, p):
        kin, dis = HardMuon().kinetic(p)
        return self.direction(p), kin, dis

    def kinetic(self, p):
        return HardMuon().kinetic(p)


@dataclass(frozen=True)
class EuclideanMomentum:
    smooth = False
    label = "euclidean"

    def direction(self, p):
        return tuple(np.array(b, dtype=np.float64) for b in p)

    def direction_and_kinetic(self, p):
        sq = sum(np.sum(b * b, axis=(-2, -1)) for b in p)
        return self.direction(p), 0.5 * sq, sq

    def kinetic(self, p):
        return self.direction_and_kinetic(p)[1:]


def rule_from_name(name, eps=None, iters=5):
    name = name.strip().lower()
    if name in ("regularized", "regularized_muon", "reg"):
        return RegularizedMuon(eps)
    if name in ("hard", "hard_muon"):
        return HardMuon()
    if name in ("newton_schulz", "ns", "newton_schulz_muon"):
        return NewtonSchulzMuon(iters)
    if name in ("euclidean", "euclidean_momentum", "heavy_ball"):
        return EuclideanMomentum()
    raise InvalidInput(f"unknown update rule {name!r}")


@dataclass(frozen=True)
class StepParams:
    eta: float
    beta: float
    gamma: float
    h: float

    def __post_init__(self):
        if not (self.eta > 0 and self.gamma > 0 and self.h > 0):
            raise InvalidInput("eta, gamma and h must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidInput("beta must lie in (0, 1]")


def inertial_params(h, gamma):
    """Inertial scaling ``eta = h``, ``beta = 1 - gamma h``."""
    h, gamma = float(h), float(gamma)
    if h <= 0 or gamma <= 0:
        raise InvalidScaling("h and gamma must be positive")
    if gamma * h >= 1.0:
        raise InvalidScaling(f"gamma * h = {gamma * h} must be < 1")
    return StepParams(eta=h, beta=1.0 - gamma * h, gamma=gamma, h=h)


def _advance(ens, forces, sp, rule):
    beta = sp.beta
    p_new = tuple(beta * p + (1.0 - beta) * a for p, a in zip(ens.p, forces))
    if not is_finite(p_new):
        raise NonFiniteState(f"non-finite momentum at step {ens.step + 1}", step=ens.step)
    g, kin, dis = rule.direction_and_kinetic(p_new)
    theta_new = tuple(t - sp.eta * d for t, d in zip(ens.theta, g))
    return ens.evolve(theta_new, p_new, sp.h), kin, dis


def discrete_step(obj, ens, sp, rule):
    """One momentum-first step with forces from the current positions."""
    forces = obj.forces(ens.theta)
    return _advance(ens, forces, sp, rule)[0]


def run_discrete(obj, ens0, sp, rule, n_steps, alpha=0.01, stride=1, callback=None):
    """Iterate the discrete scheme and collect diagnostics.

    Records are taken every ``stride`` steps and at the final step; the
    kinetic terms use the rule's own potential.  ``callback(ens, forces)`` is
    invoked at every step before the update.  Returns ``(final, records)``.
    A non-finite state raises NonFiniteState carrying the records so far.
    """
    if n_steps < 0:
        raise InvalidInput("n_steps must be nonnegative")
    ens = ens0
    kin, dis = rule.kinetic(ens.p)
    records = []
    for k in range(n_steps + 1):
        value, forces = obj.value_and_forces(ens.theta)
        if callback is not None:
            callback(ens, forces)
        if k % stride == 0 or k == n_steps:
            records.append(make_record(ens, value, forces, kin, dis, sp.gamma, alpha, obj.j_star))
        if k == n_steps:
            break
        try:
            nxt, kin, dis = _advance(ens, forces, sp, rule)
        except NonFiniteState as exc:
            raise NonFiniteState(str(exc), records, ens.step) from None
        if not nxt.is_finite():
            raise NonFiniteState(f"non-finite state at step {nxt.step}", records, ens.step)
        ens = nxt
    return ens, records


def ode_rhs(obj, ens, gamma, rule):
    """Right-hand side ``(-G(P_i), gamma (a_i - P_i))`` of the particle ODE."""
    theta = ens.theta if isinstance(ens, Ensemble) else ens[0]
    p = ens.p if isinstance(ens, Ensemble) else ens[1]
    forces = obj.forces(theta)
    g = rule.direction(p)
    return (
        tuple(-x for x in g),
        tuple(gamma * (a - q) for a, q in zip(forces, p)),
    )


def rk4_step(theta, p, field, h):
    """Classical fourth-order step; ``field(theta, p, stage)`` returns derivatives."""

    def shift(x, dx, c):
        return tuple(a + c * b for a, b in zip(x, dx))

    k1t, k1p = field(theta, p, 0)
    k2t, k2p = field(shift(theta, k1t, 0.5 * h), shift(p, k1p, 0.5 * h), 1)
    k3t, k3p = field(shift(theta, k2t, 0.5 * h), shift(p, k2p, 0.5 * h), 2)
    k4t, k4p = field(shift(theta, k3t, h), shift(p, k3p, h), 3)
    theta_new = tuple(
        x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for x, a, b, c, d in zip(theta, k1t, k2t, k3t, k4t)
    )
    p_new = tuple(
        x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for x, a, b, c, d in zip(p, k1p, k2p, k3p, k4p)
    )
    return theta_new, p_new


def n_steps_for(t_end, h):
    n = int(round(t_end / h))
    if abs(n * h - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise InvalidInput(f"t_end={t_end} is not a multiple of h={h}")
    return n


def particle_field(obj, gamma, rule):
    def field(theta, p, stage):
        forces = obj.forces(theta)
        g = rule.direction(p)
        return tuple(-x for x in g), tuple(gamma * (a - q) for a, q in zip(forces, p))

    return field


def integrate_rk4(obj, ens, gamma, eps, h_ode, t_end, stride=1, rule=None):
    """RK4 trajectory of the regularized particle ODE, sampled every ``stride`` steps.

    The first and last states are always included.  Only the smooth
    (Lipschitz) regularized field is accepted; passing a non-smooth ``rule``
    raises InvalidInput.
    """
    if h_ode <= 0:
        raise InvalidInput("h_ode must be positive")
    if rule is not None and not rule.smooth:
        raise InvalidInput(f"rule {rule.label} is not a Lipschitz field")
    rule = RegularizedMuon(eps)
    field = particle_field(obj, gamma, rule)
    n = n_steps_for(t_end, h_ode)
    traj = [ens]
    cur = ens
    for k in range(n):
        theta, p = rk4_step(cur.theta, cur.p, field, h_ode)
        if not (is_finite(theta) and is_finite(p)):
            raise NonFiniteState(f"non-finite RK4 state at step {k + 1}", step=k)
        cur = cur.evolve(theta, p, h_ode)
        if (k + 1) % stride == 0 or k + 1 == n:
            traj.append(cur)
    return traj


def run_discrete_states(obj, ens0, sp, rule, n_steps):
    ens = ens0
    for _ in range(n_steps):
        ens = discrete_step(obj, ens, sp, rule)
        if not ens.is_finite():
            raise NonFiniteState(f"non-finite state at step {ens.step}", step=ens.step)
    return ens


def ode_limit_check(obj, ens0, gamma, eps, t_end, h_list, ref_factor=20):
    """Endpoint error of the discrete scheme against a fine RK4 reference.

    The reference uses ``h_ode = min(h_list) / ref_factor``; errors are root
    mean-field phase distances, one per entry of ``h_list``.
    """
    h_list = [float(h) for h in h_list]
    if t_end == 0:
        return [0.0 for _ in h_list]
    h_ref = min(h_list) / ref_factor
    ref = integrate_rk4(obj, ens0, gamma, eps, h_ref, t_end, stride=10**9)[-1]
    rule = RegularizedMuon(eps)
    errors = []
    for h in h_list:
        sp = inertial_params(h, gamma)
        end = run_discrete_states(obj, ens0, sp, rule, n_steps_for(t_end, h))
        errors.append(avg_distance(end, ref))
    return errors


def loglog_slope(x, y):
    """Least-squares slope and intercept of log(y) against log(x)."""
    lx = np.log(np.asarray(x, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


@dataclass
class SweepResult:
    label: str
    eps: float
    final_value: float
    values: list
    max_divergence: float
    final: Ensemble


def eps_sweep(obj, ens0, sp, eps_list, n_steps):
    """Run the regularized scheme for each eps alongside one hard-Muon run.

    Every run advances in lockstep with the hard run so that the phase-space
    divergence from it can be tracked at each step without storing
    trajectories.  The hard run comes first in the result list.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise InvalidInput("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidInput("eps values must be strictly decreasing")
    rules = [HardMuon()] + [RegularizedMuon(e) for e in eps_list]
    states = [ens0 for _ in rules]
    values = [[obj.value(ens0.theta)] for _ in rules]
    div = [0.0 for _ in rules]
    for _ in range(n_steps):
        for i, rule in enumerate(rules):
            states[i] = discrete_step(obj, states[i], sp, rule)
            if not states[i].is_finite():
                raise NonFiniteState(f"{rule.label} diverged at step {states[i].step}")
            values[i].append(obj.value(states[i].theta))
            if i > 0:
                div[i] = max(div[i], avg_distance(states[i], states[0]))
    return [
        SweepResult(r.label, getattr(r, "eps", 0.0), v[-1], v, d, s)
        for r, v, d, s in zip(rules, values, div, states)
    ]


def displacement_norms(before, after):
    """Per-particle position displacement in the product norm."""
    return particle_norms(tuple(a - b for a, b in zip(after.theta, before.theta)))
