"""Energy, dissipation and rate diagnostics along particle trajectories."""

from dataclasses import astuple, dataclass, fields
from typing import NamedTuple

import numpy as np

from . import spectral
from .errors import (
    InvalidInput,
    NonPositiveField,
    NoRetainedSamples,
    TooFewRecords,
)
from .product import avg_inner


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    t: float
    J: float
    K: float
    D: float
    A: float
    C: float
    U: float
    H: float
    L: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_tuple(self):
        return astuple(self)

    def consistent(self, gamma, alpha):
        """True when H = K + gamma U and L = H - alpha C recompute exactly."""
        return self.H == self.K + gamma * self.U and self.L == self.H - alpha * self.C


def _ordered_mean(x):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    total = 0.0
    for v in x:
        total += float(v)
    return total / len(x)


def make_record(ens, value, forces, kin, dis, gamma, alpha, j_star=0.0):
    """Assemble a record from precomputed per-particle kinetic terms."""
    K = _ordered_mean(kin)
    D = _ordered_mean(dis)
    A = avg_inner(forces, forces)
    C = avg_inner(forces, ens.p)
    U = float(value) - j_star
    H = K + gamma * U
    L = H - alpha * C
    return DiagnosticsRecord(int(ens.step), float(ens.time), float(value), K, D, A, C, U, H, L)


def energies(obj, ens, eps, gamma, alpha=0.01, j_star=None):
    """Diagnostics of one ensemble under the regularized kinetic potential."""
    eps = spectral.check_eps(eps)
    if j_star is None:
        j_star = obj.j_star
    value, forces = obj.value_and_forces(ens.theta)
    if value < j_star:
        raise InvalidInput(f"j_star={j_star} exceeds the objective value {value}")
    kin = 0.0
    dis = 0.0
    for b in ens.p:
        s = spectral.singular_values(b)
        kin = kin + spectral.psi_from_sv(s, eps)
        dis = dis + spectral.dissipation_from_sv(s, eps)
    return make_record(ens, value, forces, kin, dis, gamma, alpha, j_star)


def dissipation_residual(records, gamma):
    """Largest centered-difference violation of ``dH/dt = -gamma D``.

    Uses interior samples only; the sampling step may vary but must be
    positive.
    """
    if len(records) < 3:
        raise TooFewRecords("need at least three records")
    t = np.array([r.t for r in records])
    H = np.array([r.H for r in records])
    D = np.array([r.D for r in records])
    dt = t[2:] - t[:-2]
    if np.any(dt <= 0):
        raise InvalidInput("record times must be strictly increasing")
    resid = (H[2:] - H[:-2]) / dt + gamma * D[1:-1]
    return float(np.max(np.abs(resid)))


class KineticConstants(NamedTuple):
    kappa_K: float
    kappa_D: float
    L_G: float
    chi: float


def kinetic_constants(B_P, eps):
    """Coercivity constants of the regularized potential on ``||P|| <= B_P``."""
    if not B_P >= 0 or not np.isfinite(B_P):
        raise InvalidInput("B_P must be a finite nonnegative real")
    if not eps > 0:
        raise InvalidInput("eps must be positive")
    r2 = B_P * B_P + eps * eps
    return KineticConstants(eps * eps / r2**1.5, 1.0 / np.sqrt(r2), 1.0 / eps, 1.0)


def kinetic_violations(p, eps, kc, rtol=1e-12):
    """Count samples breaking each coercivity inequality.

    ``p`` is a stacked momentum tuple; the returned dict maps inequality name
    to the number of particles violating it beyond ``rtol`` relative slack.
    """
    sq = 0.0
    kin = 0.0
    dis = 0.0
    gsq = 0.0
    for b in p:
        u, s, v = spectral.thin_svd(b)
        sq = sq + np.sum(b * b, axis=(-2, -1))
        kin = kin + spectral.psi_from_sv(s, eps)
        dis = dis + spectral.dissipation_from_sv(s, eps)
        f = s / np.hypot(s, eps)
        gsq = gsq + np.sum(f * f, axis=-1)
    slack = rtol * np.maximum(sq, 1e-300)
    return {
        "psi_lower": int(np.sum(kin < 0.5 * kc.kappa_K * sq - slack)),
        "dissipation_lower": int(np.sum(dis < kc.kappa_D * sq - slack)),
        "psi_upper": int(np.sum(kin > kc.chi * dis + slack)),
        "lipschitz": int(np.sum(np.sqrt(gsq) > kc.L_G * np.sqrt(sq) * (1 + rtol))),
    }


@dataclass(frozen=True)
class RateInputs:
    gamma: float
    alpha: float
    r: float
    sigma: float
    lam: float
    Lam: float
    kinetic: KineticConstants

    def __post_init__(self):
        if not (self.gamma > 0 and self.lam > 0 and self.alpha > 0):
            raise InvalidInput("gamma, lambda and alpha must be positive")
        if self.Lam < self.lam:
            raise InvalidInput("Lambda must be >= lambda")
        if not 0 < self.r < 2:
            raise InvalidInput("r must lie in (0, 2)")
        if self.sigma < 0:
            raise InvalidInput("sigma must be nonnegative")

    @property
    def M_C(self):
        return float(np.sqrt(self.Lam / (self.gamma * self.kinetic.kappa_K)))


class ContinuousRate(NamedTuple):
    M_C: float
    d_ar: float
    c_ar: float
    feasible: bool


class DiscreteRate(NamedTuple):
    d_h: float
    a_h: float
    q_h: float
    c_h: float
    h_star: float
    feasible: bool


def continuous_rate(ri):
    """Exponential rate of the modified Lyapunov functional in continuous time."""
    kc = ri.kinetic
    M_C = ri.M_C
    d = ri.gamma - ri.alpha * ri.sigma - ri.alpha * ri.gamma / (2.0 * ri.r * kc.kappa_D)
    c = min(d / kc.chi, 2.0 * ri.lam * ri.alpha * (1.0 - ri.r / 2.0)) / (1.0 + ri.alpha * M_C)
    return ContinuousRate(M_C, float(d), float(c), bool(ri.alpha * M_C < 1.0 and d > 0.0))


def curvature_sigma(kc, M_D, M_D2, M_R, M_R2):
    """Curvature remainder ``sigma`` and ``B_curv`` from smoothness bounds."""
    b_curv = M_R * M_D2 + M_D * M_D * M_R2
    return kc.L_G * b_curv / kc.kappa_D, b_curv


def discrete_rate(ri, h, B_curv):
    """Fixed-step contraction constants for the semi-implicit scheme.

    ``feasible`` requires ``alpha M_C < 1``, ``d_h > 0``, ``a_h > 0`` and
    ``h c_h <= 1``.
    """
    g, al, r, lam = ri.gamma, ri.alpha, ri.r, ri.lam
    kc = ri.kinetic
    if not 0 < h < 1.0 / g:
        raise InvalidInput(f"h={h} must lie in (0, 1/gamma)")
    if B_curv < 0:
        raise InvalidInput("B_curv must be nonnegative")
    beta = 1.0 - g * h
    M_C = ri.M_C
    d_h = (
        g
        - al * ri.sigma
        - al * g / (2.0 * r * beta * kc.kappa_D)
        - h * kc.L_G**2 / (2.0 * kc.kappa_D) * (g * g / beta + g * B_curv)
    )
    a_h = al * g * (1.0 - r / (2.0 * beta)) - g * g * h / (2.0 * beta)
    q_h = min(
        d_h * beta**2 * kc.kappa_D / kc.L_G,
        a_h / (g / (2.0 * lam) + kc.L_G * g * g * h * h / beta**2),
    )
    c_h = q_h / (1.0 + al * M_C)

    d0 = g - al * ri.sigma - al * g / (2.0 * r * kc.kappa_D)
    a0 = al * g * (1.0 - r / 2.0)
    if d0 > 0 and a0 > 0:
        B_d = al * g * g / (r * kc.kappa_D) + kc.L_G**2 / (2.0 * kc.kappa_D) * (2.0 * g * g + g * B_curv)
        B_a = g * g * (1.0 + al * r)
        q_star = min(
            d0 * kc.kappa_D / (8.0 * kc.L_G),
            a0 / (2.0 * (g / (2.0 * lam) + 4.0 * kc.L_G * g * g)),
        )
        c_star = q_star / (1.0 + al * M_C)
        h_star = min(
            1.0,
            1.0 / (2.0 * g),
            d0 / (2.0 * B_d) if B_d > 0 else np.inf,
            a0 / (2.0 * B_a) if B_a > 0 else np.inf,
            1.0 / c_star,
        )
    else:
        h_star = 0.0
    feasible = bool(al * M_C < 1.0 and d_h > 0 and a_h > 0 and h * c_h <= 1.0)
    return DiscreteRate(d_h, a_h, q_h, c_h, float(h_star), feasible)


def pl_estimator(records, u_floor=None):
    """Empirical PL and upper-gradient constants ``min/max A / (2U)``.

    Samples with ``U <= u_floor`` are skipped; the default floor is
    ``1e-12 * U_0``.
    """
    if not records:
        raise NoRetainedSamples("no records")
    if u_floor is None:
        u_floor = 1e-12 * records[0].U
    ratios = [r.A / (2.0 * r.U) for r in records if r.U > u_floor]
    if not ratios:
        raise NoRetainedSamples(f"no sample with U above {u_floor}")
    return min(ratios), max(ratios)


def exp_fit(records, field="U", window=None):
    """Decay rate from a least-squares fit of ``log(field)`` against ``t``."""
    if field not in ("U", "H", "L", "J", "K", "D"):
        raise InvalidInput(f"unsupported field {field!r}")
    sel = records if window is None else records[window]
    t = np.array([r.t for r in sel])
    y = np.array([getattr(r, field) for r in sel])
    if len(sel) < 2:
        raise TooFewRecords("need two samples to fit a rate")
    if np.any(y <= 0):
        raise NonPositiveField(f"{field} is not positive on the window")
    slope = np.polyfit(t, np.log(y), 1)[0]
    return float(-slope) + 0.0
