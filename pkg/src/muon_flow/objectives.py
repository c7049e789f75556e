"""Probability objectives ``J(rho) = R(int F drho)`` and their particle lifts.

Each objective exposes the empirical moment ``m_N = (1/N) sum_i F(theta_i)``,
the value ``R(m_N)``, and the particle forces
``a_i = DF(theta_i)^* grad R(m_N)``.  Forces carry no ``1/N``: they are the
mean-field gradient, i.e. ``N`` times the coordinate gradient of ``J_N``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, ShapeMismatch
from .product import BlockShape, Ensemble


def _positions(x):
    return x.theta if isinstance(x, Ensemble) else tuple(x)


def _mean(stack):
    # sequential accumulation in particle-index order
    acc = np.zeros(stack.shape[1:])
    for row in stack:
        acc += row
    return acc / stack.shape[0]


class Objective:
    """Interface shared by the concrete objectives."""

    shape: BlockShape
    j_star = 0.0

    def moment(self, theta):
        raise NotImplementedError

    def value_from_moment(self, m):
        raise NotImplementedError

    def forces_from_moment(self, theta, m):
        raise NotImplementedError

    def check(self, theta):
        theta = _positions(theta)
        if not theta or np.ndim(theta[0]) != 3:
            raise ShapeMismatch("expected stacked (N, m, n) position blocks")
        self.shape.check_stack(theta, theta[0].shape[0])
        return theta

    def value(self, theta):
        theta = self.check(theta)
        return self.value_from_moment(self.moment(theta))

    def forces(self, theta):
        theta = self.check(theta)
        return self.forces_from_moment(theta, self.moment(theta))

    def value_and_forces(self, theta):
        theta = self.check(theta)
        m = self.moment(theta)
        return self.value_from_moment(m), self.forces_from_moment(theta, m)

    def smoothness(self):
        """Curvature constants ``(M_D, M_D2, M_R, M_R2)`` when known, else None."""
        return None


class MeanMatch(Objective):
    """Matrix mean matching, ``J_N = 0.5 ||mean_i W_i - target||_F^2``."""

    def __init__(self, target):
        target = np.asarray(target, dtype=np.float64)
        if target.ndim != 2 or not np.isfinite(target).all():
            raise InvalidInput("target must be a finite matrix")
        self.target = target
        self.shape = BlockShape((target.shape,))

    def moment(self, theta):
        return _mean(theta[0])

    def value_from_moment(self, m):
        r = m - self.target
        return 0.5 * float(np.sum(r * r))

    def forces_from_moment(self, theta, m):
        r = m - self.target
        return (np.broadcast_to(r, theta[0].shape).copy(),)

    def smoothness(self, m_r=None):
        # F = identity (M_D = 1, M_D2 = 0); R'' = identity (M_R2 = 1)
        return dict(M_D=1.0, M_D2=0.0, M_R=m_r, M_R2=1.0)


class TeacherStudent(Objective):
    """Two-block tanh network averaged over particles.

    Particle ``(A, B)`` with ``A`` of shape ``(p, r)`` and ``B`` of shape
    ``(r, d)`` predicts ``A tanh(B x / sqrt(d))``; the loss is the squared
    error of the particle average, normalized by ``2 S p``.
    """

    def __init__(self, inputs, targets, r):
        X = np.asarray(inputs, dtype=np.float64)
        Y = np.asarray(targets, dtype=np.float64)
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ShapeMismatch("inputs (S, d) and targets (S, p) must share S")
        self.X = X
        self.Y = Y
        self.S, self.d = X.shape
        self.p = Y.shape[1]
        self.r = int(r)
        self.shape = BlockShape(((self.p, self.r), (self.r, self.d)))

    @classmethod
    def from_teacher(cls, teacher_a, teacher_b, inputs):
        teacher_a = np.asarray(teacher_a, dtype=np.float64)
        teacher_b = np.asarray(teacher_b, dtype=np.float64)
        X = np.asarray(inputs, dtype=np.float64)
        d = X.shape[1]
        hidden = np.tanh(np.matmul(teacher_b, X.T) / np.sqrt(d))
        y = _mean(np.matmul(teacher_a, hidden)).T
        return cls(X, y, teacher_a.shape[2])

    def _hidden(self, theta):
        return np.tanh(np.matmul(theta[1], self.X.T) / np.sqrt(self.d))

    def moment(self, theta):
        return _mean(np.matmul(theta[0], self._hidden(theta)))

    def value_from_moment(self, m):
        res = m - self.Y.T
        return float(np.sum(res * res)) / (2.0 * self.S * self.p)

    def forces_from_moment(self, theta, m):
        A, _ = theta
        H = self._hidden(theta)
        G = (m - self.Y.T) / (self.S * self.p)
        force_a = np.matmul(G, np.swapaxes(H, -1, -2))
        back = np.matmul(np.swapaxes(A, -1, -2), G) * (1.0 - H * H)
        force_b = np.matmul(back, self.X) / np.sqrt(self.d)
        return force_a, force_b


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Token-averaged cross-entropy of integer labels under the given logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, labels[:, None], axis=-1)[:, 0]
    return float(np.mean(lse - picked))


def ce_gradient(logits, labels):
    """Per-token gradient ``softmax(f) - e_y``; averaging is left to the caller."""
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g


@dataclass(frozen=True)
class GateMoment:
    numer: np.ndarray  # (n, C)
    denom: np.ndarray  # (n,)


class GatedMoE(Objective):
    """Softmax-gated mixture of linear experts under token cross-entropy.

    Each particle is ``(Omega, g)`` with expert logits ``Omega^T x`` and router
    score ``g^T x``.  The feature map is augmented with the gate mass so the
    gated mixture is a ratio of two particle averages; the denominator is
    clamped below by ``delta``.
    """

    def __init__(self, inputs, labels, n_classes, delta=1e-6):
        X = np.asarray(inputs, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ShapeMismatch("inputs (n, d) and labels (n,) required")
        if y.min() < 0 or y.max() >= n_classes:
            raise InvalidInput("labels must lie in [0, n_classes)")
        if not delta > 0:
            raise InvalidInput("delta must be positive")
        self.X = X
        self.labels = y
        self.n, self.d = X.shape
        self.C = int(n_classes)
        self.delta = float(delta)
        self.shape = BlockShape(((self.d, self.C), (self.d, 1)))

    def _parts(self, theta):
        omega, g = theta
        score = np.matmul(g[..., 0], self.X.T)  # (N, n)
        expert = np.matmul(self.X, omega)  # (N, n, C)
        return np.exp(score), expert

    def moment(self, theta):
        gate, expert = self._parts(theta)
        return GateMoment(_mean(gate[..., None] * expert), _mean(gate))

    def floor_hit(self, theta):
        return bool(np.any(self.moment(self.check(theta)).denom < self.delta))

    def mixture_logits(self, m):
        return m.numer / np.maximum(m.denom, self.delta)[:, None]

    def value_from_moment(self, m):
        return cross_entropy(self.mixture_logits(m), self.labels)

    def forces_from_moment(self, theta, m):
        gate, expert = self._parts(theta)
        den = np.maximum(m.denom, self.delta)
        grad_logits = ce_gradient(self.mixture_logits(m), self.labels) / self.n
        d_numer = grad_logits / den[:, None]
        d_denom = -np.sum(grad_logits * m.numer, axis=-1) / den**2
        d_denom = np.where(m.denom > self.delta, d_denom, 0.0)
        force_omega = np.matmul(self.X.T, gate[..., None] * d_numer)
        router = gate * (np.sum(expert * d_numer, axis=-1) + d_denom)  # (N, n)
        force_g = np.matmul(router, self.X)[..., None]
        return force_omega, force_g


def fd_force_check(obj, theta, step=1e-5):
    """Largest deviation between forces and central differences of ``J_N``.

    The raw derivative of ``J_N`` is multiplied by N to match the mean-field
    force convention.  The error is normalized by the largest force magnitude.
    """
    theta = tuple(np.array(b, dtype=np.float64) for b in _positions(theta))
    n = theta[0].shape[0]
    forces = obj.forces(theta)
    worst = 0.0
    scale = max(max(float(np.abs(f).max()) for f in forces), 1e-300)
    for b, blk in enumerate(theta):
        flat = blk.reshape(-1)
        fd = np.empty_like(flat)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            plus = obj.value(theta)
            flat[k] = orig - step
            minus = obj.value(theta)
            flat[k] = orig
            fd[k] = n * (plus - minus) / (2.0 * step)
        worst = max(worst, float(np.abs(fd - forces[b].reshape(-1)).max()))
    return worst / scale
