"""Finite products of matrix blocks and particle ensembles over them.

A single point of the product space is a tuple of 2-D arrays, one per block.
An ensemble of N particles stores each block as a stacked ``(N, m_b, n_b)``
array so that per-particle maps vectorize over the leading axis.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral
from .errors import InvalidInput, LengthMismatch, ShapeMismatch


@dataclass(frozen=True)
class BlockShape:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple((int(m), int(n)) for m, n in self.blocks)
        if not blocks:
            raise InvalidInput("a block shape needs at least one block")
        if any(m <= 0 or n <= 0 for m, n in blocks):
            raise InvalidInput(f"block dimensions must be positive: {blocks}")
        object.__setattr__(self, "blocks", blocks)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @property
    def q_total(self):
        """Total block rank parameter, the sum of min(m_b, n_b)."""
        return sum(min(m, n) for m, n in self.blocks)

    @property
    def size(self):
        return sum(m * n for m, n in self.blocks)

    def zeros(self, n_particles=None):
        lead = () if n_particles is None else (n_particles,)
        return tuple(np.zeros(lead + b) for b in self.blocks)

    def check_point(self, point):
        if len(point) != len(self.blocks):
            raise ShapeMismatch(f"expected {len(self.blocks)} blocks, got {len(point)}")
        for blk, dims in zip(point, self.blocks):
            if np.shape(blk) != dims:
                raise ShapeMismatch(f"block shape {np.shape(blk)} != {dims}")

    def check_stack(self, stack, n_particles):
        if len(stack) != len(self.blocks):
            raise ShapeMismatch(f"expected {len(self.blocks)} blocks, got {len(stack)}")
        for blk, dims in zip(stack, self.blocks):
            if np.shape(blk) != (n_particles,) + dims:
                raise ShapeMismatch(
                    f"block stack {np.shape(blk)} != {(n_particles,) + dims}"
                )


def shape_of(point):
    return BlockShape(tuple(np.shape(b) for b in point))


def _same_structure(a, b):
    if len(a) != len(b):
        raise ShapeMismatch(f"block counts differ: {len(a)} vs {len(b)}")
    for x, y in zip(a, b):
        if np.shape(x) != np.shape(y):
            raise ShapeMismatch(f"block shapes differ: {np.shape(x)} vs {np.shape(y)}")


def block_inner(a, b):
    """Product inner product: sum of Frobenius pairings over blocks."""
    _same_structure(a, b)
    return float(sum(np.sum(np.asarray(x) * np.asarray(y)) for x, y in zip(a, b)))


def block_norm(a):
    return float(np.sqrt(block_inner(a, a)))


def particle_inner(u, v):
    """Per-particle product inner products of two stacked ensembles, shape (N,)."""
    _same_structure(u, v)
    out = 0.0
    for x, y in zip(u, v):
        out = out + np.sum(x * y, axis=(-2, -1))
    return out


def particle_norms(u):
    return np.sqrt(particle_inner(u, u))


def avg_inner(u, v):
    """Mean-field pairing ``(1/N) sum_i <u_i, v_i>``.

    Accepts stacked tuples ``(N, m_b, n_b)`` or lists of per-particle block
    tuples.
    """
    u = as_stack(u)
    v = as_stack(v)
    if u[0].shape[0] != v[0].shape[0]:
        raise LengthMismatch(f"particle counts differ: {u[0].shape[0]} vs {v[0].shape[0]}")
    if u[0].shape[0] == 0:
        raise LengthMismatch("avg_inner needs at least one particle")
    per = particle_inner(u, v)
    # fixed left-to-right summation over particles
    total = 0.0
    for x in per:
        total += float(x)
    return total / len(per)


def as_stack(points):
    """Convert a list of block tuples into a stacked tuple; stacks pass through."""
    if isinstance(points, tuple) and all(np.ndim(b) == 3 for b in points):
        return points
    points = list(points)
    if not points:
        raise LengthMismatch("empty particle list")
    n_blocks = len(points[0])
    for p in points:
        _same_structure(points[0], p)
    return tuple(np.stack([np.asarray(p[b], dtype=np.float64) for p in points]) for b in range(n_blocks))


def unstack(stack):
    n = stack[0].shape[0]
    return [tuple(b[i] for b in stack) for i in range(n)]


def block_orth_eps(p, eps):
    """Blockwise regularized orthogonalization of a point or a stack."""
    return tuple(spectral.orth_eps(b, eps) for b in p)


def block_orth_hard(p):
    return tuple(spectral.orth_hard(b) for b in p)


def block_psi_eps(p, eps):
    return sum(spectral.psi_eps(b, eps) for b in p)


def block_dissipation(p, eps):
    return sum(spectral.dissipation_density(b, eps) for b in p)


def add(a, b):
    _same_structure(a, b)
    return tuple(x + y for x, y in zip(a, b))


def sub(a, b):
    _same_structure(a, b)
    return tuple(x - y for x, y in zip(a, b))


def scale(c, a):
    return tuple(c * x for x in a)


def axpy(alpha, x, y):
    """``alpha * x + y`` blockwise."""
    _same_structure(x, y)
    return tuple(alpha * xb + yb for xb, yb in zip(x, y))


def is_finite(stack):
    return all(np.isfinite(b).all() for b in stack)


def digest(stack):
    h = hashlib.sha256()
    for b in stack:
        a = np.ascontiguousarray(b, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class Ensemble:
    """N particle phase states ``(theta_i, P_i)`` with a step counter and time."""

    theta: tuple
    p: tuple
    step: int = 0
    time: float = 0.0
    shape: BlockShape = field(default=None, compare=False)

    def __post_init__(self):
        theta = tuple(np.asarray(b, dtype=np.float64) for b in self.theta)
        p = tuple(np.asarray(b, dtype=np.float64) for b in self.p)
        if not theta or theta[0].ndim != 3:
            raise ShapeMismatch("positions must be stacked (N, m, n) blocks")
        shape = BlockShape(tuple(b.shape[1:] for b in theta))
        n = theta[0].shape[0]
        if n < 1:
            raise InvalidInput("an ensemble needs at least one particle")
        shape.check_stack(theta, n)
        shape.check_stack(p, n)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_points(cls, positions, momenta=None, step=0, time=0.0):
        theta = as_stack(positions)
        p = as_stack(momenta) if momenta is not None else tuple(np.zeros_like(b) for b in theta)
        return cls(theta, p, step, time)

    @property
    def n_particles(self):
        return self.theta[0].shape[0]

    def particle(self, i):
        return tuple(b[i] for b in self.theta), tuple(b[i] for b in self.p)

    def positions(self):
        return unstack(self.theta)

    def momenta(self):
        return unstack(self.p)

    def head(self, n):
        """The first ``n`` particles, sharing step and time."""
        return Ensemble(
            tuple(b[:n].copy() for b in self.theta), tuple(b[:n].copy() for b in self.p),
            self.step, self.time,
        )

    def evolve(self, theta, p, dt):
        # time = step * dt exactly for runs that start at step 0
        step = self.step + 1
        return replace(self, theta=theta, p=p, step=step, time=step * dt)

    def is_finite(self):
        return is_finite(self.theta) and is_finite(self.p)

    def digest(self):
        return digest(self.theta + self.p)


def phase_distance_sq(a, b):
    """Per-particle ``||dtheta||^2 + ||dP||^2`` between two equally sized ensembles."""
    dt = sub(a.theta, b.theta)
    dp = sub(a.p, b.p)
    return particle_inner(dt, dt) + particle_inner(dp, dp)


def avg_distance(a, b):
    """Root mean-field distance between two ensembles in phase space."""
    return float(np.sqrt(np.mean(phase_distance_sq(a, b))))
