import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muon_flow.errors import InvalidInput, ShapeMismatch
from muon_flow.objectives import (
    GatedMoE,
    MeanMatch,
    TeacherStudent,
    ce_gradient,
    cross_entropy,
    fd_force_check,
)


def _ts_value_loops(A, B, X, Y):
    # direct evaluation with explicit loops over samples and particles
    N, p, r = A.shape
    S, d = X.shape
    total = 0.0
    for s in range(S):
        pred = [0.0] * p
        for i in range(N):
            for a in range(p):
                acc = 0.0
                for k in range(r):
                    z = sum(B[i, k, j] * X[s, j] for j in range(d)) / math.sqrt(d)
                    acc += A[i, a, k] * math.tanh(z)
                pred[a] += acc / N
        total += sum((pred[a] - Y[s, a]) ** 2 for a in range(p))
    return total / (2 * S * p)


def _moe_value_loops(Om, g, X, y, delta):
    N = Om.shape[0]
    n, d = X.shape
    C = Om.shape[2]
    loss = 0.0
    for t in range(n):
        num = [0.0] * C
        den = 0.0
        for i in range(N):
            w = math.exp(sum(g[i, j, 0] * X[t, j] for j in range(d)))
            den += w / N
            for c in range(C):
                num[c] += w * sum(Om[i, j, c] * X[t, j] for j in range(d)) / N
        f = [v / max(den, delta) for v in num]
        m = max(f)
        lse = m + math.log(sum(math.exp(v - m) for v in f))
        loss += lse - f[y[t]]
    return loss / n


def test_mean_match_examples(rng):
    T = rng.standard_normal((4, 3))
    obj = MeanMatch(T)
    same = (np.stack([T, T, T]),)
    # (T + T + T) / 3 equals T only up to rounding
    assert obj.value(same) <= 1e-30
    assert np.abs(obj.forces(same)[0]).max() <= 1e-15
    E = rng.standard_normal((4, 3))
    E *= 2.0 / np.linalg.norm(E)
    assert obj.value((np.stack([T + E]),)) == pytest.approx(2.0, abs=1e-14)
    assert obj.value((np.stack([T + E, T - E]),)) == pytest.approx(0.0, abs=1e-28)


def test_mean_match_forces_identical_and_fd(rng):
    obj = MeanMatch(rng.standard_normal((5, 3)))
    th = (rng.standard_normal((4, 5, 3)),)
    f = obj.forces(th)[0]
    assert all(np.array_equal(f[0], f[i]) for i in range(4))
    assert np.allclose(f[0], th[0].mean(axis=0) - obj.target, atol=1e-15)
    assert fd_force_check(obj, th) <= 1e-8


def test_shape_checks(rng):
    obj = MeanMatch(np.zeros((4, 3)))
    with pytest.raises(ShapeMismatch):
        obj.value((np.zeros((2, 3, 4)),))
    with pytest.raises(ShapeMismatch):
        obj.value((np.zeros((4, 3)),))
    with pytest.raises(InvalidInput):
        MeanMatch(np.array([[np.nan]]))


def test_teacher_student_matches_loops(rng):
    d = r = p = 2
    A = rng.standard_normal((2, p, r))
    B = rng.standard_normal((2, r, d))
    X = rng.standard_normal((3, d))
    Y = rng.standard_normal((3, p))
    obj = TeacherStudent(X, Y, r)
    assert obj.value((A, B)) == pytest.approx(_ts_value_loops(A, B, X, Y), rel=1e-13)


def test_teacher_student_zero_at_teacher(rng):
    A = rng.standard_normal((3, 4, 6)) / np.sqrt(6)
    B = rng.standard_normal((3, 6, 10)) / np.sqrt(10)
    X = rng.standard_normal((50, 10))
    obj = TeacherStudent.from_teacher(A, B, X)
    assert obj.value((A, B)) <= 1e-24
    fa, fb = obj.forces((A, B))
    assert np.abs(fa).max() <= 1e-12 and np.abs(fb).max() <= 1e-12
    zero = TeacherStudent(X, np.zeros((50, 4)), 6)
    assert zero.value((np.zeros((2, 4, 6)), np.zeros((2, 6, 10)))) == 0.0


def test_teacher_student_hand_force(rng):
    # B = 0 puts tanh at the origin: force on A vanishes, force on B is A^T G x^T / sqrt(d)
    p, r, d = 3, 2, 4
    A = rng.standard_normal((1, p, r))
    x = rng.standard_normal((1, d))
    y = rng.standard_normal((1, p))
    obj = TeacherStudent(x, y, r)
    fa, fb = obj.forces((A, np.zeros((1, r, d))))
    G = -y[0] / p
    assert np.array_equal(fa, np.zeros_like(fa))
    assert np.allclose(fb[0], np.outer(A[0].T @ G, x[0]) / np.sqrt(d), atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_teacher_student_fd(seed):
    r = np.random.default_rng(seed)
    X = r.standard_normal((20, 5))
    obj = TeacherStudent.from_teacher(r.standard_normal((2, 3, 4)), r.standard_normal((2, 4, 5)), X)
    th = (r.standard_normal((3, 3, 4)), r.standard_normal((3, 4, 5)))
    assert fd_force_check(obj, th) <= 1e-6


def _moe(r, n=12, d=4, C=3):
    return GatedMoE(r.standard_normal((n, d)), r.integers(0, C, n), C)


def test_moe_matches_loops(rng):
    obj = _moe(rng)
    Om = rng.standard_normal((3, 4, 3))
    g = 0.5 * rng.standard_normal((3, 4, 1))
    assert obj.value((Om, g)) == pytest.approx(
        _moe_value_loops(Om, g, obj.X, obj.labels, obj.delta), rel=1e-13
    )


def test_moe_single_particle_cancels_gate(rng):
    obj = _moe(rng)
    Om = rng.standard_normal((1, 4, 3))
    g = rng.standard_normal((1, 4, 1))
    assert obj.value((Om, g)) == pytest.approx(cross_entropy(obj.X @ Om[0], obj.labels), rel=1e-13)
    # single token: the router force vanishes because the gate cancels
    one = GatedMoE(obj.X[:1], obj.labels[:1], 3)
    assert np.abs(one.forces((Om, g))[1]).max() <= 1e-14


def test_moe_large_margin_value_vanishes():
    X = np.eye(3)
    y = np.array([0, 1, 2])
    obj = GatedMoE(X, y, 3)
    Om = (200.0 * np.eye(3))[None]
    assert obj.value((Om, np.zeros((1, 3, 1)))) <= 1e-80


def test_moe_zero_ce_gradient_gives_zero_forces():
    # uniform prediction on a uniform target: zero expert logits with one token per class
    X = np.ones((3, 2))
    obj = GatedMoE(X, np.array([0, 1, 2]), 3)
    f = obj.forces((np.zeros((2, 2, 3)), np.zeros((2, 2, 1))))
    assert max(np.abs(b).max() for b in f) <= 1e-16


@pytest.mark.parametrize("seed", range(5))
def test_moe_fd(seed):
    r = np.random.default_rng(seed)
    obj = _moe(r)
    th = (r.standard_normal((3, 4, 3)), 0.3 * r.standard_normal((3, 4, 1)))
    assert fd_force_check(obj, th) <= 1e-6


def test_moe_floor_flag(rng):
    obj = GatedMoE(rng.standard_normal((5, 3)), rng.integers(0, 2, 5), 2, delta=1e-6)
    th = (rng.standard_normal((2, 3, 2)), np.zeros((2, 3, 1)))
    assert not obj.floor_hit(th)
    th_low = (th[0], np.full((2, 3, 1), -1e3) * np.sign(obj.X.sum(axis=0))[None, :, None])
    assert np.isfinite(obj.value(th_low))
    with pytest.raises(InvalidInput):
        GatedMoE(rng.standard_normal((5, 3)), np.array([0, 1, 2, 3, 4]), 3)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_ce_gradient_bound_and_lipschitz(seed, C):
    r = np.random.default_rng(seed)
    n = 7
    f = 5 * r.standard_normal((n, C))
    g = 5 * r.standard_normal((n, C))
    y = r.integers(0, C, n)
    gf = ce_gradient(f, y)
    assert np.all(np.linalg.norm(gf, axis=1) <= np.sqrt(2) + 1e-12)
    diff = np.linalg.norm(gf - ce_gradient(g, y), axis=1)
    assert np.all(diff <= np.linalg.norm(f - g, axis=1) + 1e-12)
