import numpy as np
import pytest

from muon_flow import diagnostics as dg
from muon_flow import dynamics as dy
from muon_flow.diagnostics import DiagnosticsRecord, KineticConstants, RateInputs
from muon_flow.errors import (
    InvalidInput,
    NonPositiveField,
    NoRetainedSamples,
    TooFewRecords,
)
from muon_flow.objectives import MeanMatch, TeacherStudent
from muon_flow.product import Ensemble, particle_norms

# frozen from exact rational arithmetic of the rate formulas (see README)
WORKED_D_H = 2 / 3
WORKED_A_H = 1 / 6
WORKED_Q_H = 27 / 83
WORKED_C_H = 18 / 83
WORKED_H_STAR = 1 / 12

UNIT = KineticConstants(1.0, 1.0, 1.0, 1.0)


def _record(step, t, value):
    return DiagnosticsRecord(step, t, value, 0.0, 0.0, 0.0, 0.0, value, value, value)


def _mm(rng, n=10):
    obj = MeanMatch(rng.standard_normal((16, 8)) / np.sqrt(8))
    th = rng.standard_normal((n, 16, 8)) / np.sqrt(8)
    return obj, Ensemble((th,), (np.zeros_like(th),))


def test_energies_trivial_cases(rng):
    obj, ens = _mm(rng, 3)
    r = dg.energies(obj, ens, 1.0, 2.0)
    assert r.K == r.D == r.C == 0.0
    assert r.H == 2.0 * r.U and r.U == r.J
    at_min = Ensemble((np.broadcast_to(obj.target, (2, 16, 8)).copy(),), (np.zeros((2, 16, 8)),))
    r = dg.energies(obj, at_min, 1.0, 1.0)
    assert (r.J, r.K, r.D, r.A, r.C, r.U, r.H, r.L) == (0.0,) * 8


def test_energies_diag34():
    obj = MeanMatch(np.zeros((2, 2)))
    ens = Ensemble((np.zeros((1, 2, 2)),), (np.diag([3.0, 4.0])[None],))
    r = dg.energies(obj, ens, 4.0, 1.0)
    assert r.K == pytest.approx(2.656854249492380195, abs=1e-14)
    assert r.D == pytest.approx(4.628427124746190098, abs=1e-14)
    assert r.C == 0.0 and r.A == 0.0


def test_energies_rejects_large_j_star(rng):
    obj, ens = _mm(rng, 2)
    with pytest.raises(InvalidInput):
        dg.energies(obj, ens, 1.0, 1.0, j_star=1e6)


def test_record_invariants_bitwise(rng):
    obj, ens = _mm(rng, 4)
    _, recs = dy.run_discrete(obj, ens, dy.inertial_params(0.01, 1.0), dy.RegularizedMuon(0.3), 50, alpha=0.01)
    for r in recs:
        assert r.H == r.K + 1.0 * r.U and r.L == r.H - 0.01 * r.C
        assert min(r.K, r.D, r.A, r.U) >= 0.0


def test_dissipation_residual_trivial():
    recs = [_record(k, 0.1 * k, 1.0) for k in range(5)]
    assert dg.dissipation_residual(recs, 1.0) == 0.0
    with pytest.raises(TooFewRecords):
        dg.dissipation_residual(recs[:2], 1.0)


def test_dissipation_identity_rk4(rng):
    obj, ens = _mm(rng, 10)
    traj = dy.integrate_rk4(obj, ens, 1.0, 1.0, 1e-3, 1.0)
    recs = [dg.energies(obj, e, 1.0, 1.0) for e in traj]
    assert dg.dissipation_residual(recs, 1.0) <= 1e-4 * max(1.0, abs(recs[0].H))
    H = np.array([r.H for r in recs])
    assert np.all(np.diff(H) <= 1e-8 * abs(H[0]))


def test_discrete_residual_is_first_order(rng):
    obj, ens = _mm(rng, 5)
    res = []
    for h in (0.02, 0.01, 0.005):
        _, recs = dy.run_discrete(obj, ens, dy.inertial_params(h, 1.0), dy.RegularizedMuon(1.0), int(round(1.0 / h)))
        res.append(dg.dissipation_residual(recs, 1.0))
    for a, b in zip(res, res[1:]):
        assert 1.6 <= a / b <= 2.4


def test_kinetic_constants_examples():
    kc = dg.kinetic_constants(0.0, 0.5)
    assert kc.kappa_K == pytest.approx(2.0) and kc.kappa_D == pytest.approx(2.0) and kc.L_G == 2.0
    kc = dg.kinetic_constants(np.sqrt(3.0), 1.0)
    assert kc.kappa_K == pytest.approx(1 / 8, abs=1e-15)
    assert kc.kappa_D == pytest.approx(1 / 2, abs=1e-15)
    assert kc.L_G == 1.0 and kc.chi == 1.0
    with pytest.raises(InvalidInput):
        dg.kinetic_constants(-1.0, 1.0)
    with pytest.raises(InvalidInput):
        dg.kinetic_constants(1.0, 0.0)


@pytest.mark.parametrize("eps", [1e-3, 0.1, 1.0, 4.0])
def test_kinetic_inequalities_on_samples(rng, eps):
    B = 2.0
    kc = dg.kinetic_constants(B, eps)
    blocks = (rng.standard_normal((1000, 5, 3)), rng.standard_normal((1000, 2, 4)))
    norms = particle_norms(blocks)
    radius = B * rng.uniform(0.0, 1.0, 1000) ** 0.5
    blocks = tuple(b * (radius / norms)[:, None, None] for b in blocks)
    assert dg.kinetic_violations(blocks, eps, kc) == {
        "psi_lower": 0, "dissipation_lower": 0, "psi_upper": 0, "lipschitz": 0,
    }


def test_kinetic_audit_detects_ball_violation(rng):
    kc = dg.kinetic_constants(0.1, 0.1)
    p = (10 * rng.standard_normal((20, 4, 4)),)
    assert sum(dg.kinetic_violations(p, 0.1, kc).values()) > 0


def test_continuous_rate_examples():
    ri = RateInputs(1.0, 0.5, 1.0, 0.0, 1.0, 1.0, UNIT)
    res = dg.continuous_rate(ri)
    assert res.M_C == 1.0
    assert res.d_ar == pytest.approx(0.75, abs=1e-12)
    assert res.c_ar == pytest.approx(1 / 3, abs=1e-12)
    assert res.feasible
    tiny = dg.continuous_rate(RateInputs(1.0, 1e-12, 1.0, 0.0, 1.0, 1.0, UNIT))
    assert tiny.d_ar == pytest.approx(1.0, abs=1e-11) and tiny.c_ar <= 1e-11 and tiny.feasible
    assert not dg.continuous_rate(RateInputs(1.0, 1.0, 1.0, 0.0, 1.0, 1.0, UNIT)).feasible


def test_rate_inputs_validation():
    with pytest.raises(InvalidInput):
        RateInputs(1.0, 0.5, 2.0, 0.0, 1.0, 1.0, UNIT)
    with pytest.raises(InvalidInput):
        RateInputs(1.0, 0.5, 1.0, 0.0, 2.0, 1.0, UNIT)
    with pytest.raises(InvalidInput):
        RateInputs(0.0, 0.5, 1.0, 0.0, 1.0, 1.0, UNIT)


def test_discrete_rate_worked_example():
    ri = RateInputs(1.0, 0.5, 1.0, 0.0, 1.0, 1.0, UNIT)
    res = dg.discrete_rate(ri, 0.1, 0.0)
    assert res.d_h == pytest.approx(WORKED_D_H, abs=1e-12)
    assert res.a_h == pytest.approx(WORKED_A_H, abs=1e-12)
    assert res.q_h == pytest.approx(WORKED_Q_H, abs=1e-12)
    assert res.c_h == pytest.approx(WORKED_C_H, abs=1e-12)
    assert res.h_star == pytest.approx(WORKED_H_STAR, abs=1e-12)
    assert res.feasible


def test_discrete_rate_small_alpha_collapse():
    kc = KineticConstants(1.0, 0.8, 1.5, 1.0)
    h, g = 0.05, 2.0
    res = dg.discrete_rate(RateInputs(g, 1e-14, 1.0, 0.0, 1.0, 1.0, kc), h, 0.0)
    beta = 1 - g * h
    assert res.d_h == pytest.approx(g - h * kc.L_G**2 * g**2 / (2 * kc.kappa_D * beta), abs=1e-12)


def test_discrete_rate_errors_and_flags():
    ri = RateInputs(1.0, 0.5, 1.0, 0.0, 1.0, 1.0, UNIT)
    with pytest.raises(InvalidInput):
        dg.discrete_rate(ri, 1.0, 0.0)
    with pytest.raises(InvalidInput):
        dg.discrete_rate(ri, 0.1, -1.0)
    # the default diagnostic pair alpha = 0.01, r = 1 leaves a_h negative at h = 0.01
    low = dg.discrete_rate(RateInputs(1.0, 0.01, 1.0, 0.0, 1.0, 1.0, UNIT), 0.01, 1.0)
    assert low.a_h < 0 and not low.feasible


def test_curvature_sigma_mean_match():
    kc = dg.kinetic_constants(np.sqrt(3.0), 1.0)
    sm = MeanMatch(np.zeros((2, 2))).smoothness(m_r=5.0)
    sigma, b_curv = dg.curvature_sigma(kc, sm["M_D"], sm["M_D2"], sm["M_R"], sm["M_R2"])
    assert b_curv == 1.0 and sigma == pytest.approx(2.0)


def test_pl_estimator(rng):
    obj, ens = _mm(rng, 6)
    _, recs = dy.run_discrete(obj, ens, dy.inertial_params(0.01, 1.0), dy.RegularizedMuon(0.1), 300)
    lam, Lam = dg.pl_estimator(recs)
    assert lam == pytest.approx(1.0, abs=1e-9) and Lam == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(NoRetainedSamples):
        dg.pl_estimator(recs, u_floor=1e9)
    with pytest.raises(NoRetainedSamples):
        dg.pl_estimator([])
    X = rng.standard_normal((40, 5))
    ts = TeacherStudent.from_teacher(rng.standard_normal((2, 3, 4)) / 2, rng.standard_normal((2, 4, 5)) / 2, X)
    th = (0.1 * rng.standard_normal((4, 3, 4)), 0.1 * rng.standard_normal((4, 4, 5)))
    _, recs = dy.run_discrete(ts, Ensemble(th, tuple(np.zeros_like(t) for t in th)),
                              dy.inertial_params(0.01, 1.0), dy.HardMuon(), 200)
    lam, Lam = dg.pl_estimator(recs)
    assert 0 < lam <= Lam


def test_exp_fit_examples():
    t = np.linspace(0, 3, 31)
    recs = [_record(k, tk, np.exp(-2 * tk)) for k, tk in enumerate(t)]
    assert dg.exp_fit(recs, "U") == pytest.approx(2.0, abs=1e-6)
    assert dg.exp_fit(recs, "H", slice(5, 20)) == pytest.approx(2.0, abs=1e-6)
    flat = [_record(k, 0.1 * k, 3.0) for k in range(10)]
    assert dg.exp_fit(flat, "L") == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NonPositiveField):
        dg.exp_fit([_record(0, 0.0, 1.0), _record(1, 0.1, 0.0)], "U")


def test_alignment_bound_along_trajectory(rng):
    obj, ens = _mm(rng, 8)
    eps, alpha = 0.5, 0.01
    moms = []
    _, recs = dy.run_discrete(obj, ens, dy.inertial_params(0.01, 1.0), dy.RegularizedMuon(eps), 1000,
                              alpha=alpha, callback=lambda e, a: moms.append(float(particle_norms(e.p).max())))
    kc = dg.kinetic_constants(max(moms), eps)
    lam, Lam = dg.pl_estimator(recs)
    M_C = RateInputs(1.0, alpha, 1.0, 0.0, lam, Lam, kc).M_C
    assert all(abs(r.C) <= M_C * r.H for r in recs)
